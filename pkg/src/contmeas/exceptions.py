"""Exception hierarchy shared by every module."""


class ContmeasError(Exception):
    """Base class for all errors raised by this package."""


class InvalidStateError(ContmeasError, ValueError):
    """A covariance is not positive definite or violates the Heisenberg floor."""


class InvalidParameterError(ContmeasError, ValueError):
    """A model or configuration parameter is outside its allowed range."""


class NoSteadyStateError(ContmeasError):
    """The covariance flow has no fixed point (phi = pi/2 or 3pi/2)."""


class IntegrationError(ContmeasError):
    """Numerical integration failed or produced non-finite values.

    ``time`` is the model time at which the failure was detected and
    ``step`` the step index when the integrator is fixed-step.
    """

    def __init__(self, message, time=None, step=None):
        super().__init__(message)
        self.time = time
        self.step = step


class NearSingularError(IntegrationError):
    """The Reid linearisation matrix U became numerically singular."""


class IncompatibleRecordError(ContmeasError, ValueError):
    """A measurement record does not match the parameters it is used with."""


class ConfigError(ContmeasError, ValueError):
    """Invalid scenario or cavity configuration; ``key`` names the culprit."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
