"""Conditioned Gaussian dynamics of a continuously observed harmonic oscillator."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConfigError,
    ContmeasError,
    IncompatibleRecordError,
    IntegrationError,
    InvalidParameterError,
    InvalidStateError,
    NearSingularError,
    NoSteadyStateError,
)
from .gaussian import (  # noqa: E402
    HETERODYNE,
    HOMODYNE,
    GaussianState,
    ModelParams,
    is_quantum_admissible,
    linear_entropy,
    phase_space_area,
    von_neumann_entropy,
)
from .riccati import (  # noqa: E402
    RiccatiCoeffs,
    RiccatiSolution,
    closed_form_vxx,
    collapse_time,
    covariance_path,
    integrate_covariance,
    reid_solution,
    steady_state,
)
from .dynamics import (  # noqa: E402
    MeasurementRecord,
    TrajectoryOutput,
    filter_record,
    moment_step,
    read_record,
    simulate,
    simulate_ensemble,
    unconditioned_moments,
    write_record,
)
from .kalman import (  # noqa: E402
    ClassicalModel,
    admissibility_report,
    identify_from_quantum,
    kalman_filter,
    kalman_step,
)
from .observers import (  # noqa: E402
    ObserverErrorState,
    agreement_time,
    error_covariance_flow,
    error_sde_step,
    paired_filters,
)
from .cavity import (  # noqa: E402
    CavityConfig,
    collapse_time_estimate,
    dimensionless_r,
    heating_budget,
    measurement_strength,
    preset_config,
)

filter = filter_record  # noqa: A001
