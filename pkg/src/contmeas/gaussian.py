r"""Gaussian conditioned states and their scalar diagnostics.

All quantities are in the oscillator's natural units: positions are scaled by
:math:`\sqrt{\hbar/2m\omega}`, momenta by :math:`\sqrt{\hbar m\omega/2}`, so a
coherent state has ``v_xx = v_pp = 1`` and a pure Gaussian state has phase
space area exactly one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .exceptions import InvalidParameterError, InvalidStateError

HOMODYNE = "homodyne"
HETERODYNE = "heterodyne"
MODES = (HOMODYNE, HETERODYNE)

#: admissibility tolerance for states coming from deterministic paths
ANALYTIC_TOL = 1e-9
#: admissibility tolerance for states coming from stochastic integration
SDE_TOL = 1e-6

# below this distance from the pure-state boundary the entropy uses its series
_SERIES_EPS = 1e-8


@dataclass(frozen=True)
class GaussianState:
    """First moments and symmetric second moments of a one-mode Gaussian."""

    mean_x: float = 0.0
    mean_p: float = 0.0
    v_xx: float = 1.0
    v_pp: float = 1.0
    v_xp: float = 0.0

    def __post_init__(self):
        for name in ("mean_x", "mean_p", "v_xx", "v_pp", "v_xp"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidStateError(f"{name} is not finite: {value!r}")
            object.__setattr__(self, name, value)
        if self.v_xx <= 0 or self.v_pp <= 0:
            raise InvalidStateError(
                f"variances must be positive (v_xx={self.v_xx}, v_pp={self.v_pp})"
            )
        if self.v_xx * self.v_pp - self.v_xp**2 <= 0:
            raise InvalidStateError("covariance matrix is not positive definite")

    @classmethod
    def from_covariance(cls, cov, mean=(0.0, 0.0)) -> "GaussianState":
        """Build a state from a 2x2 covariance matrix or a (xx, pp, xp) triple."""
        cov = np.asarray(cov, dtype=float)
        if cov.shape == (2, 2):
            if not np.isclose(cov[0, 1], cov[1, 0], rtol=1e-12, atol=0.0):
                raise InvalidStateError("covariance matrix is not symmetric")
            xx, pp, xp = cov[0, 0], cov[1, 1], cov[0, 1]
        elif cov.shape == (3,):
            xx, pp, xp = cov
        else:
            raise InvalidStateError(f"cannot interpret covariance of shape {cov.shape}")
        return cls(float(mean[0]), float(mean[1]), xx, pp, xp)

    @classmethod
    def thermal(cls, v0: float, mean=(0.0, 0.0)) -> "GaussianState":
        """Isotropic state ``v_xx = v_pp = v0``, ``v_xp = 0``."""
        return cls(float(mean[0]), float(mean[1]), v0, v0, 0.0)

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.mean_x, self.mean_p])

    @property
    def moments(self) -> np.ndarray:
        """Second moments packed as ``(v_xx, v_pp, v_xp)``."""
        return np.array([self.v_xx, self.v_pp, self.v_xp])

    @property
    def covariance(self) -> np.ndarray:
        return np.array([[self.v_xx, self.v_xp], [self.v_xp, self.v_pp]])

    def with_mean(self, mean_x: float, mean_p: float) -> "GaussianState":
        return replace(self, mean_x=mean_x, mean_p=mean_p)


@dataclass(frozen=True)
class ModelParams:
    """Oscillator and detection parameters.

    ``r`` is the ratio of harmonic to measurement dynamics, ``phi`` the local
    oscillator phase, ``q >= 1`` the imperfection factor (steady phase-space
    area) and ``mode`` either ``"homodyne"`` or ``"heterodyne"``.
    """

    r: float
    phi: float = 0.0
    q: float = 1.0
    omega: float = 1.0
    mode: str = HOMODYNE

    def __post_init__(self):
        for name in ("r", "phi", "q", "omega"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidParameterError(f"{name} is not finite: {value!r}")
            object.__setattr__(self, name, value)
        if self.r <= 0:
            raise InvalidParameterError(f"r must be positive, got {self.r}")
        if self.omega <= 0:
            raise InvalidParameterError(f"omega must be positive, got {self.omega}")
        if self.q < 1:
            raise InvalidParameterError(f"q must be >= 1, got {self.q}")
        if not 0 <= self.phi < 2 * math.pi:
            raise InvalidParameterError(f"phi must lie in [0, 2pi), got {self.phi}")
        if self.mode not in MODES:
            raise InvalidParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == HETERODYNE and self.phi != 0.0:
            raise InvalidParameterError("heterodyne detection has no fixed phase; use phi=0")

    @property
    def heterodyne(self) -> bool:
        return self.mode == HETERODYNE

    def to_dict(self) -> dict:
        return {"r": self.r, "phi": self.phi, "q": self.q, "omega": self.omega, "mode": self.mode}


AreaLike = Union[GaussianState, float, np.ndarray]


def area_from_moments(v_xx, v_pp, v_xp):
    """Phase-space area ``sqrt(v_xx v_pp - v_xp**2)``; works elementwise on arrays."""
    disc = np.asarray(v_xx) * np.asarray(v_pp) - np.asarray(v_xp) ** 2
    if np.any(disc < 0) or np.any(~np.isfinite(disc)):
        raise InvalidStateError("negative or non-finite covariance determinant")
    out = np.sqrt(disc)
    return float(out) if out.ndim == 0 else out


def phase_space_area(state: GaussianState) -> float:
    """Area A of the state's covariance ellipse in units where pure means A = 1."""
    return area_from_moments(state.v_xx, state.v_pp, state.v_xp)


def _as_area(state_or_area: AreaLike, tol: float):
    if isinstance(state_or_area, GaussianState):
        a = np.asarray(phase_space_area(state_or_area))
    else:
        a = np.asarray(state_or_area, dtype=float)
    if np.any(a < 1.0 - tol) or np.any(np.isnan(a)):
        raise InvalidStateError(
            f"area below the Heisenberg floor: min A = {np.nanmin(a) if a.size else a}"
        )
    return np.maximum(a, 1.0)


def linear_entropy(state_or_area: AreaLike, tol: float = ANALYTIC_TOL):
    """Linear entropy ``1 - Tr rho^2 = 1 - 1/A``.

    Accepts a :class:`GaussianState` or an area (scalar or array). Areas in
    ``[1 - tol, 1)`` are treated as pure.
    """
    a = _as_area(state_or_area, tol)
    out = 1.0 - 1.0 / a
    return float(out) if out.ndim == 0 else out


def von_neumann_entropy(state_or_area: AreaLike, tol: float = ANALYTIC_TOL):
    """Von Neumann entropy in nats as a function of the phase-space area.

    Close to the pure-state boundary the closed form suffers from
    ``(A - 1) ln(A - 1)``; there the two-term series
    ``(e/2)(1 + ln(2/e))`` with ``e = A - 1`` is used, which is exactly zero
    at ``A = 1``.
    """
    a = _as_area(state_or_area, tol)
    scalar = a.ndim == 0
    a = np.atleast_1d(a)
    eps = a - 1.0
    out = np.zeros_like(a)
    near = eps < _SERIES_EPS
    far = ~near
    e = eps[near]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[near] = np.where(e > 0, 0.5 * e * (1.0 + np.log(2.0 / np.where(e > 0, e, 1.0))), 0.0)
    af = a[far]
    out[far] = (
        0.5 * (af + 1.0) * np.log(af + 1.0)
        - 0.5 * (af - 1.0) * np.log(af - 1.0)
        - math.log(2.0)
    )
    return float(out[0]) if scalar else out


def is_quantum_admissible(state: GaussianState, tol: float = ANALYTIC_TOL) -> bool:
    """True when ``v_xx v_pp - v_xp**2 >= 1 - tol`` (Heisenberg floor)."""
    return bool(state.v_xx * state.v_pp - state.v_xp**2 >= 1.0 - tol)
