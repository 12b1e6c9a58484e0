r"""Deterministic dynamics of the conditioned second-order moments.

The three moments obey the matrix Riccati equation

.. math::

    \frac{1}{\omega}\frac{dV}{dt} = C - VBV - DV - VA,

with ``A = [[0, a], [-1, 0]]``, ``D = A^T``, ``a = 1 - sin(2 phi)/r``,
``B = diag(2 cos^2(phi)/r, 0)`` and ``C = diag(0, 2 (q^2 - sin^2 phi)/r)``.
Writing the flow out component by component gives the familiar

* ``dV_xx = 2 V_xp - (2/r) cos^2(phi) V_xx^2``
* ``dV_pp = -2 a V_xp + (2/r)(q^2 - sin^2 phi) - (2/r) cos^2(phi) V_xp^2``
* ``dV_xp = V_pp - a V_xx - (2/r) cos^2(phi) V_xx V_xp``

(time in units of ``1/omega``). Imperfect detection (``q > 1``) only enlarges
the unconditioned momentum diffusion; heterodyne detection is mapped onto an
equivalent homodyne ``phi = 0`` channel by :func:`effective_channel`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .exceptions import (
    IntegrationError,
    InvalidParameterError,
    InvalidStateError,
    NearSingularError,
    NoSteadyStateError,
)
from .gaussian import HETERODYNE, HOMODYNE, GaussianState, ModelParams

# cos(phi) below this is treated as the non-localising eraser phase
_ERASER_COS = 1e-12


def effective_channel(params: ModelParams):
    """Return the homodyne-equivalent ``(r, phi, q)`` for the covariance flow.

    Heterodyne detection averages the rapidly rotating phase: conditioning
    runs at half the signal-to-noise ratio (``r -> 2r``, ``phi -> 0``) and
    the second quadrature removes the phase-dependent share of the diffusion,
    so in the doubled-``r`` picture the imperfection factor becomes
    ``sqrt(2 q^2 - 1)``; for ``q = 1`` that is again 1.
    """
    if params.mode == HETERODYNE:
        return 2.0 * params.r, 0.0, math.sqrt(2.0 * params.q**2 - 1.0)
    return params.r, params.phi, params.q


def _as_moments(v) -> np.ndarray:
    if isinstance(v, GaussianState):
        return v.moments
    v = np.asarray(v, dtype=float)
    if v.shape == (2, 2):
        return np.array([v[0, 0], v[1, 1], v[0, 1]])
    if v.shape != (3,):
        raise InvalidStateError(f"cannot interpret covariance of shape {v.shape}")
    return v


def _to_matrix(m) -> np.ndarray:
    return np.array([[m[0], m[2]], [m[2], m[1]]])


@dataclass(frozen=True)
class RiccatiCoeffs:
    """Coefficient matrices of the covariance Riccati flow."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    omega: float = 1.0

    @classmethod
    def from_params(cls, params: ModelParams) -> "RiccatiCoeffs":
        r, phi, q = effective_channel(params)
        return cls.from_values(r, phi, q, params.omega)

    @classmethod
    def from_values(cls, r, phi=0.0, q=1.0, omega=1.0) -> "RiccatiCoeffs":
        if r <= 0 or q < 1 or omega <= 0:
            raise InvalidParameterError(f"invalid coefficients r={r}, q={q}, omega={omega}")
        cos2 = math.cos(phi) ** 2
        sin2 = math.sin(phi) ** 2
        rot = 1.0 - math.sin(2.0 * phi) / r
        a = np.array([[0.0, rot], [-1.0, 0.0]])
        b = np.array([[2.0 * cos2 / r, 0.0], [0.0, 0.0]])
        c = np.array([[0.0, 0.0], [0.0, 2.0 * (q * q - sin2) / r]])
        return cls(a=a, b=b, c=c, d=a.T.copy(), omega=float(omega))

    @property
    def gain(self) -> float:
        """Conditioning strength ``2 cos^2(phi) / r``."""
        return float(self.b[0, 0])

    @property
    def diffusion(self) -> float:
        """Constant momentum diffusion ``2 (q^2 - sin^2 phi) / r``."""
        return float(self.c[1, 1])

    @property
    def rotation(self) -> float:
        """The ``1 - sin(2 phi)/r`` factor; negative when ``r < sin(2 phi)``."""
        return float(self.a[0, 1])

    @property
    def sign_flipped(self) -> bool:
        return self.rotation < 0

    @property
    def localising(self) -> bool:
        return self.gain > _ERASER_COS**2

    def rhs(self, m) -> np.ndarray:
        """Time derivative of the packed moments ``(v_xx, v_pp, v_xp)``."""
        xx, pp, xp = m
        g, k, a, w = self.gain, self.diffusion, self.rotation, self.omega
        return np.array(
            [
                w * (2.0 * xp - g * xx * xx),
                w * (-2.0 * a * xp + k - g * xp * xp),
                w * (pp - a * xx - g * xx * xp),
            ]
        )

    def matrix_rhs(self, v: np.ndarray) -> np.ndarray:
        """Same flow written as ``omega (C - VBV - DV - VA)`` on a 2x2 matrix."""
        return self.omega * (self.c - v @ self.b @ v - self.d @ v - v @ self.a)

    def jacobian(self, m) -> np.ndarray:
        xx, pp, xp = m
        g, a, w = self.gain, self.rotation, self.omega
        return w * np.array(
            [
                [-2.0 * g * xx, 0.0, 2.0],
                [0.0, 0.0, -2.0 * a - 2.0 * g * xp],
                [-a - g * xp, 1.0, -g * xx],
            ]
        )

    def hamiltonian(self) -> np.ndarray:
        """Generator of the linear (U, W) system whose ratio ``W U^-1`` is V."""
        return self.omega * np.block([[self.a, self.b], [self.c, -self.d]])


def flow_residual(coeffs: RiccatiCoeffs, v) -> float:
    """Max-norm of the flow at ``v``; zero at a fixed point."""
    return float(np.max(np.abs(coeffs.rhs(_as_moments(v)))))


# ---------------------------------------------------------------- closed forms


def _sqrt1p_minus1(x):
    # sqrt(1 + x) - 1 without cancellation for small x
    return x / (np.sqrt(1.0 + x) + 1.0)


def damping_oscillation(r: float, q: float = 1.0):
    """Return ``(b, c)`` with ``b^2 = (s - 1)/2``, ``c^2 = (s + 1)/2``, ``s = sqrt(1 + 4q^2/r^2)``."""
    if r <= 0 or q < 1:
        raise InvalidParameterError(f"need r > 0 and q >= 1 (r={r}, q={q})")
    x = 4.0 * q * q / (r * r)
    sm1 = _sqrt1p_minus1(x)
    return math.sqrt(sm1 / 2.0), math.sqrt((sm1 + 2.0) / 2.0)


def analytic_steady_state(r: float, q: float = 1.0) -> GaussianState:
    """Fixed point of the ``phi = 0`` flow in closed form.

    For ``q = 1`` this is the pure state ``V_xx = (r/sqrt2) sqrt(s - 1)``,
    ``V_pp = s V_xx``, ``V_xp = (r/2)(s - 1)``; in general its area is ``q``.
    """
    x = 4.0 * q * q / (r * r)
    sm1 = _sqrt1p_minus1(x)
    xp = 0.5 * r * sm1
    xx = math.sqrt(r * xp)
    return GaussianState(0.0, 0.0, xx, (1.0 + sm1) * xx, xp)


@dataclass(frozen=True)
class RiccatiSolution:
    """Closed-form ``V_xx(t)`` for ``phi = 0`` and an isotropic start ``(v0, v0, 0)``."""

    b: float
    c: float
    q: float
    v0: float

    @classmethod
    def from_values(cls, r: float, q: float, v0: float) -> "RiccatiSolution":
        if v0 <= 0:
            raise InvalidStateError(f"initial variance must be positive, got {v0}")
        b, c = damping_oscillation(r, q)
        return cls(b=b, c=c, q=float(q), v0=float(v0))

    @property
    def steady_vxx(self) -> float:
        return self.q / self.c

    def vxx(self, t):
        """Evaluate at times ``t`` (units of ``1/omega``).

        Numerator and denominator are both multiplied by ``2 exp(-2bt)`` so no
        hyperbolic function is ever formed; at large ``bt`` the expression
        tends smoothly to ``q / c`` instead of overflowing.
        """
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise InvalidParameterError("closed form requires t >= 0")
        b, c, q, v0 = self.b, self.c, self.q, self.v0
        e = np.exp(-2.0 * b * t)
        one_minus_e4 = -np.expm1(-4.0 * b * t)
        one_minus_e2 = -np.expm1(-2.0 * b * t)
        s2c, c2c = np.sin(2.0 * c * t), np.cos(2.0 * c * t)
        sc = np.sin(c * t)
        w = v0 * v0 + q * q
        num = q * q * v0 * (c * c * (1.0 + e * e) + 2.0 * b * b * c2c * e) + 0.5 * q * w * (
            c * one_minus_e4 - 2.0 * b * s2c * e
        )
        den = (
            2.0 * q * q * (b * b + c * c) * e
            + q * v0 * (c**3 * one_minus_e4 + 2.0 * b**3 * s2c * e)
            + w * (0.5 * c * c * one_minus_e2**2 - 2.0 * b * b * sc * sc * e)
        )
        out = num / den
        return float(out) if out.ndim == 0 else out


def closed_form_vxx(r: float, q: float, v0: float, t):
    """Position variance at time ``t`` for ``phi = 0`` from ``(v0, v0, 0)``."""
    return RiccatiSolution.from_values(r, q, v0).vxx(t)


def collapse_time(r: float, omega: float = 1.0, q: float = 1.0, mode: str = HOMODYNE) -> float:
    """Collapse (or steady-state) time ``2 / (b omega)``.

    Heterodyne detection evaluates ``b`` at ``2r`` and the matching effective
    imperfection factor.
    """
    if mode == HETERODYNE:
        r, q = 2.0 * r, math.sqrt(2.0 * q * q - 1.0)
    elif mode != HOMODYNE:
        raise InvalidParameterError(f"unknown mode {mode!r}")
    b, _ = damping_oscillation(r, q)
    return 2.0 / (b * omega)


# ---------------------------------------------------------------- steady states


def _newton(coeffs: RiccatiCoeffs, m0: np.ndarray, max_iter: int = 60, tol: float = 1e-14):
    m = np.array(m0, dtype=float)
    f = coeffs.rhs(m) / coeffs.omega
    fn = np.max(np.abs(f))
    for _ in range(max_iter):
        scale = max(1.0, np.max(np.abs(m)))
        if fn <= tol * scale:
            return m
        step = np.linalg.solve(coeffs.jacobian(m) / coeffs.omega, -f)
        lam = 1.0
        while lam > 1e-6:
            trial = m + lam * step
            if trial[0] > 0 and trial[1] > 0 and trial[0] * trial[1] > trial[2] ** 2:
                ft = coeffs.rhs(trial) / coeffs.omega
                ftn = np.max(np.abs(ft))
                if ftn < fn or lam == 1.0 and ftn < 10 * fn:
                    break
            lam *= 0.5
        else:
            return None
        m, f, fn = trial, ft, ftn
    scale = max(1.0, np.max(np.abs(m)))
    return m if fn <= 1e-12 * scale else None


def _continuation(r, q, phi_target, omega):
    """Track the physical root from ``phi = 0`` to ``phi_target`` in (-pi/2, pi/2)."""
    m = analytic_steady_state(r, q).moments
    phi = 0.0
    step = phi_target / 8.0
    while phi != phi_target:
        nxt = phi + step
        if (step > 0 and nxt > phi_target) or (step < 0 and nxt < phi_target):
            nxt = phi_target
        sol = _newton(RiccatiCoeffs.from_values(r, nxt, q, omega), m)
        if sol is None:
            step *= 0.5
            if abs(step) < 1e-12:
                raise NoSteadyStateError(f"continuation stalled at phi={phi}")
            continue
        m, phi = sol, nxt
        step *= 1.5
    return m


def steady_state(params: ModelParams) -> GaussianState:
    """Fixed point of the covariance flow (means are zero).

    ``phi = 0`` (and ``pi``, and heterodyne) use the closed form; any other
    localising phase is reached by damped Newton iterations continued in the
    phase from the closed-form root.
    """
    r, phi, q = effective_channel(params)
    coeffs = RiccatiCoeffs.from_values(r, phi, q, params.omega)
    if not coeffs.localising:
        raise NoSteadyStateError(f"phi={params.phi} gives no information; no steady state")
    # the flow depends on phi only through cos^2 and sin(2 phi): period pi
    reduced = math.remainder(phi, math.pi)
    if reduced == 0.0:
        return analytic_steady_state(r, q)
    m = _continuation(r, q, reduced, params.omega)
    return GaussianState.from_covariance(m)


# ---------------------------------------------------------------- integrators


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise InvalidParameterError("t_grid must be a non-empty 1-d sequence")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise InvalidParameterError("t_grid must be strictly increasing")
    return t


def integrate_covariance(
    coeffs: RiccatiCoeffs,
    v0,
    t_grid,
    method: str = "RK45",
    rtol: float = 1e-11,
    atol: float = 1e-10,
) -> np.ndarray:
    """Integrate the Riccati flow with an adaptive Runge-Kutta scheme.

    Returns an ``(len(t_grid), 3)`` array of ``(v_xx, v_pp, v_xp)``; the first
    grid point is the initial time.
    """
    m0 = _as_moments(v0)
    GaussianState.from_covariance(m0)
    t = _check_grid(t_grid)
    if t.size == 1:
        return m0[None, :].copy()
    extra = {}
    if method in ("Radau", "BDF", "LSODA"):
        extra["jac"] = lambda _t, y: coeffs.jacobian(y)
    sol = solve_ivp(
        lambda _t, y: coeffs.rhs(y),
        (t[0], t[-1]),
        m0,
        method=method,
        t_eval=t,
        rtol=rtol,
        atol=atol,
        **extra,
    )
    if not sol.success or sol.y.shape[1] != t.size:
        raise IntegrationError(f"Riccati integration failed: {sol.message}", time=float(sol.t[-1]))
    out = sol.y.T
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.all(np.isfinite(out), axis=1)))
        raise IntegrationError("non-finite covariance", time=float(t[bad]), step=bad)
    return out


def reid_solution(coeffs: RiccatiCoeffs, v0, t, singular_tol: float = 1e-12):
    """Covariance via the linear (U, W) system, ``V = W U^-1``.

    ``dU/dt = AU + BW``, ``dW/dt = CU - DW`` with ``U(0) = I``,
    ``W(0) = V(0)``; the system has constant coefficients so it is propagated
    exactly with a matrix exponential. For a grid of times the propagation
    restarts from the previous grid point (identical in exact arithmetic,
    and it keeps U well conditioned). Scalar ``t`` returns packed moments,
    arrays return an ``(n, 3)`` path.
    """
    m0 = _as_moments(v0)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise InvalidParameterError("times must be non-negative")
    ham = coeffs.hamiltonian()
    out = np.empty((t_arr.size, 3))
    v = _to_matrix(m0)
    t_prev = 0.0
    for i, ti in enumerate(t_arr):
        dt = ti - t_prev
        if dt < 0:
            raise InvalidParameterError("times must be non-decreasing")
        if dt > 0:
            z = expm(ham * dt) @ np.vstack([np.eye(2), v])
            u, w = z[:2], z[2:]
            det = np.linalg.det(u)
            if abs(det) < singular_tol * max(1.0, np.linalg.norm(u) ** 2):
                raise NearSingularError(f"U nearly singular (det={det:.3e})", time=float(ti))
            v = np.linalg.solve(u.T, w.T).T
            v = 0.5 * (v + v.T)
        out[i] = v[0, 0], v[1, 1], v[0, 1]
        t_prev = ti
    return out[0] if np.ndim(t) == 0 else out


def covariance_path(params: ModelParams, v0, t_grid, **kwargs) -> np.ndarray:
    """Convenience wrapper: Riccati path for ``params`` on ``t_grid``."""
    return integrate_covariance(RiccatiCoeffs.from_params(params), v0, t_grid, **kwargs)
