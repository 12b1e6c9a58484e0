r"""Classical Kalman-Bucy observer for a noisy harmonic oscillator.

The classical plant and detector are

.. math::

    dx = \omega p\,dt,\quad
    dp = -\omega x\,dt + \sqrt{2\omega/s}\,\epsilon\,dt,\quad
    dQ = a x\,dt + \sqrt{r/2\omega}\,\eta\,dt,

with unit white noises ``epsilon`` and ``eta`` of correlation ``f``. Here
``r`` is called ``obs_noise`` and ``s`` ``proc_noise``. Posterior moments
obey

* ``dV_xx/w = 2 V_xp - (2/r) a^2 V_xx^2``
* ``dV_pp/w = -2 k V_xp + 2 (1 - f^2) / s - (2/r) a^2 V_xp^2``
* ``dV_xp/w = V_pp - k V_xx - (2/r) a^2 V_xx V_xp``

with ``k = 1 + 2 a f / sqrt(r s)``. None of this reuses the quantum
covariance code, so agreement between the two is a genuine check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import IntegrationError, InvalidParameterError
from .gaussian import ANALYTIC_TOL, GaussianState


@dataclass(frozen=True)
class ClassicalModel:
    """Classical measurement model: ``obs_noise`` (r), ``proc_noise`` (s), ``gain`` (a), ``corr`` (f)."""

    obs_noise: float
    proc_noise: float
    gain: float = 1.0
    corr: float = 0.0
    omega: float = 1.0

    def __post_init__(self):
        for name in ("obs_noise", "proc_noise", "gain", "corr", "omega"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidParameterError(f"{name} is not finite: {v!r}")
            object.__setattr__(self, name, v)
        if self.obs_noise <= 0 or self.proc_noise <= 0 or self.omega <= 0:
            raise InvalidParameterError("obs_noise, proc_noise and omega must be positive")
        if abs(self.corr) > 1:
            raise InvalidParameterError(f"|corr| must not exceed 1, got {self.corr}")

    @property
    def info_rate(self) -> float:
        """``(2/r) a^2``."""
        return 2.0 * self.gain**2 / self.obs_noise

    @property
    def coupling(self) -> float:
        """``1 + 2 a f / sqrt(r s)``."""
        return 1.0 + 2.0 * self.gain * self.corr / math.sqrt(self.obs_noise * self.proc_noise)

    @property
    def net_diffusion(self) -> float:
        """``2 (1 - f^2) / s``: process noise left after conditioning on the correlated part."""
        return 2.0 * (1.0 - self.corr**2) / self.proc_noise


def identify_from_quantum(phi: float, r: float, q: float = 1.0, omega: float = 1.0) -> ClassicalModel:
    """Classical model whose filter reproduces homodyne detection at ``phi``.

    ``q = 1`` gives ``s = r``, ``a = cos(phi)``, ``f = -sin(phi)``. Imperfect
    detection keeps the gain and rescales ``s = r/q^2``, ``f = -sin(phi)/q``,
    so that the extra heating appears as uncorrelated process noise.
    """
    if r <= 0 or q < 1:
        raise InvalidParameterError(f"need r > 0 and q >= 1 (r={r}, q={q})")
    return ClassicalModel(
        obs_noise=r, proc_noise=r / (q * q), gain=math.cos(phi), corr=-math.sin(phi) / q, omega=omega
    )


def _flow(model: ClassicalModel, xx, pp, xp):
    g, k, d = model.info_rate, model.coupling, model.net_diffusion
    return (
        2.0 * xp - g * xx * xx,
        -2.0 * k * xp + d - g * xp * xp,
        pp - k * xx - g * xx * xp,
    )


def kalman_step(model: ClassicalModel, estimate: GaussianState, dQ: float, dt: float, step=None) -> GaussianState:
    """One explicit Euler-Maruyama step of the Kalman-Bucy filter.

    The innovation ``dW = sqrt(2w/r) (dQ - a x dt)`` drives the means with
    gains ``a sqrt(2w/r) V_xx`` and ``a sqrt(2w/r) V_xp + f sqrt(2w/s)``.
    """
    w, r, s, a, f = model.omega, model.obs_noise, model.proc_noise, model.gain, model.corr
    x, p = estimate.mean_x, estimate.mean_p
    xx, pp, xp = estimate.v_xx, estimate.v_pp, estimate.v_xp
    zr = math.sqrt(2.0 * w / r)
    dw = zr * (dQ - a * x * dt)
    nx = x + w * p * dt + a * zr * xx * dw
    np_ = p - w * x * dt + (a * zr * xp + f * math.sqrt(2.0 * w / s)) * dw
    dxx, dpp, dxp = _flow(model, xx, pp, xp)
    out = (nx, np_, xx + w * dxx * dt, pp + w * dpp * dt, xp + w * dxp * dt)
    if not all(math.isfinite(v) for v in out):
        raise IntegrationError("non-finite Kalman estimate", step=step)
    return GaussianState(*out)


def kalman_filter(model: ClassicalModel, prior: GaussianState, increments, dt: float):
    """Run :func:`kalman_step` over ``increments``; returns ``(means, moments)`` arrays."""
    inc = np.asarray(increments, dtype=float)
    means = np.empty((inc.size + 1, 2))
    moms = np.empty((inc.size + 1, 3))
    st = prior
    means[0], moms[0] = st.mean, st.moments
    for n, dq in enumerate(inc):
        st = kalman_step(model, st, float(dq), dt, step=n)
        means[n + 1], moms[n + 1] = st.mean, st.moments
    return means, moms


def covariance_rhs(model: ClassicalModel, m) -> np.ndarray:
    return model.omega * np.array(_flow(model, *m))


# ----------------------------------------------------------- steady state


def uncorrelated_steady_state(model: ClassicalModel) -> np.ndarray:
    """Closed-form fixed point for ``f = 0``, ``a != 0``; packed moments."""
    g = model.info_rate
    if g <= 0:
        raise InvalidParameterError("no steady state without position information (a = 0)")
    d = 2.0 / model.proc_noise
    # xp solves g xp^2 + 2 xp - d = 0; written to avoid cancellation
    xp = d / (1.0 + math.sqrt(1.0 + g * d))
    xx = math.sqrt(2.0 * xp / g)
    return np.array([xx, xx * (1.0 + g * xp), xp])


def _jac(model, m):
    xx, pp, xp = m
    g, k = model.info_rate, model.coupling
    return np.array(
        [
            [-2.0 * g * xx, 0.0, 2.0],
            [0.0, 0.0, -2.0 * k - 2.0 * g * xp],
            [-k - g * xp, 1.0, -g * xx],
        ]
    )


def _newton(model, m0, max_iter=60):
    m = np.array(m0, dtype=float)
    f = np.array(_flow(model, *m))
    fn = np.max(np.abs(f))
    for _ in range(max_iter):
        if fn <= 1e-14 * max(1.0, np.max(np.abs(m))):
            return m
        try:
            step = np.linalg.solve(_jac(model, m), -f)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        accepted = False
        while lam > 1e-8:
            t = m + lam * step
            if t[0] > 0 and t[1] > 0 and t[0] * t[1] > t[2] ** 2:
                ft = np.array(_flow(model, *t))
                if np.max(np.abs(ft)) < fn:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            return None
        m, f, fn = t, ft, np.max(np.abs(ft))
    return m if fn <= 1e-12 * max(1.0, np.max(np.abs(m))) else None


def steady_state(model: ClassicalModel) -> Optional[np.ndarray]:
    """Posterior fixed point by Newton iterations continued in the correlation.

    Starts from the uncorrelated closed form and walks ``f`` from 0 to its
    target. Returns ``None`` when there is no positive-definite fixed point
    (no information, or continuation fails).
    """
    if model.info_rate <= 0:
        return None
    base = ClassicalModel(model.obs_noise, model.proc_noise, model.gain, 0.0, model.omega)
    m = uncorrelated_steady_state(base)
    f_now, target = 0.0, model.corr
    step = target / 4.0
    while f_now != target:
        nxt = f_now + step
        if (step > 0 and nxt > target) or (step < 0 and nxt < target):
            nxt = target
        cand = ClassicalModel(model.obs_noise, model.proc_noise, model.gain, nxt, model.omega)
        sol = _newton(cand, m)
        if sol is None:
            step *= 0.5
            if abs(step) < 1e-13:
                return None
            continue
        m, f_now = sol, nxt
        step *= 1.5
    return m


@dataclass(frozen=True)
class AdmissibilityReport:
    """Whether a classical model's steady posterior is a valid quantum state."""

    model: ClassicalModel
    steady: Optional[tuple]
    area: Optional[float]
    admissible: bool
    status: str

    @property
    def margin(self) -> Optional[float]:
        """``A^ss - 1``; negative values violate the Heisenberg floor."""
        return None if self.area is None else self.area - 1.0


def admissibility_report(model: ClassicalModel, tol: float = ANALYTIC_TOL) -> AdmissibilityReport:
    """Check the measurement-disturbance relation for ``model``.

    The steady posterior must satisfy ``A^ss >= 1 - tol``; too little
    process noise for the given observation noise drives the area below the
    floor, describing a state sharper than quantum mechanics permits.
    """
    m = steady_state(model)
    if m is None:
        return AdmissibilityReport(model, None, None, False, "no steady state")
    det = m[0] * m[1] - m[2] ** 2
    area = math.sqrt(det)
    ok = det >= 1.0 - tol
    if ok:
        status = "admissible" if abs(area - 1.0) > math.sqrt(tol) else "admissible (pure)"
    else:
        status = "violates Heisenberg floor"
    return AdmissibilityReport(model, tuple(float(v) for v in m), area, bool(ok), status)
