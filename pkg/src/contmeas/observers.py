r"""Two observers conditioning on one shared record.

Alice (the reference observer) and Bob run the same filter on the same
photocurrent but start from different priors. Writing the record in terms of
Alice's innovations, the difference of their means ``e = m_B - m_A`` obeys

.. math::

    de = M_B(t)\, e\, dt + \sum_j (K^B_j - K^A_j)\, dW_j,
    \qquad M_B = \omega F - \sum_j \frac{K^B_j h_j^T}{\sigma_j},

so Bob's covariance sets the damping and the covariance difference sets the
noise. Its second moments ``E = <e e^T>`` follow
``dE/dt = M_B E + E M_B^T + sum_j dK_j dK_j^T``. Once the two covariance
paths coincide the noise drops out and ``e`` relaxes deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import dynamics, riccati
from .exceptions import IntegrationError, InvalidParameterError, InvalidStateError
from .gaussian import HETERODYNE, GaussianState, ModelParams

#: default relative agreement threshold on the error-covariance determinant
AGREEMENT_THRESHOLD = 1e-6
CONVENTIONS = ("initial", "steady")


@dataclass(frozen=True)
class ObserverErrorState:
    """Mean difference, its expected second moments and both covariances.

    ``v_a`` and ``v_b`` are packed ``(v_xx, v_pp, v_xp)`` triples.
    """

    e_x: float
    e_p: float
    exx: float
    epp: float
    exp_: float
    v_a: tuple
    v_b: tuple

    def __post_init__(self):
        if self.exx < 0 or self.epp < 0 or self.exx * self.epp - self.exp_**2 < -1e-12 * max(
            1.0, self.exx * self.epp
        ):
            raise InvalidStateError("error second-moment matrix is not positive semidefinite")
        object.__setattr__(self, "v_a", tuple(float(v) for v in self.v_a))
        object.__setattr__(self, "v_b", tuple(float(v) for v in self.v_b))

    @classmethod
    def initial(cls, params: ModelParams, v_b, e0=0.0, v_a=None, e_mean=(0.0, 0.0)):
        """Alice at the steady state (unless ``v_a`` is given); ``E(0)`` isotropic ``e0``.

        ``e0`` may also be a packed triple.
        """
        if v_a is None:
            v_a = riccati.steady_state(params).moments
        e = np.broadcast_to(np.asarray(e0, dtype=float), (3,)) if np.ndim(e0) else (e0, e0, 0.0)
        return cls(e_mean[0], e_mean[1], e[0], e[1], e[2], tuple(_moments(v_a)), tuple(_moments(v_b)))

    @property
    def error_moments(self) -> np.ndarray:
        return np.array([self.exx, self.epp, self.exp_])

    @property
    def determinant(self) -> float:
        return self.exx * self.epp - self.exp_**2


def _moments(v) -> np.ndarray:
    if isinstance(v, GaussianState):
        return v.moments
    v = np.asarray(v, dtype=float)
    if v.shape == (2, 2):
        return np.array([v[0, 0], v[1, 1], v[0, 1]])
    return v.reshape(3)


def _channels(params: ModelParams):
    """Per-channel ``(gain vector builder, h, sigma)`` in the model's units.

    ``K_j(V) = u_j * (V_xx, V_xp) + k_j`` with scalars ``u_j`` and constant
    vectors ``k_j``.
    """
    w, r = params.omega, params.r
    if params.mode == HETERODYNE:
        return [
            (math.sqrt(w / r), np.zeros(2), 1.0, math.sqrt(r / w)),
            (0.0, np.array([0.0, -math.sqrt(w / r)]), 0.0, 1.0),
        ]
    c, s = math.cos(params.phi), math.sin(params.phi)
    u = math.sqrt(2.0 * w / r)
    return [(u * c, np.array([0.0, -u * s]), c, math.sqrt(r / (2.0 * w)))]


def _gain(channel, v):
    u, k, _, _ = channel
    return u * np.array([v[0], v[2]]) + k


def drift_matrix(params: ModelParams, v_b) -> np.ndarray:
    """``M_B`` for Bob's covariance ``v_b``."""
    w = params.omega
    m = np.array([[0.0, w], [-w, 0.0]])
    for ch in _channels(params):
        _, _, h, sig = ch
        m[:, 0] -= _gain(ch, v_b) * h / sig
    return m


def noise_vectors(params: ModelParams, v_a, v_b):
    """Columns ``K^B_j - K^A_j``; exactly zero when the covariances agree."""
    v_a, v_b = _moments(v_a), _moments(v_b)
    return [_gain(ch, v_b) - _gain(ch, v_a) for ch in _channels(params)]


def _coeffs(params):
    return riccati.RiccatiCoeffs.from_params(params)


def _error_rhs(params: ModelParams, v_a, v_b, e) -> np.ndarray:
    m = drift_matrix(params, v_b)
    emat = np.array([[e[0], e[2]], [e[2], e[1]]])
    de = m @ emat + emat @ m.T
    for dk in noise_vectors(params, v_a, v_b):
        de += np.outer(dk, dk)
    return np.array([de[0, 0], de[1, 1], de[0, 1]])


def _joint_rhs(params: ModelParams, coeffs):
    """Vectorised right-hand side for ``(V_A, V_B, E)`` stacked as 9 rows."""
    chans = _channels(params)
    big_g = sum(u * h / sig for u, _, h, sig in chans)
    k_p = sum(k[1] * h / sig for _, k, h, sig in chans)
    u2 = sum(u * u for u, _, _, _ in chans)
    g, dif, a, w = coeffs.gain, coeffs.diffusion, coeffs.rotation, coeffs.omega

    def flow(xx, pp, xp):
        return (
            w * (2.0 * xp - g * xx * xx),
            w * (-2.0 * a * xp + dif - g * xp * xp),
            w * (pp - a * xx - g * xx * xp),
        )

    def rhs(_t, y):
        axx, app, axp, bxx, bpp, bxp, exx, epp, exp_ = y
        m11 = -big_g * bxx
        m21 = -w - big_g * bxp - k_p
        dxx, dxp = bxx - axx, bxp - axp
        return np.array(
            [
                *flow(axx, app, axp),
                *flow(bxx, bpp, bxp),
                2.0 * (m11 * exx + w * exp_) + u2 * dxx * dxx,
                2.0 * m21 * exp_ + u2 * dxp * dxp,
                m11 * exp_ + w * epp + m21 * exx + u2 * dxx * dxp,
            ]
        )

    return rhs


def error_sde_step(state: ObserverErrorState, params: ModelParams, dW, dt: float) -> ObserverErrorState:
    """One Euler-Maruyama step of the mean difference.

    ``dW`` are Alice's innovations over the step (one per channel). The two
    covariances are advanced exactly along the Riccati flow and the expected
    moments by one Euler step of their ODE.
    """
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    e = np.array([state.e_x, state.e_p])
    m = drift_matrix(params, state.v_b)
    de = m @ e * dt
    for dk, dw in zip(noise_vectors(params, state.v_a, state.v_b), dW):
        de = de + dk * dw
    coeffs = _coeffs(params)
    emom = state.error_moments + _error_rhs(params, state.v_a, state.v_b, state.error_moments) * dt
    va = riccati.reid_solution(coeffs, np.asarray(state.v_a), dt)
    vb = riccati.reid_solution(coeffs, np.asarray(state.v_b), dt)
    return ObserverErrorState(
        e[0] + de[0], e[1] + de[1], emom[0], emom[1], emom[2], tuple(va), tuple(vb)
    )


@dataclass
class ErrorPath:
    """Expected error moments and both covariance paths on ``times``."""

    times: np.ndarray
    error: np.ndarray  # (n, 3) packed E
    v_a: np.ndarray    # (n, 3)
    v_b: np.ndarray    # (n, 3)
    params: ModelParams

    @property
    def determinant(self) -> np.ndarray:
        return self.error[:, 0] * self.error[:, 1] - self.error[:, 2] ** 2

    def steady_determinant(self) -> float:
        return float(np.prod(riccati.steady_state(self.params).moments[:2]))


def _transported(coeffs, v_b0, delta0, t):
    """Bob's covariance path and ``Phi delta0 Phi^T`` on the grid ``t``.

    ``Phi = U^{-T}`` is the transition matrix of ``M_B``, with ``U`` the Reid
    factor of Bob's covariance. Each interval restarts the exact propagator,
    and the transported matrix is updated in place so nothing overflows.
    """
    ham = coeffs.hamiltonian()
    vb = np.empty((t.size, 3))
    tr = np.empty((t.size, 3))
    v = np.array([[v_b0[0], v_b0[2]], [v_b0[2], v_b0[1]]])
    d = np.array([[delta0[0], delta0[2]], [delta0[2], delta0[1]]])
    vb[0] = v_b0
    tr[0] = delta0
    for i in range(1, t.size):
        z = expm(ham * (t[i] - t[i - 1])) @ np.vstack([np.eye(2), v])
        u, w = z[:2], z[2:]
        v = np.linalg.solve(u.T, w.T).T
        v = 0.5 * (v + v.T)
        # U^{-T} d U^{-1}
        d = np.linalg.solve(u.T, np.linalg.solve(u.T, d).T)
        d = 0.5 * (d + d.T)
        vb[i] = v[0, 0], v[1, 1], v[0, 1]
        tr[i] = d[0, 0], d[1, 1], d[0, 1]
    return vb, tr


def error_covariance_flow(
    initial: ObserverErrorState,
    params: ModelParams,
    t_grid,
    method: str = "exact",
    rtol: float = 1e-8,
    atol: float = 1e-14,
) -> ErrorPath:
    """Expected error moments together with both covariance paths.

    ``method="exact"`` uses the closed solution
    ``E(t) = V_B(t) - V_A(t) + Phi(t) (E(0) - V_B(0) + V_A(0)) Phi(t)^T``:
    the difference of the two covariances solves the error equation on its
    own, and the remainder is transported by the error drift. It needs only
    matrix exponentials and is free of the stiffness that broad priors
    cause. ``method="ode"`` integrates the nine coupled equations with an
    implicit Radau scheme instead and serves as an independent check.
    """
    t = riccati._check_grid(t_grid)
    coeffs = _coeffs(params)
    va0, vb0, e0 = np.array(initial.v_a), np.array(initial.v_b), initial.error_moments
    if method == "exact":
        if t[0] != 0.0:
            t_full = np.concatenate([[0.0], t])
        else:
            t_full = t
        va = riccati.reid_solution(coeffs, va0, t_full)
        vb, tr = _transported(coeffs, vb0, e0 - vb0 + va0, t_full)
        err = vb - va + tr
        sl = slice(t_full.size - t.size, None)
        return ErrorPath(t, err[sl], va[sl], vb[sl], params)
    if method != "ode":
        raise InvalidParameterError(f"method must be 'exact' or 'ode', got {method!r}")
    y0 = np.concatenate([va0, vb0, e0])
    if t.size == 1:
        return ErrorPath(t, y0[None, 6:], y0[None, :3], y0[None, 3:6], params)
    rhs = _joint_rhs(params, coeffs)
    sol = solve_ivp(
        rhs, (t[0], t[-1]), y0, method="Radau", t_eval=t, rtol=rtol, atol=atol, vectorized=True
    )
    if not sol.success or sol.y.shape[1] != t.size:
        raise IntegrationError(f"error-covariance integration failed: {sol.message}", time=float(sol.t[-1]))
    y = sol.y.T
    if not np.all(np.isfinite(y)):
        bad = int(np.argmax(~np.all(np.isfinite(y), axis=1)))
        raise IntegrationError("non-finite error covariance", time=float(t[bad]), step=bad)
    return ErrorPath(t, y[:, 6:], y[:, :3], y[:, 3:6], params)


def agreement_time(path: ErrorPath, threshold: float = AGREEMENT_THRESHOLD, convention: str = "initial") -> float:
    """First grid time at which ``det E`` drops below ``threshold * reference``.

    ``convention="initial"`` uses ``det E(0)``; ``"steady"`` uses the product
    of Alice's steady variances ``V_xx V_pp``, an absolute scale that does not
    depend on how broad Bob's prior was. Between grid points the crossing is
    located by log-linear interpolation. Returns ``inf`` if the threshold is
    never reached within the path's horizon.
    """
    if convention not in CONVENTIONS:
        raise InvalidParameterError(f"convention must be one of {CONVENTIONS}")
    det = path.determinant
    ref = det[0] if convention == "initial" else path.steady_determinant()
    level = threshold * ref
    below = np.flatnonzero(det <= level)
    if below.size == 0:
        return math.inf
    i = int(below[0])
    if i == 0:
        return float(path.times[0])
    d0, d1 = det[i - 1], det[i]
    t0, t1 = path.times[i - 1], path.times[i]
    if d1 > 0 and d0 > 0 and level > 0:
        frac = math.log(d0 / level) / math.log(d0 / d1)
    else:
        frac = (d0 - level) / (d0 - d1)
    return float(t0 + frac * (t1 - t0))


@dataclass
class PairedRun:
    """Monte Carlo over paired filters sharing each record."""

    times: np.ndarray
    error: np.ndarray       # (k, 3) sample second moments of e
    stderr: np.ndarray      # (k, 3) standard errors of those moments
    n_runs: int
    max_abs_diff: np.ndarray  # (k,) max over runs of |e|


def paired_filters(
    params: ModelParams,
    prior_a: GaussianState,
    prior_b: GaussianState,
    n_steps: int,
    n_runs: int,
    checkpoints,
    dt: Optional[float] = None,
    seed: int = 0,
    truth: str = "a",
    offset_cov=None,
    chunk: int = 2048,
) -> PairedRun:
    """Generate records and filter each with both priors.

    The record is simulated from observer ``truth`` (``"a"`` or ``"b"``),
    whose filter then coincides with the generating path; trajectory ``i``
    uses ``noise_stream(seed, i)``. Both filters apply the exact kernel of
    :func:`dynamics.filter_record`, vectorised over runs. ``offset_cov``
    (packed triple) draws Bob's initial mean offset ``e(0)`` from a zero-mean
    Gaussian with that covariance, using :func:`offset_stream`; otherwise the
    offset is fixed by the two priors' means.
    """
    dt = dynamics.default_dt(params) if dt is None else float(dt)
    steps = np.unique(np.asarray(checkpoints, dtype=int))
    if steps.size == 0 or steps[0] < 0 or steps[-1] > n_steps:
        raise ValueError("checkpoints must lie in [0, n_steps]")
    times = np.arange(n_steps + 1) * dt
    ka = dynamics._Kernel(params, riccati.covariance_path(params, prior_a, times), dt)
    kb = dynamics._Kernel(params, riccati.covariance_path(params, prior_b, times), dt)
    gen, other = (ka, kb) if truth == "a" else (kb, ka)
    pg, po = (prior_a, prior_b) if truth == "a" else (prior_b, prior_a)
    m = dynamics.n_channels(params)
    noise = dynamics.EnsembleNoise(seed, n_runs, m, dt)
    xg, pgm = np.full(n_runs, pg.mean_x), np.full(n_runs, pg.mean_p)
    xo, pom = np.full(n_runs, po.mean_x), np.full(n_runs, po.mean_p)
    if offset_cov is not None:
        oc = _moments(offset_cov)
        chol = np.linalg.cholesky(np.array([[oc[0], oc[2]], [oc[2], oc[1]]]))
        z = np.stack([offset_stream(seed, i).standard_normal(2) for i in range(n_runs)])
        off = z @ chol.T
        sgn = 1.0 if truth == "a" else -1.0
        xo, pom = xo + sgn * off[:, 0], pom + sgn * off[:, 1]
    sign = 1.0 if truth == "a" else -1.0
    out = np.empty((steps.size, n_runs, 2))

    def record(k):
        out[k, :, 0] = sign * (xo - xg)
        out[k, :, 1] = sign * (pom - pgm)

    k, n = 0, 0
    while k < steps.size and steps[k] == 0:
        record(k)
        k += 1
    while n < steps[-1]:
        block = noise.draw(min(chunk, steps[-1] - n))
        for dw in block:
            dq = gen.h * (xg[:, None] * dt) + gen.sigma * dw
            xg, pgm = gen.step(n, xg, pgm, dq)
            xo, pom = other.step(n, xo, pom, dq)
            n += 1
            while k < steps.size and steps[k] == n:
                record(k)
                k += 1
    ex, ep = out[..., 0], out[..., 1]
    prods = np.stack([ex * ex, ep * ep, ex * ep], axis=-1)
    err = prods.mean(axis=1)
    se = prods.std(axis=1, ddof=1) / math.sqrt(n_runs)
    mad = np.max(np.hypot(ex, ep), axis=1)
    return PairedRun(times[steps], err, se, n_runs, mad)


def offset_stream(seed: int, trajectory: int) -> np.random.Generator:
    """Stream for initial prior offsets, disjoint from the record noise."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trajectory), 1])))


def with_covariances(state: ObserverErrorState, v_a=None, v_b=None) -> ObserverErrorState:
    return replace(
        state,
        v_a=state.v_a if v_a is None else tuple(_moments(v_a)),
        v_b=state.v_b if v_b is None else tuple(_moments(v_b)),
    )
