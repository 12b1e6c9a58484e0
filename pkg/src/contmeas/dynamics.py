r"""Conditioned-mean simulation and record-driven filtering.

Given the deterministic covariance path, the conditioned means follow a
linear SDE. The simulator draws the Wiener increments, emits the
photocurrent increments ``dQ`` and advances the means; the filter does the
inverse, reconstructing innovations from a stored record. Both share one
stepping kernel, so a filter primed with the simulator's initial state
reproduces the simulator's path to round-off.

The kernel is Euler-Maruyama with the innovation's position term taken at
the end of the step:

.. math::

    m_{n+1} = m_n + \omega F m_n\,dt + \sum_j \frac{K_j}{\sigma_j}
              \left(dQ_j - h_j x_{n+1} dt\right),

which stays stable when the filter gain times ``dt`` is large (very broad
priors), and reduces to plain Euler-Maruyama as the gain goes to zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import riccati
from .exceptions import IncompatibleRecordError, IntegrationError, InvalidStateError
from .gaussian import (
    HETERODYNE,
    HOMODYNE,
    SDE_TOL,
    GaussianState,
    ModelParams,
    area_from_moments,
)

RECORD_FORMAT_VERSION = 1


def default_dt(params: ModelParams) -> float:
    """Default step ``1e-3 min(1, r, 1/q)`` in units of ``1/omega``, returned in model time."""
    return 1e-3 * min(1.0, params.r, 1.0 / params.q) / params.omega


def noise_stream(seed: int, trajectory: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, trajectory)``.

    Step ``n`` of a trajectory always consumes the ``n``-th block of the
    stream, so results do not depend on chunking or on how many other
    trajectories run alongside.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trajectory)])))


def n_channels(params: ModelParams) -> int:
    return 2 if params.mode == HETERODYNE else 1


# --------------------------------------------------------------------- records


@dataclass(frozen=True)
class MeasurementRecord:
    """Time-ordered photocurrent increments.

    ``increments_q1`` holds ``dQ`` (homodyne) or ``dQ_1`` (heterodyne);
    ``increments_q2`` holds ``dQ_2`` and exists only for heterodyne records.
    """

    dt: float
    increments_q1: np.ndarray
    params: ModelParams
    increments_q2: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        q1 = np.asarray(self.increments_q1, dtype=float)
        object.__setattr__(self, "increments_q1", q1)
        if not self.dt > 0:
            raise IncompatibleRecordError(f"dt must be positive, got {self.dt}")
        if self.params.mode == HETERODYNE:
            if self.increments_q2 is None:
                raise IncompatibleRecordError("heterodyne record needs increments_q2")
            q2 = np.asarray(self.increments_q2, dtype=float)
            if q2.shape != q1.shape:
                raise IncompatibleRecordError("increment sequences differ in length")
            object.__setattr__(self, "increments_q2", q2)
        elif self.increments_q2 is not None:
            raise IncompatibleRecordError("homodyne record must not carry increments_q2")

    def __len__(self):
        return self.increments_q1.shape[0]

    @property
    def times(self) -> np.ndarray:
        """Start time of each increment."""
        return np.arange(len(self)) * self.dt

    def increments(self) -> np.ndarray:
        """Increments as an ``(n, channels)`` array."""
        if self.increments_q2 is None:
            return self.increments_q1[:, None]
        return np.column_stack([self.increments_q1, self.increments_q2])


def write_record(record: MeasurementRecord, path) -> Path:
    """Write ``t, dQ1[, dQ2]`` as CSV plus a JSON sidecar next to it.

    Values are printed with 17 significant digits so reading the file back
    reproduces every double exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    inc = record.increments()
    cols = ["t", "dQ1"] + (["dQ2"] if inc.shape[1] == 2 else [])
    data = np.column_stack([record.times, inc])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
    sidecar = {
        "format": RECORD_FORMAT_VERSION,
        "dt": record.dt,
        "seed": record.seed,
        "n_steps": len(record),
        "params": record.params.to_dict(),
    }
    side = path.with_suffix(".json")
    side.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def read_record(path) -> MeasurementRecord:
    """Inverse of :func:`write_record`."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    params = ModelParams(**meta["params"])
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(header)))
    q2 = data[:, header.index("dQ2")] if "dQ2" in header else None
    record = MeasurementRecord(
        dt=float(meta["dt"]),
        increments_q1=data[:, header.index("dQ1")],
        increments_q2=q2,
        seed=meta.get("seed"),
        params=params,
    )
    if len(record) != meta["n_steps"]:
        raise IncompatibleRecordError("record length disagrees with its sidecar")
    return record


# ----------------------------------------------------------------- trajectories


@dataclass
class TrajectoryOutput:
    """Conditioned path on the grid ``times`` (``n_steps + 1`` points).

    ``mean`` is ``(n+1, 2)`` and ``cov`` is ``(n+1, 3)`` packed as
    ``(v_xx, v_pp, v_xp)``. For simulated data ``true_path`` is the
    generating filter's own conditioned mean: quantum mechanics provides no
    noise-free trajectory, so the reference observer's estimate plays the
    role of ground truth. ``innovations`` are the unit-normalised Wiener
    increments the filter reconstructed from the record.
    """

    times: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    record: MeasurementRecord
    true_path: Optional[np.ndarray] = None
    innovations: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.shape[0]

    def state(self, i: int) -> GaussianState:
        return GaussianState(*self.mean[i], *self.cov[i])

    @property
    def states(self) -> list:
        return [self.state(i) for i in range(len(self))]

    @property
    def area(self) -> np.ndarray:
        return area_from_moments(self.cov[:, 0], self.cov[:, 1], self.cov[:, 2])


class _Kernel:
    """Per-step gains for a fixed covariance path."""

    def __init__(self, params: ModelParams, cov: np.ndarray, dt: float, use_q2: bool = True):
        self.params = params
        self.dt = dt
        w, r = params.omega, params.r
        xx, xp = cov[:-1, 0], cov[:-1, 2]
        if params.mode == HETERODYNE:
            # (K_j / sigma_j) per channel, h_j, sigma_j
            k1 = (w / r) * np.stack([xx, xp], axis=1)
            k2 = np.zeros_like(k1)
            k2[:, 1] = -math.sqrt(w / r) if use_q2 else 0.0
            self.k_over_s = np.stack([k1, k2], axis=1)
            self.h = np.array([1.0, 0.0])
            self.sigma = np.array([math.sqrt(r / w), 1.0])
        else:
            c, s = math.cos(params.phi), math.sin(params.phi)
            k = (2.0 * w / r) * np.stack([c * xx, c * xp - s], axis=1)
            self.k_over_s = k[:, None, :]
            self.h = np.array([c])
            self.sigma = np.array([math.sqrt(r / (2.0 * w))])
        self.rot = (math.cos(w * dt), math.sin(w * dt))
        # implicit position coupling g = sum_j K_j h_j dt / sigma_j
        self.g = np.einsum("nmk,m->nk", self.k_over_s, self.h) * dt

    def step(self, n: int, x, p, dq):
        """Advance arrays ``x, p`` by one step given increments ``dq[..., m]``."""
        kos = self.k_over_s[n]
        drive = dq @ kos  # (..., 2)
        # free rotation is applied exactly; an Euler rotation grows the
        # phase-space norm by (1 + (omega dt)^2) per step
        c, s = self.rot
        bx = c * x + s * p + drive[..., 0]
        bp = c * p - s * x + drive[..., 1]
        gx, gp = self.g[n]
        x1 = bx / (1.0 + gx)
        p1 = bp - gp * x1
        return x1, p1

    def innovations(self, x, dq):
        return (dq - self.h * (x[..., None] * self.dt)) / self.sigma


def _check_initial(state: GaussianState, params: ModelParams):
    if params.q == 1.0 and state.v_xx * state.v_pp - state.v_xp**2 < 1.0 - SDE_TOL:
        raise InvalidStateError("initial state violates the Heisenberg floor")


def _grid(n_steps: int, dt: float) -> np.ndarray:
    return np.arange(n_steps + 1) * dt


def simulate(
    params: ModelParams,
    initial: GaussianState,
    n_steps: int,
    dt: Optional[float] = None,
    seed: int = 0,
    trajectory: int = 0,
    dW: Optional[np.ndarray] = None,
) -> TrajectoryOutput:
    """Generate a measurement record and its conditioned path.

    ``dW`` may supply the Wiener increments directly (shape
    ``(n_steps, channels)``); otherwise they are drawn from
    ``noise_stream(seed, trajectory)``.
    """
    _check_initial(initial, params)
    dt = default_dt(params) if dt is None else float(dt)
    m = n_channels(params)
    times = _grid(n_steps, dt)
    cov = riccati.covariance_path(params, initial, times)
    kern = _Kernel(params, cov, dt)
    if dW is None:
        dW = noise_stream(seed, trajectory).standard_normal((n_steps, m)) * math.sqrt(dt)
    dW = np.asarray(dW, dtype=float).reshape(n_steps, m)
    mean = np.empty((n_steps + 1, 2))
    dq = np.empty((n_steps, m))
    x, p = initial.mean_x, initial.mean_p
    mean[0] = x, p
    h, sig = kern.h, kern.sigma
    for n in range(n_steps):
        dq[n] = h * x * dt + sig * dW[n]
        x, p = kern.step(n, x, p, dq[n])
        mean[n + 1] = x, p
    if not np.all(np.isfinite(mean)):
        bad = int(np.argmax(~np.all(np.isfinite(mean), axis=1)))
        raise IntegrationError("non-finite conditioned mean", time=float(times[bad]), step=bad)
    record = MeasurementRecord(
        dt=dt,
        increments_q1=dq[:, 0].copy(),
        increments_q2=dq[:, 1].copy() if m == 2 else None,
        seed=seed,
        params=params,
    )
    innov = kern.innovations(mean[:-1, 0], dq)
    return TrajectoryOutput(times, mean, cov, record, true_path=mean.copy(), innovations=innov)


def _check_compatible(record: MeasurementRecord, params: Optional[ModelParams], dt):
    if params is not None and params != record.params:
        raise IncompatibleRecordError(
            f"record was taken with {record.params.to_dict()}, not {params.to_dict()}"
        )
    if dt is not None and not math.isclose(dt, record.dt, rel_tol=1e-12):
        raise IncompatibleRecordError(f"record dt={record.dt} differs from dt={dt}")


def filter_record(
    record: MeasurementRecord,
    prior: GaussianState,
    params: Optional[ModelParams] = None,
    dt: Optional[float] = None,
    use_q2: bool = True,
) -> TrajectoryOutput:
    """Propagate ``prior`` through ``record``.

    The prior's covariance fixes the (deterministic) covariance path; the
    means are driven by the innovations reconstructed from ``dQ``. For
    heterodyne records ``use_q2=False`` drops the second quadrature from the
    mean update; the covariance path is left unchanged, i.e. it is still the
    one conditioned on both quadratures.
    """
    _check_compatible(record, params, dt)
    params = record.params
    _check_initial(prior, params)
    n_steps = len(record)
    times = _grid(n_steps, record.dt)
    cov = riccati.covariance_path(params, prior, times)
    kern = _Kernel(params, cov, record.dt, use_q2=use_q2)
    dq = record.increments()
    if not use_q2 and dq.shape[1] == 2:
        dq = dq.copy()
        dq[:, 1] = 0.0
    mean = np.empty((n_steps + 1, 2))
    x, p = prior.mean_x, prior.mean_p
    mean[0] = x, p
    for n in range(n_steps):
        x, p = kern.step(n, x, p, dq[n])
        mean[n + 1] = x, p
    if not np.all(np.isfinite(mean)):
        bad = int(np.argmax(~np.all(np.isfinite(mean), axis=1)))
        raise IntegrationError("non-finite filtered mean", time=float(times[bad]), step=bad)
    innov = kern.innovations(mean[:-1, 0], dq)
    return TrajectoryOutput(times, mean, cov, record, innovations=innov)


# -------------------------------------------------------------------- ensembles


@dataclass
class EnsembleOutput:
    """Conditioned means of many trajectories at selected checkpoints."""

    times: np.ndarray       # (k,)
    mean: np.ndarray        # (k, n_traj, 2)
    cov: np.ndarray         # (k, 3), shared by all trajectories
    steps: np.ndarray       # (k,) step indices of the checkpoints

    @property
    def n_traj(self) -> int:
        return self.mean.shape[1]

    def total_covariance(self) -> np.ndarray:
        """Ensemble covariance of the means plus the conditioned covariance.

        Returned packed as ``(k, 3)``; by the law of total variance this
        estimates the unconditioned covariance.
        """
        return self.mean_covariance() + self.cov

    def mean_covariance(self) -> np.ndarray:
        m = self.mean - self.mean.mean(axis=1, keepdims=True)
        n = self.n_traj
        xx = np.einsum("kn,kn->k", m[..., 0], m[..., 0]) / (n - 1)
        pp = np.einsum("kn,kn->k", m[..., 1], m[..., 1]) / (n - 1)
        xp = np.einsum("kn,kn->k", m[..., 0], m[..., 1]) / (n - 1)
        return np.stack([xx, pp, xp], axis=1)


class EnsembleNoise:
    """Chunked Wiener increments from independent per-trajectory streams."""

    def __init__(self, seed: int, n_traj: int, channels: int, dt: float, offset: int = 0):
        self.gens = [noise_stream(seed, offset + i) for i in range(n_traj)]
        self.channels = channels
        self.scale = math.sqrt(dt)

    def draw(self, n: int) -> np.ndarray:
        """Next ``n`` steps as ``(n, n_traj, channels)``."""
        blocks = [g.standard_normal((n, self.channels)) for g in self.gens]
        return np.stack(blocks, axis=1) * self.scale


def simulate_ensemble(
    params: ModelParams,
    initial: GaussianState,
    n_steps: int,
    n_traj: int,
    checkpoints: Sequence[int],
    dt: Optional[float] = None,
    seed: int = 0,
    chunk: int = 2048,
) -> EnsembleOutput:
    """Vectorised :func:`simulate` over trajectories ``0 .. n_traj-1``.

    Trajectory ``i`` uses ``noise_stream(seed, i)``, so it coincides with
    ``simulate(..., seed=seed, trajectory=i)``.
    """
    _check_initial(initial, params)
    dt = default_dt(params) if dt is None else float(dt)
    steps = np.unique(np.asarray(checkpoints, dtype=int))
    if steps.size == 0 or steps[0] < 0 or steps[-1] > n_steps:
        raise ValueError("checkpoints must lie in [0, n_steps]")
    m = n_channels(params)
    times = _grid(n_steps, dt)
    cov = riccati.covariance_path(params, initial, times)
    kern = _Kernel(params, cov, dt)
    noise = EnsembleNoise(seed, n_traj, m, dt)
    x = np.full(n_traj, initial.mean_x)
    p = np.full(n_traj, initial.mean_p)
    out = np.empty((steps.size, n_traj, 2))
    k = 0
    h, sig = kern.h, kern.sigma
    n = 0
    while k < steps.size:
        while k < steps.size and steps[k] == n:
            out[k, :, 0], out[k, :, 1] = x, p
            k += 1
        if k == steps.size:
            break
        block = noise.draw(min(chunk, steps[-1] - n))
        for dw in block:
            dq = h * (x[:, None] * dt) + sig * dw
            x, p = kern.step(n, x, p, dq)
            n += 1
            while k < steps.size and steps[k] == n:
                out[k, :, 0], out[k, :, 1] = x, p
                k += 1
    return EnsembleOutput(times=times[steps], mean=out, cov=cov[steps], steps=steps)


# ------------------------------------------------------------------ reference


def moment_step(params: ModelParams, state: GaussianState, dQ, dt: float) -> GaussianState:
    """One explicit Euler-Maruyama step of the full moment equations.

    Means and covariance are both advanced from the values at the start of
    the step, driven by the innovation reconstructed from ``dQ`` (a pair for
    heterodyne detection). This is the textbook discretisation; it is used
    as the reference path for the classical-filter comparison.
    """
    w, r = params.omega, params.r
    x, p = state.mean_x, state.mean_p
    xx, pp, xp = state.v_xx, state.v_pp, state.v_xp
    if params.mode == HETERODYNE:
        dq1, dq2 = dQ
        dw1 = (dq1 - x * dt) / math.sqrt(r / w)
        dw2 = dq2
        k = math.sqrt(w / r)
        nx = x + w * p * dt + k * xx * dw1
        np_ = p - w * x * dt + k * (xp * dw1 - dw2)
        coeffs = riccati.RiccatiCoeffs.from_params(params)
    else:
        c, s = math.cos(params.phi), math.sin(params.phi)
        dw = math.sqrt(2.0 * w / r) * (dQ - c * x * dt)
        k = math.sqrt(2.0 * w / r)
        nx = x + w * p * dt + k * c * xx * dw
        np_ = p - w * x * dt + k * (c * xp - s) * dw
        coeffs = riccati.RiccatiCoeffs.from_params(params)
    dv = coeffs.rhs((xx, pp, xp)) * dt
    return GaussianState(nx, np_, xx + dv[0], pp + dv[1], xp + dv[2])


def unconditioned_moments(params: ModelParams, initial: GaussianState, t):
    """Exact means and covariance of the unconditioned (ensemble) evolution.

    Measurement does not enter the master equation except through the
    momentum diffusion ``2 q^2 / r``, so the result is independent of the
    detection phase and mode: the means rotate and the covariance rotates
    while accumulating secular diffusion. Returns ``(means, moments)`` with
    shapes ``(2,)``/``(3,)`` for scalar ``t`` and ``(n, 2)``/``(n, 3)`` for
    arrays.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    tau = params.omega * t_arr
    c, s = np.cos(tau), np.sin(tau)
    x0, p0 = initial.mean_x, initial.mean_p
    means = np.stack([c * x0 + s * p0, -s * x0 + c * p0], axis=1)
    vxx0, vpp0, vxp0 = initial.v_xx, initial.v_pp, initial.v_xp
    # R V0 R^T with R = [[c, s], [-s, c]]
    rxx = c * c * vxx0 + 2 * c * s * vxp0 + s * s * vpp0
    rpp = s * s * vxx0 - 2 * c * s * vxp0 + c * c * vpp0
    rxp = -c * s * vxx0 + (c * c - s * s) * vxp0 + c * s * vpp0
    d = 2.0 * params.q**2 / params.r
    dxx = d * (tau / 2 - np.sin(2 * tau) / 4)
    dpp = d * (tau / 2 + np.sin(2 * tau) / 4)
    dxp = d * s * s / 2
    moments = np.stack([rxx + dxx, rpp + dpp, rxp + dxp], axis=1)
    if np.ndim(t) == 0:
        return means[0], moments[0]
    return means, moments
