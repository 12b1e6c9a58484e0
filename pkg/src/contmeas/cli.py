"""Command-line front end.

Each subcommand reads an optional JSON scenario file, runs one experiment,
and writes into ``--out``: a CSV time series, ``summary.json``, and
(unless ``--no-figures``) a PNG figure. Outputs depend only on the
configuration and seed, so repeated runs produce identical files.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from . import __version__, cavity, dynamics, kalman, observers, riccati
from .exceptions import (
    ConfigError,
    ContmeasError,
    IntegrationError,
    InvalidParameterError,
    InvalidStateError,
    NoSteadyStateError,
)
from .gaussian import (
    HOMODYNE,
    SDE_TOL,
    GaussianState,
    ModelParams,
    area_from_moments,
    linear_entropy,
    von_neumann_entropy,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4

KINDS = ("steady-state", "relax", "simulate", "observers", "kalman-compare", "cavity")
STATE_COLUMNS = ["t", "x_mean", "p_mean", "v_xx", "v_pp", "v_xp", "area", "S_vn", "s_lin"]
ERROR_COLUMNS = ["e_xx", "e_pp", "e_xp"]

COMMON_KEYS = {"kind", "r", "phi", "q", "omega", "mode", "initial", "v0", "horizon", "dt", "steps", "seed", "stride"}
KIND_KEYS = {
    "steady-state": set(),
    "relax": set(),
    "simulate": set(),
    "observers": {"v_b0", "e0", "threshold", "convention", "mc_runs", "mc_checkpoints"},
    "kalman-compare": {"proc_noise"},
    "cavity": {"preset", "cavity", "omega_trap"},
}
# rows written for stochastic runs are thinned to about this many by default
_TARGET_ROWS = 2000


class InvariantViolation(ContmeasError):
    """A physical invariant failed on emitted data."""


@dataclass
class ScenarioConfig:
    kind: str
    params: ModelParams
    initial: GaussianState
    horizon: float
    dt: float
    steps: int
    seed: int = 0
    stride: int = 1
    extra: dict = field(default_factory=dict)


# ----------------------------------------------------------------- config


def _number(data, key, default, cast=float, minimum=None, strict=False):
    v = data.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}", key=key)
    if cast is int and float(v) != int(v):
        raise ConfigError(f"{key} must be an integer, got {v!r}", key=key)
    v = cast(v)
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite", key=key)
    if minimum is not None and (v <= minimum if strict else v < minimum):
        raise ConfigError(f"{key} must be {'>' if strict else '>='} {minimum}, got {v}", key=key)
    return v


def _initial(data, params) -> GaussianState:
    if "initial" in data and "v0" in data:
        raise ConfigError("give either 'initial' or 'v0', not both", key="initial")
    if "initial" in data:
        init = data["initial"]
        if init == "steady":
            return riccati.steady_state(params)
        if not isinstance(init, dict):
            raise ConfigError("initial must be an object or 'steady'", key="initial")
        allowed = {"mean_x", "mean_p", "v_xx", "v_pp", "v_xp"}
        bad = [k for k in init if k not in allowed]
        if bad:
            raise ConfigError(f"unknown key {bad[0]!r} in initial", key=f"initial.{bad[0]}")
        try:
            return GaussianState(**{k: _number(init, k, None) for k in init})
        except InvalidStateError as exc:
            raise ConfigError(str(exc), key="initial") from exc
    v0 = _number(data, "v0", 20.0, minimum=0.0, strict=True)
    return GaussianState.thermal(v0)


def build_config(kind: str, data: dict, seed=None, dt=None, steps=None) -> ScenarioConfig:
    """Validate a raw mapping into a :class:`ScenarioConfig`; CLI flags win over file values."""
    if kind not in KINDS:
        raise ConfigError(f"unknown scenario kind {kind!r}", key="kind")
    if "kind" in data and data["kind"] != kind:
        raise ConfigError(f"config is for {data['kind']!r}, not {kind!r}", key="kind")
    allowed = COMMON_KEYS | KIND_KEYS[kind]
    for key in data:
        if key not in allowed and not key.startswith("_"):
            raise ConfigError(f"unknown key {key!r} for {kind}", key=key)
    if kind == "cavity":
        extra = {k: data[k] for k in KIND_KEYS["cavity"] if k in data}
        return ScenarioConfig(kind, ModelParams(r=1.0), GaussianState(), 0.0, 1.0, 0, extra=extra)
    try:
        params = ModelParams(
            r=_number(data, "r", 20.0),
            phi=_number(data, "phi", 0.0),
            q=_number(data, "q", 1.0),
            omega=_number(data, "omega", 1.0),
            mode=data.get("mode", HOMODYNE),
        )
    except InvalidParameterError as exc:
        msg = str(exc)
        key = msg.split()[0] if msg.split()[0] in ("r", "phi", "q", "omega", "mode") else None
        raise ConfigError(msg, key=key) from exc
    initial = _initial(data, params)
    stochastic = kind in ("simulate", "observers", "kalman-compare")
    if dt is None:
        dt = _number(data, "dt", dynamics.default_dt(params) if stochastic else 0.1 / params.omega,
                     minimum=0.0, strict=True)
    elif not dt > 0:
        raise ConfigError("--dt must be positive", key="dt")
    tau = riccati.collapse_time(params.r, params.omega, params.q, params.mode)
    default_horizon = {"steady-state": 0.0, "relax": 5 * tau, "simulate": 2 * tau,
                       "observers": 5 * tau, "kalman-compare": 1e4 * dt}[kind]
    if steps is None and "steps" in data:
        steps = _number(data, "steps", None, cast=int, minimum=0)
    if steps is not None:
        if steps < 0:
            raise ConfigError("steps must be non-negative", key="steps")
        horizon = steps * dt
    else:
        horizon = _number(data, "horizon", default_horizon, minimum=0.0)
        steps = int(math.ceil(horizon / dt - 1e-9))
        horizon = steps * dt
    if seed is None:
        seed = _number(data, "seed", 0, cast=int, minimum=0)
    default_stride = max(1, steps // _TARGET_ROWS) if stochastic else 1
    stride = _number(data, "stride", default_stride, cast=int, minimum=1)
    extra = {k: data[k] for k in KIND_KEYS[kind] if k in data}
    return ScenarioConfig(kind, params, initial, horizon, dt, steps, int(seed), stride, extra)


def load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", key="--config") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}", key="--config") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", key="--config")
    return data


# ----------------------------------------------------------------- output


def _fmt(v) -> str:
    return format(float(v), ".17g")


def state_table(t, mean, cov, params: ModelParams, error=None) -> np.ndarray:
    """Rows of the CSV schema; entropies use the stochastic tolerance."""
    area = np.asarray(area_from_moments(cov[:, 0], cov[:, 1], cov[:, 2]), dtype=float).reshape(-1)
    try:
        s_vn = np.atleast_1d(von_neumann_entropy(area, tol=SDE_TOL))
        s_lin = np.atleast_1d(linear_entropy(area, tol=SDE_TOL))
    except InvalidStateError as exc:
        raise InvariantViolation(f"emitted state below the Heisenberg floor: {exc}") from exc
    cols = [t, mean[:, 0], mean[:, 1], cov[:, 0], cov[:, 1], cov[:, 2], area, s_vn, s_lin]
    if error is not None:
        cols += [error[:, 0], error[:, 1], error[:, 2]]
    return np.column_stack(cols)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _clean(obj):
    """JSON-safe copy: numpy scalars to floats, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_summary(out: Path, summary: dict) -> Path:
    path = out / "summary.json"
    path.write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")
    return path


def _base_summary(cfg: ScenarioConfig) -> dict:
    p = cfg.params
    return {
        "kind": cfg.kind,
        "version": __version__,
        "params": p.to_dict(),
        "initial": dict(zip(["mean_x", "mean_p", "v_xx", "v_pp", "v_xp"], [*cfg.initial.mean, *cfg.initial.moments])),
        "dt": cfg.dt,
        "steps": cfg.steps,
        "horizon": cfg.horizon,
        "seed": cfg.seed,
        "tau_col": riccati.collapse_time(p.r, p.omega, p.q, p.mode),
        "sign_flipped": riccati.RiccatiCoeffs.from_params(p).sign_flipped,
    }


def _steady_or_none(params):
    try:
        return riccati.steady_state(params)
    except NoSteadyStateError:
        return None


def _min_area_violation(table, params) -> float:
    """How far the minimum area dips below one (0 when it does not); q = 1 only."""
    if params.q != 1.0:
        return 0.0
    return float(max(0.0, 1.0 - np.min(table[:, 6])))


# ------------------------------------------------------------- scenarios


def run_steady_state(cfg: ScenarioConfig, out: Path, figures: bool):
    p = cfg.params
    ss = riccati.steady_state(p)
    coeffs = riccati.RiccatiCoeffs.from_params(p)
    table = state_table(np.zeros(1), np.zeros((1, 2)), ss.moments[None, :], p)
    write_csv(out / "steady-state.csv", STATE_COLUMNS, table)
    s = _base_summary(cfg)
    s.update(
        steady={"v_xx": ss.v_xx, "v_pp": ss.v_pp, "v_xp": ss.v_xp},
        area=table[0, 6],
        S_vn=table[0, 7],
        s_lin=table[0, 8],
        residual=riccati.flow_residual(coeffs, ss),
        max_invariant_violation=_min_area_violation(table, p),
    )
    return s, table


def run_relax(cfg: ScenarioConfig, out: Path, figures: bool):
    p = cfg.params
    t = np.arange(cfg.steps + 1) * cfg.dt
    cov = riccati.covariance_path(p, cfg.initial, t)
    mean, _ = dynamics.unconditioned_moments(p, cfg.initial, t)
    table = state_table(t, mean, cov, p)
    write_csv(out / "relax.csv", STATE_COLUMNS, table)
    s = _base_summary(cfg)
    ss = _steady_or_none(p)
    s["final"] = dict(zip(["v_xx", "v_pp", "v_xp", "area", "S_vn", "s_lin"], table[-1, 3:9]))
    if ss is not None:
        s["steady"] = {"v_xx": ss.v_xx, "v_pp": ss.v_pp, "v_xp": ss.v_xp}
        dev = np.max(np.abs(cov - ss.moments), axis=1)
        s["final_deviation"] = dev[-1]
        s["convergence_time_1e-4"] = _first_below(t, dev, 1e-4)
    s["purity_time_1e-4"] = _first_below(t, table[:, 7], 1e-4) if p.q == 1.0 else None
    i0 = cfg.initial
    if p.phi == 0.0 and i0.v_xx == i0.v_pp and i0.v_xp == 0.0 and p.mode == HOMODYNE:
        cf = riccati.closed_form_vxx(p.r, p.q, i0.v_xx, p.omega * t)
        s["closed_form_max_error"] = float(np.max(np.abs(cf - cov[:, 0])))
    s["max_invariant_violation"] = _min_area_violation(table, p)
    if figures:
        from . import plotting

        plotting.relaxation_figure(t, cov, table[:, 7], table[:, 8], out / "relax.png", tau=s["tau_col"])
    return s, table


def _first_below(t, values, level):
    idx = np.flatnonzero(values < level)
    if idx.size == 0:
        return math.inf
    # persistent: the last time it was at or above the level, plus one sample
    above = np.flatnonzero(values >= level)
    if above.size and above[-1] > idx[0]:
        return float(t[above[-1] + 1]) if above[-1] + 1 < t.size else math.inf
    return float(t[idx[0]])


def run_simulate(cfg: ScenarioConfig, out: Path, figures: bool):
    p = cfg.params
    traj = dynamics.simulate(p, cfg.initial, cfg.steps, dt=cfg.dt, seed=cfg.seed)
    sl = slice(None, None, cfg.stride)
    idx = np.arange(len(traj))[sl]
    if idx[-1] != len(traj) - 1:
        idx = np.append(idx, len(traj) - 1)
    table = state_table(traj.times[idx], traj.mean[idx], traj.cov[idx], p)
    write_csv(out / "simulate.csv", STATE_COLUMNS, table)
    dynamics.write_record(traj.record, out / "record.csv")
    s = _base_summary(cfg)
    s["stride"] = cfg.stride
    full = state_table(traj.times, traj.mean, traj.cov, p)
    s["max_invariant_violation"] = _min_area_violation(full, p)
    s["final"] = dict(zip(STATE_COLUMNS[1:], table[-1, 1:]))
    if cfg.steps > 0:
        innov = traj.innovations / math.sqrt(cfg.dt)
        s["innovations"] = {
            f"channel_{j + 1}": {
                "mean": float(np.mean(innov[:, j])),
                "variance": float(np.var(innov[:, j])),
                "ks_pvalue": float(stats.kstest(innov[:, j], "norm").pvalue) if cfg.steps > 1 else None,
            }
            for j in range(innov.shape[1])
        }
    if figures:
        from . import plotting

        plotting.trajectory_figure(traj.times[idx], traj.mean[idx], traj.cov[idx], out / "simulate.png")
    return s, table


def run_observers(cfg: ScenarioConfig, out: Path, figures: bool):
    p = cfg.params
    ex = cfg.extra
    vb0 = ex.get("v_b0", 1e10)
    vb = _triple(vb0, "v_b0")
    e0 = _triple(ex.get("e0", vb0), "e0")
    threshold = _number(ex, "threshold", observers.AGREEMENT_THRESHOLD, minimum=0.0, strict=True)
    convention = ex.get("convention", "initial")
    if convention not in observers.CONVENTIONS:
        raise ConfigError(f"convention must be one of {observers.CONVENTIONS}", key="convention")
    try:
        GaussianState.from_covariance(vb)
        state = observers.ObserverErrorState.initial(p, vb, e0)
    except InvalidStateError as exc:
        raise ConfigError(str(exc), key="v_b0") from exc
    t = np.arange(cfg.steps + 1) * cfg.dt
    idx = np.arange(t.size)[:: cfg.stride]
    if idx[-1] != t.size - 1:
        idx = np.append(idx, t.size - 1)
    path = observers.error_covariance_flow(state, p, t[idx])
    mean, _ = dynamics.unconditioned_moments(p, GaussianState(), path.times)
    table = state_table(path.times, np.zeros_like(mean), path.v_b, p, error=path.error)
    write_csv(out / "observers.csv", STATE_COLUMNS + ERROR_COLUMNS, table)
    s = _base_summary(cfg)
    tau = s["tau_col"]
    t_init = observers.agreement_time(path, threshold, "initial")
    t_ss = observers.agreement_time(path, threshold, "steady")
    s.update(
        threshold=threshold,
        convention=convention,
        t_agree=t_init if convention == "initial" else t_ss,
        t_agree_initial=t_init,
        t_agree_steady=t_ss,
        t_agree_over_tau={"initial": t_init / tau, "steady": t_ss / tau},
        final_error=dict(zip(ERROR_COLUMNS, path.error[-1])),
        max_invariant_violation=_min_area_violation(table, p),
    )
    runs = int(_number(ex, "mc_runs", 0, cast=int, minimum=0))
    if runs:
        ck = ex.get("mc_checkpoints", [i * cfg.steps // 10 for i in range(11)])
        prior_a = GaussianState.from_covariance(state.v_a)
        prior_b = GaussianState.from_covariance(vb)
        mc = observers.paired_filters(p, prior_a, prior_b, cfg.steps, runs, ck, dt=cfg.dt, seed=cfg.seed,
                                      offset_cov=e0)
        ref = observers.error_covariance_flow(state, p, mc.times)
        z = (mc.error[:, 0] - ref.error[:, 0]) / np.where(mc.stderr[:, 0] > 0, mc.stderr[:, 0], np.inf)
        s["monte_carlo"] = {
            "runs": runs,
            "times": mc.times,
            "e_xx": mc.error[:, 0],
            "e_xx_stderr": mc.stderr[:, 0],
            "e_xx_flow": ref.error[:, 0],
            "max_abs_z": float(np.max(np.abs(z))),
        }
    if figures:
        from . import plotting

        plotting.observers_figure(path.times, path.error, path.v_b, path.v_a, out / "observers.png", tau=tau)
    return s, table


def _triple(v, key):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return (float(v), float(v), 0.0)
    if isinstance(v, (list, tuple)) and len(v) == 3:
        return tuple(_number({key: x}, key, None) for x in v)
    raise ConfigError(f"{key} must be a number or a [xx, pp, xp] triple", key=key)


def run_kalman(cfg: ScenarioConfig, out: Path, figures: bool):
    p = cfg.params
    if p.mode != HOMODYNE:
        raise ConfigError("kalman-compare needs homodyne detection", key="mode")
    model = kalman.identify_from_quantum(p.phi, p.r, p.q, p.omega)
    rng = dynamics.noise_stream(cfg.seed)
    dw = rng.standard_normal(cfg.steps) * math.sqrt(cfg.dt)
    qs, cs = cfg.initial, cfg.initial
    n = cfg.steps + 1
    qm, qc = np.empty((n, 2)), np.empty((n, 3))
    cm, cc = np.empty((n, 2)), np.empty((n, 3))
    qm[0], qc[0], cm[0], cc[0] = qs.mean, qs.moments, cs.mean, cs.moments
    scale = math.sqrt(p.r / (2.0 * p.omega))
    c = math.cos(p.phi)
    for i in range(cfg.steps):
        dq = c * qs.mean_x * cfg.dt + scale * dw[i]
        qs = dynamics.moment_step(p, qs, dq, cfg.dt)
        cs = kalman.kalman_step(model, cs, dq, cfg.dt, step=i)
        qm[i + 1], qc[i + 1], cm[i + 1], cc[i + 1] = qs.mean, qs.moments, cs.mean, cs.moments
    t = np.arange(n) * cfg.dt
    idx = np.arange(n)[:: cfg.stride]
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    table = state_table(t[idx], qm[idx], qc[idx], p)
    write_csv(out / "kalman-compare.csv", STATE_COLUMNS, table)
    write_csv(out / "classical.csv", STATE_COLUMNS, state_table(t[idx], cm[idx], cc[idx], p))
    diff = np.max(np.abs(np.hstack([qm - cm, qc - cc])), axis=1)
    s = _base_summary(cfg)
    rep = kalman.admissibility_report(model)
    s.update(
        classical_model={"obs_noise": model.obs_noise, "proc_noise": model.proc_noise,
                         "gain": model.gain, "corr": model.corr},
        max_abs_difference=float(np.max(diff)),
        admissibility={"area": rep.area, "admissible": rep.admissible, "status": rep.status},
        max_invariant_violation=_min_area_violation(table, p),
    )
    if "proc_noise" in cfg.extra:
        alt = kalman.ClassicalModel(model.obs_noise, _number(cfg.extra, "proc_noise", None, minimum=0, strict=True),
                                    model.gain, model.corr, model.omega)
        r2 = kalman.admissibility_report(alt)
        s["alternative"] = {"proc_noise": alt.proc_noise, "area": r2.area, "admissible": r2.admissible,
                            "status": r2.status}
    if figures:
        from . import plotting

        plotting.comparison_figure(t, diff, out / "kalman-compare.png")
    return s, table


def run_cavity(cfg: ScenarioConfig, out: Path, figures: bool):
    ex = cfg.extra
    if "cavity" in ex:
        if not isinstance(ex["cavity"], dict):
            raise ConfigError("cavity must be an object of SI inputs", key="cavity")
        conf = cavity.CavityConfig.from_dict(ex["cavity"])
    else:
        name = ex.get("preset", cavity.PRESET_NAME)
        try:
            conf = cavity.preset_config(name)
        except FileNotFoundError as exc:
            raise ConfigError(f"unknown preset {name!r}", key="preset") from exc
    if "omega_trap" in ex:
        conf = conf.with_trap_frequency(_number(ex, "omega_trap", None, minimum=0, strict=True))
    rep = cavity.report(conf)
    print(cavity.format_report(rep))
    return {"kind": "cavity", "version": __version__, **rep}, None


RUNNERS = {
    "steady-state": run_steady_state,
    "relax": run_relax,
    "simulate": run_simulate,
    "observers": run_observers,
    "kalman-compare": run_kalman,
    "cavity": run_cavity,
}


def run(cfg: ScenarioConfig, out, figures: bool = True) -> int:
    """Execute a scenario, writing artifacts into ``out``; returns the exit status."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary, _ = RUNNERS[cfg.kind](cfg, out, figures)
    write_summary(out, summary)
    if summary.get("max_invariant_violation", 0.0) > SDE_TOL:
        raise InvariantViolation(
            f"area fell {summary['max_invariant_violation']:.3e} below the Heisenberg floor"
        )
    return EXIT_OK


# ----------------------------------------------------------------- verify


def verify_dir(out) -> list:
    """Check every state CSV in ``out``; returns a list of problems (empty when clean)."""
    out = Path(out)
    summ = out / "summary.json"
    if not summ.exists():
        raise ConfigError(f"{out} has no summary.json", key="--out")
    summary = json.loads(summ.read_text())
    q = summary.get("params", {}).get("q", 1.0)
    problems = []
    csvs = sorted(pth for pth in out.glob("*.csv") if pth.name != "record.csv")
    for pth in csvs:
        with open(pth) as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[: len(STATE_COLUMNS)] != STATE_COLUMNS:
                continue
            for lineno, row in enumerate(reader, start=2):
                vals = [float(v) for v in row]
                xx, pp, xp = vals[3:6]
                det = xx * pp - xp * xp
                if not all(math.isfinite(v) for v in vals):
                    problems.append(f"{pth.name}:{lineno}: non-finite value")
                    continue
                if xx <= 0 or pp <= 0 or det <= 0:
                    problems.append(f"{pth.name}:{lineno}: covariance not positive definite")
                    continue
                if q == 1.0 and det < 1.0 - SDE_TOL:
                    problems.append(f"{pth.name}:{lineno}: area {math.sqrt(det):.12g} below 1")
                if abs(math.sqrt(det) - vals[6]) > 1e-9 * max(1.0, vals[6]):
                    problems.append(f"{pth.name}:{lineno}: area column inconsistent")
    return problems


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contmeas", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", help="JSON scenario file")
        sp.add_argument("--out", default=f"runs/{kind}", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--steps", type=int)
        sp.add_argument("--no-figures", dest="figures", action="store_false", help="skip PNG output")
    vp = sub.add_parser("verify", help="check emitted CSVs for admissibility")
    vp.add_argument("--out", required=True, help="run directory to check")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            problems = verify_dir(args.out)
            for msg in problems:
                print(msg, file=sys.stderr)
            print("verify: ok" if not problems else f"verify: {len(problems)} problem(s)")
            return EXIT_INVARIANT if problems else EXIT_OK
        data = load_config_file(args.config)
        cfg = build_config(args.command, data, seed=args.seed, dt=args.dt, steps=args.steps)
        return run(cfg, args.out, figures=args.figures)
    except ConfigError as exc:
        where = f" [{exc.key}]" if exc.key else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except IntegrationError as exc:
        ctx = []
        if exc.time is not None:
            ctx.append(f"t={exc.time:.6g}")
        if exc.step is not None:
            ctx.append(f"step={exc.step}")
        print(f"numerical failure ({', '.join(ctx) or 'no context'}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NoSteadyStateError, InvalidStateError, InvalidParameterError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
