"""SI-unit planner for a dispersively coupled atom in a driven cavity.

Maps cavity-QED inputs to the measurement strength ``alpha``, the
dimensionless ratio ``r``, the heating budget (``beta``, ``q``) and collapse
times in seconds. Dynamics elsewhere in the package run in scaled units;
this is the only module that knows about SI.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from . import riccati
from .exceptions import ConfigError, InvalidParameterError
from .gaussian import HETERODYNE, HOMODYNE, MODES


@dataclass(frozen=True)
class Constants:
    """Physical constants; swapping ``hbar`` allows unit-rescaling checks."""

    hbar: float = 1.054571817e-34  # J s, CODATA 2018 (exact-defined h)
    cesium_mass: float = 2.2069e-25  # kg
    cesium_d2_wavelength: float = 852.347e-9  # m


SI = Constants()

#: value quoted alongside the free-particle formula; reported, not derived
QUOTED_FREE_PARTICLE_TIME = 3.9e-6

LAMB_DICKE_LIMIT = 0.1
DISPERSIVE_LIMIT = 0.1


@dataclass(frozen=True)
class CavityConfig:
    """Cavity, atom and detector parameters in SI units (rates in rad/s)."""

    g0: float
    n: float
    delta: float
    kappa: float
    kappa1: float
    kappa2: float
    k_l: float
    gamma_free: float
    mass: float
    omega_trap: float
    eta_det: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{f.name} must be a finite number, got {v!r}", key=f.name)
            object.__setattr__(self, f.name, float(v))
        for key in ("g0", "delta", "kappa", "kappa2", "k_l", "mass", "omega_trap"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}", key=key)
        for key in ("n", "kappa1", "gamma_free"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative, got {getattr(self, key)}", key=key)
        if not 0 < self.eta_det <= 1:
            raise ConfigError(f"eta_det must lie in (0, 1], got {self.eta_det}", key="eta_det")
        if not math.isclose(self.kappa, self.kappa1 + self.kappa2, rel_tol=1e-9):
            raise ConfigError(
                f"kappa={self.kappa} differs from kappa1 + kappa2={self.kappa1 + self.kappa2}",
                key="kappa",
            )

    @classmethod
    def from_dict(cls, data: dict) -> "CavityConfig":
        """Build from a flat mapping; keys starting with ``_`` are metadata.

        Keys that are not fields (``name``, ``omega_trap_alt``) are ignored
        only if listed in :data:`EXTRA_KEYS`; anything else is an error.
        """
        names = {f.name for f in fields(cls)}
        unknown = [k for k in data if k not in names and not k.startswith("_") and k not in EXTRA_KEYS]
        if unknown:
            raise ConfigError(f"unknown cavity key {unknown[0]!r}", key=unknown[0])
        missing = [n for n in names if n not in data and n != "eta_det"]
        if missing:
            raise ConfigError(f"missing cavity key {sorted(missing)[0]!r}", key=sorted(missing)[0])
        return cls(**{k: data[k] for k in names if k in data})

    def to_dict(self) -> dict:
        return asdict(self)

    def with_trap_frequency(self, omega_trap: float) -> "CavityConfig":
        return replace(self, omega_trap=omega_trap)

    def scaled(self, time: float = 1.0, length: float = 1.0, mass: float = 1.0) -> "CavityConfig":
        """Same physical setup in units where 1 s -> ``time``, 1 m -> ``length``, 1 kg -> ``mass``.

        Rates pick up ``1/time``, wavenumbers ``1/length``, masses ``mass``.
        Pair with :func:`scaled_constants` for the matching ``hbar``.
        """
        rate = 1.0 / time
        return replace(
            self,
            g0=self.g0 * rate,
            delta=self.delta * rate,
            kappa=self.kappa * rate,
            kappa1=self.kappa1 * rate,
            kappa2=self.kappa2 * rate,
            gamma_free=self.gamma_free * rate,
            omega_trap=self.omega_trap * rate,
            k_l=self.k_l / length,
            mass=self.mass * mass,
        )


EXTRA_KEYS = ("name", "omega_trap_alt")


def scaled_constants(time: float = 1.0, length: float = 1.0, mass: float = 1.0, base: Constants = SI) -> Constants:
    """``hbar`` (kg m^2 / s) expressed in rescaled units."""
    return replace(base, hbar=base.hbar * mass * length**2 / time)


PRESET_NAME = "cesium_hood"


def load_preset(name: str = PRESET_NAME) -> dict:
    """Raw preset mapping, including its ``_provenance`` and ``_units`` notes."""
    text = resources.files("contmeas.data").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def preset_config(name: str = PRESET_NAME, omega_trap: Optional[float] = None) -> CavityConfig:
    cfg = CavityConfig.from_dict(load_preset(name))
    return cfg if omega_trap is None else cfg.with_trap_frequency(omega_trap)


def load_config(path) -> CavityConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read cavity config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("cavity config must be a JSON object")
    return CavityConfig.from_dict(data)


# ------------------------------------------------------------- derived values


def measurement_strength(config: CavityConfig) -> float:
    """``alpha = 2 g0^4 n k_L^2 / (Delta^2 kappa)`` in s^-1 m^-2."""
    c = config
    return 2.0 * c.g0**4 * c.n * c.k_l**2 / (c.delta**2 * c.kappa)


def recoil_frequency(config: CavityConfig, constants: Constants = SI) -> float:
    """``hbar k_L^2 / 2m`` in rad/s."""
    return constants.hbar * config.k_l**2 / (2.0 * config.mass)


def saturation(config: CavityConfig) -> float:
    """``g0^2 n / Delta^2``."""
    return config.g0**2 * config.n / config.delta**2


def cavity_emission_rate(config: CavityConfig) -> float:
    """``Gamma_cav = g0^2 / kappa``."""
    return config.g0**2 / config.kappa


@dataclass(frozen=True)
class RatioReport:
    """``r`` from its definition and from the recoil/saturation decomposition."""

    r: float
    r_decomposed: float
    alpha: float
    recoil_ratio: float       # omega / omega_rec
    saturation: float         # s_sat
    emission_ratio: float     # omega / Gamma_cav
    lamb_dicke_ratio: float   # omega_rec / omega
    lamb_dicke_ok: bool
    dispersive_ok: bool

    @property
    def relative_mismatch(self) -> float:
        return abs(self.r - self.r_decomposed) / self.r


def dimensionless_r(config: CavityConfig, constants: Constants = SI) -> RatioReport:
    """``r = m omega^2 / (2 hbar alpha)`` with its cross-check decomposition.

    The decomposition ``(omega/omega_rec) (1/(8 s_sat)) (omega/Gamma_cav)``
    is evaluated independently and must agree to round-off. Validity flags
    mark the Lamb-Dicke (``omega_rec/omega < 0.1``) and dispersive
    (``s_sat < 0.1``) conditions.
    """
    alpha = measurement_strength(config)
    if alpha <= 0:
        raise InvalidParameterError("alpha must be positive to define r (is n zero?)")
    w = config.omega_trap
    r = config.mass * w * w / (2.0 * constants.hbar * alpha)
    wrec = recoil_frequency(config, constants)
    ssat = saturation(config)
    gcav = cavity_emission_rate(config)
    r_dec = (w / wrec) * (1.0 / (8.0 * ssat)) * (w / gcav)
    return RatioReport(
        r=r,
        r_decomposed=r_dec,
        alpha=alpha,
        recoil_ratio=w / wrec,
        saturation=ssat,
        emission_ratio=w / gcav,
        lamb_dicke_ratio=wrec / w,
        lamb_dicke_ok=wrec / w < LAMB_DICKE_LIMIT,
        dispersive_ok=ssat < DISPERSIVE_LIMIT,
    )


@dataclass(frozen=True)
class HeatingBudget:
    beta_total: float
    beta_detector: float
    beta_mirror: float
    beta_spontaneous: float
    q: float
    eta_eff: float


def heating_budget(config: CavityConfig) -> HeatingBudget:
    """Excess diffusion ``beta`` from imperfect detection, mirror loss and scattering.

    The cavity is driven through mirror 1 and detected through mirror 2, so
    light leaving mirror 1 is lost: ``beta = alpha (1 - eta)/eta +
    alpha kappa1/kappa + alpha Gamma kappa / (4 g0^2)``. Then
    ``q = sqrt(1 + beta/alpha)`` and ``eta_eff = 1/q^2``.
    """
    alpha = measurement_strength(config)
    c = config
    b_det = alpha * (1.0 - c.eta_det) / c.eta_det
    b_mir = alpha * c.kappa1 / c.kappa
    b_sp = alpha * c.gamma_free * c.kappa / (4.0 * c.g0**2)
    total = b_det + b_mir + b_sp
    # beta/alpha computed from the ratios so that alpha = 0 still gives q
    ratio = (1.0 - c.eta_det) / c.eta_det + c.kappa1 / c.kappa + c.gamma_free * c.kappa / (4.0 * c.g0**2)
    q = math.sqrt(1.0 + ratio)
    return HeatingBudget(total, b_det, b_mir, b_sp, q, 1.0 / (q * q))


def dipole_trap_frequency(config: CavityConfig, constants: Constants = SI) -> float:
    """Trap frequency ``2 sqrt(omega_rec g0^2 n / Delta)`` of the cavity's own standing wave."""
    return 2.0 * math.sqrt(recoil_frequency(config, constants) * config.g0**2 * config.n / config.delta)


@dataclass(frozen=True)
class CollapseEstimate:
    """Collapse time in seconds plus free-particle reference values."""

    tau: float
    mode: str
    r: float
    r_effective: float
    q: float
    free_particle_formula: float   # sqrt(8 m / hbar alpha_eff)
    free_particle_definition: float  # 2 sqrt(r)/omega at r_eff small, = sqrt(2 m / hbar alpha_eff)
    quoted_free_particle: float


def collapse_time_estimate(
    config: CavityConfig, mode: str = HOMODYNE, with_heating: bool = False, constants: Constants = SI
) -> CollapseEstimate:
    """Seconds for the conditioned state to purify.

    Uses ``tau = 2/(b omega)``; heterodyne detection halves the effective
    measurement strength (``r -> 2r``). ``with_heating`` folds the heating
    budget's ``q`` in. Two free-particle references are reported: the
    closed formula ``sqrt(8 m/hbar alpha)`` and the small-``r`` limit of the
    defining expression, ``sqrt(2 m/hbar alpha)``; they differ by a factor 2,
    and the quoted 3.9 us matches neither exactly.
    """
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got {mode!r}")
    rr = dimensionless_r(config, constants)
    q = heating_budget(config).q if with_heating else 1.0
    tau = riccati.collapse_time(rr.r, config.omega_trap, q=q, mode=mode)
    alpha_eff = rr.alpha / 2.0 if mode == HETERODYNE else rr.alpha
    m, hb = config.mass, constants.hbar
    return CollapseEstimate(
        tau=tau,
        mode=mode,
        r=rr.r,
        r_effective=2.0 * rr.r if mode == HETERODYNE else rr.r,
        q=q,
        free_particle_formula=math.sqrt(8.0 * m / (hb * alpha_eff)),
        free_particle_definition=math.sqrt(2.0 * m / (hb * alpha_eff)),
        quoted_free_particle=QUOTED_FREE_PARTICLE_TIME,
    )


def report(config: CavityConfig, constants: Constants = SI) -> dict:
    """All derived quantities as a JSON-ready mapping."""
    rr = dimensionless_r(config, constants)
    heat = heating_budget(config)
    out = {
        "config": config.to_dict(),
        "alpha": rr.alpha,
        "r": rr.r,
        "r_decomposed": rr.r_decomposed,
        "r_relative_mismatch": rr.relative_mismatch,
        "omega_rec": recoil_frequency(config, constants),
        "recoil_ratio": rr.recoil_ratio,
        "saturation": rr.saturation,
        "gamma_cav": cavity_emission_rate(config),
        "emission_ratio": rr.emission_ratio,
        "lamb_dicke_ratio": rr.lamb_dicke_ratio,
        "lamb_dicke_ok": rr.lamb_dicke_ok,
        "dispersive_ok": rr.dispersive_ok,
        "dipole_trap_frequency": dipole_trap_frequency(config, constants),
        "heating": asdict(heat),
    }
    for mode in MODES:
        est = collapse_time_estimate(config, mode, constants=constants)
        out[f"tau_{mode}"] = est.tau
        out[f"tau_{mode}_with_heating"] = collapse_time_estimate(config, mode, True, constants).tau
        out[f"free_particle_formula_{mode}"] = est.free_particle_formula
        out[f"free_particle_definition_{mode}"] = est.free_particle_definition
    out["quoted_free_particle"] = QUOTED_FREE_PARTICLE_TIME
    return out


def format_report(rep: dict) -> str:
    """Human-readable summary of :func:`report`."""
    us = 1e6
    lines = [
        f"alpha                 {rep['alpha']:.4e} s^-1 m^-2",
        f"trap frequency        {rep['config']['omega_trap'] / (2 * math.pi) / 1e3:.2f} kHz",
        f"r                     {rep['r']:.4f}  (decomposition {rep['r_decomposed']:.4f})",
        f"omega_rec / omega     {rep['lamb_dicke_ratio']:.4g}  Lamb-Dicke {'ok' if rep['lamb_dicke_ok'] else 'VIOLATED'}",
        f"saturation s          {rep['saturation']:.4g}  dispersive {'ok' if rep['dispersive_ok'] else 'VIOLATED'}",
        f"heating beta/alpha    {rep['heating']['q'] ** 2 - 1:.4g}  q = {rep['heating']['q']:.4f}",
        f"tau homodyne          {rep['tau_homodyne'] * us:.3f} us",
        f"tau heterodyne        {rep['tau_heterodyne'] * us:.3f} us",
        f"free particle (het.)  {rep['free_particle_formula_heterodyne'] * us:.3f} us formula, "
        f"{rep['free_particle_definition_heterodyne'] * us:.3f} us from tau = 2/(b w)",
        f"free particle (hom.)  {rep['free_particle_formula_homodyne'] * us:.3f} us formula, "
        f"{rep['free_particle_definition_homodyne'] * us:.3f} us from tau = 2/(b w)",
        f"quoted free particle  {rep['quoted_free_particle'] * us:.1f} us (not derived)",
    ]
    return "\n".join(lines)
