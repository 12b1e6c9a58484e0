import json
import math
from dataclasses import replace

import numpy as np
import pytest

from contmeas import (
    CavityConfig,
    ConfigError,
    InvalidParameterError,
    ModelParams,
    collapse_time_estimate,
    dimensionless_r,
    heating_budget,
    measurement_strength,
    preset_config,
    steady_state,
)
from contmeas.cavity import (
    QUOTED_FREE_PARTICLE_TIME,
    SI,
    dipole_trap_frequency,
    format_report,
    load_config,
    load_preset,
    recoil_frequency,
    report,
    scaled_constants,
)
from contmeas.gaussian import phase_space_area

TWO_PI = 2 * math.pi
PRESET = preset_config()
PRESET_60 = preset_config(omega_trap=load_preset()["omega_trap_alt"])


def ideal(**kw):
    base = dict(kappa1=0.0, kappa2=PRESET.kappa, gamma_free=0.0, eta_det=1.0)
    return replace(PRESET, **{**base, **kw})


def test_preset_is_marked_reconstructed():
    raw = load_preset()
    assert "reconstructed" in raw["_provenance"]
    assert raw["_units"]
    assert raw["omega_trap"] == pytest.approx(TWO_PI * 180e3)
    assert raw["omega_trap_alt"] == pytest.approx(TWO_PI * 60e3)


def test_preset_reproduces_quoted_numbers():
    assert measurement_strength(PRESET) == pytest.approx(2.4e20, rel=0.05)
    assert dimensionless_r(PRESET).r == pytest.approx(5.6, rel=0.05)
    assert dimensionless_r(PRESET_60).r == pytest.approx(0.63, rel=0.05)
    assert collapse_time_estimate(PRESET, "heterodyne").tau == pytest.approx(19e-6, rel=0.15)
    assert collapse_time_estimate(PRESET_60, "heterodyne").tau == pytest.approx(8.9e-6, rel=0.15)


def test_preset_trap_is_its_own_dipole_trap():
    assert dipole_trap_frequency(PRESET) == pytest.approx(PRESET.omega_trap, rel=1e-3)


def test_free_particle_values_are_reported_not_asserted():
    est = collapse_time_estimate(PRESET, "homodyne")
    assert est.quoted_free_particle == QUOTED_FREE_PARTICLE_TIME
    assert est.free_particle_formula == pytest.approx(2 * est.free_particle_definition, rel=1e-14)
    het = collapse_time_estimate(PRESET, "heterodyne")
    assert het.free_particle_formula == pytest.approx(math.sqrt(2) * est.free_particle_formula, rel=1e-14)
    # the defining expression approaches the small-r limit
    tiny = PRESET.with_trap_frequency(PRESET.omega_trap * 1e-4)
    small = collapse_time_estimate(tiny)
    assert small.tau == pytest.approx(small.free_particle_definition, rel=1e-3)


def test_alpha_vanishes_without_light():
    cfg = replace(PRESET, n=0.0)
    assert measurement_strength(cfg) == 0.0
    with pytest.raises(InvalidParameterError):
        dimensionless_r(cfg)


def test_alpha_is_quartic_in_coupling():
    g = replace(PRESET, g0=2 * PRESET.g0)
    assert measurement_strength(g) == pytest.approx(16 * measurement_strength(PRESET), rel=1e-14)


def test_r_is_inverse_in_alpha():
    # doubling n doubles alpha
    r1 = dimensionless_r(PRESET).r
    r2 = dimensionless_r(replace(PRESET, n=2 * PRESET.n)).r
    assert r2 == pytest.approx(r1 / 2, rel=1e-14)


@pytest.mark.parametrize(
    "kw, q",
    [
        (dict(), 1.0),
        (dict(eta_det=0.25), 2.0),
        (dict(eta_det=1 / 25), 5.0),
    ],
)
def test_heating_budget_examples(kw, q):
    h = heating_budget(ideal(**kw))
    assert h.q == pytest.approx(q, rel=1e-12)
    assert h.eta_eff == pytest.approx(1 / q**2, rel=1e-12)
    assert h.beta_total == pytest.approx((q * q - 1) * measurement_strength(PRESET), rel=1e-12)


def test_quarter_efficiency_area_is_two():
    q = heating_budget(ideal(eta_det=0.25)).q
    assert phase_space_area(steady_state(ModelParams(r=5.6, q=q))) == pytest.approx(2.0, abs=1e-9)


def test_heating_contributions():
    h = heating_budget(PRESET)
    a = measurement_strength(PRESET)
    assert h.beta_mirror == pytest.approx(a * PRESET.kappa1 / PRESET.kappa)
    assert h.beta_spontaneous == pytest.approx(a * PRESET.gamma_free * PRESET.kappa / (4 * PRESET.g0**2))
    assert h.beta_detector == 0.0
    assert h.q == pytest.approx(math.sqrt(1 + h.beta_total / a), rel=1e-12)
    with_heat = collapse_time_estimate(PRESET, with_heating=True)
    assert with_heat.q == h.q and with_heat.tau < collapse_time_estimate(PRESET).tau


@pytest.mark.parametrize("time, length, mass", [(1e6, 1.0, 1.0), (1.0, 1e9, 1.0), (1.0, 1.0, 1 / 1.66e-27), (1e3, 1e-2, 7.0)])
def test_r_is_unit_invariant(time, length, mass):
    r = dimensionless_r(PRESET).r
    rs = dimensionless_r(PRESET.scaled(time, length, mass), scaled_constants(time, length, mass)).r
    assert rs == pytest.approx(r, rel=1e-12)


def test_decomposition_identity_random_configs():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        kappa = TWO_PI * 10 ** rng.uniform(5, 9)
        split = rng.uniform(0, 1)
        cfg = CavityConfig(
            g0=TWO_PI * 10 ** rng.uniform(6, 9),
            n=10 ** rng.uniform(-2, 2),
            delta=TWO_PI * 10 ** rng.uniform(8, 11),
            kappa=kappa,
            kappa1=split * kappa,
            kappa2=(1 - split) * kappa,
            k_l=TWO_PI / rng.uniform(400e-9, 1100e-9),
            gamma_free=TWO_PI * 10 ** rng.uniform(6, 7.5),
            mass=10 ** rng.uniform(-27, -24),
            omega_trap=TWO_PI * 10 ** rng.uniform(3, 6.5),
            eta_det=rng.uniform(0.05, 1),
        )
        assert dimensionless_r(cfg).relative_mismatch < 1e-10


def test_validity_flags():
    rep = dimensionless_r(PRESET)
    assert rep.lamb_dicke_ratio == pytest.approx(recoil_frequency(PRESET) / PRESET.omega_trap)
    assert rep.lamb_dicke_ok and rep.dispersive_ok
    slow = dimensionless_r(PRESET.with_trap_frequency(TWO_PI * 100.0))
    assert not slow.lamb_dicke_ok
    bright = dimensionless_r(replace(PRESET, n=1e6))
    assert not bright.dispersive_ok


@pytest.mark.parametrize(
    "change, key",
    [
        (dict(kappa1=1.0), "kappa"),
        (dict(eta_det=0.0), "eta_det"),
        (dict(g0=-1.0), "g0"),
        (dict(n=float("nan")), "n"),
        (dict(mass=True), "mass"),
    ],
)
def test_config_validation_names_key(change, key):
    with pytest.raises(ConfigError) as err:
        replace(PRESET, **change)
    assert err.value.key == key


def test_load_config_round_trip_and_errors(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({**PRESET.to_dict(), "_note": "x", "name": "copy"}))
    assert load_config(path) == PRESET
    bad = PRESET.to_dict()
    bad["g_zero"] = 1.0
    path.write_text(json.dumps(bad))
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.key == "g_zero"
    missing = PRESET.to_dict()
    del missing["delta"]
    path.write_text(json.dumps(missing))
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.key == "delta"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(path)


def test_report_is_json_ready():
    rep = report(PRESET)
    json.dumps(rep)
    assert rep["tau_heterodyne"] == pytest.approx(collapse_time_estimate(PRESET, "heterodyne").tau)
    text = format_report(rep)
    assert "alpha" in text and "kHz" in text


def test_collapse_estimate_rejects_mode():
    with pytest.raises(InvalidParameterError):
        collapse_time_estimate(PRESET, "counting")


def test_constants():
    assert SI.hbar == 1.054571817e-34
    assert SI.cesium_mass == 2.2069e-25
