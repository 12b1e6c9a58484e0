import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from contmeas import (
    ClassicalModel,
    GaussianState,
    IntegrationError,
    InvalidParameterError,
    ModelParams,
    admissibility_report,
    identify_from_quantum,
    is_quantum_admissible,
    kalman_filter,
    kalman_step,
    moment_step,
    steady_state,
)
from contmeas.dynamics import noise_stream
from contmeas.kalman import covariance_rhs, uncorrelated_steady_state
from contmeas.kalman import steady_state as classical_steady_state


def paired_paths(phi, r, q=1.0, n=10_000, dt=1e-3, seed=0):
    params = ModelParams(r=r, phi=phi, q=q)
    model = identify_from_quantum(phi, r, q)
    qs = ks = GaussianState.thermal(20.0, mean=(1.0, -1.0))
    dw = noise_stream(seed).standard_normal(n) * math.sqrt(dt)
    worst = 0.0
    for k in range(n):
        # record increment generated from the quantum state
        dq = math.cos(phi) * qs.mean_x * dt + math.sqrt(r / 2) * dw[k]
        qs = moment_step(params, qs, dq, dt)
        ks = kalman_step(model, ks, dq, dt, step=k)
        worst = max(worst, float(np.max(np.abs(np.r_[qs.mean - ks.mean, qs.moments - ks.moments]))))
    return worst


@pytest.mark.parametrize("r, phi", [(20.0, 0.0), (20.0, math.pi / 4), (1.0, 3 * math.pi / 8)])
def test_equivalence_with_quantum_moments(r, phi):
    assert paired_paths(phi, r) < 1e-12


def test_equivalence_with_imperfect_detection():
    assert paired_paths(0.7, 3.0, q=2.0, n=3000) < 1e-12


@pytest.mark.parametrize(
    "phi, r, expected",
    [
        (0.0, 5.0, (5.0, 5.0, 1.0, 0.0)),
        (math.pi / 2, 5.0, (5.0, 5.0, 0.0, -1.0)),
        (math.pi / 4, 2.0, (2.0, 2.0, math.sqrt(2) / 2, -math.sqrt(2) / 2)),
    ],
)
def test_identification(phi, r, expected):
    m = identify_from_quantum(phi, r)
    assert (m.obs_noise, m.proc_noise, m.gain, m.corr) == pytest.approx(expected, abs=1e-15)


def test_identification_with_q():
    m = identify_from_quantum(0.3, 4.0, q=2.0)
    assert m.proc_noise == pytest.approx(1.0) and m.corr == pytest.approx(-math.sin(0.3) / 2)
    with pytest.raises(InvalidParameterError):
        identify_from_quantum(0.0, 1.0, q=0.5)


@pytest.mark.parametrize(
    "kwargs", [dict(obs_noise=0.0, proc_noise=1.0), dict(obs_noise=1.0, proc_noise=-1.0), dict(obs_noise=1.0, proc_noise=1.0, corr=1.5)]
)
def test_model_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        ClassicalModel(**kwargs)


def test_uncorrelated_filter_decreases_monotonically():
    model = ClassicalModel(obs_noise=20.0, proc_noise=20.0)
    n, dt = 20_000, 1e-3
    _, moms = kalman_filter(model, GaussianState.thermal(20.0), np.zeros(n), dt)
    t = np.arange(n + 1) * dt
    # Euler covariance against a tight ODE oracle
    sol = solve_ivp(lambda _t, y: covariance_rhs(model, y), (0, t[-1]), [20.0, 20.0, 0.0], rtol=1e-10, atol=1e-12, t_eval=t[::1000])
    assert np.allclose(moms[::1000], sol.y.T, rtol=1e-2, atol=1e-2)
    # the posterior area falls monotonically; V_xx itself oscillates on the way
    area = np.sqrt(moms[:, 0] * moms[:, 1] - moms[:, 2] ** 2)
    assert np.all(np.diff(area) <= 1e-12)
    ss = uncorrelated_steady_state(model)
    assert abs(sol.y[0, -1] - 20.0) > abs(sol.y[0, -1] - ss[0])


def test_zero_gain_is_pure_process_noise():
    model = ClassicalModel(obs_noise=2.0, proc_noise=4.0, gain=0.0)
    init = GaussianState(0.5, 0.0, 1.0, 1.0, 0.0)
    means, moms = kalman_filter(model, init, np.full(100, 7.0), 1e-2)
    # the record is ignored and the area only grows
    area = np.sqrt(moms[:, 0] * moms[:, 1] - moms[:, 2] ** 2)
    assert np.all(np.diff(area) > 0)
    dv = covariance_rhs(model, [1.0, 1.0, 0.0])
    assert dv == pytest.approx([0.0, 2.0 / 4.0, 0.0])
    ref_means, _ = kalman_filter(model, init, np.zeros(100), 1e-2)
    assert np.array_equal(means, ref_means)
    assert admissibility_report(model).status == "no steady state"


def test_non_finite_reports_step():
    model = ClassicalModel(obs_noise=1.0, proc_noise=1.0)
    with pytest.raises(IntegrationError) as err:
        kalman_step(model, GaussianState(), float("inf"), 1e-3, step=42)
    assert err.value.step == 42


# --------------------------------------------------------------- admissibility


@pytest.mark.parametrize("phi", [0.0, 0.3, math.pi / 4, 1.2, 2.5])
@pytest.mark.parametrize("r", [0.1, 1.0, 20.0])
def test_quantum_identified_models_are_pure(r, phi):
    rep = admissibility_report(identify_from_quantum(phi, r))
    assert rep.admissible
    assert rep.area == pytest.approx(1.0, abs=1e-9)
    q_ss = steady_state(ModelParams(r=r, phi=phi))
    assert np.allclose(rep.steady, q_ss.moments, rtol=1e-9)


def test_too_little_process_noise_is_inadmissible():
    rep = admissibility_report(ClassicalModel(obs_noise=20.0, proc_noise=20e6))
    assert not rep.admissible and rep.area < 1 and rep.margin < 0
    assert rep.status == "violates Heisenberg floor"
    st_ = GaussianState.from_covariance(rep.steady)
    assert not is_quantum_admissible(st_)


def test_boundary_is_equality():
    rep = admissibility_report(ClassicalModel(obs_noise=20.0, proc_noise=20.0))
    assert rep.admissible and rep.status == "admissible (pure)"
    assert rep.area == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("r", [0.5, 5.0, 20.0])
def test_admissibility_monotone_in_s_with_boundary_at_r(r):
    s_grid = r * np.geomspace(1e-3, 1e3, 61)
    areas = np.array([admissibility_report(ClassicalModel(r, s)).area for s in s_grid])
    assert np.all(np.diff(areas) <= 1e-15)
    # closed form: area = sqrt(r / s) for a = 1, f = 0
    assert np.allclose(areas, np.sqrt(r / s_grid), rtol=1e-10)
    from scipy.optimize import brentq

    s_star = brentq(lambda s: admissibility_report(ClassicalModel(r, s)).area - 1.0, 0.5 * r, 2 * r, xtol=1e-14)
    assert s_star == pytest.approx(r, rel=1e-6)


@given(
    r=st.floats(0.05, 50.0), s=st.floats(0.05, 50.0), a=st.floats(0.1, 2.0), f=st.floats(-0.95, 0.95)
)
def test_newton_steady_state_is_fixed_point(r, s, a, f):
    model = ClassicalModel(r, s, a, f)
    m = classical_steady_state(model)
    if m is None:
        return
    assert np.max(np.abs(covariance_rhs(model, m))) < 1e-10 * max(1.0, np.max(np.abs(m)))
    assert m[0] > 0 and m[1] > 0 and m[0] * m[1] > m[2] ** 2


@given(r=st.floats(0.05, 50.0), s=st.floats(0.05, 50.0), a=st.floats(0.1, 2.0))
def test_continuation_reduces_to_closed_form(r, s, a):
    model = ClassicalModel(r, s, a, 0.0)
    assert np.allclose(classical_steady_state(model), uncorrelated_steady_state(model), rtol=1e-12)
