import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contmeas import (
    GaussianState,
    InvalidParameterError,
    InvalidStateError,
    ModelParams,
    is_quantum_admissible,
    linear_entropy,
    phase_space_area,
    von_neumann_entropy,
)
from contmeas.gaussian import area_from_moments

# mpmath, 40 significant digits
S_VN_20 = 3.302168113454811783753286069447
S_VN_5 = 1.909542504884438455351271467851
S_VN_1P1EM6 = 7.754328994262088873434465423e-06


@pytest.mark.parametrize(
    "moments, area",
    [((1.0, 1.0, 0.0), 1.0), ((20.0, 20.0, 0.0), 20.0), ((2.0, 1.0, 1.0), 1.0)],
)
def test_area_examples(moments, area):
    assert phase_space_area(GaussianState(0.0, 0.0, *moments)) == pytest.approx(area, abs=1e-15)


def test_area_negative_discriminant_raises():
    with pytest.raises(InvalidStateError):
        area_from_moments(1.0, 1.0, 2.0)


@pytest.mark.parametrize(
    "moments",
    [(0.0, 1.0, 0.0), (1.0, -1.0, 0.0), (1.0, 1.0, 1.0), (float("nan"), 1.0, 0.0)],
)
def test_state_rejects_invalid_covariance(moments):
    with pytest.raises(InvalidStateError):
        GaussianState(0.0, 0.0, *moments)


def test_from_covariance_forms_agree():
    a = GaussianState.from_covariance([[2.0, 0.5], [0.5, 1.0]], mean=(1.0, -1.0))
    b = GaussianState.from_covariance((2.0, 1.0, 0.5), mean=(1.0, -1.0))
    assert a == b
    assert np.array_equal(a.covariance, [[2.0, 0.5], [0.5, 1.0]])
    with pytest.raises(InvalidStateError):
        GaussianState.from_covariance([[2.0, 0.5], [0.4, 1.0]])


def test_states_are_immutable():
    s = GaussianState()
    with pytest.raises(AttributeError):
        s.v_xx = 2.0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(r=0.0),
        dict(r=1.0, q=0.5),
        dict(r=1.0, omega=-1.0),
        dict(r=1.0, phi=2 * math.pi),
        dict(r=1.0, phi=-0.1),
        dict(r=1.0, mode="photon-counting"),
        dict(r=1.0, phi=0.3, mode="heterodyne"),
    ],
)
def test_params_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        ModelParams(**kwargs)


@pytest.mark.parametrize("area, expected", [(1.0, 0.0), (5.0, 0.8)])
def test_linear_entropy_examples(area, expected):
    assert linear_entropy(area) == pytest.approx(expected, abs=1e-15)


def test_linear_entropy_limit():
    assert linear_entropy(1e12) == pytest.approx(1.0, abs=1e-11)
    assert linear_entropy(1e12) < 1.0


def test_entropies_reject_sub_heisenberg():
    with pytest.raises(InvalidStateError):
        linear_entropy(0.9)
    with pytest.raises(InvalidStateError):
        von_neumann_entropy(GaussianState(0, 0, 0.5, 1.0, 0.0))


def test_von_neumann_oracle_values():
    assert von_neumann_entropy(1.0) == 0.0
    assert von_neumann_entropy(20.0) == pytest.approx(S_VN_20, rel=1e-14)
    assert von_neumann_entropy(5.0) == pytest.approx(S_VN_5, rel=1e-14)
    assert von_neumann_entropy(1.0 + 1e-6) == pytest.approx(S_VN_1P1EM6, rel=1e-9)
    assert von_neumann_entropy(5.0) < von_neumann_entropy(20.0)


def test_von_neumann_series_branch_is_continuous():
    eps = np.array([1e-12, 1e-10, 5e-9, 9.99e-9, 1.001e-8, 2e-8])
    s = von_neumann_entropy(1.0 + eps)
    # refer to the leading-order series at each point
    ref = 0.5 * eps * (1 + np.log(2 / eps))
    assert np.allclose(s, ref, rtol=1e-6)


def test_von_neumann_strictly_increasing_on_grid():
    a = np.concatenate([[1.0 + 1e-6], np.geomspace(1.0 + 1e-5, 1e3, 400)])
    s = von_neumann_entropy(a)
    assert np.all(np.diff(s) > 0)


def test_entropy_accepts_state_and_tolerance():
    s = GaussianState(0, 0, 1.0 - 1e-10, 1.0, 0.0)
    assert von_neumann_entropy(s) == 0.0
    assert linear_entropy(s) == 0.0
    with pytest.raises(InvalidStateError):
        von_neumann_entropy(GaussianState(0, 0, 1.0 - 1e-7, 1.0, 0.0))
    assert von_neumann_entropy(GaussianState(0, 0, 1.0 - 1e-7, 1.0, 0.0), tol=1e-6) == 0.0


@pytest.mark.parametrize(
    "moments, tol, expected",
    [((1.0, 1.0, 0.0), 0.0, True), ((0.5, 1.0, 0.0), 0.0, False), ((1 - 1e-10, 1.0, 0.0), 1e-9, True)],
)
def test_admissibility(moments, tol, expected):
    assert is_quantum_admissible(GaussianState(0, 0, *moments), tol) is expected


@given(st.floats(1.0, 1e6))
def test_entropy_bounds(a):
    s = linear_entropy(a)
    v = von_neumann_entropy(a)
    assert 0.0 <= s < 1.0
    assert v >= 0.0
    if a > 1.0 + 1e-12:
        assert s > 0.0 and v > 0.0


@given(st.floats(1e-3, 1e3), st.floats(-1e2, 1e2))
def test_pure_family_has_unit_area(vxx, vxp):
    s = GaussianState(0, 0, vxx, 1.0 / vxx + vxp**2 / vxx, vxp)
    assert phase_space_area(s) == pytest.approx(1.0, rel=1e-9)
