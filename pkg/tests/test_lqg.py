import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liouville_torus.gmc import PunctureSet
from liouville_torus.lqg import (LqgParams, SeibergViolation, check_bounds,
                                 expectation_under_rho, negative_nu_lower_bound,
                                 require_admissible, zero_mode_gamma_check, zero_mode_integral)
from liouville_torus.rng import RngStream
from liouville_torus.spectral import TorusGeometry, enumerate_modes
from liouville_torus.stats import joint_z

GEO = TorusGeometry()


def one(a=1.0, x=(math.pi, math.pi)):
    return PunctureSet.of((x, a))


# parameters and Seiberg bounds --------------------------------------------------------

@given(st.floats(0.05, 1.4))
def test_Q_identity(beta):
    p = LqgParams(beta, 1.0, one(), 8)
    assert p.Q == pytest.approx(2 / beta + beta / 2, rel=1e-14)


def test_torus_single_puncture_all_true():
    r = check_bounds(LqgParams(1.0, 1.0, one(1.0), 8))
    assert r.l2_regime and r.first_seiberg and r.integrable_insertions and r.gwp_condition
    assert r.l2_margin == pytest.approx(math.sqrt(2) - 1)
    assert r.first_seiberg_margin == 1.0 and r.integrable_margin == 1.0
    assert r.gwp_margin == pytest.approx(math.sqrt(5) - 2)


def test_torus_without_punctures_fails_first_bound():
    r = check_bounds(LqgParams(1.0, 1.0, PunctureSet(), 8))
    assert not r.first_seiberg
    with pytest.raises(SeibergViolation):
        require_admissible(LqgParams(1.0, 1.0, PunctureSet(), 8))


def test_gwp_boundary_is_zero_margin():
    b = math.sqrt(4 / 3)
    r = check_bounds(LqgParams(b, 1.0, one(b), 8))
    assert abs(r.gwp_margin) < 1e-12
    assert "gwp_margin" in r.zero_margins()
    assert not r.gwp_condition


@given(beta=st.floats(0.1, 2.0), a=st.lists(st.floats(-1.0, 3.0), min_size=0, max_size=3))
def test_flags_follow_margins(beta, a):
    pts = [(0.5 + i, 0.3 * i) for i in range(len(a))]
    r = check_bounds(LqgParams(beta, 1.0, PunctureSet(pts, a), 8))
    d = r.as_dict()
    assert d["l2_regime"] == (r.l2_margin > 0)
    assert d["first_seiberg"] == (r.first_seiberg_margin > 0)
    assert d["integrable_insertions"] == (r.integrable_margin > 0)
    assert d["gwp_condition"] == (r.gwp_margin > 0)


def test_override_warns():
    p = LqgParams(1.0, 1.0, PunctureSet(), 8)
    with pytest.warns(UserWarning):
        require_admissible(p, override=True)


# zero mode -------------------------------------------------------------------------------

@pytest.mark.parametrize("abar", [1.0, 2.0])
def test_gamma_trivial_cases(abar):
    num, ana = zero_mode_gamma_check(LqgParams(1.0, 1.0, one(abar), 8), 1.0)
    assert ana == pytest.approx(1.0, rel=1e-14)
    assert num == pytest.approx(1.0, rel=1e-8)


def test_gamma_reference_tuple():
    num, ana = zero_mode_gamma_check(LqgParams(0.8, 0.5, one(1.2), 8), 3.7)
    assert abs(num / ana - 1) < 1e-8


@settings(max_examples=50, deadline=None)
@given(beta=st.floats(0.2, 1.4), abar=st.floats(0.05, 1.4), nu=st.floats(0.01, 10.0),
       log_mass=st.floats(-5.0, 5.0))
def test_gamma_identity_random(beta, abar, nu, log_mass):
    abar = min(abar, 1.99 / beta)
    num, ana = zero_mode_gamma_check(LqgParams(beta, nu, one(abar), 8), math.exp(log_mass))
    assert abs(num / ana - 1) < 1e-8


def test_gamma_refuses_nonpositive_shape():
    with pytest.raises(SeibergViolation):
        zero_mode_gamma_check(LqgParams(1.0, 1.0, PunctureSet(), 8), 1.0)
    with pytest.raises(SeibergViolation):
        zero_mode_integral(1.0, -0.5, 1.0, 1.0)


# sampling under rho_N ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def b24():
    return enumerate_modes(GEO, 24)


def test_constant_observable_is_exactly_one(b24):
    est = expectation_under_rho(b24, LqgParams(1.0, 1.0, one(), 4), lambda s: 1.0, 300,
                                RngStream(0))
    assert est.value == 1.0 and est.std_error == 0.0


def test_tau_has_gamma_mean(b24):
    params = LqgParams(1.0, 0.7, one(1.3), 4)

    def tau(s):
        return params.nu * np.exp(params.beta * s.zero_mode) * s.mass

    est = expectation_under_rho(b24, params, tau, 4000, RngStream(1))
    assert abs((est.value - params.gamma_shape) / est.std_error) < 3
    assert est.ess > 0.05 * est.replicas


def test_refuses_without_punctures(b24):
    with pytest.raises(SeibergViolation):
        expectation_under_rho(b24, LqgParams(1.0, 1.0, PunctureSet(), 4), lambda s: 1.0, 10,
                              RngStream(0))


def test_low_ess_warns(b24):
    # a tiny shape makes Y^-s nearly flat; a large one concentrates the weights
    params = LqgParams(0.3, 1.0, one(6.0), 4)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = expectation_under_rho(b24, params, lambda s: 1.0, 200, RngStream(2))
    if est.ess < 10:
        assert any("effective sample size" in str(w.message) for w in caught)


def test_mean_field_stable_in_N():
    params8 = LqgParams(1.0, 1.0, one(), 8)
    params16 = LqgParams(1.0, 1.0, one(), 16)

    def mean_field(s):
        return s.field.mean + s.zero_mode

    e8 = expectation_under_rho(enumerate_modes(GEO, 48), params8, mean_field, 1000, RngStream(3))
    e16 = expectation_under_rho(enumerate_modes(GEO, 96), params16, mean_field, 1000,
                                RngStream(4))
    assert math.isfinite(e8.value) and math.isfinite(e16.value)
    a = type("E", (), {"value": e8.value, "std_error": e8.std_error})
    b = type("E", (), {"value": e16.value, "std_error": e16.std_error})
    assert abs(joint_z(a, b)) < 3


# negative cosmological constant ----------------------------------------------------------------

def test_zero_bump_gives_minus_nu_area():
    assert negative_nu_lower_bound(1.0, -1.0, 0.0) == pytest.approx(GEO.area)
    assert negative_nu_lower_bound(1.0, -2.5, 0.0) == pytest.approx(2.5 * GEO.area)


def test_bump_heights_increase():
    vals = [negative_nu_lower_bound(1.0, -1.0, h) for h in (2, 4, 6)]
    assert vals[0] < vals[1] < vals[2]


def test_bump_growth_race():
    assert negative_nu_lower_bound(1.0, -1.0, 10) - negative_nu_lower_bound(1.0, -1.0, 1) > 1e3


def test_bound_domain():
    with pytest.raises(ValueError):
        negative_nu_lower_bound(1.0, 0.5, 1)
    with pytest.raises(ValueError):
        negative_nu_lower_bound(0.0, -1.0, 1)
