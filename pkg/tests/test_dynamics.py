import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from liouville_torus.dynamics import (ContractViolation, CoupledInputs, DriftZ, FlowParams,
                                      GalerkinEnergy, GuardCounter, OuPath, RemainderState,
                                      assemble_u, drift_z, duhamel_factor,
                                      energy_difference_monitor, equilibrate, full_step,
                                      girsanov_shift_back, invariance_test, langevin_step,
                                      mala_chain, mode_square, probe_square, self_convergence,
                                      sign_definite_exp, solve_remainder, v_step)
from liouville_torus.gaussian import OuState, ou_step, sample_gff
from liouville_torus.gmc import PunctureSet, ThetaField, puncture_field, theta_field
from liouville_torus.rng import RngStream
from liouville_torus.spectral import (GridField, ScalarField, TorusGeometry, enumerate_modes,
                                      heat_semigroup)

GEO = TorusGeometry()
SQRT_V = math.sqrt(GEO.area)
CENTER = PunctureSet.of(((math.pi, math.pi), 1.0))


@pytest.fixture(scope="module")
def b24():
    return enumerate_modes(GEO, 24)


def constant_theta(value, n=16, batch=()):
    return ThetaField(GridField(GEO, np.full(tuple(batch) + (n, n), float(value))))


# drift ---------------------------------------------------------------------------------

def test_drift_reference_value():
    d = DriftZ(0.3, GEO, CENTER)
    assert drift_z(d, 1.0, 0.0) == pytest.approx(0.3 + 1 / (8 * math.pi**2), rel=1e-14)
    assert drift_z(d, 0.0) == 0.3


def test_drift_interpolates_path_and_checks_horizon():
    d = DriftZ(0.0, GEO, PunctureSet())
    path = ([0.0, 1.0], [0.0, 2.0])
    assert drift_z(d, 0.5, path) == pytest.approx(1.0 / SQRT_V)
    with pytest.raises(ValueError, match="horizon"):
        drift_z(d, 1.5, path)


# bounded exponential -----------------------------------------------------------------------

@given(st.floats(-50, 0))
def test_sign_definite_exp_is_exp_on_nonpositive(x):
    c = GuardCounter()
    assert sign_definite_exp(np.array(x), c) == pytest.approx(math.exp(x), rel=1e-15)
    assert c.count == 0


def test_sign_definite_exp_counts_and_bounds():
    c = GuardCounter()
    x = np.array([-1.0, 0.5, 3.0])
    y = sign_definite_exp(x, c)
    assert c.count == 2 and np.all(y > 0) and np.all(y <= 1.5)


def test_duhamel_factor_limits(b24):
    d = duhamel_factor(b24, 0.1)
    assert d[0] == 0.1
    assert np.all(d[1:] < 0.1) and np.all(d > 0)


# one remainder step -----------------------------------------------------------------------------

def test_nu_zero_is_pure_heat(b24):
    c = np.random.default_rng(0).normal(size=b24.dim) * 1e-4
    c[0] = -1.0
    v = ScalarField(b24, c)
    p = FlowParams(1.0, 0.0, 4)
    out = v_step(RemainderState(0.0, v), constant_theta(1.0, b24.min_grid()), 0.0, 0.01, p)
    assert np.allclose(out.v.coeffs, heat_semigroup(v, 0.01).coeffs, atol=1e-15)


def test_constant_theta_step_closed_form(b24):
    p = FlowParams(0.9, 1.3, 4)
    n = b24.min_grid()
    v0 = -0.2
    state = RemainderState(0.0, ScalarField(b24, np.eye(b24.dim)[0] * v0 * SQRT_V))
    out = v_step(state, constant_theta(2.0, n), 0.1, 0.01, p)
    expected = v0 - 0.5 * p.nu * p.beta * 0.01 * math.exp(p.beta * (0.1 + v0)) * 2.0
    assert out.v.coeffs[0] / SQRT_V == pytest.approx(expected, rel=1e-12)
    assert np.max(np.abs(out.v.coeffs[1:])) < 1e-12


@pytest.mark.parametrize("beta,nu", [(0.5, 0.3), (1.0, 1.0), (1.4, 4.0)])
def test_constant_theta_step_batched_sweep(b24, beta, nu):
    gen = np.random.default_rng(int(beta * 10))
    size = 3400
    z = gen.uniform(-2, 2, size)
    th = gen.uniform(0.01, 5, size)
    v0 = -gen.uniform(0, 3, size)
    dt = 0.01
    n = 12
    basis = enumerate_modes(GEO, 2)
    coeffs = np.zeros((size, basis.dim))
    coeffs[:, 0] = v0 * SQRT_V
    theta = ThetaField(GridField(GEO, th[:, None, None] * np.ones((size, n, n))))
    out = v_step(RemainderState(0.0, ScalarField(basis, coeffs)), theta, z, dt,
                 FlowParams(beta, nu, 1))
    expected = v0 - 0.5 * nu * beta * dt * np.exp(beta * (z + v0)) * th
    assert np.allclose(out.v.coeffs[:, 0] / SQRT_V, expected, rtol=1e-12, atol=1e-14)
    assert np.all(out.v.coeffs[:, 0] <= v0 * SQRT_V)


def test_constant_theta_converges_to_ode():
    basis = enumerate_modes(GEO, 2)
    p = FlowParams(1.0, 2.0, 1)
    theta0, z = 1.5, 0.2
    errs = []
    for dt in (0.02, 0.01):
        traj = solve_remainder(basis, lambda t: constant_theta(theta0, 12), lambda t: z, 1.0,
                               dt, p)
        exact = -math.log1p(0.5 * p.nu * p.beta**2 * math.exp(p.beta * z) * theta0) / p.beta
        errs.append(abs(traj.terminal[0] / SQRT_V - exact))
    assert errs[1] < errs[0] * 0.6
    assert errs[1] < 1e-2


def test_nonpositive_theta_is_refused(b24):
    p = FlowParams(1.0, 1.0, 4)
    with pytest.raises(ContractViolation, match="positive"):
        v_step(RemainderState(0.0, ScalarField.zeros(b24)), constant_theta(0.0), 0.0, 0.01, p)


def test_positive_v_entering_is_refused(b24):
    p = FlowParams(1.0, 1.0, 4)
    v = ScalarField(b24, np.eye(b24.dim)[0] * 0.1)
    with pytest.raises(ContractViolation, match="entering"):
        v_step(RemainderState(0.0, v), constant_theta(1.0, b24.min_grid()), 0.0, 0.01, p)


def test_v_step_rejects_bad_dt(b24):
    with pytest.raises(ValueError):
        v_step(RemainderState(0.0, ScalarField.zeros(b24)), constant_theta(1.0), 0.0, 0.0,
               FlowParams(1.0, 1.0, 4))


# solver --------------------------------------------------------------------------------------------

def test_solve_zero_horizon_returns_initial(b24):
    traj = solve_remainder(b24, lambda t: constant_theta(1.0), lambda t: 0.0, 0.0, 0.01,
                           FlowParams(1.0, 1.0, 4))
    assert traj.times == [0.0] and np.all(traj.terminal == 0)


def test_solve_nu_zero_stays_zero(b24):
    traj = solve_remainder(b24, lambda t: constant_theta(1.0, b24.min_grid()), lambda t: 0.0,
                           0.05, 0.01, FlowParams(1.0, 0.0, 4))
    assert np.all(traj.terminal == 0) and len(traj.times) == 6


def test_solve_requires_commensurate_horizon(b24):
    with pytest.raises(ValueError):
        solve_remainder(b24, lambda t: constant_theta(1.0), lambda t: 0.0, 0.015, 0.01,
                        FlowParams(1.0, 1.0, 4))


def test_coupled_run_stays_sign_definite(b24):
    p = FlowParams(1.0, 1.0, 4, CENTER)
    coarse, fine, rel = self_convergence(b24, p, 0.02, 0.005, RngStream(3))
    assert coarse.diagnostics["guard_count"] == 0 and fine.diagnostics["guard_count"] == 0
    assert max(fine.diagnostics["max_beta_v"]) <= 1e-12
    assert rel < 0.05


def test_ou_path_shared_between_grids(b24):
    fine = OuPath(b24, 0.01, RngStream(4))
    a = fine.at(0.02).field.coeffs.copy()
    b = fine.at(0.02).field.coeffs
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        fine.at(0.015)
    fine.at(0.05)
    assert np.array_equal(fine.at(0.02).field.coeffs, a)


# assembling u --------------------------------------------------------------------------------------

def test_assemble_puts_z_in_zero_mode(b24):
    ou = OuState.from_gff(sample_gff(b24, RngStream(0)))
    v = RemainderState(0.0, ScalarField(b24, np.full(b24.dim, -0.01)))
    u = assemble_u(ou, 0.5, v)
    assert u.mean == pytest.approx(0.5 + v.v.mean)
    with pytest.raises(ValueError, match="time"):
        assemble_u(ou, 0.5, RemainderState(0.1, v.v))


def test_girsanov_shift_back_adds_one_sided_green(b24):
    u = ScalarField.zeros(b24)
    out = girsanov_shift_back(u, CENTER, 4)
    ref = puncture_field(b24, 4, CENTER, sides=1)
    assert np.array_equal(out.coeffs, ref.coeffs)
    assert np.all(girsanov_shift_back(u, PunctureSet(), 4).coeffs == 0)


def test_full_step_matches_decomposition(b24):
    p = FlowParams(1.0, 1.0, 4, CENTER)
    dt = 0.01
    ou = OuState.from_gff(sample_gff(b24, RngStream(5)))
    v = RemainderState(0.0, ScalarField(b24, np.eye(b24.dim)[0] * -0.3 * SQRT_V))
    z = 0.2
    gen = np.random.default_rng(6)
    noise, zn = gen.standard_normal(b24.dim), float(gen.standard_normal())

    u1 = full_step(assemble_u(ou, z, v), dt, p, noise, zn)

    theta = theta_field(ou, p.gmc(), p.punctures)
    v1 = v_step(v, theta, z, dt, p)
    ou1 = ou_step(ou, dt, noise=noise, zero_noise=zn)
    z1 = drift_z(DriftZ(z, GEO, CENTER), dt, ou1.zero_mode_bm)
    split = assemble_u(ou1, z1, v1)
    assert np.max(np.abs(u1.coeffs - split.coeffs)) < 1e-10


# energy uniqueness ------------------------------------------------------------------------------------

def test_energy_monitor_nonincreasing(b24):
    p = FlowParams(1.0, 1.0, 4, CENTER)
    path = OuPath(b24, 0.005, RngStream(7))
    inputs = CoupledInputs(path, p, DriftZ(0.0, GEO, CENTER))
    v0 = np.zeros(b24.dim)
    v0[0] = -0.5 * SQRT_V
    t1 = solve_remainder(b24, inputs.theta, inputs.z, 0.05, 0.005, p)
    t2 = solve_remainder(b24, inputs.theta, inputs.z, 0.05, 0.005, p, v0=v0)
    t, E, half = energy_difference_monitor(t1, t2, b24)
    assert np.all(np.diff(E) <= 1e-12 * E[0])
    assert half[0] == pytest.approx(0.5 * 0.25 * GEO.area)


def test_energy_monitor_needs_common_grid(b24):
    p = FlowParams(1.0, 0.0, 4)
    a = solve_remainder(b24, lambda t: constant_theta(1.0, b24.min_grid()), lambda t: 0.0,
                        0.02, 0.01, p)
    b = solve_remainder(b24, lambda t: constant_theta(1.0, b24.min_grid()), lambda t: 0.0,
                        0.02, 0.005, p)
    with pytest.raises(ValueError):
        energy_difference_monitor(a, b, b24)


# Galerkin energy ----------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def pot():
    return GalerkinEnergy(enumerate_modes(GEO, 4), 1.0, 1.0, 8, CENTER)


def test_energy_at_zero(pot):
    e = pot.energy(np.zeros(pot.dim))
    assert e == pytest.approx(pot.nu * GEO.area * math.exp(pot.log_prefactor), rel=1e-12)


def test_energy_quadratic_part():
    b = enumerate_modes(GEO, 3)
    p = GalerkinEnergy(b, 1.0, 0.0, 1e6, smoothed_kinetic=False)
    U = np.random.default_rng(0).normal(size=b.dim)
    assert p.energy(U) == pytest.approx(np.sum(b.eigenvalues * U**2) / (4 * math.pi), rel=1e-10)


def test_insertion_is_linear(pot):
    U = np.random.default_rng(1).normal(size=pot.dim)
    free = GalerkinEnergy(pot.basis, 1.0, 0.0, 8, CENTER)
    none = GalerkinEnergy(pot.basis, 1.0, 0.0, 8)
    assert free.energy(U) - none.energy(U) == pytest.approx(-U @ free.insertion, rel=1e-12)
    assert free.insertion[0] == pytest.approx(1.0 / SQRT_V)


def test_wick_normalization_gives_unit_mean_exponential():
    b = enumerate_modes(GEO, 4)
    p = GalerkinEnergy(b, 1.0, 1.0, 8)
    gen = np.random.default_rng(2)
    k = p.kappa[1:]
    U = np.zeros((20000, b.dim))
    # Gaussian free field restricted to the Galerkin modes: variance 2 pi / lambda^2
    U[:, 1:] = gen.standard_normal((20000, b.dim - 1)) * np.sqrt(2 * math.pi / b.eigenvalues[1:])
    m = p.mass(U) / GEO.area
    assert abs(np.mean(m) - 1) < 3 * np.std(m) / math.sqrt(len(m))
    assert k.size == b.dim - 1


def test_gradient_matches_finite_differences(pot):
    gen = np.random.default_rng(3)
    U = gen.normal(size=(100, pot.dim))
    d = gen.normal(size=(100, pot.dim))
    h = 1e-5
    fd = (pot.energy(U + h * d) - pot.energy(U - h * d)) / (2 * h)
    an = np.sum(pot.gradient(U) * d, axis=-1)
    assert np.max(np.abs(fd - an) / np.maximum(np.abs(an), 1.0)) < 1e-6
    e, g = pot.energy_and_gradient(U)
    assert np.allclose(e, pot.energy(U)) and np.allclose(g, pot.gradient(U))


def test_zero_mode_conditional_is_gamma(pot):
    gen = np.random.default_rng(4)
    U = pot.sample_zero_mode(np.zeros((20000, pot.dim)), gen)
    tau = pot.nu * np.exp(pot.beta * U[:, 0] / SQRT_V) * pot.mass(np.zeros(pot.dim))
    shape = pot.punctures.total_charge / pot.beta
    assert stats.kstest(tau, stats.gamma(shape).cdf).pvalue > 1e-3


def test_zero_mode_conditional_needs_charge():
    p = GalerkinEnergy(enumerate_modes(GEO, 2), 1.0, 1.0, 8)
    with pytest.raises(ValueError):
        p.sample_zero_mode(np.zeros(p.dim), np.random.default_rng(0))


# Langevin and MALA ------------------------------------------------------------------------------------------

def test_langevin_single_mode_variance():
    b = enumerate_modes(GEO, 1)
    p = GalerkinEnergy(b, 1.0, 0.0, 1e6)
    U = np.zeros((20000, b.dim))
    gen = np.random.default_rng(5)
    for _ in range(1600):
        U = langevin_step(U, p, 0.05, gen)
    var = np.var(U[:, 1])
    assert 2 * math.pi * 0.95 <= var <= 2 * math.pi * 1.05


def test_langevin_tiny_step_no_noise(pot):
    U = np.random.default_rng(6).normal(size=pot.dim)
    out = langevin_step(U, pot, 1e-12, noise=np.zeros(pot.dim))
    assert np.allclose(out, U, atol=1e-10)
    with pytest.raises(ValueError):
        langevin_step(U, pot, -1.0, noise=np.zeros(pot.dim))


class Toy:
    """``E = x^2 / 2 + y^4 / 4`` in two dimensions."""

    def energy_and_gradient(self, U):
        U = np.asarray(U)
        x, y = U[..., 0], U[..., 1]
        return x**2 / 2 + y**4 / 4, np.stack([x, y**3], axis=-1)


def test_mala_tiny_step_accepts_everything():
    _, rate, _ = mala_chain(np.zeros((500, 2)), Toy(), 1e-6, 20, RngStream(0))
    assert rate > 0.999


def test_mala_matches_target_histogram():
    U, rate, samples = mala_chain(np.zeros((4000, 2)), Toy(), 0.5, 200, RngStream(1), thin=200)
    y = samples[-1][:, 1]
    edges = np.array([-np.inf, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, np.inf])
    z, _ = integrate.quad(lambda t: math.exp(-t**4 / 4), -np.inf, np.inf)
    probs = np.array([integrate.quad(lambda t: math.exp(-t**4 / 4), a, b)[0] / z
                      for a, b in zip(edges[:-1], edges[1:])])
    counts = np.histogram(y, bins=edges)[0]
    chi2 = stats.chisquare(counts, probs * len(y))
    assert chi2.pvalue > 1e-3
    assert abs(np.var(samples[-1][:, 0]) - 1) < 0.1
    assert 0.3 < rate < 1.0


def test_equilibrate_hits_gaussian_variances():
    b = enumerate_modes(GEO, 2)
    p = GalerkinEnergy(b, 1.0, 0.0, 1e6, smoothed_kinetic=False)
    U, info = equilibrate(p, 4000, RngStream(2), steps=60)
    var = np.var(U[:, 1:], axis=0)
    target = 2 * math.pi / b.eigenvalues[1:]
    assert np.all(np.abs(var / target - 1) < 0.1)
    assert 0.3 < info["acceptance"] < 0.95


# invariance ------------------------------------------------------------------------------------------------------

def test_invariance_zero_horizon_is_exact():
    b = enumerate_modes(GEO, 2)
    p = GalerkinEnergy(b, 1.0, 0.0, 1e6)
    init = p.gaussian_draw(np.random.default_rng(0), 100)
    recs, _ = invariance_test(p, {"m1": mode_square(1)}, 0.0, 0.01, 100, RngStream(0),
                              initial=init)
    assert recs[0].mean_t0 == recs[0].mean_T and recs[0].passed and recs[0].z_score == 0


def test_invariance_gaussian_case():
    b = enumerate_modes(GEO, 2)
    p = GalerkinEnergy(b, 1.0, 0.0, 8)
    init = p.gaussian_draw(np.random.default_rng(1), 4000)
    obs = {"m1": mode_square(1), "m4": mode_square(b.dim - 1),
           "probe": probe_square(p, (1.0, 2.0))}
    recs, _ = invariance_test(p, obs, 2.0, 0.01, 4000, RngStream(1), initial=init)
    assert all(r.passed for r in recs)
    assert all(r.dt_bias_band >= 0 for r in recs)


def test_invariance_requires_commensurate_horizon():
    b = enumerate_modes(GEO, 2)
    p = GalerkinEnergy(b, 1.0, 0.0, 8)
    with pytest.raises(ValueError):
        invariance_test(p, {}, 0.03, 0.01, 10, RngStream(0), initial=np.zeros((10, b.dim)))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 1.4), st.floats(0.1, 3.0))
def test_energy_is_finite_and_gradient_consistent(beta, nu):
    p = GalerkinEnergy(enumerate_modes(GEO, 2), beta, nu, 4, CENTER)
    U = np.random.default_rng(0).normal(size=(5, p.dim))
    e, g = p.energy_and_gradient(U)
    assert np.all(np.isfinite(e)) and np.all(np.isfinite(g))
