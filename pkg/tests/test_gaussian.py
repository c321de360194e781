import math

import numpy as np
import pytest
from scipy import stats

from liouville_torus.gaussian import (OuState, covariance_oracle, gff_std, ou_step, sample_gff,
                                      simulate_ou)
from liouville_torus.rng import RngStream, chunked
from liouville_torus.spectral import (TorusGeometry, enumerate_modes, green_regularized,
                                      sigma_N)
from liouville_torus.stats import mean_estimate

GEO = TorusGeometry()


@pytest.fixture(scope="module")
def b1():
    return enumerate_modes(GEO, 1)


@pytest.fixture(scope="module")
def b24():
    return enumerate_modes(GEO, 24)


def mode_index(basis, lam2):
    return int(np.flatnonzero(basis.eigenvalues == lam2)[0])


# GFF ----------------------------------------------------------------------------------

def test_gff_constant_mode_is_zero_and_std(b1):
    x = sample_gff(b1, RngStream(0), size=10).field.coeffs
    assert np.all(x[:, 0] == 0)
    assert gff_std(b1)[1] == pytest.approx(math.sqrt(2 * math.pi))


def test_gff_mode_variance(b1):
    x = sample_gff(b1, RngStream(1), size=100_000).field.coeffs
    var = np.var(x[:, mode_index(b1, 1)])
    assert 2 * math.pi * 0.97 <= var <= 2 * math.pi * 1.03


def test_gff_modes_uncorrelated(b1):
    x = sample_gff(b1, RngStream(2), size=100_000).field.coeffs
    c = np.corrcoef(x[:, 1], x[:, 2])[0, 1]
    assert -0.05 <= c <= 0.05


def test_gff_needs_nonconstant_mode():
    with pytest.raises(ValueError):
        sample_gff(enumerate_modes(GEO, 0), RngStream(0))


def test_gff_smoothed_covariance_matches_green():
    b = enumerate_modes(GEO, 12)
    N = 2.0
    x, y = np.array([0.4, 1.0]), np.array([1.3, 0.2])
    m = np.exp(-b.eigenvalues / N**2)
    vx, vy = b.values(x) * m, b.values(y) * m

    def draw(gen, size):
        c = sample_gff(b, gen, size).field.coeffs
        return (c @ vx) * (c @ vy)

    est = mean_estimate(chunked(draw, 100_000, RngStream(3)))
    oracle = 2 * math.pi * green_regularized(b, N, x, y)
    assert abs(est.z_score(oracle)) < 3


def test_determinism(b24):
    a = sample_gff(b24, RngStream(7, 3), size=5).field.coeffs
    b = sample_gff(b24, RngStream(7, 3), size=5).field.coeffs
    c = sample_gff(b24, RngStream(7, 4), size=5).field.coeffs
    assert np.array_equal(a, b) and not np.array_equal(a, c)


# OU -----------------------------------------------------------------------------------------

def test_ou_forced_zero_noise_tiny_dt(b24):
    s = OuState.from_gff(sample_gff(b24, RngStream(0)))
    out = ou_step(s, 1e-14, noise=np.zeros(b24.dim), zero_noise=0.0)
    assert np.allclose(out.field.coeffs, s.field.coeffs, rtol=1e-12)
    assert out.time == pytest.approx(1e-14)


def test_ou_rejects_nonpositive_dt(b24):
    s = OuState.from_gff(sample_gff(b24, RngStream(0)))
    with pytest.raises(ValueError):
        ou_step(s, 0.0, RngStream(1))


def test_ou_stationary_variance(b1):
    paths = simulate_ou(b1, [0.0, 5.0], RngStream(4), size=100_000)
    var = np.var(paths[-1][:, mode_index(b1, 1)])
    assert 2 * math.pi * 0.97 <= var <= 2 * math.pi * 1.03


def test_ou_lagged_covariance():
    b = enumerate_modes(GEO, 2)
    i = mode_index(b, 4)
    tau = 1.5
    paths = simulate_ou(b, [0.0, tau], RngStream(5), size=100_000)
    est = mean_estimate(paths[0][:, i] * paths[1][:, i])
    assert abs(est.z_score(2 * math.pi / 4 * math.exp(-tau * 4 / (4 * math.pi)))) < 3


def test_ou_zero_mode_and_brownian(b1):
    s = OuState.from_gff(sample_gff(b1, RngStream(0), size=20_000))
    gen = RngStream(6).generator()
    for _ in range(4):
        s = ou_step(s, 0.25, gen)
    assert np.all(s.field.coeffs[..., 0] == 0)
    assert np.var(s.zero_mode_bm) == pytest.approx(1.0, rel=0.05)


def test_ou_deterministic(b24):
    a = simulate_ou(b24, [0, 0.3, 1.0], RngStream(9), size=3)
    b = simulate_ou(b24, [0, 0.3, 1.0], RngStream(9), size=3)
    assert np.array_equal(a, b)


def test_ou_stationarity_ks():
    b = enumerate_modes(GEO, 6)
    paths = simulate_ou(b, [0.0, 10.0], RngStream(10), size=5000)
    picks = np.random.default_rng(0).choice(np.arange(1, b.dim), size=20, replace=False)
    # independent draws at t=0 and t=10 are compared via two separate seeds
    later = simulate_ou(b, [0.0, 10.0], RngStream(11), size=5000)[-1]
    for i in picks:
        assert stats.ks_2samp(paths[0][:, i], later[:, i]).pvalue > 0.01 / 20


# covariance oracle ---------------------------------------------------------------------------

def test_oracle_equal_times_is_sigma(b24):
    x = np.array([1.0, 2.0])
    assert covariance_oracle(b24, 4, 4, 1.0, 1.0, x, x) == pytest.approx(sigma_N(b24, 4), rel=1e-12)


def test_oracle_decays(b24):
    assert abs(covariance_oracle(b24, 2, 2, 0.0, 1e4, [0, 0], [0.1, 0])) < 1e-10


def test_oracle_time_order(b24):
    with pytest.raises(ValueError):
        covariance_oracle(b24, 2, 2, 1.0, 0.5, [0, 0], [0, 0])


def test_oracle_vs_monte_carlo_mixed_N(b24):
    x1, x2 = np.array([0.5, 0.9]), np.array([0.8, 0.4])
    v1 = b24.values(x1) * np.exp(-b24.eigenvalues / 16)
    v2 = b24.values(x2) * np.exp(-b24.eigenvalues / 64)

    def draw(gen, size):
        p = simulate_ou(b24, [0.0, 1.0, 2.0], gen, size)
        return (p[1] @ v1) * (p[2] @ v2)

    est = mean_estimate(chunked(draw, 100_000, RngStream(12)))
    assert abs(est.z_score(covariance_oracle(b24, 4, 8, 1.0, 2.0, x1, x2))) < 3
