"""The truncated Liouville quantum gravity measure on the torus.

Seiberg-type admissibility checks, the zero-mode Gamma identity,
self-normalized sampling of observables under ``rho_N``, and the lower-bound
sequence showing that the partition function diverges when ``nu < 0``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .gaussian import sample_gff
from .gmc import GmcParams, PunctureSet, puncture_field, theta_field, total_mass
from .rng import RngStream, chunked
from .spectral import (HEAT, ScalarField, Smoothing, SpectralBasis, TorusGeometry,
                       enumerate_modes, heat_multiplier)
from .stats import effective_sample_size, ratio_jackknife

ZERO_MARGIN = 1e-12


class SeibergViolation(ValueError):
    """Parameters outside the admissible range for the measure construction."""


@dataclass(frozen=True)
class LqgParams:
    beta: float
    nu: float
    punctures: PunctureSet
    N: float
    euler_char: int = 0
    smoothing: Smoothing = HEAT

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @property
    def Q(self) -> float:
        return 2.0 / self.beta + self.beta / 2.0

    @property
    def gamma_shape(self) -> float:
        """``s = (sum_l a_l - chi Q) / beta``."""
        return (self.punctures.total_charge - self.euler_char * self.Q) / self.beta

    def gmc(self, allow_large_beta: bool = False) -> GmcParams:
        return GmcParams(self.beta, self.N, smoothing=self.smoothing,
                         allow_large_beta=allow_large_beta)


@dataclass(frozen=True)
class SeibergReport:
    l2_margin: float
    first_seiberg_margin: float
    integrable_margin: float
    gwp_margin: float

    @property
    def l2_regime(self) -> bool:
        return self.l2_margin > 0

    @property
    def first_seiberg(self) -> bool:
        return self.first_seiberg_margin > 0

    @property
    def integrable_insertions(self) -> bool:
        return self.integrable_margin > 0

    @property
    def gwp_condition(self) -> bool:
        return self.gwp_margin > 0

    @property
    def admissible(self) -> bool:
        return self.l2_regime and self.first_seiberg and self.integrable_insertions

    def zero_margins(self) -> list[str]:
        return [k for k, v in asdict(self).items() if abs(v) <= ZERO_MARGIN]

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(l2_regime=self.l2_regime, first_seiberg=self.first_seiberg,
                 integrable_insertions=self.integrable_insertions,
                 gwp_condition=self.gwp_condition, zero_margins=self.zero_margins())
        return d


def check_bounds(params: LqgParams) -> SeibergReport:
    beta = params.beta
    p = params.punctures
    a_max = p.max_charge
    gwp_a = a_max if len(p) else 0.0
    return SeibergReport(
        l2_margin=math.sqrt(2.0) - beta,
        first_seiberg_margin=p.total_charge - params.euler_char * params.Q,
        integrable_margin=(2.0 / beta - a_max) if len(p) else math.inf,
        gwp_margin=math.sqrt(gwp_a**2 + 4.0) - gwp_a - beta,
    )


def require_admissible(params: LqgParams, override: bool = False) -> SeibergReport:
    report = check_bounds(params)
    if not report.admissible:
        failed = [name for name, ok in (("L^2 regime", report.l2_regime),
                                        ("first Seiberg bound", report.first_seiberg),
                                        ("integrable insertions", report.integrable_insertions))
                  if not ok]
        if not override:
            raise SeibergViolation("parameters violate: " + ", ".join(failed))
        warnings.warn("Seiberg check overridden: " + ", ".join(failed), stacklevel=2)
    return report


# -- zero mode ---------------------------------------------------------------

def zero_mode_integral(beta: float, slope: float, nu: float, mass: float) -> float:
    """``int_R exp(slope X - nu mass e^(beta X)) dX`` by adaptive quadrature."""
    s = slope / beta
    if not s > 0:
        raise SeibergViolation("first Seiberg bound fails: the zero-mode integral diverges")
    if not (nu > 0 and mass > 0):
        raise ValueError("need nu > 0 and mass > 0")
    c = nu * mass
    peak = math.log(s / c) / beta
    log_peak = slope * peak - s

    def f(x):
        return math.exp(slope * (x - peak) - s * (math.exp(beta * (x - peak)) - 1.0))

    lo = peak - 60.0 / slope
    hi = peak + math.log(60.0 / s + 2.0) / beta + 2.0 / beta
    left, _ = integrate.quad(f, lo, peak, epsabs=0.0, epsrel=1e-13, limit=400)
    right, _ = integrate.quad(f, peak, hi, epsabs=0.0, epsrel=1e-13, limit=400)
    return (left + right) * math.exp(log_peak)


def zero_mode_gamma_check(params: LqgParams, mass: float):
    """Compare the zero-mode integral with ``beta^-1 Gamma(s) (nu mass)^-s``."""
    slope = params.punctures.total_charge - params.euler_char * params.Q
    if not slope > 0:
        raise SeibergViolation("first Seiberg bound fails: sum a_l <= chi Q")
    s = slope / params.beta
    numeric = zero_mode_integral(params.beta, slope, params.nu, mass)
    analytic = math.exp(special.gammaln(s) - s * math.log(params.nu * mass)) / params.beta
    return numeric, analytic


# -- sampling under rho_N ----------------------------------------------------

@dataclass(frozen=True)
class LqgSample:
    """One chunk of reweighted draws.

    ``field`` is the shifted mean-zero field ``X + 2 pi sum a_l (P_N x Id) G(x_l, .)``,
    ``zero_mode`` the constant ``Xbar``, ``mass`` the GMC mass ``Y`` and
    ``tau = nu exp(beta Xbar) Y``.
    """

    field: ScalarField
    zero_mode: np.ndarray
    mass: np.ndarray
    tau: np.ndarray


@dataclass(frozen=True)
class LqgEstimate:
    value: float
    std_error: float
    ess: float
    replicas: int


def expectation_under_rho(basis: SpectralBasis, params: LqgParams, observable, replicas: int,
                          rng: RngStream, n: int | None = None, override: bool = False,
                          chunk: int = 50) -> LqgEstimate:
    """Self-normalized estimate of ``E_rho_N[F]``.

    The zero mode is integrated exactly: ``tau ~ Gamma(s)`` and
    ``Xbar = log(tau / (nu Y)) / beta``, with importance weight ``Y^-s``.
    ``observable(sample: LqgSample)`` returns one value per draw.
    """
    require_admissible(params, override)
    if not params.nu > 0:
        raise SeibergViolation("expectation_under_rho needs nu > 0")
    gmc = params.gmc(allow_large_beta=override)
    shift = puncture_field(basis, params.N, params.punctures, params.smoothing, sides=1).coeffs
    s = params.gamma_shape

    def draw(gen, size):
        x = sample_gff(basis, gen, size).field
        y = total_mass(theta_field(x, gmc, params.punctures, n))
        tau = gen.gamma(s, size=size)
        zbar = np.log(tau / (params.nu * y)) / params.beta
        sample = LqgSample(ScalarField(basis, x.coeffs + shift), zbar, y, tau)
        f = np.asarray(observable(sample), dtype=float)
        return -s * np.log(y), np.broadcast_to(f, (size,))

    logw, f = chunked(draw, replicas, rng, chunk=chunk)
    w = np.exp(logw - np.max(logw))
    value, se = ratio_jackknife(w, f)
    ess = effective_sample_size(w)
    if ess < 0.05 * replicas:
        warnings.warn(f"effective sample size {ess:.1f} is below 5% of {replicas} replicas",
                      stacklevel=2)
    return LqgEstimate(value, se, ess, replicas)


# -- negative cosmological constant ----------------------------------------------

BUMP_RADIUS = 1.0
BUMP_SMOOTHING_N = 4.0
BUMP_CUTOFF = 32.0


@lru_cache(maxsize=8)
def bump_profile(geometry: TorusGeometry = TorusGeometry(), radius: float = BUMP_RADIUS,
                 cutoff: float = BUMP_CUTOFF):
    """Unit-height bump: ``P_4`` applied to the indicator of a disk, normalized to max 1.

    Returns ``(basis, coeffs, grid)``.
    """
    basis = enumerate_modes(geometry, cutoff)
    n = basis.min_grid()
    center = np.full(2, geometry.side_length / 2)
    indicator = (geometry.distance(geometry.grid_points(n), center) <= radius).astype(float)
    coeffs = basis.from_grid(indicator) * heat_multiplier(basis, 4 * math.pi / BUMP_SMOOTHING_N**2)
    grid = basis.to_grid(coeffs, n)
    scale = grid.max()
    return basis, coeffs / scale, grid / scale


def h1_norm_sq(basis: SpectralBasis, coeffs) -> float:
    """``||grad f||^2 + f_0^2`` (torus seminorm plus squared zero-mode coefficient)."""
    c = np.asarray(coeffs)
    return float(np.sum(basis.eigenvalues * c**2) + c[0] ** 2)


def negative_nu_lower_bound(beta: float, nu: float, m: float,
                            geometry: TorusGeometry = TorusGeometry()) -> float:
    """Lower bound ``-1/2 ||f_m||^2_H1 - nu int exp(beta f_m) dV`` for ``f_m = m * bump``.

    By Cameron-Martin and Jensen this bounds ``log E[exp(-nu int GMC)]`` from
    below, and it grows without bound along the family when ``nu < 0``.
    """
    if not nu < 0:
        raise ValueError("the divergence bound is for nu < 0")
    if beta == 0:
        raise ValueError("beta must be non-zero")
    basis, coeffs, grid = bump_profile(geometry)
    energy = 0.5 * m**2 * h1_norm_sq(basis, coeffs)
    return -energy - nu * float(np.mean(np.exp(beta * m * grid))) * geometry.area
