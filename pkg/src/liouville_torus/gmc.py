"""Punctured Gaussian multiplicative chaos ``Theta_N`` and its moments.

``Theta_N(x) = C_N exp(beta P_N Psi(x) + 2 pi beta sum_l a_l (P_N x P_N) G(x_l, x))``
where the normalization ``C_N`` is either the exact Wick factor
``exp(-beta^2 sigma_N / 2)`` or ``exp(-pi beta^2 C_P) N^(-beta^2 / 2)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .gaussian import sample_gff
from .rng import RngStream, chunked
from .spectral import (HEAT, TWO_PI, GridField, ScalarField, Smoothing, SpectralBasis,
                       TorusGeometry, check_resolution, green_field, green_regularized,
                       sigma_N)
from .stats import Estimate, mean_estimate

#: Largest exponent accepted before declaring overflow.
EXPONENT_LIMIT = 700.0

WICK_EXACT = "wick_exact"
LOGN_CP = "logN_CP"


class ExponentOverflowError(FloatingPointError):
    pass


@dataclass(frozen=True)
class PunctureSet:
    """Insertion points and charges, stored in a canonical (sorted) order."""

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    charges: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        a = np.asarray(self.charges, dtype=float).reshape(-1)
        if len(pts) != len(a):
            raise ValueError("one charge per puncture")
        order = np.lexsort((a, pts[:, 1], pts[:, 0])) if len(a) else np.arange(0)
        pts, a = pts[order], a[order]
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("puncture points must be pairwise distinct")
        pts.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "charges", a)

    @classmethod
    def of(cls, *entries):
        """``PunctureSet.of(((x, y), a), ...)``."""
        if not entries:
            return cls()
        return cls([e[0] for e in entries], [e[1] for e in entries])

    def __len__(self):
        return len(self.charges)

    @property
    def total_charge(self) -> float:
        return float(np.sum(self.charges))

    @property
    def max_charge(self) -> float:
        return float(np.max(self.charges)) if len(self) else -math.inf


NO_PUNCTURES = PunctureSet()


@dataclass(frozen=True)
class GmcParams:
    beta: float
    N: float
    normalization: str = WICK_EXACT
    C_P: float | None = None
    smoothing: Smoothing = HEAT
    allow_large_beta: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.N > 0:
            raise ValueError("N must be positive")
        if self.normalization not in (WICK_EXACT, LOGN_CP):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.normalization == LOGN_CP and self.C_P is None:
            raise ValueError("logN_CP normalization needs a value for C_P")
        if self.beta >= math.sqrt(2) and not self.allow_large_beta:
            warnings.warn("beta >= sqrt(2) leaves the L^2 regime (A1)", stacklevel=2)
            raise ValueError(f"beta = {self.beta} violates the L^2 regime assumption "
                             "0 < beta < sqrt(2); pass allow_large_beta=True to override")

    def log_prefactor(self, basis: SpectralBasis) -> float:
        if self.normalization == WICK_EXACT:
            return -0.5 * self.beta**2 * sigma_N(basis, self.N, self.smoothing)
        return -math.pi * self.beta**2 * self.C_P - 0.5 * self.beta**2 * math.log(self.N)

    def mean_factor(self, basis: SpectralBasis) -> float:
        """``E[Theta_N(x)] / H_N(x)``; exactly 1 under Wick normalization."""
        if self.normalization == WICK_EXACT:
            return 1.0
        s = sigma_N(basis, self.N, self.smoothing)
        return math.exp(self.log_prefactor(basis) + 0.5 * self.beta**2 * s)


@dataclass(frozen=True)
class ThetaField:
    grid: GridField
    time: float = 0.0


def puncture_field(basis: SpectralBasis, N: float, punctures: PunctureSet,
                   smoothing: Smoothing = HEAT, sides: int = 2) -> ScalarField:
    """Coefficients of ``2 pi sum_l a_l (P_N x P_N) G(x_l, .)`` (``sides=1``: ``P_N x Id``)."""
    check_resolution(basis, N)
    c = np.zeros(basis.dim)
    for x, a in zip(punctures.points, punctures.charges):
        c += a * green_field(basis, N, x, smoothing, sides).coeffs
    return ScalarField(basis, TWO_PI * c)


def puncture_shift(basis: SpectralBasis, N: float, punctures: PunctureSet, n: int | None = None,
                   smoothing: Smoothing = HEAT) -> GridField:
    """Grid samples of ``2 pi sum_l a_l (P_N x P_N) G(x_l, x)`` (beta not included)."""
    return puncture_field(basis, N, punctures, smoothing).to_grid(n)


def log_H(basis: SpectralBasis, params: GmcParams, punctures: PunctureSet, points) -> np.ndarray:
    """``log H_N(y) = 2 pi beta sum_l a_l (P_N x P_N) G(x_l, y)`` at ``points``."""
    pts = np.asarray(points, dtype=float)
    out = np.zeros(pts.shape[:-1])
    for x, a in zip(punctures.points, punctures.charges):
        out = out + TWO_PI * params.beta * a * green_regularized(basis, params.N, x, pts,
                                                                 params.smoothing)
    return out


def _check_exponent(expo, where):
    peak = np.max(expo)
    if peak > EXPONENT_LIMIT:
        idx = np.unravel_index(np.argmax(expo), expo.shape)
        raise ExponentOverflowError(
            f"Theta exponent {peak:.4g} exceeds {EXPONENT_LIMIT} at {where} index {idx}; "
            "parameters are outside the tested regime")


def theta_field(state, params: GmcParams, punctures: PunctureSet = NO_PUNCTURES,
                n: int | None = None) -> ThetaField:
    """Evaluate ``Theta_N`` on the uniform grid.

    ``state`` is an :class:`~liouville_torus.gaussian.OuState`, a
    :class:`~liouville_torus.gaussian.GffSample` or a
    :class:`~liouville_torus.spectral.ScalarField` (batch axes allowed).
    """
    fld = state if isinstance(state, ScalarField) else state.field
    basis = fld.basis
    check_resolution(basis, params.N)
    m = params.smoothing.multiplier(basis.eigenvalues, params.N)
    coeffs = params.beta * (fld.coeffs * m + puncture_field(basis, params.N, punctures,
                                                            params.smoothing).coeffs)
    expo = basis.to_grid(coeffs, n) + params.log_prefactor(basis)
    _check_exponent(expo, "grid")
    return ThetaField(GridField(basis.geometry, np.exp(expo)), getattr(state, "time", 0.0))


def theta_at(fld: ScalarField, params: GmcParams, punctures: PunctureSet, points) -> np.ndarray:
    """``Theta_N`` at arbitrary points (batch axes of ``fld`` come first)."""
    basis = fld.basis
    check_resolution(basis, params.N)
    m = params.smoothing.multiplier(basis.eigenvalues, params.N)
    expo = (params.beta * basis.evaluate(fld.coeffs * m, points)
            + log_H(basis, params, punctures, points) + params.log_prefactor(basis))
    _check_exponent(expo, "probe")
    return np.exp(expo)


def total_mass(theta: ThetaField, geometry: TorusGeometry | None = None):
    """``int Theta dV`` by the periodic trapezoid rule."""
    grid = theta.grid if geometry is None else GridField(geometry, theta.grid.samples)
    return grid.integral()


def mean_oracle(basis: SpectralBasis, params: GmcParams, punctures: PunctureSet, points):
    """Exact ``E[Theta_N(y)] = C * H_N(y)``."""
    return params.mean_factor(basis) * np.exp(log_H(basis, params, punctures, points))


def second_moment_oracle(basis: SpectralBasis, params: GmcParams, punctures: PunctureSet,
                         y1, y2):
    """Exact ``E[Theta_N(y1) Theta_N(y2)]`` from the Gaussian moment formula."""
    if np.any(basis.geometry.distance(y1, y2) == 0):
        raise ValueError("second_moment_oracle needs y1 != y2")
    cross = TWO_PI * params.beta**2 * green_regularized(basis, params.N, y1, y2, params.smoothing)
    return (params.mean_factor(basis) ** 2
            * np.exp(log_H(basis, params, punctures, y1) + log_H(basis, params, punctures, y2) + cross))


# -- Monte Carlo ---------------------------------------------------------------

def sample_theta_at(basis: SpectralBasis, params: GmcParams, punctures: PunctureSet, points,
                    replicas: int, rng: RngStream) -> np.ndarray:
    """``(replicas,) + points.shape[:-1]`` samples of ``Theta_N`` at fixed points."""
    pts = np.asarray(points, dtype=float)

    def draw(gen, size):
        return theta_at(sample_gff(basis, gen, size).field, params, punctures, pts)

    return chunked(draw, replicas, rng)


def sample_mass(basis: SpectralBasis, params: GmcParams, punctures: PunctureSet, replicas: int,
                rng: RngStream, n: int | None = None, chunk: int = 50) -> np.ndarray:
    """Total masses ``int Theta_N dV`` of independent GFF draws."""

    def draw(gen, size):
        fld = sample_gff(basis, gen, size).field
        return total_mass(theta_field(fld, params, punctures, n))

    return chunked(draw, replicas, rng, chunk=chunk)


def ball_mask(geometry: TorusGeometry, n: int, center, radius: float) -> np.ndarray:
    return geometry.distance(geometry.grid_points(n), center) <= radius


def negative_moment_estimate(basis: SpectralBasis, params: GmcParams, center, radius: float,
                             a: float, replicas: int, rng: RngStream,
                             n: int | None = None, chunk: int = 50) -> Estimate:
    """Monte Carlo estimate of ``E[X_N(B)^-a]`` with ``X_N(B) = int_B exp(beta P_N X - beta^2 sigma_N / 2)``."""
    if replicas < 100:
        raise ValueError("negative_moment_estimate needs at least 100 replicas")
    if params.normalization != WICK_EXACT:
        raise ValueError("negative moments are defined with Wick normalization")
    geometry = basis.geometry
    if not 0 < radius < geometry.side_length / 4:
        raise ValueError("radius must lie in (0, side/4)")
    if not a > 0:
        raise ValueError("a must be positive")
    n = basis.min_grid() if n is None else n
    mask = ball_mask(geometry, n, center, radius)
    cell = geometry.area / n**2

    def draw(gen, size):
        theta = theta_field(sample_gff(basis, gen, size).field, params, NO_PUNCTURES, n)
        mass = np.sum(theta.grid.samples[..., mask], axis=-1) * cell
        return mass ** (-a)

    return mean_estimate(chunked(draw, replicas, rng, chunk=chunk))


def discrete_ball_area(geometry: TorusGeometry, n: int, center, radius: float) -> float:
    """Quadrature area of the ball, i.e. ``E[X_N(B)]`` on the grid."""
    return float(np.sum(ball_mask(geometry, n, center, radius))) * geometry.area / n**2

