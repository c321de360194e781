"""Spectral data for the flat torus.

Eigenmodes of the Laplacian, the heat semigroup, the smoothing operators
``P_N = exp(N^-2 Laplacian)``, the mean-zero Green's function and its
regularizations, and the Wick variance ``sigma_N``.

Fields are stored as coefficients in a *real* orthonormal basis: the
constant ``V^-1/2``, and for every pair ``+-k`` one cosine (attached to the
representative ``k`` with ``k1 > 0`` or ``k1 == 0, k2 > 0``) and one sine
(attached to ``-k``), both scaled by ``sqrt(2/V)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * math.pi

#: Default cap on the number of enumerated modes.
MAX_MODES = 2_000_000

#: Required ratio ``cutoff / N`` for regularized Green's functions.
RESOLUTION_RATIO = 6.0

#: Minimal grid points per axis, as a multiple of the largest mode index.
GRID_FACTOR = 4
SEPARABLE_MAX_INDEX = 12


class ResourceError(RuntimeError):
    """A requested computation exceeds a configured resource cap."""


class UnderResolvedError(ValueError):
    """The spectral cutoff is too small for the requested smoothing scale."""


@dataclass(frozen=True)
class TorusGeometry:
    """Flat square torus of side ``side_length``."""

    side_length: float = TWO_PI

    def __post_init__(self):
        if not self.side_length > 0:
            raise ValueError("side_length must be positive")

    @property
    def area(self) -> float:
        return self.side_length**2

    @property
    def euler_characteristic(self) -> int:
        return 0

    @property
    def scalar_curvature(self) -> float:
        return 0.0

    @property
    def wavenumber(self) -> float:
        """``2 pi / side_length``; eigenvalue of mode ``k`` is ``(wavenumber |k|)^2``."""
        return TWO_PI / self.side_length

    def wrap(self, points) -> np.ndarray:
        return np.mod(np.asarray(points, dtype=float), self.side_length)

    def distance(self, x, y) -> np.ndarray:
        """Geodesic distance with the minimal-image rule (broadcasts)."""
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        d = np.mod(d, self.side_length)
        d = np.minimum(d, self.side_length - d)
        return np.sqrt(np.sum(d**2, axis=-1))

    def grid_points(self, n: int) -> np.ndarray:
        """``(n, n, 2)`` array of uniform grid points ``side * (i, j) / n``."""
        s = self.side_length * np.arange(n) / n
        X, Y = np.meshgrid(s, s, indexing="ij")
        return np.stack([X, Y], axis=-1)


# -- smoothing multipliers ---------------------------------------------------

def heat_profile(u):
    """``psi(u) = exp(-u)``; gives ``P_N = exp(N^-2 Laplacian)``."""
    return np.exp(-u)


def quartic_gaussian_profile(u):
    """``psi(u) = exp(-u^2)``: a Schwartz alternative with ``psi(0) = 1``."""
    return np.exp(-np.square(u))


@dataclass(frozen=True)
class Smoothing:
    """Fourier multiplier ``psi(lambda^2 / N^2)`` with ``psi(0) = 1``."""

    name: str = "heat"
    profile: Callable = field(default=heat_profile, compare=False, repr=False)

    def __post_init__(self):
        if not math.isclose(float(self.profile(0.0)), 1.0, abs_tol=1e-14):
            raise ValueError("smoothing profile must satisfy psi(0) = 1")

    def multiplier(self, eigenvalues, N) -> np.ndarray:
        if not N > 0:
            raise ValueError(f"smoothing scale N must be positive, got {N}")
        lam2 = np.asarray(eigenvalues, dtype=float)
        if math.isinf(N):
            return np.ones_like(lam2)
        return self.profile(lam2 / float(N) ** 2)


HEAT = Smoothing("heat", heat_profile)
QUARTIC = Smoothing("quartic", quartic_gaussian_profile)

SMOOTHINGS = {"heat": HEAT, "quartic": QUARTIC}


# -- basis ---------------------------------------------------------------------

class SpectralBasis:
    """Real orthonormal eigenbasis of the torus Laplacian below a cutoff.

    Attributes
    ----------
    geometry : TorusGeometry
    cutoff : float
        All modes with ``lambda <= cutoff`` are kept.
    modes : ndarray, shape (dim, 2)
        Integer wave vectors, sorted by eigenvalue then ``(k1, k2)``.
    eigenvalues : ndarray, shape (dim,)
        ``lambda_n^2``, non-decreasing, ``eigenvalues[0] == 0``.
    kind : ndarray, shape (dim,)
        0 for the constant, +1 for cosines, -1 for sines.
    """

    def __init__(self, geometry: TorusGeometry, cutoff: float, modes: np.ndarray):
        self.geometry = geometry
        self.cutoff = float(cutoff)
        modes = np.asarray(modes, dtype=np.int64)
        modes.setflags(write=False)
        self.modes = modes
        k2 = np.sum(modes**2, axis=1)
        self.eigenvalues = geometry.wavenumber**2 * k2.astype(float)
        self.eigenvalues.setflags(write=False)
        positive = (modes[:, 0] > 0) | ((modes[:, 0] == 0) & (modes[:, 1] > 0))
        kind = np.where(positive, 1, -1)
        kind[k2 == 0] = 0
        self.kind = kind
        self.kind.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.modes)

    @property
    def max_index(self) -> int:
        return int(np.max(np.abs(self.modes))) if self.dim else 0

    @cached_property
    def partner(self) -> np.ndarray:
        """Index of the mode ``-k`` for every mode ``k``."""
        lookup = {tuple(k): i for i, k in enumerate(self.modes.tolist())}
        return np.array([lookup[(-a, -b)] for a, b in self.modes.tolist()])

    def __repr__(self):
        return (f"SpectralBasis(side={self.geometry.side_length:.6g}, "
                f"cutoff={self.cutoff:g}, dim={self.dim})")

    def summary(self) -> dict:
        return {
            "side_length": self.geometry.side_length,
            "cutoff": self.cutoff,
            "dim": self.dim,
            "eigenvalues": self.eigenvalues.tolist(),
        }

    def min_grid(self) -> int:
        return max(GRID_FACTOR * self.max_index, 4)

    # evaluation -------------------------------------------------------------

    def values(self, points) -> np.ndarray:
        """Basis functions at ``points``; returns shape ``(..., dim)``."""
        pts = np.asarray(points, dtype=float)
        V = self.geometry.area
        rep = np.where(self.kind[:, None] < 0, -self.modes, self.modes)
        phase = self.geometry.wavenumber * (pts @ rep.T)
        out = np.where(self.kind > 0, np.cos(phase), np.sin(phase)) * math.sqrt(2.0 / V)
        out[..., self.kind == 0] = 1.0 / math.sqrt(V)
        return out

    def evaluate(self, coeffs, points) -> np.ndarray:
        """Pointwise values; result shape is ``coeffs.shape[:-1] + points.shape[:-1]``."""
        return np.tensordot(np.asarray(coeffs), self.values(points), axes=([-1], [-1]))

    @cached_property
    def _half_index(self):
        # modes whose k2 >= 0 live directly in the rfft half-spectrum
        direct = self.modes[:, 1] >= 0
        return direct

    def _separable(self, n) -> bool:
        # dense 1D transforms beat the FFT for small bases on large batches
        return self.max_index <= SEPARABLE_MAX_INDEX

    def _tables(self, n):
        """Product-basis map ``T`` (modes to 1D-function pairs) and 1D table ``X``.

        1D functions are ``1, cos(k x), sin(k x)`` for ``k = 1..K``, so that
        ``to_grid(c) = X (c T) X^t``.
        """
        cache = self.__dict__.setdefault("_table_cache", {})
        if n not in cache:
            K = self.max_index
            P = 2 * K + 1
            ang = 2.0 * math.pi * np.outer(np.arange(n), np.arange(1, K + 1)) / n
            X = np.concatenate([np.ones((n, 1)), np.cos(ang), np.sin(ang)], axis=1)

            def cos_idx(k):
                return abs(k)

            def sin_idx(k):
                return K + abs(k), (1.0 if k > 0 else -1.0)

            V = self.geometry.area
            T = np.zeros((self.dim, P, P))
            for i, ((k1, k2), kind) in enumerate(zip(self.modes.tolist(), self.kind.tolist())):
                if kind == 0:
                    T[i, 0, 0] = 1.0 / math.sqrt(V)
                    continue
                a, b = (-k1, -k2) if kind < 0 else (k1, k2)
                amp = math.sqrt(2.0 / V)
                terms = ([(1, "c", "c"), (-1, "s", "s")] if kind > 0
                         else [(1, "s", "c"), (1, "c", "s")])
                for sign, fa, fb in terms:
                    if (fa == "s" and a == 0) or (fb == "s" and b == 0):
                        continue
                    ia, sa = (cos_idx(a), 1.0) if fa == "c" else sin_idx(a)
                    ib, sb = (cos_idx(b), 1.0) if fb == "c" else sin_idx(b)
                    T[i, ia, ib] += sign * sa * sb * amp
            cache[n] = (T.reshape(self.dim, P * P), X)
        return cache[n]

    def _check_grid(self, n):
        if n <= 2 * self.max_index:
            raise UnderResolvedError(
                f"grid of {n} points per axis cannot represent mode index {self.max_index}")

    def to_grid(self, coeffs, n: int | None = None) -> np.ndarray:
        """Synthesize grid samples from coefficients (leading axes are batch axes)."""
        n = self.min_grid() if n is None else int(n)
        self._check_grid(n)
        c = np.asarray(coeffs, dtype=float)
        if self._separable(n):
            T, X = self._tables(n)
            P = X.shape[1]
            prod = (c @ T).reshape(c.shape[:-1] + (P, P))
            return np.matmul(X, prod @ X.T)
        V = self.geometry.area
        cp = c[..., self.partner]
        F = np.where(self.kind > 0, c - 1j * cp, cp + 1j * c) / math.sqrt(2.0 * V)
        F = np.where(self.kind == 0, c / math.sqrt(V), F)
        direct = self._half_index
        k = self.modes[direct]
        half = np.zeros(c.shape[:-1] + (n, n // 2 + 1), dtype=complex)
        half[..., k[:, 0] % n, k[:, 1]] = F[..., direct]
        return sfft.irfft2(half, s=(n, n), axes=(-2, -1)) * n * n

    def from_grid(self, samples) -> np.ndarray:
        """Project grid samples onto the basis (exact quadrature for band-limited data)."""
        g = np.asarray(samples, dtype=float)
        n = g.shape[-1]
        if g.shape[-2] != n:
            raise ValueError("grid must be square")
        self._check_grid(n)
        V = self.geometry.area
        if self._separable(n):
            T, X = self._tables(n)
            prod = np.matmul(X.T, g @ X)
            return prod.reshape(g.shape[:-2] + (-1,)) @ T.T * (V / (n * n))
        k = self.modes
        direct = self._half_index
        kn = -k[~direct]
        F = np.empty(g.shape[:-2] + (self.dim,), dtype=complex)
        half = sfft.rfft2(g, axes=(-2, -1)) / (n * n)
        F[..., direct] = half[..., k[direct, 0] % n, k[direct, 1]]
        F[..., ~direct] = np.conj(half[..., kn[:, 0] % n, kn[:, 1]])
        out = np.where(self.kind > 0, F.real, F.imag) * math.sqrt(2.0 * V)
        return np.where(self.kind == 0, F.real * math.sqrt(V), out)


def enumerate_modes(geometry: TorusGeometry, cutoff: float,
                    max_modes: int = MAX_MODES) -> SpectralBasis:
    """All modes with ``lambda <= cutoff``, sorted by eigenvalue then ``(k1, k2)``."""
    if not cutoff >= 0:
        raise ValueError("cutoff must be non-negative")
    kmax = int(math.floor(cutoff / geometry.wavenumber + 1e-12))
    if math.pi * (kmax + 1) ** 2 > 2 * max_modes:
        raise ResourceError(f"cutoff {cutoff} gives about {math.pi * kmax**2:.3g} modes "
                            f"(cap {max_modes})")
    r = np.arange(-kmax, kmax + 1)
    K1, K2 = np.meshgrid(r, r, indexing="ij")
    K1, K2 = K1.ravel(), K2.ravel()
    sq = K1**2 + K2**2
    # integer comparison avoids spurious float ties at the boundary
    limit = (cutoff / geometry.wavenumber) ** 2
    keep = sq <= math.floor(limit + 1e-9)
    K1, K2, sq = K1[keep], K2[keep], sq[keep]
    if len(sq) > max_modes:
        raise ResourceError(f"{len(sq)} modes exceed the cap of {max_modes}")
    order = np.lexsort((K2, K1, sq))
    return SpectralBasis(geometry, cutoff, np.stack([K1[order], K2[order]], axis=1))


def weyl_ratio(basis: SpectralBasis) -> float:
    """``n / lambda_n^2`` at the last enumerated mode; tends to ``area / 4 pi``."""
    if basis.dim < 2:
        raise ValueError("need at least two modes")
    n = basis.dim - 1
    return n / basis.eigenvalues[n]


# -- fields --------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """Real field given by its coefficients in ``basis`` (leading batch axes allowed)."""

    basis: SpectralBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape[-1] != self.basis.dim:
            raise ValueError(f"expected {self.basis.dim} coefficients, got {c.shape[-1]}")
        object.__setattr__(self, "coeffs", c)

    def l2_norm(self):
        return np.sqrt(np.sum(self.coeffs**2, axis=-1))

    @property
    def mean(self):
        """Spatial average ``(1/V) int u dV``."""
        return self.coeffs[..., 0] / math.sqrt(self.basis.geometry.area)

    def to_grid(self, n: int | None = None) -> "GridField":
        return GridField(self.basis.geometry, self.basis.to_grid(self.coeffs, n))

    def at(self, points):
        return self.basis.evaluate(self.coeffs, points)

    def __add__(self, other):
        if not isinstance(other, ScalarField) or other.basis is not self.basis:
            return NotImplemented
        return ScalarField(self.basis, self.coeffs + other.coeffs)

    def scaled(self, factor) -> "ScalarField":
        return ScalarField(self.basis, self.coeffs * factor)

    @classmethod
    def zeros(cls, basis, batch=()):
        return cls(basis, np.zeros(tuple(batch) + (basis.dim,)))


@dataclass(frozen=True)
class GridField:
    """Samples on the uniform ``n x n`` grid."""

    geometry: TorusGeometry
    samples: np.ndarray

    @property
    def resolution(self) -> int:
        return self.samples.shape[-1]

    def integral(self):
        """Trapezoid rule, i.e. mean times area."""
        return np.mean(self.samples, axis=(-2, -1)) * self.geometry.area

    def to_field(self, basis: SpectralBasis) -> ScalarField:
        return ScalarField(basis, basis.from_grid(self.samples))


# -- semigroups ------------------------------------------------------------------

def heat_multiplier(basis: SpectralBasis, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"heat time must be non-negative, got {t}")
    return np.exp(-t * basis.eigenvalues / (4.0 * math.pi))


def heat_semigroup(field: ScalarField, t: float) -> ScalarField:
    """``exp(t Laplacian / 4 pi)`` applied mode-wise."""
    return ScalarField(field.basis, field.coeffs * heat_multiplier(field.basis, t))


def smooth_PN(field: ScalarField, N: float, smoothing: Smoothing = HEAT) -> ScalarField:
    """``P_N`` (heat at time ``4 pi / N^2`` for the default smoothing)."""
    return ScalarField(field.basis, field.coeffs * smoothing.multiplier(field.basis.eigenvalues, N))


# -- Green's function ----------------------------------------------------------

def check_resolution(basis: SpectralBasis, N: float) -> None:
    if not N > 0:
        raise ValueError(f"smoothing scale N must be positive, got {N}")
    if basis.cutoff < RESOLUTION_RATIO * N:
        raise UnderResolvedError(
            f"basis cutoff {basis.cutoff:g} < {RESOLUTION_RATIO:g} * N = {RESOLUTION_RATIO * N:g}; "
            "the regularized Green's function would be truncated")


def green_weights(basis: SpectralBasis, N: float, smoothing: Smoothing = HEAT,
                  sides: int = 2) -> np.ndarray:
    """Mode weights ``psi^sides / lambda^2`` (zero on the constant mode)."""
    m = smoothing.multiplier(basis.eigenvalues, N) ** sides
    w = np.zeros(basis.dim)
    w[1:] = m[1:] / basis.eigenvalues[1:]
    return w


def green_regularized(basis: SpectralBasis, N: float, x, y,
                      smoothing: Smoothing = HEAT) -> np.ndarray:
    """``(P_N x P_N) G(x, y)`` by truncated spectral summation.

    ``x`` and ``y`` broadcast against each other as arrays of points.
    """
    check_resolution(basis, N)
    w = green_weights(basis, N, smoothing)
    return np.sum(basis.values(x) * w * basis.values(y), axis=-1)


def green_field(basis: SpectralBasis, N: float, source, smoothing: Smoothing = HEAT,
                sides: int = 2) -> ScalarField:
    """Coefficients of ``y -> (P_N x P_N) G(source, y)`` (``sides=1``: one-sided)."""
    check_resolution(basis, N)
    return ScalarField(basis, green_weights(basis, N, smoothing, sides) * basis.values(source))


def green_log_comparison(basis: SpectralBasis, x, y):
    """Split the Green's function near the diagonal into log and regular parts.

    The Green's function is evaluated at ``N = cutoff / 6``. Returns
    ``(green_value, log_part, remainder)`` with
    ``log_part = -(1/2 pi) log d(x, y)``.
    """
    d = basis.geometry.distance(x, y)
    if np.any(d == 0):
        raise ValueError("green_log_comparison needs x != y")
    N = basis.cutoff / RESOLUTION_RATIO
    g = green_regularized(basis, N, x, y)
    log_part = -np.log(d) / TWO_PI
    return g, log_part, g - log_part


def sigma_N(basis: SpectralBasis, N: float, smoothing: Smoothing = HEAT) -> float:
    """Wick variance ``E |P_N X(x)|^2 = 2 pi (P_N x P_N) G(x, x)`` (x-independent)."""
    p1 = np.zeros(2)
    p2 = np.array([0.3171, 0.5813]) * basis.geometry.side_length
    s1 = TWO_PI * float(green_regularized(basis, N, p1, p1, smoothing))
    s2 = TWO_PI * float(green_regularized(basis, N, p2, p2, smoothing))
    if abs(s1 - s2) > 1e-9 * max(1.0, abs(s1)):
        raise AssertionError(f"sigma_N not translation invariant: {s1} vs {s2}")
    return s1
