"""Gaussian free field, mode-wise Ornstein-Uhlenbeck evolution and covariance oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import as_generator
from .spectral import HEAT, TWO_PI, ScalarField, Smoothing, SpectralBasis, check_resolution


def gff_std(basis: SpectralBasis) -> np.ndarray:
    """Per-mode standard deviation ``sqrt(2 pi) / lambda_n``; zero on the constant."""
    s = np.zeros(basis.dim)
    s[1:] = math.sqrt(TWO_PI) / np.sqrt(basis.eigenvalues[1:])
    return s


@dataclass(frozen=True)
class GffSample:
    field: ScalarField


def sample_gff(basis: SpectralBasis, rng, size=None) -> GffSample:
    """Draw the mass-less GFF: ``sum_n sqrt(2 pi) h_n / lambda_n phi_n``.

    ``size`` adds leading batch axes.
    """
    if basis.dim < 2:
        raise ValueError("the GFF needs at least one non-constant mode")
    gen = as_generator(rng)
    shape = (() if size is None else tuple(np.atleast_1d(size))) + (basis.dim,)
    h = gen.standard_normal(shape)
    return GffSample(ScalarField(basis, h * gff_std(basis)))


@dataclass(frozen=True)
class OuState:
    """Linear stochastic evolution at ``time``.

    ``zero_mode_bm`` holds the zero-mode Brownian motion ``B_0(t)`` itself;
    the field component never carries a constant mode.
    """

    time: float
    field: ScalarField
    zero_mode_bm: np.ndarray | float = 0.0

    @classmethod
    def from_gff(cls, sample: GffSample, time: float = 0.0) -> "OuState":
        z = np.zeros(sample.field.coeffs.shape[:-1])
        return cls(time, sample.field, z if z.shape else 0.0)


def ou_coefficients(basis: SpectralBasis, dt: float):
    """Exact one-step OU factors ``(decay, noise_std)`` for ``d - Laplacian / 4 pi``."""
    rate = basis.eigenvalues / (4.0 * math.pi)
    decay = np.exp(-rate * dt)
    std = np.zeros(basis.dim)
    std[1:] = np.sqrt(TWO_PI / basis.eigenvalues[1:] * -np.expm1(-2.0 * rate[1:] * dt))
    return decay, std


def ou_step(state: OuState, dt: float, rng=None, noise=None, zero_noise=None) -> OuState:
    """Advance every mode by its exact OU transition over ``dt``.

    ``noise`` (standard normals per mode) and ``zero_noise`` may be supplied
    to drive the step with given increments; otherwise they are drawn from
    ``rng``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    basis = state.field.basis
    c = state.field.coeffs
    if noise is None or zero_noise is None:
        gen = as_generator(rng)
        if noise is None:
            noise = gen.standard_normal(c.shape)
        if zero_noise is None:
            zero_noise = gen.standard_normal(c.shape[:-1]) if c.ndim > 1 else gen.standard_normal()
    decay, std = ou_coefficients(basis, dt)
    new = decay * c + std * noise
    new[..., 0] = 0.0
    bm = state.zero_mode_bm + math.sqrt(dt) * np.asarray(zero_noise)
    return OuState(state.time + dt, ScalarField(basis, new), bm)


def simulate_ou(basis: SpectralBasis, times, rng, size=None):
    """Stationary OU paths started from the GFF, recorded at increasing ``times``.

    Returns an array of shape ``(len(times),) + batch + (dim,)``.
    """
    gen = as_generator(rng)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be non-negative and non-decreasing")
    state = OuState.from_gff(sample_gff(basis, gen, size))
    out = []
    for t in times:
        if t > state.time:
            state = ou_step(state, t - state.time, gen)
        out.append(state.field.coeffs)
    return np.stack(out)


def covariance_oracle(basis: SpectralBasis, N1: float, N2: float, t1: float, t2: float,
                      x1, x2, smoothing: Smoothing = HEAT) -> np.ndarray:
    """``E[P_N1 Psi(t1, x1) P_N2 Psi(t2, x2)]`` as an exact truncated mode sum."""
    if t2 < t1:
        raise ValueError("need t1 <= t2")
    check_resolution(basis, min(N1, N2))
    lam2 = basis.eigenvalues
    w = smoothing.multiplier(lam2, N1) * smoothing.multiplier(lam2, N2)
    w = w * np.exp(-(t2 - t1) * lam2 / (4.0 * math.pi))
    w[1:] *= TWO_PI / lam2[1:]
    w[0] = 0.0
    return np.sum(basis.values(x1) * w * basis.values(x2), axis=-1)

