"""Stochastic Liouville heat flow on the torus.

The solution of the renormalized equation is split as ``u = Psi + z + v``:
``Psi`` is the stationary linear evolution (see :mod:`.gaussian`), ``z`` the
spatially constant drift carried by the zero mode, and ``v`` the remainder,
which solves a parabolic equation with the sign-definite source
``-(nu beta / 2) P_N[exp(beta z + beta P_N v) Theta_N]``.

The finite-dimensional Galerkin dynamics ``dU = -grad E / 2 dt + dB`` and a
MALA sampler for ``exp(-E)`` live here too.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import OuState, ou_coefficients, ou_step, sample_gff
from .gmc import (EXPONENT_LIMIT, ExponentOverflowError, GmcParams, PunctureSet,
                  ThetaField, puncture_field, theta_field, total_mass)
from .rng import RngStream, as_generator
from .spectral import (HEAT, ScalarField, Smoothing, SpectralBasis, TorusGeometry,
                       heat_multiplier, heat_semigroup)
from .stats import mean_and_se

#: Positive values of ``beta P_N v`` below this are treated as round-off.
GUARD_TOL = 1e-12


class ContractViolation(RuntimeError):
    """An input broke a structural precondition (positivity, sign)."""


# -- drift ---------------------------------------------------------------------

@dataclass(frozen=True)
class DriftZ:
    """Constant-in-space drift ``z(t) = Xbar + B_0(t) phi_0 + t sum_l a_l / (2V)``."""

    zbar: float
    geometry: TorusGeometry
    punctures: PunctureSet

    @property
    def rate(self) -> float:
        return self.punctures.total_charge / (2.0 * self.geometry.area)


def drift_z(params: DriftZ, t: float, bm_path=0.0) -> float:
    """Evaluate ``z(t)``.

    ``bm_path`` is either the value ``B_0(t)`` or a pair ``(times, values)``
    sampled on a grid covering ``t`` (linear interpolation in between).
    """
    if isinstance(bm_path, tuple):
        times, values = (np.asarray(a, dtype=float) for a in bm_path)
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError(f"t = {t} outside the Brownian path horizon "
                             f"[{times[0]}, {times[-1]}]")
        b0 = float(np.interp(t, times, values))
    else:
        b0 = bm_path
    return params.zbar + b0 / math.sqrt(params.geometry.area) + t * params.rate


# -- remainder equation -----------------------------------------------------------

@dataclass(frozen=True)
class FlowParams:
    beta: float
    nu: float
    N: float
    punctures: PunctureSet = field(default_factory=PunctureSet)
    smoothing: Smoothing = HEAT

    def gmc(self) -> GmcParams:
        return GmcParams(self.beta, self.N, smoothing=self.smoothing)


@dataclass(frozen=True)
class RemainderState:
    time: float
    v: ScalarField


@dataclass
class GuardCounter:
    """Counts grid points where the bounded extension of ``exp`` was needed."""

    count: int = 0
    max_beta_v: float = -math.inf


def sign_definite_exp(x, counter: GuardCounter | None = None):
    """``exp(x)`` for ``x <= 0`` and the bounded extension ``1 + x exp(-x^2)`` above."""
    pos = x > GUARD_TOL
    if counter is not None:
        counter.count += int(np.count_nonzero(pos))
    if not np.any(pos):
        return np.exp(np.minimum(x, GUARD_TOL))
    return np.where(pos, 1.0 + x * np.exp(-np.square(x)), np.exp(np.minimum(x, GUARD_TOL)))


def duhamel_factor(basis: SpectralBasis, dt: float) -> np.ndarray:
    """``int_0^dt exp(-s lambda^2 / 4 pi) ds`` per mode."""
    lam2 = basis.eigenvalues
    out = np.full(basis.dim, float(dt))
    out[1:] = -np.expm1(-dt * lam2[1:] / (4.0 * math.pi)) * 4.0 * math.pi / lam2[1:]
    return out


def nonlinear_source(v: ScalarField, theta: ThetaField, z_value, params: FlowParams,
                     counter: GuardCounter | None = None, check_sign: bool = True) -> np.ndarray:
    """Coefficients of ``P_N[exp(beta z) N(beta P_N v) Theta_N]``."""
    basis = v.basis
    samples = theta.grid.samples
    if not np.all(samples > 0):
        raise ContractViolation("Theta must be strictly positive on the grid")
    n = samples.shape[-1]
    m = params.smoothing.multiplier(basis.eigenvalues, params.N)
    bv = params.beta * basis.to_grid(v.coeffs, n)
    if check_sign:
        top = float(np.max(bv)) if bv.size else -math.inf
        if top > GUARD_TOL:
            raise ContractViolation(f"beta * v = {top:.3g} > 0 entering the step")
    x = params.beta * basis.to_grid(v.coeffs * m, n)
    if counter is not None and x.size:
        counter.max_beta_v = max(counter.max_beta_v, float(np.max(bv)))
    bz = params.beta * np.asarray(z_value, dtype=float)[..., None, None]
    if np.max(bz) > EXPONENT_LIMIT:
        raise ExponentOverflowError(f"beta z = {np.max(bz):.4g} exceeds {EXPONENT_LIMIT}")
    f = np.exp(bz) * sign_definite_exp(x, counter) * samples
    return basis.from_grid(f) * m


def v_step(state: RemainderState, theta: ThetaField, z_value, dt: float, params: FlowParams,
           counter: GuardCounter | None = None) -> RemainderState:
    """One exponential-Euler step of the remainder equation (nonlinearity frozen at the left end)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = state.v
    src = nonlinear_source(v, theta, z_value, params, counter)
    new = heat_semigroup(v, dt).coeffs - 0.5 * params.nu * params.beta * duhamel_factor(v.basis, dt) * src
    return RemainderState(state.time + dt, ScalarField(v.basis, new))


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def record(self, t, coeffs, **diag):
        if self.times and not t > self.times[-1]:
            raise ValueError("trajectory times must increase strictly")
        self.times.append(float(t))
        self.snapshots.append(np.array(coeffs, copy=True))
        for k, val in diag.items():
            self.diagnostics.setdefault(k, []).append(val)

    @property
    def terminal(self):
        return self.snapshots[-1]


def solve_remainder(basis: SpectralBasis, theta_path, z_path, T: float, dt: float,
                    params: FlowParams, record_every: int = 1, v0=None, t0: float = 0.0) -> Trajectory:
    """Iterate :func:`v_step` from ``v(t0) = v0`` (default zero) up to ``t0 + T``.

    ``theta_path(t)`` returns the :class:`ThetaField` and ``z_path(t)`` the
    drift at the left end of each step.
    """
    steps = int(round(T / dt)) if T > 0 else 0
    if steps and abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be a multiple of dt")
    counter = GuardCounter()
    v = ScalarField.zeros(basis) if v0 is None else ScalarField(basis, np.asarray(v0, dtype=float))
    state = RemainderState(t0, v)
    traj = Trajectory()
    traj.record(t0, state.v.coeffs, max_beta_v=float(np.max(params.beta * basis.to_grid(v.coeffs))))
    for k in range(steps):
        t = t0 + k * dt
        theta = theta_path(t)
        state = v_step(state, theta, z_path(t), dt, params, counter)
        if (k + 1) % record_every == 0 or k + 1 == steps:
            bv = params.beta * basis.to_grid(state.v.coeffs, theta.grid.resolution)
            traj.record(t0 + (k + 1) * dt, state.v.coeffs, max_beta_v=float(np.max(bv)),
                        theta_mass=float(np.mean(total_mass(theta))))
    traj.diagnostics["guard_count"] = counter.count
    traj.diagnostics["max_beta_v_overall"] = counter.max_beta_v
    return traj


class OuPath:
    """Deterministic linear evolution on a fixed fine time grid.

    Step ``k`` uses the stream ``rng.child(1, k)``, so any coarser grid that is a
    multiple of ``dt`` sees exactly the same path.
    """

    def __init__(self, basis: SpectralBasis, dt: float, rng: RngStream, size=None):
        self.basis = basis
        self.dt = float(dt)
        self.rng = rng
        self.size = size
        self.reset()

    def reset(self):
        self.k = 0
        self.state = OuState.from_gff(sample_gff(self.basis, self.rng.child(0), self.size))

    def at(self, t: float) -> OuState:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t = {t} is not on the path grid")
        if k < self.k:
            self.reset()
        while self.k < k:
            gen = self.rng.child(1, self.k).generator()
            self.state = ou_step(self.state, self.dt, gen)
            self.k += 1
        return self.state


@dataclass
class CoupledInputs:
    """``Theta_N`` and ``z`` driven by one :class:`OuPath` (cached at the last time)."""

    path: OuPath
    params: FlowParams
    drift: DriftZ
    n: int | None = None
    _cache: tuple = (None, None)

    def theta(self, t):
        if self._cache[0] != t:
            state = self.path.at(t)
            self._cache = (t, theta_field(state, self.params.gmc(), self.params.punctures, self.n))
        return self._cache[1]

    def z(self, t):
        return drift_z(self.drift, t, self.path.at(t).zero_mode_bm)


def self_convergence(basis: SpectralBasis, params: FlowParams, T: float, dt: float,
                     rng: RngStream, zbar: float = 0.0):
    """Solve with ``dt`` and ``dt/2`` on the same noise path.

    Returns ``(coarse, fine, relative_l2_difference)``.
    """
    drift = DriftZ(zbar, basis.geometry, params.punctures)
    path = OuPath(basis, dt / 2, rng)
    inputs = CoupledInputs(path, params, drift)
    fine = solve_remainder(basis, inputs.theta, inputs.z, T, dt / 2, params)
    path.reset()
    coarse = solve_remainder(basis, inputs.theta, inputs.z, T, dt, params)
    a, b = coarse.terminal, fine.terminal
    return coarse, fine, float(np.linalg.norm(a - b) / np.linalg.norm(b))


# -- assembling the solution ---------------------------------------------------------

def assemble_u(ou: OuState, z: float, v: RemainderState) -> ScalarField:
    """``u = Psi + z + v`` as one field (the constant goes into the zero mode)."""
    if abs(ou.time - v.time) > 1e-12:
        raise ValueError(f"time mismatch: Psi at {ou.time}, v at {v.time}")
    basis = v.v.basis
    if ou.field.basis is not basis:
        raise ValueError("Psi and v must share a basis")
    c = ou.field.coeffs + v.v.coeffs
    c[..., 0] += np.asarray(z) * math.sqrt(basis.geometry.area)
    return ScalarField(basis, c)


def girsanov_shift_back(u: ScalarField, punctures: PunctureSet, N: float,
                        smoothing: Smoothing = HEAT) -> ScalarField:
    """``u + 2 pi sum_l a_l (P_N x Id) G(x_l, .)``."""
    shift = puncture_field(u.basis, N, punctures, smoothing, sides=1)
    return ScalarField(u.basis, u.coeffs + shift.coeffs)


def full_step(u: ScalarField, dt: float, params: FlowParams, noise, zero_noise,
              n: int | None = None) -> ScalarField:
    """One step of the whole equation for ``u``, without splitting.

    Uses the same exponential left-point rule as :func:`v_step` and consumes
    the standard normals of ``ou_step`` (``noise`` per mode, ``zero_noise``
    for ``B_0``), so it can be compared with ``Psi + z + v`` step by step.
    """
    basis = u.basis
    gmc = params.gmc()
    m = params.smoothing.multiplier(basis.eigenvalues, params.N)
    shift = puncture_field(basis, params.N, params.punctures, params.smoothing).coeffs
    expo = params.beta * basis.to_grid(u.coeffs * m + shift, n) + gmc.log_prefactor(basis)
    if np.max(expo) > EXPONENT_LIMIT:
        raise ExponentOverflowError(f"exponent {np.max(expo):.4g} exceeds {EXPONENT_LIMIT}")
    src = basis.from_grid(np.exp(expo)) * m
    _, std = ou_coefficients(basis, dt)
    new = heat_multiplier(basis, dt) * u.coeffs
    new = new - 0.5 * params.nu * params.beta * duhamel_factor(basis, dt) * src + std * noise
    sqrt_v = math.sqrt(basis.geometry.area)
    new[..., 0] += (np.asarray(zero_noise) * math.sqrt(dt)
                    + dt * params.punctures.total_charge / (2.0 * sqrt_v))
    return ScalarField(basis, new)


# -- energy uniqueness -----------------------------------------------------------

def energy_difference_monitor(traj1: Trajectory, traj2: Trajectory, basis: SpectralBasis):
    """``E(t) = |w|^2 / 2 + (1/4 pi) int_0^t |grad w|^2`` for ``w = v1 - v2``.

    The dissipation integral over each step is taken along the heat flow of
    the step's starting difference, i.e. ``(|w_k|^2 - |e^{dt A} w_k|^2) / 2``.
    Returns ``(times, E, half_norm_sq)``.
    """
    t1, t2 = np.asarray(traj1.times), np.asarray(traj2.times)
    if len(t1) != len(t2) or np.any(np.abs(t1 - t2) > 1e-12):
        raise ValueError("trajectories must share their time grid")
    w = np.asarray(traj1.snapshots) - np.asarray(traj2.snapshots)
    half = 0.5 * np.sum(w**2, axis=-1)
    diss = np.zeros(len(t1))
    for k in range(1, len(t1)):
        decay = heat_multiplier(basis, t1[k] - t1[k - 1])
        diss[k] = diss[k - 1] + 0.5 * np.sum(w[k - 1] ** 2 * (1.0 - decay**2))
    return t1, half + diss, half


# -- Galerkin energy and Langevin dynamics ---------------------------------------------

class GalerkinEnergy:
    """Truncated energy ``E_{N,M}`` on the modes with ``lambda <= M``.

    ``E(U) = sum_n (1/4 pi) lambda_n^2 s_n^2 U_n^2
            + nu int exp(c + beta sum_m s_m U_m phi_m) dV
            - sum_l a_l sum_n s_n U_n phi_n(x_l)``

    with ``s_n = exp(-lambda_n^2 / N^2)`` and ``c`` the log-normalization
    (``-beta^2 sigma / 2`` with the Wick variance of the smoothed field on these
    modes, or the ``C_P`` form). Additive constants are dropped.
    ``smoothed_kinetic=False`` removes the ``s_n^2`` from the quadratic term.
    """

    def __init__(self, basis: SpectralBasis, beta: float, nu: float, N: float,
                 punctures: PunctureSet = PunctureSet(), smoothing: Smoothing = HEAT,
                 C_P: float | None = None, smoothed_kinetic: bool = True, n: int | None = None):
        self.basis = basis
        self.beta = float(beta)
        self.nu = float(nu)
        self.N = N
        self.punctures = punctures
        self.n = basis.min_grid() if n is None else int(n)
        lam2 = basis.eigenvalues
        self.s = smoothing.multiplier(lam2, N)
        self.kappa = lam2 / (4.0 * math.pi) * (self.s**2 if smoothed_kinetic else 1.0)
        self.wick_variance = 2.0 * math.pi / basis.geometry.area * float(np.sum(self.s[1:] ** 2 / lam2[1:]))
        if C_P is None:
            self.log_prefactor = -0.5 * self.beta**2 * self.wick_variance
        else:
            self.log_prefactor = -math.pi * self.beta**2 * C_P - 0.5 * self.beta**2 * math.log(N)
        b = np.zeros(basis.dim)
        for x, a in zip(punctures.points, punctures.charges):
            b += a * basis.values(x)
        self.insertion = self.s * b

    @property
    def dim(self):
        return self.basis.dim

    def exponent_grid(self, U):
        """``c + beta P_N u`` on the quadrature grid."""
        return self.log_prefactor + self.beta * self.basis.to_grid(np.asarray(U) * self.s, self.n)

    def mass(self, U):
        """``int exp(c + beta P_N u) dV``."""
        return np.mean(np.exp(self.exponent_grid(U)), axis=(-2, -1)) * self.basis.geometry.area

    def energy(self, U):
        U = np.asarray(U, dtype=float)
        e = np.sum(self.kappa * U**2, axis=-1) - U @ self.insertion
        if self.nu != 0:
            e = e + self.nu * self.mass(U)
        return e

    def gradient(self, U):
        U = np.asarray(U, dtype=float)
        g = 2.0 * self.kappa * U - self.insertion
        if self.nu != 0:
            expo = np.exp(self.exponent_grid(U))
            g = g + self.nu * self.beta * self.s * self.basis.from_grid(expo)
        return g

    def energy_and_gradient(self, U):
        U = np.asarray(U, dtype=float)
        g = 2.0 * self.kappa * U - self.insertion
        e = np.sum(self.kappa * U**2, axis=-1) - U @ self.insertion
        if self.nu != 0:
            expo = np.exp(self.exponent_grid(U))
            e = e + self.nu * np.mean(expo, axis=(-2, -1)) * self.basis.geometry.area
            g = g + self.nu * self.beta * self.s * self.basis.from_grid(expo)
        return e, g

    def sample_zero_mode(self, U, gen):
        """Exact draw of ``U_0`` given the other modes (a Gamma change of variables)."""
        abar = self.punctures.total_charge
        if not (self.nu > 0 and abar > 0):
            raise ValueError("the zero-mode conditional is proper only for nu > 0 and sum a_l > 0")
        U = np.array(U, dtype=float, copy=True)
        phi0 = 1.0 / math.sqrt(self.basis.geometry.area)
        U[..., 0] = 0.0
        I = self.mass(U)
        tau = gen.gamma(abar / self.beta, size=I.shape)
        U[..., 0] = np.log(tau / (self.nu * I)) / (self.beta * phi0)
        return U

    def gaussian_draw(self, gen, size):
        """Draw the non-constant modes from the quadratic-plus-linear part of ``E``."""
        shape = tuple(np.atleast_1d(size)) + (self.dim,)
        U = np.zeros(shape)
        k = self.kappa[1:]
        U[..., 1:] = self.insertion[1:] / (2 * k) + gen.standard_normal(shape[:-1] + (self.dim - 1,)) / np.sqrt(2 * k)
        return U


def galerkin_energy(U, params: GalerkinEnergy):
    return params.energy(U)


def langevin_step(U, potential, dt: float, rng=None, noise=None):
    """Euler-Maruyama step of ``dU = -grad E / 2 dt + dB``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    U = np.asarray(U, dtype=float)
    if noise is None:
        noise = as_generator(rng).standard_normal(U.shape)
    return U - 0.5 * dt * potential.gradient(U) + math.sqrt(dt) * noise


def mala_step(U, potential, dt: float, rng, cache=None):
    """Metropolis-adjusted Langevin step targeting ``exp(-E)``.

    Returns ``(U_new, accepted, cache)`` where ``cache = (E, grad E)`` at
    ``U_new`` can be passed back in to save one evaluation.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    gen = as_generator(rng)
    U = np.asarray(U, dtype=float)
    e0, g0 = potential.energy_and_gradient(U) if cache is None else cache
    xi = gen.standard_normal(U.shape)
    prop = U - 0.5 * dt * g0 + math.sqrt(dt) * xi
    e1, g1 = potential.energy_and_gradient(prop)
    fwd = -np.sum(xi**2, axis=-1) / 2.0
    back = prop - 0.5 * dt * g1 - U
    bwd = -np.sum(back**2, axis=-1) / (2.0 * dt)
    log_alpha = -(e1 - e0) + bwd - fwd
    accept = np.log(gen.uniform(size=np.shape(log_alpha))) < log_alpha
    acc = np.asarray(accept)[..., None]
    U_new = np.where(acc, prop, U)
    e_new = np.where(accept, e1, e0)
    g_new = np.where(acc, g1, g0)
    return U_new, accept, (e_new, g_new)


def mala_chain(U, potential, dt: float, steps: int, rng: RngStream, thin: int = 1):
    """Run ``steps`` MALA steps; returns ``(U_final, acceptance_rate, samples)``."""
    cache = None
    acc = 0.0
    samples = []
    for k in range(steps):
        U, a, cache = mala_step(U, potential, dt, rng.child(k).generator(), cache)
        acc += float(np.mean(a))
        if thin and (k + 1) % thin == 0:
            samples.append(np.array(U, copy=True))
    return U, acc / max(steps, 1), samples


def equilibrate(potential: GalerkinEnergy, replicas: int, rng: RngStream, steps: int = 300,
                dt: float | None = None, target_acceptance: float = 0.6, gibbs_every: int = 10):
    """Draw ``replicas`` states approximately from ``exp(-E)``.

    Starts from the Gaussian part (plus the exact zero-mode conditional when
    available) and corrects with MALA, tuning the step size during the first
    third of the run. Every ``gibbs_every`` steps the zero mode is redrawn
    from its exact conditional, which also leaves ``exp(-E)`` invariant.
    """
    gen = rng.child(0).generator()
    U = potential.gaussian_draw(gen, replicas)
    gibbs = potential.nu > 0 and potential.punctures.total_charge > 0
    if gibbs:
        U = potential.sample_zero_mode(U, gen)
    if dt is None:
        dt = 0.5 / float(np.max(potential.kappa))
    tune = steps // 3
    cache = None
    rates = []
    for k in range(steps):
        U, acc, cache = mala_step(U, potential, dt, rng.child(1, k).generator(), cache)
        rate = float(np.mean(acc))
        rates.append(rate)
        if gibbs and (k + 1) % gibbs_every == 0:
            U = potential.sample_zero_mode(U, rng.child(2, k).generator())
            cache = None
        if k < tune and (k + 1) % 10 == 0:
            recent = float(np.mean(rates[-10:]))
            dt *= math.exp(2.0 * (recent - target_acceptance))
    return U, {"mala_dt": dt, "acceptance": float(np.mean(rates[tune:])) if steps > tune else math.nan}


# observables -----------------------------------------------------------------------

def mode_square(index: int):
    return lambda U: np.asarray(U)[..., index] ** 2


def mode_product(i: int, j: int):
    return lambda U: np.asarray(U)[..., i] * np.asarray(U)[..., j]


def mean_field(potential: GalerkinEnergy):
    phi0 = 1.0 / math.sqrt(potential.basis.geometry.area)
    return lambda U: np.asarray(U)[..., 0] * phi0


def probe_square(potential: GalerkinEnergy, point):
    vals = potential.basis.values(np.asarray(point, dtype=float))
    return lambda U: (np.asarray(U) @ vals) ** 2


def theta_mass(potential: GalerkinEnergy):
    return potential.mass


@dataclass
class InvarianceRecord:
    observable: str
    mean_t0: float
    mean_T: float
    se: float
    z_score: float
    dt_bias_band: float
    passed: bool


def _evolve(U, potential, dt, steps, rng, stride=1):
    """Langevin evolution with noise blocks shared across step sizes.

    Block ``k`` draws ``stride`` unit normals from ``rng.child(k)``; with
    ``stride = 2`` one coarse step of size ``2 dt`` uses their normalized sum,
    so runs with ``dt`` and ``2 dt`` see the same Brownian path.
    """
    for k in range(steps):
        gen = rng.child(k).generator()
        xi = gen.standard_normal((2,) + U.shape)
        if stride == 1:
            U = langevin_step(U, potential, dt, noise=xi[0])
            U = langevin_step(U, potential, dt, noise=xi[1])
        else:
            U = langevin_step(U, potential, 2 * dt, noise=(xi[0] + xi[1]) / math.sqrt(2))
    return U


def invariance_test(potential: GalerkinEnergy, observables: dict, T: float, dt: float,
                    replicas: int, rng: RngStream, initial=None, equilibration_steps: int = 300,
                    bias_check: bool = True, n_se: float = 3.0):
    """Check that Langevin dynamics leaves ``exp(-E)`` invariant.

    Replicas are equilibrated by MALA (or taken from ``initial``), evolved by
    Euler-Maruyama to ``T``, and the observable means at 0 and ``T`` are
    compared. The time-discretization bias is measured by rerunning with
    ``2 dt`` on the same Brownian path; ``|mean(dt) - mean(2 dt)|`` estimates
    the first-order bias at ``dt``.
    """
    info = {}
    if initial is None:
        U0, info = equilibrate(potential, replicas, rng.child(0), equilibration_steps)
    else:
        U0 = np.asarray(initial, dtype=float)
    blocks = int(round(T / (2 * dt)))
    if blocks and abs(2 * dt * blocks - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be a multiple of 2 dt")
    path = rng.child(1)
    UT = _evolve(U0, potential, dt, blocks, path, 1) if blocks else U0
    U2 = _evolve(U0, potential, dt, blocks, path, 2) if (blocks and bias_check) else UT
    records = []
    for name, obs in observables.items():
        a, b, c = obs(U0), obs(UT), obs(U2)
        m0, s0 = mean_and_se(a)
        m1, s1 = mean_and_se(b)
        se = math.hypot(s0, s1)
        band = abs(float(np.mean(c) - np.mean(b)))
        z = 0.0 if m1 == m0 else (m1 - m0) / se if se > 0 else math.inf
        records.append(InvarianceRecord(name, float(m0), float(m1), float(se), float(z), band,
                                        bool(abs(m1 - m0) <= n_se * se + band)))
    return records, info
