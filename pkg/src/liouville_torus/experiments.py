"""Experiment runners behind the command line, plus report persistence."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .dynamics import (FlowParams, GalerkinEnergy, invariance_test, mean_field, mode_square,
                       probe_square, self_convergence, theta_mass)
from .gaussian import covariance_oracle, ou_step, OuState, sample_gff
from .gmc import (GmcParams, PunctureSet, mean_oracle, sample_theta_at, second_moment_oracle)
from .lqg import (LqgParams, SeibergViolation, check_bounds, negative_nu_lower_bound,
                  require_admissible, zero_mode_gamma_check)
from .rng import RngStream, chunked
from .spectral import (SMOOTHINGS, ResourceError, TorusGeometry, UnderResolvedError,
                       enumerate_modes, green_log_comparison, sigma_N, weyl_ratio)
from .stats import mean_and_se

EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_SEIBERG = 4

TIMESTAMP_KEY = "timestamp"


@dataclass(frozen=True)
class EstimateRecord:
    name: str
    value: float
    std_error: float
    replicas: int
    config_hash: str
    seed: int
    oracle: float | None = None
    z_score: float | None = None

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("std_error must be non-negative")
        if not self.config_hash:
            raise ValueError("provenance (config hash) is required")


@dataclass
class Report:
    experiment: str
    config: ExperimentConfig
    passed: bool
    results: dict
    estimates: list
    rows: list | None = None
    trajectory: dict | None = None

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "passed": bool(self.passed),
            "config_hash": self.config.hash(),
            "seed": self.config.mc.seed,
            "version": __version__,
            "results": _plain(self.results),
            "estimates": [_plain(asdict(e)) for e in self.estimates],
            TIMESTAMP_KEY: _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }


def _plain(obj):
    """Convert numpy scalars and arrays into JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def canonical_json(report: dict) -> str:
    """Report text with the timestamp removed; equal for equal (config, seed)."""
    return json.dumps({k: v for k, v in report.items() if k != TIMESTAMP_KEY},
                      sort_keys=True, indent=2)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def write_outputs(report: Report, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = report.as_dict()
    formats = {f.strip() for f in report.config.output.formats.split(",")}
    files = []
    if "json" in formats:
        (out / "report.json").write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")
        files.append("report.json")
    if "csv" in formats and report.rows:
        header, rows = report.rows
        write_csv(out / f"{report.experiment}.csv", header, rows)
        files.append(f"{report.experiment}.csv")
    manifest = {"experiment": report.experiment, "config_hash": data["config_hash"],
                "seed": data["seed"], "version": __version__, "files": files,
                "config": report.config.serialize()}
    if report.trajectory is not None:
        traj = report.trajectory
        write_csv(out / "trajectory.csv", ["time", "k1", "k2", "coefficient"], traj.pop("rows"))
        files.append("trajectory.csv")
        manifest["trajectory"] = traj
    (out / "manifest.json").write_text(json.dumps(_plain(manifest), sort_keys=True, indent=2) + "\n")
    return data


def trajectory_rows(basis, times, snapshots):
    rows = []
    for t, c in zip(times, snapshots):
        for (k1, k2), v in zip(basis.modes.tolist(), np.asarray(c).tolist()):
            rows.append((float(t), k1, k2, float(v)))
    return rows


# parameter builders -------------------------------------------------------------------

def _geometry(cfg):
    return TorusGeometry(cfg.geometry.side_length)


def _smoothing(cfg):
    try:
        return SMOOTHINGS[cfg.gmc.smoothing]
    except KeyError:
        raise ConfigError(f"[gmc] smoothing: unknown multiplier {cfg.gmc.smoothing!r}; "
                          f"choose from {sorted(SMOOTHINGS)}") from None


def _punctures(cfg):
    entries = cfg.lqg.punctures
    return PunctureSet.of(*entries) if entries else PunctureSet()


def _gmc(cfg, N=None, allow_large_beta=False):
    return GmcParams(cfg.gmc.beta, cfg.gmc.N if N is None else N, cfg.gmc.normalization,
                     cfg.gmc.C_P, _smoothing(cfg), allow_large_beta)


def _lqg(cfg):
    return LqgParams(cfg.gmc.beta, cfg.lqg.nu, _punctures(cfg), cfg.gmc.N, cfg.lqg.euler_char,
                     _smoothing(cfg))


def _rng(cfg):
    return RngStream(cfg.mc.seed)


def _record(cfg, name, value, se, replicas, oracle=None):
    z = None if oracle is None or se == 0 else (value - oracle) / se
    return EstimateRecord(name, float(value), float(se), int(replicas), cfg.hash(), cfg.mc.seed,
                          None if oracle is None else float(oracle), z)


# experiments ----------------------------------------------------------------------------

def exp_spectrum(cfg, override=False):
    geo = _geometry(cfg)
    basis = enumerate_modes(geo, cfg.geometry.cutoff)
    ratio = weyl_ratio(basis)
    target = geo.area / (4.0 * math.pi)
    rel = ratio / target - 1.0
    lam = np.sqrt(basis.eigenvalues)
    rows = [(float(c), int(np.sum(lam <= c))) for c in np.linspace(cfg.geometry.cutoff / 10,
                                                                  cfg.geometry.cutoff, 10)]
    return Report("spectrum", cfg, abs(rel) <= 0.02,
                  {"dim": basis.dim, "weyl_ratio": ratio, "target": target, "relative_error": rel},
                  [], (["cutoff", "mode_count"], rows))


def exp_green(cfg, override=False):
    geo = _geometry(cfg)
    c = cfg.geometry.cutoff
    lo, hi = enumerate_modes(geo, c), enumerate_modes(geo, 2 * c)
    origin = np.zeros(2)
    rows, worst = [], 0.0
    for d in cfg.probes.distances:
        y = np.array([d, 0.0])
        r1 = float(green_log_comparison(lo, origin, y)[2])
        r2 = float(green_log_comparison(hi, origin, y)[2])
        worst = max(worst, abs(r2 - r1))
        rows.append((d, r1, r2))
    sig = {}
    Ns = sorted(cfg.probes.N_values)
    big = enumerate_modes(geo, 12.0 * max(Ns))
    for N in Ns:
        sig[N] = sigma_N(big, N)
    inc = {f"{N:g}": sig[2 * N] - sig[N] if 2 * N in sig else sigma_N(big, 2 * N) - sig[N]
           for N in Ns}
    inc_ok = all(abs(v - math.log(2)) <= 0.02 for v in inc.values())
    return Report("green", cfg, worst < 0.05 and inc_ok,
                  {"max_remainder_change": worst, "sigma_increments": inc, "log2": math.log(2)},
                  [], (["distance", "remainder_cutoff", "remainder_2cutoff"], rows))


def covariance_probes(geo, times, N_values, count, rng: RngStream):
    """``count`` random probes ``(t1, t2, x1, x2, N)`` with ``t1 <= t2``."""
    gen = rng.generator()
    probes = []
    for _ in range(count):
        i, j = sorted(gen.integers(0, len(times), size=2))
        x1, x2 = gen.uniform(0, geo.side_length, size=(2, 2))
        probes.append((int(i), int(j), x1, x2, float(gen.choice(N_values))))
    return probes


def ou_covariance_samples(basis, times, probes, replicas, rng: RngStream, chunk=1000,
                          smoothing=None):
    """Per-replica products ``P_N Psi(t1, x1) P_N Psi(t2, x2)`` for every probe."""
    times = np.asarray(times, dtype=float)
    vals1 = np.stack([basis.values(p[2]) for p in probes])
    vals2 = np.stack([basis.values(p[3]) for p in probes])
    smoothing = SMOOTHINGS["heat"] if smoothing is None else smoothing
    mult = np.stack([smoothing.multiplier(basis.eigenvalues, p[4]) for p in probes])

    def draw(gen, size):
        state = OuState.from_gff(sample_gff(basis, gen, size))
        snaps = []
        for t in times:
            if t > state.time:
                state = ou_step(state, t - state.time, gen)
            snaps.append(state.field.coeffs)
        out = np.empty((size, len(probes)))
        for k, (i, j, _, _, _) in enumerate(probes):
            a = snaps[i] @ (vals1[k] * mult[k])
            b = snaps[j] @ (vals2[k] * mult[k])
            out[:, k] = a * b
        return out

    return chunked(draw, replicas, rng, chunk=chunk)


def exp_gff_cov(cfg, override=False):
    geo = _geometry(cfg)
    Ns = cfg.probes.N_values
    basis = enumerate_modes(geo, max(cfg.geometry.cutoff, 6.0 * max(Ns)))
    rng = _rng(cfg)
    probes = covariance_probes(geo, cfg.probes.times, Ns, cfg.probes.count, rng.child(0))
    sm = _smoothing(cfg)
    samples = ou_covariance_samples(basis, cfg.probes.times, probes, cfg.mc.replicas, rng.child(1),
                                    smoothing=sm)
    mean, se = mean_and_se(samples)
    records, rows = [], []
    for k, (i, j, x1, x2, N) in enumerate(probes):
        t1, t2 = cfg.probes.times[i], cfg.probes.times[j]
        oracle = float(covariance_oracle(basis, N, N, t1, t2, x1, x2, sm))
        rec = _record(cfg, f"cov[{k}]", mean[k], se[k], cfg.mc.replicas, oracle)
        records.append(rec)
        rows.append((k, t1, t2, x1[0], x1[1], x2[0], x2[1], N, rec.value, rec.std_error, oracle,
                     rec.z_score))
    passed = all(abs(r.z_score) < 3 for r in records)
    return Report("gff-cov", cfg, passed, {"max_abs_z": max(abs(r.z_score) for r in records),
                                           "basis_dim": basis.dim}, records,
                  (["probe", "t1", "t2", "x1", "y1", "x2", "y2", "N", "estimate", "se", "oracle", "z"],
                   rows))


def exp_gmc_moments(cfg, override=False):
    geo = _geometry(cfg)
    gmc = _gmc(cfg, allow_large_beta=override)
    basis = enumerate_modes(geo, max(cfg.geometry.cutoff, 6.0 * gmc.N))
    punct = _punctures(cfg)
    pts = np.asarray(cfg.probes.points, dtype=float)
    if len(pts) < 2:
        raise ConfigError("[probes] points: gmc-moments needs at least two points")
    samples = sample_theta_at(basis, gmc, punct, pts, cfg.mc.replicas, _rng(cfg))
    records = []
    m, se = mean_and_se(samples)
    oracle = mean_oracle(basis, gmc, punct, pts)
    for k in range(len(pts)):
        records.append(_record(cfg, f"mean[{k}]", m[k], se[k], cfg.mc.replicas, oracle[k]))
    prod = samples[:, 0] * samples[:, 1]
    m2, se2 = mean_and_se(prod)
    o2 = float(second_moment_oracle(basis, gmc, punct, pts[0], pts[1]))
    records.append(_record(cfg, "second_moment[0,1]", m2, se2, cfg.mc.replicas, o2))
    passed = all(abs(r.z_score) < 3 for r in records)
    rows = [(r.name, r.value, r.std_error, r.oracle, r.z_score) for r in records]
    return Report("gmc-moments", cfg, passed, {"basis_dim": basis.dim}, records,
                  (["quantity", "estimate", "se", "oracle", "z"], rows))


def exp_partition(cfg, override=False):
    params = _lqg(cfg)
    report = require_admissible(params, override)
    gen = _rng(cfg).generator()
    masses = np.exp(gen.uniform(-2.0, 2.0, size=10))
    rows, worst = [], 0.0
    for y in masses:
        num, ana = zero_mode_gamma_check(params, float(y))
        rel = abs(num / ana - 1.0)
        worst = max(worst, rel)
        rows.append((float(y), num, ana, rel))
    return Report("partition", cfg, worst < 1e-8,
                  {"seiberg": report.as_dict(), "gamma_shape": params.gamma_shape,
                   "max_relative_error": worst}, [],
                  (["mass", "quadrature", "gamma_formula", "relative_error"], rows))


def exp_simulate(cfg, override=False):
    params = _lqg(cfg)
    require_admissible(params, override)
    geo = _geometry(cfg)
    N = cfg.gmc.N
    basis = enumerate_modes(geo, max(cfg.dynamics.galerkin_cutoff, 6.0 * N))
    flow = FlowParams(cfg.gmc.beta, cfg.lqg.nu, N, params.punctures, _smoothing(cfg))
    coarse, fine, rel = self_convergence(basis, flow, cfg.dynamics.T, cfg.dynamics.dt, _rng(cfg),
                                         cfg.dynamics.zbar)
    every = max(1, cfg.dynamics.record_every)
    idx = list(range(0, len(coarse.times), every))
    if idx[-1] != len(coarse.times) - 1:
        idx.append(len(coarse.times) - 1)
    times = [coarse.times[i] for i in idx]
    snaps = [coarse.snapshots[i] for i in idx]
    max_bv = max(max(coarse.diagnostics["max_beta_v"]), max(fine.diagnostics["max_beta_v"]))
    guard = coarse.diagnostics["guard_count"] + fine.diagnostics["guard_count"]
    passed = rel < 0.05 and max_bv <= 1e-12 and guard == 0
    traj = {"rows": trajectory_rows(basis, times, snaps), "dt": cfg.dynamics.dt,
            "T": cfg.dynamics.T, "seed": cfg.mc.seed, "snapshot_times": times,
            "params": {"beta": cfg.gmc.beta, "nu": cfg.lqg.nu, "N": N,
                       "punctures": [[list(p), a] for p, a in cfg.lqg.punctures],
                       "basis_cutoff": basis.cutoff, "basis_dim": basis.dim}}
    rep = Report("simulate", cfg, passed,
                 {"relative_l2_difference": rel, "max_beta_v": max_bv, "guard_count": guard,
                  "terminal_l2": float(np.linalg.norm(coarse.terminal))}, [],
                 (["time", "max_beta_v", "theta_mass"],
                  list(zip(coarse.times[1:], coarse.diagnostics["max_beta_v"][1:],
                           coarse.diagnostics["theta_mass"]))))
    rep.trajectory = traj
    return rep


def exp_invariance(cfg, override=False):
    params = _lqg(cfg)
    geo = _geometry(cfg)
    basis = enumerate_modes(geo, cfg.dynamics.galerkin_cutoff)
    punct = params.punctures
    energy = GalerkinEnergy(basis, cfg.gmc.beta, cfg.lqg.nu, cfg.gmc.N, punct, _smoothing(cfg),
                            cfg.gmc.C_P if cfg.gmc.normalization == "logN_CP" else None)
    rng = _rng(cfg)
    if cfg.lqg.nu == 0 and len(punct) == 0:
        obs = {f"U{n}^2": mode_square(n) for n in range(1, min(basis.dim, 6))}
        gen = rng.child(0).generator()
        initial = energy.gaussian_draw(gen, cfg.mc.replicas)
        records, info = invariance_test(energy, obs, cfg.dynamics.T, cfg.dynamics.dt,
                                        cfg.mc.replicas, rng, initial=initial)
    else:
        require_admissible(params, override)
        if not cfg.lqg.nu > 0:
            raise ConfigError("[lqg] nu: the invariance test needs nu > 0 (or nu = 0 without punctures)")
        obs = {"mean_field": mean_field(energy),
               "probe_variance": probe_square(energy, cfg.probes.points[0]),
               "theta_mass": theta_mass(energy)}
        records, info = invariance_test(energy, obs, cfg.dynamics.T, cfg.dynamics.dt,
                                        cfg.mc.replicas, rng,
                                        equilibration_steps=cfg.dynamics.equilibration_steps)
    rows = [(r.observable, r.mean_t0, r.mean_T, r.se, r.z_score, r.dt_bias_band, r.passed)
            for r in records]
    return Report("invariance", cfg, all(r.passed for r in records),
                  {"observables": [asdict(r) for r in records], "equilibration": info,
                   "dim": basis.dim}, [],
                  (["observable", "mean_t0", "mean_T", "se", "z_score", "dt_bias_band", "passed"],
                   rows))


def exp_blowup(cfg, override=False):
    geo = _geometry(cfg)
    beta, nu = cfg.gmc.beta, cfg.lqg.nu
    if not nu < 0:
        raise ConfigError("[lqg] nu: the blow-up experiment needs nu < 0")
    steps = max(cfg.probes.count, 1)
    values = [negative_nu_lower_bound(beta, nu, float(m), geo) for m in range(0, steps + 1)]
    increasing = all(b > a for a, b in zip(values, values[1:]))
    return Report("blowup", cfg, increasing and max(values) > 1e6,
                  {"strictly_increasing": increasing, "max_lower_bound": max(values),
                   "lower_bounds": values}, [],
                  (["height", "lower_bound"], list(enumerate(values))))


EXPERIMENTS = {
    "spectrum": exp_spectrum,
    "green": exp_green,
    "gff-cov": exp_gff_cov,
    "gmc-moments": exp_gmc_moments,
    "partition": exp_partition,
    "simulate": exp_simulate,
    "invariance": exp_invariance,
    "blowup": exp_blowup,
}


@dataclass
class Outcome:
    exit_code: int
    report: dict | None
    message: str = ""


def run_experiment(cfg: ExperimentConfig, out_dir=None, override_seiberg: bool = False) -> Outcome:
    """Run the experiment named in ``cfg`` and write its outputs.

    Exit codes: 0 pass, 1 failed check, 2 configuration error, 3 resource
    error, 4 refused by the Seiberg gate.
    """
    name = cfg.experiment.name
    if name not in EXPERIMENTS:
        return Outcome(EXIT_CONFIG, None,
                       f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    # an explicit environment setting wins over [mc] threads
    old = os.environ.get("LIOUVILLE_THREADS")
    if old is None:
        os.environ["LIOUVILLE_THREADS"] = str(max(1, cfg.mc.threads))
    try:
        report = EXPERIMENTS[name](cfg, override_seiberg)
    except SeibergViolation as exc:
        return Outcome(EXIT_SEIBERG, None, f"refused: {exc}")
    except (ConfigError, UnderResolvedError) as exc:
        return Outcome(EXIT_CONFIG, None, f"configuration error: {exc}")
    except (ResourceError, MemoryError) as exc:
        return Outcome(EXIT_RESOURCE, None, f"resource error: {exc}")
    except ValueError as exc:
        return Outcome(EXIT_CONFIG, None, f"configuration error: {exc}")
    finally:
        if old is None:
            os.environ.pop("LIOUVILLE_THREADS", None)
        else:
            os.environ["LIOUVILLE_THREADS"] = old
    data = write_outputs(report, out_dir if out_dir is not None else cfg.output.dir)
    return Outcome(EXIT_OK if report.passed else EXIT_ASSERT, data,
                   f"{name}: {'pass' if report.passed else 'FAIL'}")
