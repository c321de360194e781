"""Langevin dynamics for the truncated energy keeps its Gibbs law.

A small version of the invariance check: 2000 replicas, T = 0.5.
Run: python demos/04_langevin_invariance.py   (a couple of minutes)
"""
import math

from liouville_torus.dynamics import (GalerkinEnergy, invariance_test, mean_field,
                                      probe_square, theta_mass)
from liouville_torus.gmc import PunctureSet
from liouville_torus.rng import RngStream
from liouville_torus.spectral import TorusGeometry, enumerate_modes

basis = enumerate_modes(TorusGeometry(), 8)
energy = GalerkinEnergy(basis, beta=1.0, nu=1.0, N=8,
                        punctures=PunctureSet.of(((math.pi, math.pi), 1.0)))
obs = {"mean field": mean_field(energy), "probe variance": probe_square(energy, (1.0, 2.0)),
       "theta mass": theta_mass(energy)}
records, info = invariance_test(energy, obs, T=0.5, dt=1e-3, replicas=2000, rng=RngStream(0),
                                equilibration_steps=150)
print(f"MALA step {info['mala_dt']:.3f}, acceptance {info['acceptance']:.2f}")
for r in records:
    print(f"{r.observable:15s} t=0 {r.mean_t0:9.4f}  t=T {r.mean_T:9.4f}  z {r.z_score:+.2f}"
          f"  dt-bias band {r.dt_bias_band:.1e}  {'ok' if r.passed else 'FAIL'}")
