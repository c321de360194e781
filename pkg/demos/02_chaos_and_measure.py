"""Sampling the chaos density Theta_N and the Liouville measure with one puncture.

Run: python demos/02_chaos_and_measure.py
"""
import math

import numpy as np

from liouville_torus.gmc import (GmcParams, PunctureSet, mean_oracle, sample_mass,
                                 sample_theta_at)
from liouville_torus.lqg import (LqgParams, check_bounds, expectation_under_rho,
                                 zero_mode_gamma_check)
from liouville_torus.rng import RngStream
from liouville_torus.spectral import TorusGeometry, enumerate_modes
from liouville_torus.stats import mean_estimate

geo = TorusGeometry()
N = 8
basis = enumerate_modes(geo, 6 * N)  # the resolution rule asks for cutoff >= 6 N
gmc = GmcParams(1.0, N)

# With exact Wick normalization the total mass has mean equal to the area.
mass = sample_mass(basis, gmc, PunctureSet(), 2000, RngStream(0))
est = mean_estimate(mass)
print(f"E[mass] = {est.value:.2f} +- {est.std_error:.2f}   (area {geo.area:.2f})")

# A puncture of charge 0.5 at (1, 2) raises Theta near it; compare with the exact mean.
punct = PunctureSet.of(((1.0, 2.0), 0.5))
pts = np.array([[1.1, 2.0], [4.0, 4.0]])
samples = sample_theta_at(basis, gmc, punct, pts, 20_000, RngStream(1))
for k, oracle in enumerate(mean_oracle(basis, gmc, punct, pts)):
    e = mean_estimate(samples[:, k])
    print(f"Theta at {pts[k]}: {e.value:.3f} +- {e.std_error:.3f}  exact {oracle:.3f}")

# Admissibility on the torus needs at least one puncture.
params = LqgParams(1.0, 1.0, PunctureSet.of(((math.pi, math.pi), 1.0)), N)
print("\nbounds:", check_bounds(params).as_dict())

# The zero mode integrates to a Gamma function.
num, ana = zero_mode_gamma_check(params, 3.0)
print(f"zero-mode integral {num:.10f} vs Gamma formula {ana:.10f}")

# Expectations under the measure: the mean field.
res = expectation_under_rho(basis, params, lambda s: s.field.mean + s.zero_mode, 1000,
                            RngStream(2))
print(f"E[mean field] = {res.value:.3f} +- {res.std_error:.3f} (ESS {res.ess:.0f})")
