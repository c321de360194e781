"""Laplacian modes on the torus, Weyl counting and the logarithmic Green's function.

Run: python demos/01_spectrum_and_green.py
"""
import math

import numpy as np

from liouville_torus.spectral import (TorusGeometry, enumerate_modes, green_log_comparison,
                                      sigma_N, weyl_ratio)

geo = TorusGeometry()  # side 2 pi, area 4 pi^2

# Modes up to lambda = 60: count / lambda^2 approaches area / (4 pi) = pi.
basis = enumerate_modes(geo, 60)
print(f"{basis.dim} modes, count / cutoff^2 = {weyl_ratio(basis):.5f} (pi = {math.pi:.5f})")
print("first wave vectors:", basis.modes[:5].tolist())

# Near the diagonal the smoothed Green's function looks like -(1/2 pi) log d.
lo, hi = enumerate_modes(geo, 128), enumerate_modes(geo, 256)
print("\n  d     remainder(128)  remainder(256)")
for d in (0.1, 0.3, 1.0):
    y = np.array([d, 0.0])
    r1 = float(green_log_comparison(lo, np.zeros(2), y)[2])
    r2 = float(green_log_comparison(hi, np.zeros(2), y)[2])
    print(f"  {d:.1f}   {r1:+.4f}         {r2:+.4f}")

# The diagonal variance grows by log 2 each time N doubles.
big = enumerate_modes(geo, 12 * 32)
for N in (8, 16, 32):
    print(f"sigma_{2 * N} - sigma_{N} = {sigma_N(big, 2 * N) - sigma_N(big, N):.4f}"
          f"  (log 2 = {math.log(2):.4f})")
