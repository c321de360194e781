"""Spectral simulation of stochastic quantization of Liouville theory on the flat torus."""

__version__ = "0.1.0"
