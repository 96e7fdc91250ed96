"""Exact simulation of mean-reverting jump-diffusion spot prices.

Gaussian-OU diffusion superposed with Gamma-OU (compound Poisson, exponential
jumps) factors, plus Monte-Carlo pricing of Asian options, gas storages and
swing options.
"""

import os

# TBB in common distro builds is too old for numba and only produces a warning.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
