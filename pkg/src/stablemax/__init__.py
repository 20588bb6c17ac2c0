"""Maxima of stationary symmetric alpha-stable processes.

Exact and Monte Carlo tabulation of the maxima normalizer ``b_n``, series
and direct path samplers, limit-law tests for normalized maxima, and a
command-line experiment runner.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .stable_core import FrechetLaw, RandomStream, StabilityIndex, c_alpha, d_alpha
from .representations import (
    make_dyadic,
    make_mixed_ma,
    make_product_shift,
    make_renewal_shift,
    representation_from_dict,
)

__all__ = [
    "FrechetLaw",
    "RandomStream",
    "StabilityIndex",
    "c_alpha",
    "d_alpha",
    "make_dyadic",
    "make_mixed_ma",
    "make_product_shift",
    "make_renewal_shift",
    "representation_from_dict",
    "__version__",
]
