"""Exact and numerical fluctuation theory for random walks conditioned to stay positive."""

from .walk_core import (
    LatticePMF,
    StepLaw,
    lazy_walk,
    make_lattice_step,
    norming_a,
    simple_walk,
    skewed_walk,
    truncated_variance,
)

__version__ = "0.1.0"

__all__ = [
    "LatticePMF",
    "StepLaw",
    "lazy_walk",
    "make_lattice_step",
    "norming_a",
    "simple_walk",
    "skewed_walk",
    "truncated_variance",
]
