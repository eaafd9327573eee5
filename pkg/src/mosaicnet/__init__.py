"""Entropy-guided design and desk-scale training of downsampled isotropic
demosaicing networks, with CFA simulation and a classical baseline."""

from .archmodel import (
    ArchConfig,
    EntropyReport,
    FlopsReport,
    conv_layer_list,
    entropy_at_resolution,
    entropy_invariant,
    flops,
    params,
)
from .search import SearchConstraints, SearchResult, enumerate_feasible, solve, sweep

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "EntropyReport",
    "FlopsReport",
    "SearchConstraints",
    "SearchResult",
    "conv_layer_list",
    "entropy_at_resolution",
    "entropy_invariant",
    "enumerate_feasible",
    "flops",
    "params",
    "solve",
    "sweep",
    "__version__",
]
