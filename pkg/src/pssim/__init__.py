"""Perfect simulation of lattice spin dynamics through a range decomposition of the rates."""

from __future__ import annotations

from ._backend import COMPILED_AVAILABLE
from .assign import perfect_sample, sample_replicas
from .decomposition import KalikowDecomposition
from .diagnostics import bounds_report
from .models import autonormal, gibbs_cont, ising, model_from_config

__version__ = "0.1.0"

__all__ = [
    "COMPILED_AVAILABLE",
    "KalikowDecomposition",
    "autonormal",
    "bounds_report",
    "gibbs_cont",
    "ising",
    "model_from_config",
    "perfect_sample",
    "sample_replicas",
]
