"""Simulation and numerical checks for the asymmetric trap model on the
complete graph: landscapes, clock processes, limit objects and diagnostics."""

from . import dynamics, limits, randscape, rng, verify
from .dynamics import ChainModel, ClockPath, CorrelationEstimate, build_chain, correlation_fn
from .limits import LevyTail, LimitPath, asl_cdf
from .randscape import Landscape, PRMPoints, ScaleSpec, TailSpec, sample_landscape, space_scale

__version__ = "0.1.0"

__all__ = [
    "dynamics", "limits", "randscape", "rng", "verify",
    "ChainModel", "ClockPath", "CorrelationEstimate", "build_chain", "correlation_fn",
    "LevyTail", "LimitPath", "asl_cdf",
    "Landscape", "PRMPoints", "ScaleSpec", "TailSpec", "sample_landscape", "space_scale",
]
