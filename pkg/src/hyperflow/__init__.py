"""Spectral experiments on flow-map continuity for quasilinear symmetric hyperbolic systems."""

from .spectral import Grid, RealField, SpectralField, SupportError
from .norms import NormSpec, hs_norm, weighted_norm
from .solver import SystemModel, Trajectory, solve
from .experiments import ExperimentConfig, RunRecord, default_config, load_config, run_flowmap

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "RealField",
    "SpectralField",
    "SupportError",
    "NormSpec",
    "hs_norm",
    "weighted_norm",
    "SystemModel",
    "Trajectory",
    "solve",
    "ExperimentConfig",
    "RunRecord",
    "default_config",
    "load_config",
    "run_flowmap",
]
