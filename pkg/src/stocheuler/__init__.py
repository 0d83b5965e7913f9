"""Pseudo-spectral simulator and audit harness for 2D stochastic Euler with transport noise."""

__version__ = "0.1.0"

from .biot_savart import BiotSavartOperator, curl2d, stream_function, velocity_from_vorticity
from .errors import BlowUpError, ConfigError, GridMismatchError, SnapshotFormatError, StochEulerError
from .noise import NoiseFamily, advect, ito_correction, make_noise_family, summability
from .solver import BrownianDriver, InitialCondition, NoiseParams, SimConfig, Solver, simulate, viscous_iteration_sequence
from .spectral import Grid, SpectralField, SpectralVectorField, sobolev_norm, to_physical, to_spectral

__all__ = [
    "__version__",
    "Grid",
    "SpectralField",
    "SpectralVectorField",
    "to_spectral",
    "to_physical",
    "sobolev_norm",
    "BiotSavartOperator",
    "velocity_from_vorticity",
    "stream_function",
    "curl2d",
    "NoiseFamily",
    "make_noise_family",
    "summability",
    "advect",
    "ito_correction",
    "SimConfig",
    "NoiseParams",
    "InitialCondition",
    "BrownianDriver",
    "Solver",
    "simulate",
    "viscous_iteration_sequence",
    "StochEulerError",
    "GridMismatchError",
    "BlowUpError",
    "ConfigError",
    "SnapshotFormatError",
]
