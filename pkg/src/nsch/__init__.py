"""Pseudo-spectral compressible Navier-Stokes/Cahn-Hilliard simulator on the periodic torus."""

from .diagnostics import EnergyReport, energy, norm_suite
from .errors import BlowUpError, CheckpointError, ConfigError, NonFiniteError
from .initial_data import PerturbationSpec, make_initial, make_large_data
from .model import ModelParams, State
from .norms import NormSuite
from .spectral import Field, Grid, VectorField, make_grid
from .timestepper import StepConfig, adaptive_dt, step

__all__ = [
    "Grid",
    "make_grid",
    "Field",
    "VectorField",
    "ModelParams",
    "State",
    "StepConfig",
    "step",
    "adaptive_dt",
    "PerturbationSpec",
    "make_initial",
    "make_large_data",
    "EnergyReport",
    "energy",
    "norm_suite",
    "NormSuite",
    "BlowUpError",
    "CheckpointError",
    "ConfigError",
    "NonFiniteError",
]
__version__ = "0.1.0"
