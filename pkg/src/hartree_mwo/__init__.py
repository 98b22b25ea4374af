"""Spectral simulation of long-range Hartree equations via modified wave operators."""
from .errors import ConfigurationError, DomainError, IntegrationError, NonContractionError, ResolutionError
from .spectral import Field, GridSpec, from_fourier, sobolev_norm, to_fourier
from .operators import HartreeParams, build_phase
from .transforms import fh_norm, free_propagate, pseudoconformal_invert
from .evolution import (
    PicardLog, PipelineResult, SolverConfig, Trajectory, construct_mwo_pipeline, linearized_solve,
    nonlinear_residual, picard_solve,
)
from .estimates import EstimateReport, TestFunctionFamily

__all__ = [
    "ConfigurationError", "DomainError", "IntegrationError", "NonContractionError", "ResolutionError",
    "Field", "GridSpec", "from_fourier", "sobolev_norm", "to_fourier", "HartreeParams", "build_phase",
    "fh_norm", "free_propagate", "pseudoconformal_invert", "PicardLog", "PipelineResult", "SolverConfig",
    "Trajectory", "construct_mwo_pipeline", "linearized_solve", "nonlinear_residual", "picard_solve",
    "EstimateReport", "TestFunctionFamily",
]
__version__ = "0.1.0"
