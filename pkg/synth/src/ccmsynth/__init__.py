"""Offline SOS synthesis of polynomial contraction metrics.

Produces the metric JSON files consumed by the ccmgeo package; the file
format is the entire interface between the two.
"""
from .sos import contraction_coefficients, interval_sos
from .synthesis import (BoundaryCheck, InfeasibleError, SpecFormatError,
                        SynthesisResult, SynthesisSpec, boundary_solution,
                        case_study_spec, load_spec, synthesize,
                        verify_boundary, write_metric)

__all__ = [
    "BoundaryCheck",
    "InfeasibleError",
    "SpecFormatError",
    "SynthesisResult",
    "SynthesisSpec",
    "boundary_solution",
    "case_study_spec",
    "contraction_coefficients",
    "interval_sos",
    "load_spec",
    "synthesize",
    "verify_boundary",
    "write_metric",
]

__version__ = "0.1.0"
