"""Relaxation oscillations in planar slow-fast systems from chi/lambda characteristics."""
from .analysis import CandidateSet, CycleCandidate, find_candidates, scan_chi
from .characteristics import characteristic_values, chi_endpoint, chi_line_integral
from .heteroclinic import (AlphaParameterization, HeteroclinicError, HeteroclinicOrbit,
                           OrbitSettings, compute_heteroclinic)
from .integrator import IntegrationError, OrbitPath, integrate
from .model import GridSpec, SlowFastModel, StructureFlags, validate_model
from .verification import PlanarSystem, find_periodic_orbit

__version__ = "0.1.0"

__all__ = [
    "AlphaParameterization", "CandidateSet", "CycleCandidate", "GridSpec", "HeteroclinicError",
    "HeteroclinicOrbit", "IntegrationError", "OrbitPath", "OrbitSettings", "PlanarSystem",
    "SlowFastModel", "StructureFlags", "characteristic_values", "chi_endpoint",
    "chi_line_integral", "compute_heteroclinic", "find_candidates", "find_periodic_orbit",
    "integrate", "scan_chi", "validate_model", "__version__",
]
