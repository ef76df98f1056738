"""Bloch bands, Dirac points and strain-induced Dirac dynamics in honeycomb media."""

from .bloch import BandTable, BlochBandSolver, band_path, compute_bands, make_basis
from .dirac_point import DiracPointData, DiracPointEstimator, analyze_dirac_point, verify_cone
from .dynamics import DiracOperatorSpec, SpinorField, dirac_spectrum, evolve, fidelity
from .exceptions import HoneystrainError
from .lattice import HoneycombLattice, build_lattice
from .media import FourierMedium, make_modulated_medium, make_reference_medium
from .strain import Deformation, magnetic_field, pseudo_fields

__version__ = "0.1.0"

__all__ = [
    "BandTable", "BlochBandSolver", "band_path", "compute_bands", "make_basis",
    "DiracPointData", "DiracPointEstimator", "analyze_dirac_point", "verify_cone",
    "DiracOperatorSpec", "SpinorField", "dirac_spectrum", "evolve", "fidelity",
    "HoneystrainError", "HoneycombLattice", "build_lattice",
    "FourierMedium", "make_modulated_medium", "make_reference_medium",
    "Deformation", "magnetic_field", "pseudo_fields",
]
