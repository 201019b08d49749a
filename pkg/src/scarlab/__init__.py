"""Simulation and optimisation of many-body scars in Rydberg-blockaded 2D lattices."""

__version__ = "0.1.0"

from .basis import ConstrainedBasis, DimensionCapExceeded, enumerate_basis, maximally_excited
from .evolve import TimeSeries, evolve, fidelity_series
from .lattice import LatticeSpec, SiteGraph, build_lattice
from .operators import ModelSpec, build_hamiltonian, split_pm

__all__ = [
    "ConstrainedBasis",
    "DimensionCapExceeded",
    "LatticeSpec",
    "ModelSpec",
    "SiteGraph",
    "TimeSeries",
    "build_hamiltonian",
    "build_lattice",
    "enumerate_basis",
    "evolve",
    "fidelity_series",
    "maximally_excited",
    "split_pm",
]
