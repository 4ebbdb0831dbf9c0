"""Discrete mass-spring lattices, their piecewise linear extensions and
effective energy densities."""

__version__ = "0.1.0"

from .catalog import get_decomposition, get_lattice, list_catalog
from .energy import EnergyAssembly, EnergyBreakdown, PenaltyFunction, cell_energy, domain_energy
from .lattice import (
    Box,
    CellSet,
    ConvexPolygon,
    LatticeError,
    LatticeSpec,
    NodeRef,
    build_lattice,
    cells_in_domain,
    compute_reach,
    load_lattice,
)
from .linearize import Deformation, linearize, sample_at_nodes

__all__ = [
    "__version__",
    "Box",
    "CellSet",
    "ConvexPolygon",
    "Deformation",
    "EnergyAssembly",
    "EnergyBreakdown",
    "LatticeError",
    "LatticeSpec",
    "NodeRef",
    "PenaltyFunction",
    "build_lattice",
    "cell_energy",
    "cells_in_domain",
    "compute_reach",
    "domain_energy",
    "get_decomposition",
    "get_lattice",
    "linearize",
    "list_catalog",
    "load_lattice",
    "sample_at_nodes",
]
