"""Lattice free boundary problems with facets: Hamiltonians and solvers."""
from .errors import FacetLabError
from .lattice import (DiophantineLattice, LatticeBox, ScalarField, SiteSet, Slope, boundary_sets,
                      diophantine_basis, discrete_laplacian, enumerate_lattice, reduce_slope)

__version__ = "0.1.0"

__all__ = ["DiophantineLattice", "FacetLabError", "LatticeBox", "ScalarField", "SiteSet", "Slope", "boundary_sets",
           "diophantine_basis", "discrete_laplacian", "enumerate_lattice", "reduce_slope"]
