"""Numerical laboratory for the bosonic mean-field limit on a periodic lattice."""

__version__ = "0.1.0"

from .lattice import LatticeModel, ShapeSpec, build_lattice, interaction_norms  # noqa: E402
from .fock import OccupationBasis, SymmetricState, basis_dimension, hamiltonian, product_state  # noqa: E402
from .propagate import Propagator, PropagatorConfig, energy, evolve  # noqa: E402
from .rdm import ReducedDensity, k_rdm, one_rdm, trace_distance  # noqa: E402
from .hartree import HartreeOrbital, hartree_energy, hartree_solve  # noqa: E402

__all__ = [
    "LatticeModel", "ShapeSpec", "build_lattice", "interaction_norms",
    "OccupationBasis", "SymmetricState", "basis_dimension", "hamiltonian", "product_state",
    "Propagator", "PropagatorConfig", "energy", "evolve",
    "ReducedDensity", "k_rdm", "one_rdm", "trace_distance",
    "HartreeOrbital", "hartree_energy", "hartree_solve",
]
