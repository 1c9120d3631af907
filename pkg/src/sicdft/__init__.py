"""Real-space grid DFT mini-solver with self-interaction-corrected mean fields."""

from .external import (ConfigurationError, Ion, IonicConfiguration,
                       PseudopotentialSpec, dipole_moment, field_potential,
                       ionic_potential)
from .grid import GridSpec, KineticPreconditioner, grid_for_box
from .hartree import PoissonSolver, hartree_potential, poisson_solver
from .orbitals import DegeneracyError, OrbitalSet, SpinOrbital
from .schemes import (MeanFieldContext, SchemeId, SchemeState, apply_hamiltonian,
                      build_potential, localize, orbital_potential, sic_energy,
                      symmetry_residual)
from .scf import (ConvergenceReport, SCFConfig, SCFError, solve_ground_state,
                  subspace_diagonalize)
from .systems import SystemSpec, h2, h4_pair, h_atom, h_chain, na5, na_atom
from .xc import XCFunctionalSpec, xc_potential

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
