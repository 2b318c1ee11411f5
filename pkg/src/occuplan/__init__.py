"""Optimal control of hybrid polynomial systems via graph-structured moment relaxations."""

from .polyalg import Polynomial, koopman_apply, monomial_at, monomial_index, poly_diff, poly_mul
from .moments import MomentVector, SemialgebraicSet, dirac_moments, empirical_moments
from .liouville import LinearMomentConstraint, Mode, horizon_bounds, liouville_rows
from .gmp import Boundary, ConicProgram, GmpSolution, HybridSystem, assemble, solve, solve_hybrid

__version__ = "0.1.0"
