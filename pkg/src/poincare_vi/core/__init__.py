"""Numeric scaffolding: jets, small linear solves, Newton iteration, system contract."""

from .jet import Jet, coefficient, jet_lift
from .linalg import SingularMatrixError, gauss_solve, solve_linear
from .newton import NewtonConfig, NewtonError, NewtonResult, fd_jacobian, newton_iterate, newton_iterate_fused, newton_solve
from .system import HamiltonianSystem, PhaseState, SeparableSystem, phase_state

__all__ = [
    "HamiltonianSystem",
    "Jet",
    "NewtonConfig",
    "NewtonError",
    "NewtonResult",
    "PhaseState",
    "SeparableSystem",
    "SingularMatrixError",
    "coefficient",
    "fd_jacobian",
    "gauss_solve",
    "jet_lift",
    "newton_iterate",
    "newton_iterate_fused",
    "newton_solve",
    "phase_state",
    "solve_linear",
]
