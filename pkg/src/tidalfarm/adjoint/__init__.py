from tidalfarm.adjoint.printed import assemble_printed_adjoint_operator
from tidalfarm.adjoint.solver import (
    AdjointSolverError, AdjointState, AdjointTrajectory, gradient, solve_adjoint,
)
from tidalfarm.adjoint.taylor import TaylorReport, TaylorTestError, taylor_test

__all__ = [
    'AdjointSolverError',
    'AdjointState',
    'AdjointTrajectory',
    'TaylorReport',
    'TaylorTestError',
    'assemble_printed_adjoint_operator',
    'gradient',
    'solve_adjoint',
    'taylor_test',
]
