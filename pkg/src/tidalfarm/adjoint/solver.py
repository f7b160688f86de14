"""
Discrete adjoint of the shallow-water solve and the density gradient.

Every adjoint system is the transpose of the constrained forward Newton
Jacobian at the stored state of its time level, so the gradient is the exact
derivative of the discrete objective. Transient levels are solved from the
last to the first with a zero final condition; level n couples to level n+1
through the mass matrix of the backward-Euler time derivative.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from tidalfarm.errors import TidalFarmError
from tidalfarm.farm.density import DensityField, density_to_friction
from tidalfarm.farm.functionals import ProfitFunctional
from tidalfarm.shallow_water.models import Trajectory
from tidalfarm.shallow_water.solver import LinearSolverError, ShallowWaterSolver, factorize

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-10


class AdjointSolverError(TidalFarmError):
    code = 'adjoint.solver'

    def __init__(self, message: str, level: int = None):
        super().__init__(message)
        self.level = level


@dataclass(frozen=True, eq=False)
class AdjointState:
    """
    Adjoint velocity (P2, two components) and elevation (P1) at one time
    level, zero on Dirichlet degrees of freedom.
    """
    lam_ux: np.ndarray
    lam_uy: np.ndarray
    lam_eta: np.ndarray
    level: int
    residual: float = 0.0

    @classmethod
    def from_vector(cls, vector: np.ndarray, n2: int, level: int, residual: float = 0.0) -> 'AdjointState':
        return cls(vector[:n2], vector[n2:2 * n2], vector[2 * n2:], level, residual)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.lam_ux, self.lam_uy, self.lam_eta])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.vector)))


@dataclass(frozen=True, eq=False)
class AdjointTrajectory:
    """
    Adjoint states indexed like the forward trajectory. ``solved[n]`` is False
    for a level without a solve (a prescribed initial state).
    """
    states: Tuple[AdjointState, ...]
    solved: Tuple[bool, ...]

    def __len__(self):
        return len(self.states)

    def __getitem__(self, level) -> AdjointState:
        return self.states[level]

    @property
    def max_residual(self) -> float:
        return max((s.residual for s, ok in zip(self.states, self.solved) if ok), default=0.0)


def _solve_transposed(jacobian, rhs: np.ndarray, free: np.ndarray, level: int) -> Tuple[np.ndarray, float]:
    try:
        lu = factorize(jacobian.T, 'adjoint operator')
    except LinearSolverError as e:
        raise AdjointSolverError(f"level {level}: {e}", level)
    rhs = np.where(free, rhs, 0.0)
    lam = lu.solve(rhs)
    if not np.all(np.isfinite(lam)):
        raise AdjointSolverError(f"level {level}: adjoint solution is not finite", level)
    norm = float(np.linalg.norm(rhs))
    residual = float(np.linalg.norm(jacobian.T @ lam - rhs)) / norm if norm > 0 else 0.0
    if residual > RESIDUAL_TOLERANCE:
        logger.warning(f"Adjoint level {level}: relative residual {residual:.2e}")
    return np.where(free, lam, 0.0), residual


def solve_adjoint(solver: ShallowWaterSolver, trajectory: Trajectory, density: DensityField,
                  functional: ProfitFunctional) -> AdjointTrajectory:
    """
    Solve the discrete adjoint equations backward in time.

    Args:
        solver:     The forward solver that produced ``trajectory``.
        trajectory: Complete forward trajectory (all levels in memory).
        density:    The density the trajectory was computed with.
        functional: The objective whose state derivative drives the adjoint.

    Raises:
        AdjointSolverError: singular adjoint system, naming the level.
    """
    spaces = solver.spaces
    n2 = spaces.n2
    friction = density_to_friction(density, functional.spec)
    weights = functional.weights(trajectory)
    count = len(trajectory)
    states = [None] * count
    solved = [False] * count

    if trajectory.is_steady:
        form = solver.form(friction)
        state = trajectory[0]
        _, jacobian = form.assemble(state.vector, None, state.time)
        rhs = weights[0] * functional.state_derivative(state, density)
        lam, residual = _solve_transposed(jacobian, rhs, form.free_mask, 0)
        logger.debug(f"Steady adjoint solved, relative residual {residual:.2e}")
        return AdjointTrajectory((AdjointState.from_vector(lam, n2, 0, residual),), (True,))

    dt = trajectory.dt
    form = solver.form(friction, dt)
    mass = spaces.mixed_mass
    coupling = np.zeros(spaces.size)
    for level in range(count - 1, 0, -1):
        state, previous = trajectory[level], trajectory[level - 1]
        _, jacobian = form.assemble(state.vector, previous.vector, state.time)
        rhs = coupling.copy()
        if weights[level]:
            rhs += weights[level] * functional.state_derivative(state, density)
        lam, residual = _solve_transposed(jacobian, rhs, form.free_mask, level)
        states[level] = AdjointState.from_vector(lam, n2, level, residual)
        solved[level] = True
        coupling = mass @ lam / dt

    initial = trajectory[0]
    if trajectory.initial_is_steady:
        steady_form = solver.form(friction)
        _, jacobian = steady_form.assemble(initial.vector, None, initial.time)
        rhs = coupling + weights[0] * functional.state_derivative(initial, density)
        lam, residual = _solve_transposed(jacobian, rhs, steady_form.free_mask, 0)
        states[0] = AdjointState.from_vector(lam, n2, 0, residual)
        solved[0] = True
    else:
        states[0] = AdjointState.from_vector(np.zeros(spaces.size), n2, 0)
    logger.debug(f"Adjoint solved over {sum(solved)} levels")
    return AdjointTrajectory(tuple(states), tuple(solved))


def gradient(solver: ShallowWaterSolver, trajectory: Trajectory, adjoint: AdjointTrajectory,
             density: DensityField, functional: ProfitFunctional) -> np.ndarray:
    """
    dJ/dd_j = dJ/dd_j (direct) - 0.5 C_T A_T sum_n int L_j |u^n| (u^n . lambda_u^n) / H^n.
    """
    if len(adjoint) != len(trajectory):
        raise AdjointSolverError("adjoint and forward trajectories are not aligned")
    form = solver.form(density_to_friction(density, functional.spec))
    total = functional.density_derivative(trajectory)
    coupling = np.zeros(solver.spaces.n1)
    for state, lam, solved in zip(trajectory, adjoint.states, adjoint.solved):
        if solved:
            coupling += form.friction_adjoint_action(state.vector, lam.vector)
    return total - functional.spec.friction_per_density * coupling
