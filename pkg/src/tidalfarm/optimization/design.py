"""
Farm design optimization: the reduced profit functional and its driver.

The reduced functional J(d) hides the flow: every new density costs one
forward solve for J and one adjoint solve for its gradient. The driver
hands J to L-BFGS-B on the box 0 <= d <= d_bar.
"""
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Dict, Optional, Tuple

import numpy as np

from tidalfarm.adjoint.solver import gradient as adjoint_gradient
from tidalfarm.adjoint.solver import solve_adjoint
from tidalfarm.adjoint.taylor import TaylorReport, TaylorSettings, TaylorTestError, taylor_test
from tidalfarm.errors import TidalFarmError
from tidalfarm.farm.density import DensityField, UpperBound, density_to_friction
from tidalfarm.farm.functionals import ProfitBreakdown, ProfitFunctional
from tidalfarm.mesh.geometry import Mesh
from tidalfarm.optimization.lbfgsb import OptimizationTrace, OptimizerSettings, lbfgsb_maximize
from tidalfarm.shallow_water.models import Trajectory
from tidalfarm.shallow_water.solver import ShallowWaterSolver
from tidalfarm.shallow_water.spaces import function_spaces

if TYPE_CHECKING:
    from tidalfarm.config.scenario import Scenario, SimulationSettings

logger = logging.getLogger(__name__)


class ReducedFunctional:
    """
    Profit as a function of the nodal densities alone.

    The last forward trajectory and gradient are cached, so asking for J and
    then for its gradient at the same density runs one forward solve, and
    asking twice for the gradient runs one adjoint solve. The counters report
    the solves actually run since the last ``reset``.
    """

    def __init__(self, solver: ShallowWaterSolver, functional: ProfitFunctional, upper: np.ndarray,
                 simulation: 'SimulationSettings' = None):
        self.solver = solver
        self.functional = functional
        self.mesh = solver.mesh
        self.upper = np.asarray(upper, dtype=float)
        self.simulation = simulation
        self.forward_solves = 0
        self.adjoint_solves = 0
        self._cache: Optional[Tuple[bytes, DensityField, Trajectory, ProfitBreakdown]] = None
        self._gradient: Optional[Tuple[bytes, np.ndarray]] = None

    def reset(self):
        """Drop the cached solves and zero the solve counters."""
        self.forward_solves = 0
        self.adjoint_solves = 0
        self._cache = None
        self._gradient = None

    def density(self, values) -> DensityField:
        return DensityField(self.mesh, values, self.upper)

    def forward(self, values) -> Tuple[Trajectory, ProfitBreakdown]:
        values = np.asarray(values, dtype=float)
        key = values.tobytes()
        if self._cache is not None and self._cache[0] == key:
            return self._cache[2], self._cache[3]
        density = self.density(values)
        friction = density_to_friction(density, self.functional.spec)
        simulation = self.simulation
        if simulation is None or simulation.is_steady:
            trajectory = Trajectory((self.solver.steady(friction),))
        else:
            trajectory = self.solver.transient(friction, simulation.stepping, simulation.initial)
        self.forward_solves += 1
        breakdown = self.functional.evaluate(trajectory, density)
        self._cache = (key, density, trajectory, breakdown)
        logger.debug(f"Forward solve {self.forward_solves}: {breakdown}")
        return trajectory, breakdown

    def __call__(self, values) -> float:
        return self.forward(values)[1].objective

    def gradient(self, values) -> np.ndarray:
        trajectory, _ = self.forward(values)
        key, density = self._cache[0], self._cache[1]
        if self._gradient is not None and self._gradient[0] == key:
            return self._gradient[1].copy()
        adjoint = solve_adjoint(self.solver, trajectory, density, self.functional)
        self.adjoint_solves += 1
        grad = adjoint_gradient(self.solver, trajectory, adjoint, density, self.functional)
        self._gradient = (key, grad)
        return grad.copy()

    def evaluate(self, values) -> Tuple[float, np.ndarray, Dict[str, float]]:
        """(objective, gradient, {"power", "cost"}) as expected by lbfgsb_maximize."""
        _, breakdown = self.forward(values)
        grad = self.gradient(values)
        return breakdown.objective, grad, {'power': breakdown.power, 'cost': breakdown.cost}


@dataclass(frozen=True, eq=False)
class DesignProblem:
    mesh: Mesh
    reduced: ReducedFunctional
    upper: UpperBound
    settings: OptimizerSettings

    @classmethod
    def from_scenario(cls, scenario: 'Scenario') -> 'DesignProblem':
        mesh = scenario.mesh
        solver = ShallowWaterSolver(mesh, scenario.physical, scenario.boundaries, scenario.solver,
                                    warm_start=scenario.warm_start)
        functional = ProfitFunctional(mesh, scenario.turbine, scenario.economics, scenario.physical,
                                      scenario.solver.velocity_smoothing, scenario.simulation.average)
        upper = scenario.upper_bound()
        return cls(mesh, ReducedFunctional(solver, functional, upper.values, scenario.simulation),
                   upper, scenario.optimizer)


@dataclass(frozen=True, eq=False)
class DesignResult:
    density: DensityField
    trace: OptimizationTrace
    breakdown: ProfitBreakdown
    trajectory: Trajectory
    forward_solves: int
    adjoint_solves: int

    @property
    def objective(self) -> float:
        return self.breakdown.objective

    @property
    def stop_reason(self) -> str:
        return self.trace.stop_reason


def control_scale(mesh: Mesh, upper: np.ndarray, inner_product: str = 'euclidean') -> np.ndarray:
    """
    Per-node scale s of the optimization variables x = d / s.

    "euclidean" uses max d_bar everywhere; "l2" additionally weighs node i by
    sqrt(mean(m) / m_i) with the lumped mass m, so that the Euclidean metric
    in x is the lumped L2 metric in d.
    """
    peak = float(np.max(upper, initial=0.0)) or 1.0
    if inner_product == 'euclidean':
        return np.full(mesh.num_vertices, peak)
    if inner_product == 'l2':
        mass = function_spaces(mesh).p1_integrals
        return peak * np.sqrt(mass.mean() / mass)
    raise TidalFarmError(f"unknown inner product {inner_product!r}", 'optimizer.error')


def optimize_density(problem: DesignProblem, x0=None, lower=None, upper=None,
                     settings: OptimizerSettings = None) -> DesignResult:
    """
    Maximize the reduced profit from ``x0`` (default initial_fraction * d_bar).

    ``lower``/``upper`` default to 0 and d_bar; equal entries freeze nodes.
    """
    settings = settings or problem.settings
    reduced = problem.reduced
    lower = np.zeros(problem.mesh.num_vertices) if lower is None else np.asarray(lower, dtype=float)
    upper = problem.upper.values if upper is None else np.asarray(upper, dtype=float)
    x0 = settings.initial_fraction * upper if x0 is None else np.asarray(x0, dtype=float)
    count = {'evaluations': 0}

    def evaluate(values):
        count['evaluations'] += 1
        try:
            return reduced.evaluate(values)
        except TidalFarmError as e:
            e.args = (f"optimizer evaluation {count['evaluations']}: {e}",) + e.args[1:]
            raise

    reduced.reset()
    result = lbfgsb_maximize(evaluate, x0, lower, upper, settings.memory, settings.ftol, settings.pgtol,
                             settings.max_iter, settings.max_line_search,
                             control_scale(problem.mesh, problem.upper.values, settings.inner_product),
                             settings.objective_scale, settings.snapshot_every)
    trajectory, breakdown = reduced.forward(result.x)
    density = reduced.density(result.x)
    logger.info(f"Design optimization finished ({result.stop_reason}): {breakdown}; "
                f"{reduced.forward_solves} forward and "
                f"{reduced.adjoint_solves} adjoint solves")
    return DesignResult(density, result.trace, breakdown, trajectory,
                        reduced.forward_solves, reduced.adjoint_solves)


def run_design_optimization(scenario: 'Scenario', x0=None) -> DesignResult:
    """Optimal density of a validated scenario, with the optimization trace."""
    return optimize_density(DesignProblem.from_scenario(scenario), x0)


# ----------------------------------------------------------------------
# Gradient verification
# ----------------------------------------------------------------------

def run_taylor_test(scenario: 'Scenario', settings: TaylorSettings = None,
                    problem: DesignProblem = None) -> TaylorReport:
    """
    Taylor test of the adjoint gradient at ``fraction * d_bar`` along a seeded
    random perturbation supported where d_bar > 0.
    """
    settings = settings or scenario.taylor
    problem = problem or DesignProblem.from_scenario(scenario)
    upper = problem.upper.values
    if not np.any(upper > 0):
        raise TaylorTestError("the scenario has no admissible farm node to perturb")
    rng = np.random.default_rng(settings.seed)
    base = settings.fraction * upper
    direction = settings.perturbation * upper * rng.uniform(-1.0, 1.0, upper.size)
    largest = max(settings.steps)
    if np.any(base + largest * direction < 0) or np.any(base + largest * direction > upper) \
            or np.any(base - largest * direction < 0) or np.any(base - largest * direction > upper):
        raise TaylorTestError("perturbed densities leave the box 0 <= d <= d_bar; "
                              "reduce taylor.perturbation or move taylor.fraction towards 0.5")
    reduced = problem.reduced
    value = reduced(base)
    grad = reduced.gradient(base)
    report = taylor_test(reduced, base, grad, direction, settings.steps, value)
    h = min(settings.steps)
    central = (reduced(base + h * direction) - reduced(base - h * direction)) / (2.0 * h)
    return replace(report, central_difference=central)


# ----------------------------------------------------------------------
# Multi-farm comparison
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FarmComparison:
    """
    Joint optimum of all farms against the design that freezes the first farm
    at its individually optimal density and optimizes the second around it.
    """
    joint: DesignResult
    individual: DesignResult
    frozen: DesignResult
    frozen_farm: str
    free_farm: str

    @property
    def gain(self) -> float:
        """Joint minus frozen objective (W); non-negative up to optimizer tolerance."""
        return self.joint.objective - self.frozen.objective


def compare_joint_and_frozen(scenario: 'Scenario') -> FarmComparison:
    problem = DesignProblem.from_scenario(scenario)
    names = problem.upper.farm_names
    if len(names) < 2:
        raise TidalFarmError("the joint/frozen comparison needs at least two farms", 'optimizer.error')
    first, second = names[0], names[1]
    upper = problem.upper.values
    in_first = np.zeros(upper.size, dtype=bool)
    in_first[problem.upper.farm_vertices[first]] = True
    in_second = np.zeros(upper.size, dtype=bool)
    in_second[problem.upper.farm_vertices[second]] = True

    joint = optimize_density(problem)
    logger.info(f"Joint design: {joint.breakdown}")

    only_first = np.where(in_first, upper, 0.0)
    individual = optimize_density(problem, upper=only_first,
                                  x0=problem.settings.initial_fraction * only_first)
    logger.info(f"Farm {first!r} alone: {individual.breakdown}")

    fixed = np.where(in_first, individual.density.values, 0.0)
    lower = fixed.copy()
    bound = np.where(in_second, upper, fixed)
    x0 = np.where(in_second, problem.settings.initial_fraction * upper, fixed)
    frozen = optimize_density(problem, x0=x0, lower=lower, upper=bound)
    logger.info(f"Farm {second!r} around frozen {first!r}: {frozen.breakdown}")
    return FarmComparison(joint, individual, frozen, first, second)
