"""
Resolved-friction evaluation of a discrete turbine layout.

Every turbine becomes a smooth compact bump of the rotor diameter,

    b(x) = A exp(1 - 1 / (1 - (|x - c| / R)^2))   for |x - c| < R,

with one amplitude A shared by all bumps and chosen so that the integrated
friction of the discrete farm equals that of the continuous one.
"""
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy.spatial import cKDTree

from tidalfarm.farm.density import DensityField, turbine_count
from tidalfarm.farm.functionals import farm_power
from tidalfarm.layout.conversion import LayoutError, TurbineLayout
from tidalfarm.mesh.generate import generate_rectangle
from tidalfarm.mesh.geometry import Mesh
from tidalfarm.shallow_water.models import Trajectory, time_weights
from tidalfarm.shallow_water.solver import ShallowWaterSolver
from tidalfarm.shallow_water.spaces import function_spaces

if TYPE_CHECKING:
    from tidalfarm.config.scenario import Scenario

logger = logging.getLogger(__name__)

CELLS_PER_DIAMETER = 4


class ResolutionError(LayoutError):
    code = 'layout.resolution'


def bump_profile(rho: np.ndarray) -> np.ndarray:
    """Unit-peak bump of the normalized radius, zero for rho >= 1."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    inside = rho < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - rho[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class BumpFarm:
    """Bump friction of a layout on one mesh."""
    mesh: Mesh
    centers: np.ndarray
    diameter: float
    amplitude: float

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter

    def shape(self) -> np.ndarray:
        """Nodal sum of the unit-amplitude bumps."""
        total = np.zeros(self.mesh.num_vertices)
        if len(self.centers) == 0:
            return total
        tree = cKDTree(self.mesh.vertices)
        for center, nodes in zip(self.centers, tree.query_ball_point(self.centers, self.radius)):
            nodes = np.asarray(nodes, dtype=np.int64)
            if nodes.size:
                rho = np.hypot(*(self.mesh.vertices[nodes] - center).T) / self.radius
                total[nodes] += bump_profile(rho)
        return total

    def friction(self) -> np.ndarray:
        return self.amplitude * self.shape()

    def integrated_friction(self) -> float:
        return float(function_spaces(self.mesh).p1_integrals @ self.friction())

    @classmethod
    def matching(cls, mesh: Mesh, layout: TurbineLayout, total_friction: float) -> 'BumpFarm':
        """Bumps whose amplitude makes the integrated friction equal ``total_friction``."""
        unit = cls(mesh, layout.positions, layout.spec.diameter, 1.0)
        if len(layout) == 0:
            return unit
        integral = unit.integrated_friction()
        if integral <= 0:
            raise ResolutionError("bumps cover no mesh vertex; refine the mesh around the turbines")
        return cls(mesh, layout.positions, layout.spec.diameter, total_friction / integral)


def check_resolution(mesh: Mesh, layout: TurbineLayout):
    """Raise ResolutionError unless every triangle near a turbine is at most diameter / 4 wide."""
    if len(layout) == 0:
        return
    limit = layout.spec.diameter / CELLS_PER_DIAMETER
    tree = cKDTree(layout.positions)
    distance, _ = tree.query(mesh.centroids)
    sizes = mesh.cell_sizes()
    near = distance <= 0.5 * layout.spec.diameter + sizes
    if np.any(sizes[near] > limit * (1 + 1e-9)):
        raise ResolutionError(
            f"mesh does not resolve the turbine bumps: cell size {sizes[near].max():.3g} m "
            f"exceeds diameter / {CELLS_PER_DIAMETER} = {limit:.3g} m")


def evaluation_mesh(scenario: 'Scenario', layout: TurbineLayout, fine_size: float = None) -> Mesh:
    """Generated mesh refined to ``fine_size`` over the farms and the turbines."""
    settings = scenario.mesh_settings
    if settings.source != 'generate':
        raise ResolutionError("a fine mesh must be supplied for scenarios with an imported mesh")
    fine_size = fine_size or scenario.layout.evaluation_fine_size
    boxes = [farm.box for farm in scenario.farms if farm.box]
    if len(layout):
        margin = layout.spec.diameter
        lo, hi = layout.positions.min(axis=0) - margin, layout.positions.max(axis=0) + margin
        boxes.append((lo[0], lo[1], hi[0], hi[1]))
    if not boxes:
        box = None
    else:
        box = np.array(boxes, dtype=float)
        box = (max(0.0, box[:, 0].min()), max(0.0, box[:, 1].min()),
               min(settings.width, box[:, 2].max()), min(settings.height, box[:, 3].max()))
    regions = [(farm.label, farm.box) for farm in scenario.farms if farm.box]
    return generate_rectangle(settings.width, settings.height, settings.coarse_size, box,
                              fine_size if box else None, regions, settings.grading, settings.diagonal)


@dataclass(frozen=True, eq=False)
class DiscreteEvaluation:
    power: float
    trajectory: Trajectory
    bumps: BumpFarm
    continuous_power: Optional[float] = None

    @property
    def state(self):
        return self.trajectory.final

    @property
    def ratio(self) -> Optional[float]:
        """Discrete over continuous power."""
        if not self.continuous_power:
            return None
        return self.power / self.continuous_power


def evaluate_discrete_layout(layout: TurbineLayout, scenario: 'Scenario', mesh: Mesh = None,
                             density: DensityField = None,
                             continuous_power: float = None) -> DiscreteEvaluation:
    """
    Farm power of ``layout`` with resolved bump friction.

    Args:
        layout:           Turbine positions.
        scenario:         Flow setup (boundaries, physics, simulation mode).
        mesh:             Fine mesh; generated around the farm when omitted.
        density:          Continuous density the layout came from; its integrated
                          friction sets the bump amplitude. Without it every bump
                          carries the friction of one turbine.
        continuous_power: Power predicted by the continuous model, for the ratio.

    Raises:
        ResolutionError: the mesh has fewer than four cells across a bump.
    """
    mesh = mesh or evaluation_mesh(scenario, layout)
    check_resolution(mesh, layout)
    spec = layout.spec
    turbines = turbine_count(density) if density is not None else float(len(layout))
    bumps = BumpFarm.matching(mesh, layout, spec.friction_per_density * turbines)
    friction = bumps.friction()

    physical = scenario.physical_on(mesh)
    solver = ShallowWaterSolver(mesh, physical, scenario.boundaries, scenario.solver)
    if scenario.simulation.is_steady:
        trajectory = Trajectory((solver.steady(friction),))
    else:
        trajectory = solver.transient(friction, scenario.simulation.stepping, scenario.simulation.initial)
    weights = time_weights(trajectory, scenario.simulation.average)
    power = float(sum(w * farm_power(mesh, state, friction, physical.density, scenario.solver.velocity_smoothing)
                      for w, state in zip(weights, trajectory) if w))
    result = DiscreteEvaluation(power, trajectory, bumps, continuous_power)
    logger.info(f"Discrete layout of {len(layout)} turbines: power {power / 1e6:.4f} MW"
                + (f", {100 * result.ratio:.1f}% of the continuous prediction" if result.ratio else ""))
    return result
