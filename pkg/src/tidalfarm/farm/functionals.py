"""
Farm power, force and profit functionals.

All integrals use the triangle quadrature of the flow spaces and the
smoothed speed sqrt(u.u + eps^2), the same regularization the solver uses.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from tidalfarm.farm.density import DensityField, density_to_friction, rounded_count, turbine_count
from tidalfarm.farm.models import EconomicParams, TurbineSpec, effective_cost_coefficient
from tidalfarm.mesh.geometry import Mesh
from tidalfarm.shallow_water.models import FlowState, PhysicalParams, Trajectory, time_weights
from tidalfarm.shallow_water.spaces import function_spaces

logger = logging.getLogger(__name__)

DEFAULT_SMOOTHING = 1e-6


def _velocity(mesh: Mesh, state: FlowState):
    spaces = function_spaces(mesh)
    return spaces.p2_at_quadrature(state.ux), spaces.p2_at_quadrature(state.uy)


def _speed(ux, uy, smoothing):
    return np.sqrt(ux ** 2 + uy ** 2 + smoothing ** 2)


def farm_power(mesh: Mesh, state: FlowState, friction, density: float = 1000.0,
               smoothing: float = DEFAULT_SMOOTHING) -> float:
    """P = rho * int c_t |u|^3 dx (W)."""
    spaces = function_spaces(mesh)
    ux, uy = _velocity(mesh, state)
    c_t = spaces.p1_at_quadrature(friction)
    return density * spaces.integrate(c_t * _speed(ux, uy, smoothing) ** 3)


def farm_force(mesh: Mesh, state: FlowState, friction, density: float = 1000.0,
               smoothing: float = DEFAULT_SMOOTHING) -> np.ndarray:
    """F = rho * int c_t |u| u dx (N)."""
    spaces = function_spaces(mesh)
    ux, uy = _velocity(mesh, state)
    weight = density * spaces.p1_at_quadrature(friction) * _speed(ux, uy, smoothing)
    return np.array([spaces.integrate(weight * ux), spaces.integrate(weight * uy)])


@dataclass(frozen=True)
class ProfitBreakdown:
    """Objective value and its parts, all in W except the turbine count."""
    objective: float
    power: float
    cost: float
    turbines: float

    @property
    def rounded_turbines(self) -> int:
        return rounded_count(self.turbines)

    def __str__(self):
        return (f"profit {self.objective / 1e6:.4f} MW (power {self.power / 1e6:.4f} MW, "
                f"cost {self.cost / 1e6:.4f} MW, N {self.turbines:.2f})")


class ProfitFunctional:
    """
    Time-averaged farm power minus the turbine cost::

        J(d) = power_weight * sum_n w_n P(u^n, d) - C * int d dx

    with time weights w_n from ``time_weights`` (one state in steady runs).
    """

    def __init__(self, mesh: Mesh, spec: TurbineSpec, econ: EconomicParams, physical: PhysicalParams,
                 smoothing: float = DEFAULT_SMOOTHING, average: str = 'left', power_weight: float = 1.0):
        self.mesh = mesh
        self.spaces = function_spaces(mesh)
        self.spec = spec
        self.econ = econ
        self.physical = physical
        self.smoothing = smoothing
        self.average = average
        self.power_weight = power_weight
        self.cost_coefficient = effective_cost_coefficient(spec, econ, physical.density)

    def weights(self, trajectory: Trajectory) -> np.ndarray:
        return time_weights(trajectory, self.average)

    def power(self, trajectory: Trajectory, density: DensityField) -> float:
        friction = density_to_friction(density, self.spec)
        return float(sum(w * farm_power(self.mesh, state, friction, self.physical.density, self.smoothing)
                         for w, state in zip(self.weights(trajectory), trajectory) if w))

    def evaluate(self, trajectory: Trajectory, density: DensityField) -> ProfitBreakdown:
        power = self.power(trajectory, density)
        turbines = turbine_count(density)
        cost = self.cost_coefficient * turbines
        return ProfitBreakdown(self.power_weight * power - cost, power, cost, turbines)

    def state_derivative(self, state: FlowState, density: DensityField) -> np.ndarray:
        """
        Derivative of power_weight * P(u, d) with respect to the unknown vector
        [u_x, u_y, eta] of one state (the elevation part is zero).
        """
        spaces = self.spaces
        ux, uy = _velocity(self.mesh, state)
        c_t = spaces.p1_at_quadrature(density_to_friction(density, self.spec))
        scale = 3.0 * self.power_weight * self.physical.density * c_t * _speed(ux, uy, self.smoothing)
        return np.concatenate([spaces.integrate_against_p2(scale * ux),
                               spaces.integrate_against_p2(scale * uy),
                               np.zeros(spaces.n1)])

    def density_derivative(self, trajectory: Trajectory) -> np.ndarray:
        """Partial derivative of J with respect to the nodal densities at fixed flow."""
        spaces = self.spaces
        direct = np.zeros(spaces.n1)
        for w, state in zip(self.weights(trajectory), trajectory):
            if w:
                ux, uy = _velocity(self.mesh, state)
                direct += w * spaces.integrate_against_p1(_speed(ux, uy, self.smoothing) ** 3)
        direct *= self.power_weight * self.physical.density * self.spec.friction_per_density
        return direct - self.cost_coefficient * spaces.p1_integrals

    def farm_breakdown(self, trajectory: Trajectory, density: DensityField,
                       farm_vertices: Dict[str, np.ndarray]) -> Dict[str, ProfitBreakdown]:
        """Power, cost, profit and N of every farm, using its owned vertices only."""
        result = {}
        for name, vertices in farm_vertices.items():
            values = np.zeros_like(density.values)
            values[vertices] = density.values[vertices]
            result[name] = self.evaluate(trajectory, DensityField(self.mesh, values, density.upper))
        return result


def profit_objective(mesh: Mesh, trajectory: Trajectory, density: DensityField, spec: TurbineSpec,
                     econ: EconomicParams, physical: PhysicalParams, average: str = 'left',
                     smoothing: float = DEFAULT_SMOOTHING) -> float:
    """Profit in W: time-averaged farm power minus cost coefficient times turbine count."""
    functional = ProfitFunctional(mesh, spec, econ, physical, smoothing, average)
    return functional.evaluate(trajectory, density).objective


def summary_block(breakdown: ProfitBreakdown, farms: Optional[Dict[str, ProfitBreakdown]] = None) -> str:
    """Plain-text report of power, cost, profit and turbine count."""
    lines = [
        f"power_W = {breakdown.power!r}",
        f"power_MW = {breakdown.power / 1e6:.6f}",
        f"cost_W = {breakdown.cost!r}",
        f"cost_MW = {breakdown.cost / 1e6:.6f}",
        f"profit_W = {breakdown.objective!r}",
        f"profit_MW = {breakdown.objective / 1e6:.6f}",
        f"turbines_real = {breakdown.turbines!r}",
        f"turbines_rounded = {breakdown.rounded_turbines}",
    ]
    for name, part in (farms or {}).items():
        lines.append(f"farm.{name} = power {part.power / 1e6:.6f} MW, cost {part.cost / 1e6:.6f} MW, "
                     f"profit {part.objective / 1e6:.6f} MW, N {part.turbines:.4f}")
    return '\n'.join(lines) + '\n'
