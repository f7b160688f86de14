"""
Turbine and economic parameters.
"""
from dataclasses import dataclass
from typing import List, Optional

from tidalfarm.errors import TidalFarmError

TIDAL_FACTORS = (0.42, 1.0)
ECONOMIC_MODES = ('profit', 'power')


class FarmError(TidalFarmError):
    code = 'farm.validation'


@dataclass(frozen=True)
class TurbineSpec:
    """
    Attributes:
        thrust_coefficient: C_T, dimensionless.
        cross_section:      Rotor swept area A_T (m^2).
        min_distance:       Minimal turbine spacing D_min (m).
        diameter:           Rotor diameter (m), the width of one friction bump.
    """
    thrust_coefficient: float = 0.6
    cross_section: float = 314.159
    min_distance: float = 40.0
    diameter: float = 20.0

    @property
    def max_density(self) -> float:
        """Densest admissible packing 1 / D_min^2 (turbines per m^2)."""
        return 1.0 / self.min_distance ** 2

    @property
    def friction_per_density(self) -> float:
        """0.5 C_T A_T: the friction added by one turbine per m^2."""
        return 0.5 * self.thrust_coefficient * self.cross_section

    def errors(self) -> List[str]:
        problems = []
        if not 0 < self.thrust_coefficient < 1:
            problems.append("thrust_coefficient must lie in (0, 1)")
        if not self.cross_section > 0:
            problems.append("cross_section must be positive")
        if not self.min_distance > 0:
            problems.append("min_distance must be positive")
        if not self.diameter > 0:
            problems.append("diameter must be positive")
        return problems


@dataclass(frozen=True)
class EconomicParams:
    """
    Attributes:
        cost_coefficient: Break-even power per turbine C/(LIk) in W; None derives
                          it from the turbine and the other fields.
        profit_margin:    m, the fraction of revenue kept as profit.
        peak_speed:       u_peak (m/s).
        tidal_factor:     0.42 for a sinusoidal tide, 1.0 for constant flow.
        mode:             "profit", or "power" to maximize extraction at zero cost.
    """
    cost_coefficient: Optional[float] = None
    profit_margin: float = 0.4
    peak_speed: float = 2.0
    tidal_factor: float = 1.0
    mode: str = 'profit'

    def errors(self) -> List[str]:
        problems = []
        if self.cost_coefficient is not None and not self.cost_coefficient >= 0:
            problems.append("cost_coefficient must be non-negative")
        if not 0 <= self.profit_margin < 1:
            problems.append("profit_margin must lie in [0, 1)")
        if not self.peak_speed > 0:
            problems.append("peak_speed must be positive")
        if self.tidal_factor not in TIDAL_FACTORS:
            problems.append(f"tidal_factor must be one of {TIDAL_FACTORS}")
        if self.mode not in ECONOMIC_MODES:
            problems.append(f"mode must be one of {ECONOMIC_MODES}")
        return problems


def cost_coefficient(spec: TurbineSpec, econ: EconomicParams, density: float) -> float:
    """
    Break-even power per turbine,
    ``(factor / 2) C_T A_T (1 - m) rho u_peak^3`` in W.
    """
    return (0.5 * econ.tidal_factor * spec.thrust_coefficient * spec.cross_section
            * (1.0 - econ.profit_margin) * density * econ.peak_speed ** 3)


def effective_cost_coefficient(spec: TurbineSpec, econ: EconomicParams, density: float) -> float:
    """Cost coefficient used by the objective: 0 in power mode, else given or derived."""
    if econ.mode == 'power':
        return 0.0
    if econ.cost_coefficient is not None:
        return float(econ.cost_coefficient)
    return cost_coefficient(spec, econ, density)
