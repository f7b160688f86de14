from tidalfarm.farm.density import (
    DensityError, DensityField, FarmRegion, InstallationConstraints, UpperBound, build_upper_bound,
    density_to_friction, export_density, import_density, rounded_count, turbine_count,
)
from tidalfarm.farm.functionals import (
    ProfitBreakdown, ProfitFunctional, farm_force, farm_power, profit_objective, summary_block,
)
from tidalfarm.farm.models import (
    EconomicParams, FarmError, TurbineSpec, cost_coefficient, effective_cost_coefficient,
)

__all__ = [
    'DensityError',
    'DensityField',
    'EconomicParams',
    'FarmError',
    'FarmRegion',
    'InstallationConstraints',
    'ProfitBreakdown',
    'ProfitFunctional',
    'TurbineSpec',
    'UpperBound',
    'build_upper_bound',
    'cost_coefficient',
    'density_to_friction',
    'effective_cost_coefficient',
    'export_density',
    'farm_force',
    'farm_power',
    'import_density',
    'profit_objective',
    'rounded_count',
    'summary_block',
    'turbine_count',
]
