from tidalfarm.layout.bumps import (
    BumpFarm, DiscreteEvaluation, ResolutionError, bump_profile, check_resolution, evaluate_discrete_layout,
    evaluation_mesh,
)
from tidalfarm.layout.conversion import (
    LayoutError, LayoutSettings, PackingError, TurbineLayout, convert_density, read_layout, write_layout,
)

__all__ = [
    'BumpFarm',
    'DiscreteEvaluation',
    'LayoutError',
    'LayoutSettings',
    'PackingError',
    'ResolutionError',
    'TurbineLayout',
    'bump_profile',
    'check_resolution',
    'convert_density',
    'evaluate_discrete_layout',
    'evaluation_mesh',
    'read_layout',
    'write_layout',
]
