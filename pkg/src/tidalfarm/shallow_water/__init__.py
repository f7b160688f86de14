from tidalfarm.shallow_water.assembly import ShallowWaterForm, assemble_residual_and_jacobian
from tidalfarm.shallow_water.models import (
    BoundaryCondition, BoundaryConditionSet, FlowState, ParameterError, PhysicalParams,
    ShallowWaterError, SolverSettings, TimeSteppingParams, Trajectory, time_weights,
)
from tidalfarm.shallow_water.solver import (
    DivergenceError, LinearSolverError, ShallowWaterSolver, TrajectoryStorageError,
    channel_oracle, kinetic_energy, solve_steady, solve_transient, speed_at,
)
from tidalfarm.shallow_water.spaces import FunctionSpaces, function_spaces

__all__ = [
    'BoundaryCondition',
    'BoundaryConditionSet',
    'DivergenceError',
    'FlowState',
    'FunctionSpaces',
    'LinearSolverError',
    'ParameterError',
    'PhysicalParams',
    'ShallowWaterError',
    'ShallowWaterForm',
    'ShallowWaterSolver',
    'SolverSettings',
    'TimeSteppingParams',
    'Trajectory',
    'TrajectoryStorageError',
    'assemble_residual_and_jacobian',
    'channel_oracle',
    'function_spaces',
    'kinetic_energy',
    'solve_steady',
    'solve_transient',
    'speed_at',
    'time_weights',
]
