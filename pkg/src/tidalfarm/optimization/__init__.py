from tidalfarm.optimization.design import (
    DesignProblem, DesignResult, FarmComparison, ReducedFunctional, compare_joint_and_frozen, control_scale,
    optimize_density, run_design_optimization, run_taylor_test,
)
from tidalfarm.optimization.lbfgsb import (
    IterationRecord, NonFiniteEvaluationError, OptimizationResult, OptimizationTrace, OptimizerError,
    OptimizerSettings, lbfgsb_maximize,
)

__all__ = [
    'DesignProblem',
    'DesignResult',
    'FarmComparison',
    'IterationRecord',
    'NonFiniteEvaluationError',
    'OptimizationResult',
    'OptimizationTrace',
    'OptimizerError',
    'OptimizerSettings',
    'ReducedFunctional',
    'compare_joint_and_frozen',
    'control_scale',
    'lbfgsb_maximize',
    'optimize_density',
    'run_design_optimization',
    'run_taylor_test',
]
