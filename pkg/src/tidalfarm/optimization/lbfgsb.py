"""
Box-constrained maximization with SciPy's L-BFGS-B.

The objective is maximized by minimizing its negation in scaled variables
``x = d / scale``. Every point handed to the objective is first clipped onto
the box, so the objective only ever sees feasible controls.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from tidalfarm.errors import TidalFarmError

logger = logging.getLogger(__name__)

TRACE_HEADER = 'iter,objective_W,power_W,cost_W,pg_norm,step,fevals'

STOP_FTOL = 'ftol'
STOP_PGTOL = 'pgtol'
STOP_MAX_ITER = 'max_iter'
STOP_MAX_FUN = 'max_fun'
STOP_LINE_SEARCH = 'line search failed'

INNER_PRODUCTS = ('euclidean', 'l2')


class OptimizerError(TidalFarmError):
    code = 'optimizer.error'


class NonFiniteEvaluationError(OptimizerError):
    code = 'optimizer.nonfinite'


@dataclass(frozen=True)
class OptimizerSettings:
    """
    Attributes:
        memory:           L-BFGS-B correction pairs.
        ftol:             Relative objective reduction at which to stop.
        pgtol:            Projected-gradient infinity norm at which to stop.
        max_iter:         Iteration limit.
        max_line_search:  Line-search evaluations per iteration.
        initial_fraction: Initial density as a fraction of d_bar.
        inner_product:    "euclidean" or "l2" (lumped mass metric via variable scaling).
        objective_scale:  Objective divisor seen by L-BFGS-B (W).
        snapshot_every:   Keep every k-th iterate (0 keeps none).
    """
    memory: int = 10
    ftol: float = 2.2e-6
    pgtol: float = 1e-9
    max_iter: int = 200
    max_line_search: int = 20
    initial_fraction: float = 0.5
    inner_product: str = 'euclidean'
    objective_scale: float = 1e6
    snapshot_every: int = 0

    def errors(self) -> List[str]:
        problems = []
        if self.memory < 1:
            problems.append("memory must be at least 1")
        if not self.ftol > 0:
            problems.append("ftol must be positive")
        if not self.pgtol >= 0:
            problems.append("pgtol must be non-negative")
        if self.max_iter < 1:
            problems.append("max_iter must be at least 1")
        if self.max_line_search < 1:
            problems.append("max_line_search must be at least 1")
        if not 0 <= self.initial_fraction <= 1:
            problems.append("initial_fraction must lie in [0, 1]")
        if self.inner_product not in INNER_PRODUCTS:
            problems.append(f"inner_product must be one of {INNER_PRODUCTS}")
        if not self.objective_scale > 0:
            problems.append("objective_scale must be positive")
        if self.snapshot_every < 0:
            problems.append("snapshot_every must be non-negative")
        return problems


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    power: float
    cost: float
    pg_norm: float
    step: float
    fevals: int

    def to_csv(self) -> str:
        return ','.join([str(self.iteration), repr(self.objective), repr(self.power), repr(self.cost),
                         repr(self.pg_norm), repr(self.step), str(self.fevals)])


@dataclass
class OptimizationTrace:
    records: List[IterationRecord] = field(default_factory=list)
    stop_reason: str = ''
    message: str = ''
    snapshots: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def to_csv(self) -> str:
        lines = [TRACE_HEADER] + [r.to_csv() for r in self.records]
        lines.append(f"# stop_reason={self.stop_reason}")
        return '\n'.join(lines) + '\n'

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path


@dataclass
class OptimizationResult:
    x: np.ndarray
    objective: float
    trace: OptimizationTrace

    @property
    def stop_reason(self) -> str:
        return self.trace.stop_reason


def stop_reason(message) -> str:
    """Map an L-BFGS-B termination message onto a short stop reason."""
    if isinstance(message, bytes):
        message = message.decode()
    text = str(message).upper()
    if 'REL_REDUCTION' in text or 'RELATIVE REDUCTION' in text:
        return STOP_FTOL
    if 'PROJECTED_GRADIENT' in text or 'PROJECTED GRADIENT' in text:
        return STOP_PGTOL
    if 'ITERATIONS' in text:
        return STOP_MAX_ITER
    if 'EVALUATIONS' in text:
        return STOP_MAX_FUN
    if 'ABNORMAL' in text or 'LNSRCH' in text or 'LINE SEARCH' in text:
        return STOP_LINE_SEARCH
    return str(message).strip().lower()


def _projected_gradient_norm(x: np.ndarray, grad: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(np.clip(x - grad, lower, upper) - x)))


def lbfgsb_maximize(evaluate: Callable[[np.ndarray], Tuple], x0, lower, upper,
                    memory: int = 10, ftol: float = 2.2e-6, pgtol: float = 1e-9,
                    max_iter: int = 200, max_line_search: int = 20,
                    scale=None, objective_scale: float = 1.0,
                    snapshot_every: int = 0) -> OptimizationResult:
    """
    Maximize ``evaluate`` over the box [lower, upper].

    Args:
        evaluate:        x -> (objective, gradient) or (objective, gradient, extras)
                         where ``extras`` may carry "power" and "cost" for the trace.
        x0:              Starting point, projected onto the box.
        lower, upper:    Bounds (equal entries freeze a variable).
        memory:          Number of stored correction pairs.
        ftol:            Relative objective reduction stopping tolerance.
        pgtol:           Projected-gradient tolerance in scaled variables.
        max_iter:        Iteration limit.
        max_line_search: Line-search evaluations per iteration.
        scale:           Positive per-variable scale (variables seen by L-BFGS-B are x / scale).
        objective_scale: Positive divisor of the objective.
        snapshot_every:  Keep a copy of every k-th accepted iterate (0 keeps none).

    Returns:
        OptimizationResult with the final feasible point and the trace.

    Raises:
        NonFiniteEvaluationError: objective or gradient not finite.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper) or not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise OptimizerError("bounds must be finite with lower <= upper")
    if memory < 1:
        raise OptimizerError("memory must be at least 1")
    if not objective_scale > 0:
        raise OptimizerError("objective_scale must be positive")
    scale = np.ones_like(lower) if scale is None else np.broadcast_to(np.asarray(scale, dtype=float), lower.shape)
    if np.any(scale <= 0):
        raise OptimizerError("variable scale must be positive")

    lo, hi = lower / scale, upper / scale
    start = np.clip(np.asarray(x0, dtype=float), lower, upper)
    if np.any(start != np.asarray(x0, dtype=float)):
        logger.warning("Initial point projected onto the bounds")

    evaluations: Dict[bytes, tuple] = {}
    counter = {'fevals': 0}

    def to_control(z):
        return np.clip(z * scale, lower, upper)

    def fun(z):
        z = np.clip(z, lo, hi)
        key = z.tobytes()
        if key in evaluations:
            objective, grad, extras = evaluations[key]
        else:
            result = evaluate(to_control(z))
            objective, grad = float(result[0]), np.asarray(result[1], dtype=float)
            extras = result[2] if len(result) > 2 else {}
            counter['fevals'] += 1
            if not np.isfinite(objective) or not np.all(np.isfinite(grad)):
                raise NonFiniteEvaluationError(
                    f"non-finite objective or gradient at evaluation {counter['fevals']}")
            evaluations.clear()
            evaluations[key] = (objective, grad, extras)
        return -objective / objective_scale, -grad * scale / objective_scale

    trace = OptimizationTrace()
    state = {'x': start / scale}

    def record(z, iteration):
        _, grad = fun(z)
        objective, _, extras = evaluations[np.clip(z, lo, hi).tobytes()]
        step = float(np.max(np.abs(to_control(z) - to_control(state['x'])))) if iteration else 0.0
        trace.records.append(IterationRecord(
            iteration, objective, float(extras.get('power', objective)), float(extras.get('cost', 0.0)),
            _projected_gradient_norm(np.clip(z, lo, hi), grad, lo, hi), step, counter['fevals']))
        if snapshot_every and iteration % snapshot_every == 0:
            trace.snapshots[iteration] = to_control(z)
        state['x'] = np.array(z)
        logger.info(f"Optimizer iteration {iteration}: objective {objective:.6e}, "
                    f"pg {trace.records[-1].pg_norm:.3e}, fevals {counter['fevals']}")

    record(start / scale, 0)

    def callback(xk):
        record(xk, len(trace.records))

    result = minimize(
        fun, start / scale, jac=True, method='L-BFGS-B', bounds=list(zip(lo, hi)), callback=callback,
        options={'maxcor': memory, 'ftol': ftol, 'gtol': pgtol, 'maxiter': max_iter,
                 'maxls': max_line_search, 'maxfun': max(15000, 50 * max_iter)},
    )
    trace.stop_reason = stop_reason(result.message)
    trace.message = str(result.message)

    # Accepted iterates are recorded in order; the last one is the best feasible point.
    logger.info(f"L-BFGS-B stopped after {trace.iterations} iterations ({trace.stop_reason}), "
                f"objective {trace.records[-1].objective:.6e}")
    return OptimizationResult(to_control(state['x']), trace.records[-1].objective, trace)
