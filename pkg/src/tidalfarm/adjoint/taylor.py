"""
Taylor remainder test of a gradient.

For a step ladder h_k the remainders

    r1(h) = |J(x + h dx) - J(x)|
    r2(h) = |J(x + h dx) - J(x) - h <g, dx>|

must shrink at first and second order respectively when g is the exact
gradient of J.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from tidalfarm.errors import TidalFarmError

logger = logging.getLogger(__name__)

DEFAULT_STEPS = (1.0, 0.5, 0.25, 0.125)
REQUIRED_ORDER = 1.9


class TaylorTestError(TidalFarmError):
    code = 'adjoint.taylor'


@dataclass(frozen=True)
class TaylorSettings:
    """Base density ``fraction * d_bar``, random perturbation of amplitude ``perturbation * d_bar``."""
    steps: Tuple[float, ...] = DEFAULT_STEPS
    seed: int = 1
    fraction: float = 0.5
    perturbation: float = 0.25

    def errors(self) -> List[str]:
        problems = []
        steps = np.asarray(self.steps, dtype=float)
        if steps.size < 2 or np.any(steps <= 0) or np.any(np.diff(steps) >= 0):
            problems.append("steps must be positive and strictly decreasing (at least two)")
        if not 0 <= self.fraction <= 1:
            problems.append("fraction must lie in [0, 1]")
        if not self.perturbation > 0:
            problems.append("perturbation must be positive")
        return problems


def _orders(steps: np.ndarray, remainders: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore'):
        orders = np.log(remainders[1:] / remainders[:-1]) / np.log(steps[1:] / steps[:-1])
    return orders


@dataclass(frozen=True)
class TaylorReport:
    steps: np.ndarray
    values: np.ndarray
    base_value: float
    directional_derivative: float
    first_order: np.ndarray
    second_order: np.ndarray
    required_order: float = REQUIRED_ORDER
    central_difference: Optional[float] = None

    @property
    def first_orders(self) -> np.ndarray:
        return _orders(self.steps, self.first_order)

    @property
    def second_orders(self) -> np.ndarray:
        return _orders(self.steps, self.second_order)

    @property
    def min_order(self) -> float:
        orders = self.second_orders
        finite = orders[np.isfinite(orders)]
        return float(finite.min()) if finite.size else float('nan')

    @property
    def central_difference_error(self) -> Optional[float]:
        """Relative gap between the gradient and a central difference quotient."""
        if self.central_difference is None:
            return None
        scale = max(abs(self.central_difference), abs(self.directional_derivative))
        return abs(self.central_difference - self.directional_derivative) / scale if scale else 0.0

    @property
    def passed(self) -> bool:
        if np.all(self.second_order == 0.0):
            return True
        return bool(np.all(np.isfinite(self.second_orders)) and self.min_order >= self.required_order)

    def to_text(self) -> str:
        lines = [
            f"# base_value={self.base_value!r}",
            f"# directional_derivative={self.directional_derivative!r}",
            "h first_remainder second_remainder first_order second_order",
        ]
        first, second = self.first_orders, self.second_orders
        for k, h in enumerate(self.steps):
            o1 = '-' if k == 0 else f"{first[k - 1]:.6f}"
            o2 = '-' if k == 0 else f"{second[k - 1]:.6f}"
            lines.append(f"{h!r} {self.first_order[k]!r} {self.second_order[k]!r} {o1} {o2}")
        if self.central_difference is not None:
            lines.append(f"central_difference = {self.central_difference!r}")
            lines.append(f"central_difference_relative_error = {self.central_difference_error!r}")
        lines.append(f"min_second_order = {self.min_order:.6f}")
        lines.append(f"passed = {str(self.passed).lower()}")
        return '\n'.join(lines) + '\n'

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text())
        return path


def taylor_test(evaluate: Callable[[np.ndarray], float], x: np.ndarray, gradient: np.ndarray,
                direction: np.ndarray, steps: Sequence[float] = DEFAULT_STEPS,
                base_value: float = None) -> TaylorReport:
    """
    Run the remainder test of ``gradient`` at ``x`` along ``direction``.

    Args:
        evaluate:   J(x).
        x:          Base point.
        gradient:   Gradient claimed for J at x.
        direction:  Perturbation dx.
        steps:      Strictly decreasing positive step sizes.
        base_value: J(x) when already known.
    """
    steps = np.asarray(steps, dtype=float)
    if steps.size < 2 or np.any(steps <= 0) or np.any(np.diff(steps) >= 0):
        raise TaylorTestError("steps must be positive and strictly decreasing (at least two)")
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)
    j0 = float(evaluate(x)) if base_value is None else float(base_value)
    slope = float(np.dot(gradient, direction))
    values = np.array([float(evaluate(x + h * direction)) for h in steps])
    first = np.abs(values - j0)
    second = np.abs(values - j0 - steps * slope)
    report = TaylorReport(steps, values, j0, slope, first, second)
    for h, r1, r2 in zip(steps, first, second):
        logger.info(f"Taylor test h={h:.3e}: r1={r1:.3e} r2={r2:.3e}")
    logger.info(f"Taylor test minimum second-order rate {report.min_order:.3f}, "
                f"{'passed' if report.passed else 'FAILED'}")
    return report
