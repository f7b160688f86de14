"""
Parameter and state types of the shallow-water solver.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from tidalfarm.errors import TidalFarmError
from tidalfarm.mesh.geometry import BOUNDARY_KINDS, Mesh

VELOCITY_DIRICHLET, ETA_DIRICHLET, FREE_SLIP = BOUNDARY_KINDS


class ShallowWaterError(TidalFarmError):
    code = 'shallow_water.error'


class ParameterError(ShallowWaterError):
    """Raised when solver inputs violate their invariants."""
    code = 'shallow_water.validation'


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PhysicalParams:
    """
    Physical constants of one run.

    ``depth`` is the nodal depth at rest h on the mesh vertices; a scalar is
    broadcast to a constant field by ``depth_on``.
    """
    gravity: float = 9.81
    density: float = 1000.0
    viscosity: float = 0.5
    background_friction: float = 0.0025
    depth: Union[float, np.ndarray] = 50.0
    depth_floor: float = 0.1

    def depth_on(self, mesh: Mesh) -> np.ndarray:
        depth = np.asarray(self.depth, dtype=float)
        if depth.ndim == 0:
            return np.full(mesh.num_vertices, float(depth))
        if depth.shape != (mesh.num_vertices,):
            raise ParameterError(
                f"depth has {depth.size} values, mesh has {mesh.num_vertices} vertices")
        return depth

    def errors(self) -> List[str]:
        problems = []
        if not self.gravity > 0:
            problems.append("gravity must be positive")
        if not self.density > 0:
            problems.append("density must be positive")
        if not self.viscosity >= 0:
            problems.append("viscosity must be non-negative")
        if not self.background_friction >= 0:
            problems.append("background_friction must be non-negative")
        if not self.depth_floor > 0:
            problems.append("depth_floor must be positive")
        depth = np.asarray(self.depth, dtype=float)
        if not np.all(np.isfinite(depth)):
            problems.append("depth must be finite")
        elif depth.size and depth.min() < self.depth_floor:
            problems.append(f"depth must be at least depth_floor ({self.depth_floor} m), "
                            f"found {depth.min()!r}")
        return problems


@dataclass(frozen=True)
class SolverSettings:
    """Newton and regularization settings shared by steady and transient solves."""
    newton_rel_tol: float = 1e-10
    newton_abs_tol: float = 1e-12
    newton_max_iter: int = 30
    damping: float = 1.0
    velocity_smoothing: float = 1e-6
    fixed_depth: bool = False
    max_states: int = 10000
    stagnation_tol: float = 1e-10
    min_step: float = 1.0 / 1024
    continuation_levels: int = 4
    continuation_viscosity: float = 10.0

    def errors(self) -> List[str]:
        problems = []
        if not self.newton_rel_tol > 0:
            problems.append("newton_rel_tol must be positive")
        if not self.newton_abs_tol >= 0:
            problems.append("newton_abs_tol must be non-negative")
        if self.newton_max_iter < 1:
            problems.append("newton_max_iter must be at least 1")
        if not 0 < self.damping <= 1:
            problems.append("damping must lie in (0, 1]")
        if not self.velocity_smoothing > 0:
            problems.append("velocity_smoothing must be positive")
        if self.max_states < 1:
            problems.append("max_states must be at least 1")
        if not 0 < self.min_step <= self.damping:
            problems.append("min_step must lie in (0, damping]")
        if self.continuation_levels < 0:
            problems.append("continuation_levels must be non-negative")
        if not self.continuation_viscosity > 0:
            problems.append("continuation_viscosity must be positive")
        return problems


@dataclass(frozen=True)
class TimeSteppingParams:
    dt: float
    t_start: float
    t_end: float

    @property
    def num_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.num_steps + 1)

    def errors(self) -> List[str]:
        problems = []
        if not self.dt > 0:
            problems.append("dt must be positive")
        if not self.t_end > self.t_start:
            problems.append("t_end must be greater than t_start")
        elif self.dt > 0:
            steps = (self.t_end - self.t_start) / self.dt
            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                problems.append("t_end - t_start must be a whole number of dt steps")
        return problems


@dataclass(frozen=True)
class BoundaryCondition:
    """
    Prescription on one boundary tag.

    Dirichlet data follow ``value + amplitude * sin(2 pi t / period + phase)``;
    ``value`` and ``amplitude`` are 2-vectors for velocity data and scalars
    for elevation data.
    """
    kind: str
    value: Tuple[float, ...] = (0.0,)
    amplitude: Tuple[float, ...] = (0.0,)
    period: float = 0.0
    phase: float = 0.0

    @classmethod
    def velocity(cls, value, amplitude=(0.0, 0.0), period=0.0, phase=0.0) -> 'BoundaryCondition':
        return cls(VELOCITY_DIRICHLET, tuple(map(float, value)), tuple(map(float, amplitude)),
                   float(period), float(phase))

    @classmethod
    def elevation(cls, value=0.0, amplitude=0.0, period=0.0, phase=0.0) -> 'BoundaryCondition':
        return cls(ETA_DIRICHLET, (float(value),), (float(amplitude),), float(period), float(phase))

    @classmethod
    def free_slip(cls) -> 'BoundaryCondition':
        return cls(FREE_SLIP, (), ())

    def at(self, t: float) -> np.ndarray:
        value = np.asarray(self.value, dtype=float)
        amplitude = np.asarray(self.amplitude, dtype=float)
        if self.period > 0 and np.any(amplitude):
            return value + amplitude * math.sin(2.0 * math.pi * t / self.period + self.phase)
        return value

    def errors(self) -> List[str]:
        problems = []
        if self.kind not in BOUNDARY_KINDS:
            return [f"unknown kind {self.kind!r}"]
        size = {VELOCITY_DIRICHLET: 2, ETA_DIRICHLET: 1, FREE_SLIP: 0}[self.kind]
        if self.kind != FREE_SLIP:
            if len(self.value) != size:
                problems.append(f"value needs {size} component(s)")
            if len(self.amplitude) != size:
                problems.append(f"amplitude needs {size} component(s)")
            if any(self.amplitude) and not self.period > 0:
                problems.append("period must be positive when amplitude is non-zero")
        return problems


@dataclass(frozen=True)
class BoundaryConditionSet:
    conditions: Dict[str, BoundaryCondition] = field(default_factory=dict)

    def __getitem__(self, tag: str) -> BoundaryCondition:
        return self.conditions[tag]

    def errors(self, mesh: Optional[Mesh] = None) -> List[str]:
        problems = []
        for tag, bc in self.conditions.items():
            problems.extend(f"boundary.{tag}: {p}" for p in bc.errors())
        if mesh is not None:
            for tag in mesh.tag_names:
                if tag not in self.conditions:
                    problems.append(f"boundary.{tag}: mesh tag has no prescription")
            for tag in self.conditions:
                if tag not in mesh.tag_names:
                    problems.append(f"boundary.{tag}: tag does not exist on the mesh")
        return problems


@dataclass(frozen=True, eq=False)
class FlowState:
    """
    Velocity (P2, two components) and elevation (P1) coefficients at one time.
    """
    ux: np.ndarray
    uy: np.ndarray
    eta: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        for name in ('ux', 'uy', 'eta'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @classmethod
    def from_vector(cls, vector: np.ndarray, n2: int, time: float = 0.0) -> 'FlowState':
        return cls(vector[:n2], vector[n2:2 * n2], vector[2 * n2:], time)

    @classmethod
    def rest(cls, n2: int, n1: int, time: float = 0.0) -> 'FlowState':
        return cls(np.zeros(n2), np.zeros(n2), np.zeros(n1), time)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.ux, self.uy, self.eta])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.ux)) and np.all(np.isfinite(self.uy))
                    and np.all(np.isfinite(self.eta)))

    def __str__(self):
        speed = np.hypot(self.ux, self.uy)
        return (f"FlowState(t={self.time:g} s, max |u|={speed.max(initial=0.0):.4g} m/s, "
                f"eta in [{self.eta.min(initial=0.0):.4g}, {self.eta.max(initial=0.0):.4g}] m)")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Forward solution retained in memory.

    ``states[0]`` is the initial level; a steady run stores one state.
    ``initial_is_steady`` marks a level 0 that was itself solved (and so
    depends on the friction field).
    """
    states: Tuple[FlowState, ...]
    dt: Optional[float] = None
    initial_is_steady: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'states', tuple(self.states))

    @property
    def is_steady(self) -> bool:
        return self.dt is None

    def __len__(self):
        return len(self.states)

    def __getitem__(self, index) -> FlowState:
        return self.states[index]

    @property
    def final(self) -> FlowState:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])


def time_weights(trajectory: Trajectory, average: str = 'left') -> np.ndarray:
    """
    Quadrature weights of the time average of a per-level quantity.

    Steady trajectories weigh their single state by 1. Transient ones use the
    left endpoint rule over levels 0..N-1 (consistent with backward Euler) or
    the right endpoint rule over levels 1..N.
    """
    n = len(trajectory)
    if trajectory.is_steady or n == 1:
        weights = np.zeros(n)
        weights[-1] = 1.0
        return weights
    weights = np.zeros(n)
    if average == 'left':
        weights[:-1] = 1.0 / (n - 1)
    elif average == 'right':
        weights[1:] = 1.0 / (n - 1)
    else:
        raise ParameterError(f"unknown time average {average!r}")
    return weights


def as_boundary_set(conditions: Union[BoundaryConditionSet, Dict[str, BoundaryCondition],
                                      Sequence[Tuple[str, BoundaryCondition]]]) -> BoundaryConditionSet:
    if isinstance(conditions, BoundaryConditionSet):
        return conditions
    return BoundaryConditionSet(dict(conditions))
