"""
Newton solution of the steady and backward-Euler shallow-water equations.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from tidalfarm.mesh.geometry import Mesh
from tidalfarm.shallow_water.assembly import ShallowWaterForm
from tidalfarm.shallow_water.models import (
    FlowState, ParameterError, PhysicalParams, ShallowWaterError, SolverSettings,
    TimeSteppingParams, Trajectory,
)
from tidalfarm.shallow_water.spaces import function_spaces

logger = logging.getLogger(__name__)

SUFFICIENT_DECREASE = 1e-4
ROUNDOFF_FLOOR = 1e-8


class DivergenceError(ShallowWaterError):
    """Newton did not converge; ``residual_norm`` is the last residual."""
    code = 'shallow_water.divergence'

    def __init__(self, message: str, residual_norm: float = math.nan, step: int = None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.step = step


class LinearSolverError(ShallowWaterError):
    code = 'shallow_water.solver'

    def __init__(self, message: str, step: int = None):
        super().__init__(message)
        self.step = step


class TrajectoryStorageError(ShallowWaterError):
    code = 'adjoint.storage'


def factorize(matrix, what: str = 'Jacobian'):
    """Sparse LU factorization; raises LinearSolverError for a singular matrix."""
    try:
        return splu(matrix.tocsc())
    except RuntimeError as e:
        raise LinearSolverError(f"singular {what}: {e}")


def _trial(form: ShallowWaterForm, x: np.ndarray, previous: Optional[np.ndarray], t: float):
    """Residual, Jacobian and residual norm at x; infinite norm where the depth vanishes."""
    try:
        residual, jacobian = form.assemble(x, previous, t)
    except ParameterError:
        return None, None, math.inf
    norm = float(np.linalg.norm(residual))
    return residual, jacobian, norm if math.isfinite(norm) else math.inf


def newton(form: ShallowWaterForm, guess: np.ndarray, t: float,
           previous: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Solve ``form`` for its unknown vector starting from ``guess``.

    Each step starts at the fraction ``damping`` of the Newton update and is
    halved until the residual norm decreases sufficiently, down to
    ``min_step``. Converges when the residual norm falls below
    ``max(newton_rel_tol * initial norm, newton_abs_tol)`` or when the Newton
    update stagnates at round-off level.

    Raises:
        DivergenceError: no convergence within newton_max_iter, a failed line
            search or a non-positive depth at the guess.
        LinearSolverError: singular Jacobian.
    """
    settings = form.settings
    x = form.lift(guess, t)
    try:
        residual, jacobian = form.assemble(x, previous, t)
    except ParameterError as e:
        raise DivergenceError(str(e))
    norm0 = float(np.linalg.norm(residual))
    if not math.isfinite(norm0):
        raise DivergenceError("initial residual is not finite", norm0)
    if norm0 == 0.0:
        logger.debug("Newton: initial residual is zero")
        return x
    tol = max(settings.newton_rel_tol * norm0, settings.newton_abs_tol)
    norm = norm0
    for iteration in range(1, settings.newton_max_iter + 1):
        delta = factorize(jacobian).solve(-residual)
        if not np.all(np.isfinite(delta)):
            raise LinearSolverError("Newton update is not finite")
        step = settings.damping
        while True:
            trial_residual, trial_jacobian, trial_norm = _trial(form, x + step * delta, previous, t)
            if trial_norm <= (1.0 - SUFFICIENT_DECREASE * step) * norm:
                break
            if step * 0.5 < settings.min_step:
                scale = max(1.0, float(np.max(np.abs(x))))
                if norm <= ROUNDOFF_FLOOR * norm0 or float(np.max(np.abs(delta))) <= settings.stagnation_tol * scale:
                    logger.debug(f"Newton stopped at the round-off floor, |R| = {norm:.3e}")
                    return x
                raise DivergenceError(
                    f"iteration {iteration}: line search failed below step {step:g} "
                    f"(residual {norm:.3e})", norm)
            step *= 0.5
        x = x + step * delta
        residual, jacobian, norm = trial_residual, trial_jacobian, trial_norm
        logger.debug(f"Newton iteration {iteration}: step {step:g}, |R| = {norm:.3e} (|R0| = {norm0:.3e})")
        if norm <= tol:
            logger.debug(f"Newton converged in {iteration} iterations")
            return x
        scale = max(1.0, float(np.max(np.abs(x))))
        if float(np.max(np.abs(step * delta))) <= settings.stagnation_tol * scale:
            logger.debug(f"Newton update stagnated at |R| = {norm:.3e} after {iteration} iterations")
            return x
    raise DivergenceError(
        f"Newton did not converge in {settings.newton_max_iter} iterations "
        f"(residual {norm:.3e}, target {tol:.3e})", norm)


def continuation_viscosities(viscosity: float, settings: SolverSettings) -> np.ndarray:
    """Viscosity levels above ``viscosity``, largest first, that lead a failed cold solve to it."""
    top = max(settings.continuation_viscosity, viscosity)
    levels = settings.continuation_levels
    if levels == 0 or top <= viscosity:
        return np.zeros(0)
    if viscosity > 0:
        return np.geomspace(top, viscosity, levels + 1)[:-1]
    return np.linspace(top, 0.0, levels + 1)[:-1]


class ShallowWaterSolver:
    """
    Forward solver bound to one mesh, parameter set and boundary prescription.

    Keeps the last converged steady state so that repeated solves with nearby
    friction fields start close to their solution.
    """

    def __init__(self, mesh: Mesh, physical: PhysicalParams, bcs,
                 settings: SolverSettings = None, warm_start: bool = False):
        self.mesh = mesh
        self.spaces = function_spaces(mesh)
        self.physical = physical
        self.settings = settings or SolverSettings()
        self.warm_start = warm_start
        self._template = ShallowWaterForm(mesh, physical, bcs, None, self.settings)
        self.bcs = self._template.bcs
        self.forward_solves = 0
        self._last_steady = None

    def form(self, friction=None, dt: Optional[float] = None) -> ShallowWaterForm:
        return ShallowWaterForm(self.mesh, self.physical, self.bcs, friction, self.settings, dt)

    def _newton(self, form: ShallowWaterForm, guess: np.ndarray, t: float,
                previous: Optional[np.ndarray] = None) -> np.ndarray:
        """Newton on the physical problem; on divergence, retry from a viscosity continuation."""
        try:
            return newton(form, guess, t, previous)
        except DivergenceError as e:
            levels = continuation_viscosities(self.physical.viscosity, self.settings)
            if levels.size == 0:
                raise
            logger.warning(f"Newton failed at t={t:g} s ({e}); "
                           f"restarting from viscosity {levels[0]:g} m^2/s")
            failure = e
        x = guess
        for viscosity in levels:
            physical = replace(self.physical, viscosity=float(viscosity))
            level = ShallowWaterForm(self.mesh, physical, self.bcs, form.friction, self.settings, form.dt)
            try:
                x = newton(level, x, t, previous)
            except DivergenceError as e:
                raise DivergenceError(f"{failure}; continuation failed at viscosity {viscosity:g} m^2/s: {e}",
                                      e.residual_norm)
            logger.debug(f"Continuation level at viscosity {viscosity:g} m^2/s converged")
        return newton(form, x, t, previous)

    def rest_state(self, time: float = 0.0) -> FlowState:
        return FlowState.rest(self.spaces.n2, self.spaces.n1, time)

    def steady(self, friction=None, initial_guess: Optional[FlowState] = None,
               time: float = 0.0) -> FlowState:
        if initial_guess is not None:
            guess = initial_guess.vector
        elif self.warm_start and self._last_steady is not None:
            guess = self._last_steady
        else:
            guess = np.zeros(self.spaces.size)
        vector = self._newton(self.form(friction), guess, time)
        self.forward_solves += 1
        if self.warm_start:
            self._last_steady = vector
        state = FlowState.from_vector(vector, self.spaces.n2, time)
        logger.info(f"Steady solve converged: {state}")
        return state

    def transient(self, friction, stepping: TimeSteppingParams,
                  initial: Union[str, FlowState] = 'rest') -> Trajectory:
        """
        Backward-Euler trajectory from t_start to t_end.

        Args:
            initial: 'rest', 'steady' (steady solution for the t_start
                     boundary data and the same friction) or a FlowState.
        """
        problems = stepping.errors()
        if problems:
            raise ParameterError('; '.join(problems))
        steps = stepping.num_steps
        if steps + 1 > self.settings.max_states:
            raise TrajectoryStorageError(
                f"{steps + 1} time levels exceed the in-memory cap of {self.settings.max_states} "
                f"states; use a coarser dt or raise simulation.max_states")

        if isinstance(initial, FlowState):
            start, from_steady = initial, False
            if start.vector.shape != (self.spaces.size,) or not start.is_finite():
                raise ParameterError("initial state does not match the mesh or is not finite")
        elif initial == 'steady':
            start, from_steady = self.steady(friction, time=stepping.t_start), True
        elif initial == 'rest':
            start, from_steady = self.rest_state(stepping.t_start), False
        else:
            raise ParameterError(f"unknown initial condition {initial!r}")

        form = self.form(friction, stepping.dt)
        states = [FlowState(start.ux, start.uy, start.eta, stepping.t_start)]
        x = start.vector
        for n, t in enumerate(stepping.times()[1:], start=1):
            try:
                x = self._newton(form, x, t, previous=x)
            except DivergenceError as e:
                raise DivergenceError(f"step {n} (t={t:g} s): {e}", e.residual_norm, n)
            except LinearSolverError as e:
                raise LinearSolverError(f"step {n} (t={t:g} s): {e}", n)
            states.append(FlowState.from_vector(x, self.spaces.n2, t))
            logger.debug(f"Step {n}/{steps}: {states[-1]}")
        self.forward_solves += 1
        logger.info(f"Transient solve finished: {steps} steps, final {states[-1]}")
        return Trajectory(states, stepping.dt, from_steady)

    def boundary_fluxes(self, friction, state: FlowState, previous: Optional[FlowState] = None,
                        dt: Optional[float] = None) -> dict:
        form = self.form(friction, dt)
        return form.boundary_fluxes(state.vector, previous.vector if previous is not None else None)


def solve_steady(mesh: Mesh, physical: PhysicalParams, bcs, friction=None,
                 settings: SolverSettings = None, initial_guess: FlowState = None) -> FlowState:
    return ShallowWaterSolver(mesh, physical, bcs, settings).steady(friction, initial_guess)


def solve_transient(mesh: Mesh, physical: PhysicalParams, bcs, friction, stepping: TimeSteppingParams,
                    initial: Union[str, FlowState] = 'rest', settings: SolverSettings = None) -> Trajectory:
    return ShallowWaterSolver(mesh, physical, bcs, settings).transient(friction, stepping, initial)


# ----------------------------------------------------------------------
# Diagnostics
# ----------------------------------------------------------------------

def kinetic_energy(mesh: Mesh, physical: PhysicalParams, state: FlowState,
                   fixed_depth: bool = False) -> float:
    """Depth-integrated kinetic energy 0.5 rho int H |u|^2 (J)."""
    spaces = function_spaces(mesh)
    ux, uy = spaces.p2_at_quadrature(state.ux), spaces.p2_at_quadrature(state.uy)
    depth = spaces.p1_at_quadrature(physical.depth_on(mesh))
    if not fixed_depth:
        depth = depth + spaces.p1_at_quadrature(state.eta)
    return 0.5 * physical.density * spaces.integrate(depth * (ux ** 2 + uy ** 2))


def speed_at(mesh: Mesh, state: FlowState, points) -> np.ndarray:
    spaces = function_spaces(mesh)
    return np.hypot(spaces.evaluate_p2(state.ux, points), spaces.evaluate_p2(state.uy, points))


@dataclass(frozen=True)
class ChannelProfile:
    """Free surface and speed of a uniform-width channel along its axis."""
    x: np.ndarray
    eta: np.ndarray
    speed: np.ndarray
    discharge: float

    def speed_at(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.speed)

    def eta_at(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.eta)


def channel_oracle(length: float, depth: float, inflow_speed: float, friction: float,
                   gravity: float = 9.81, outlet_eta: float = 0.0,
                   fixed_depth: bool = False, samples: int = 401) -> ChannelProfile:
    """
    One-dimensional steady momentum balance of a frictional channel.

    Solves ``u du/dx + g deta/dx = -c |u| u / H`` with ``u H = q`` constant,
    the inflow speed prescribed at x = 0 and ``eta = outlet_eta`` at x = length.
    The unknown inlet elevation is found by shooting.
    """
    if not (length > 0 and depth > 0 and gravity > 0):
        raise ParameterError("channel length, depth and gravity must be positive")
    x = np.linspace(0.0, length, samples)

    def total_depth(eta):
        return depth if fixed_depth else depth + eta

    def integrate(eta0):
        q = inflow_speed * total_depth(eta0)

        def slope(_, y):
            h = total_depth(y[0])
            u = q / h
            froude = 0.0 if fixed_depth else q * q / h ** 3
            return [-friction * abs(u) * u / h / (gravity - froude)]

        return q, solve_ivp(slope, (0.0, length), [eta0], t_eval=x, rtol=1e-11, atol=1e-13)

    def mismatch(eta0):
        return integrate(eta0)[1].y[0, -1] - outlet_eta

    a = outlet_eta
    fa = mismatch(a)
    if fa == 0.0:
        b = a
    else:
        step = 1e-4 * depth
        direction = -math.copysign(1.0, fa)
        for _ in range(60):
            b = a + direction * step
            if mismatch(b) * fa <= 0:
                break
            step *= 2.0
        else:
            raise ShallowWaterError("channel oracle could not bracket the inlet elevation")
        a = brentq(mismatch, a, b, xtol=1e-14, rtol=1e-14)
    q, sol = integrate(a)
    eta = sol.y[0]
    return ChannelProfile(x, eta, q / np.array([total_depth(e) for e in eta]), q)
