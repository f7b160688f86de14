"""
Pipeline runner behind the command-line interface.

Every run writes into one output directory and ends with ``summary.txt``,
a ``key = value`` report whose ``artifact`` lines list every file written.
"""
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from tidalfarm.config.scenario import Scenario
from tidalfarm.errors import TidalFarmError
from tidalfarm.farm.density import DensityField, density_to_friction, export_density, import_density
from tidalfarm.farm.functionals import ProfitFunctional, summary_block
from tidalfarm.layout.bumps import evaluate_discrete_layout
from tidalfarm.layout.conversion import convert_density, write_layout
from tidalfarm.optimization.design import DesignProblem, optimize_density, run_taylor_test
from tidalfarm.shallow_water.export import export_trajectory
from tidalfarm.shallow_water.models import Trajectory
from tidalfarm.shallow_water.solver import ShallowWaterSolver

logger = logging.getLogger(__name__)

SUMMARY_FILE = 'summary.txt'
RESOLVED_SCENARIO = 'scenario.resolved.toml'


class Artifacts:
    """Files written by one run, in order."""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.files: List[Path] = []

    def path(self, name: str) -> Path:
        return self.directory / name

    def add(self, *paths: Path):
        for path in paths:
            self.files.append(Path(path))
            logger.info(f"Wrote {path}")

    def write_summary(self, command: str, scenario: Scenario, body: str = '') -> Path:
        path = self.path(SUMMARY_FILE)
        lines = [f"command = {command}", f"scenario = {scenario.name}", f"mode = {scenario.simulation.mode}",
                 f"triangles = {scenario.mesh.num_triangles}", f"vertices = {scenario.mesh.num_vertices}"]
        text = '\n'.join(lines) + '\n' + body
        text += ''.join(f"artifact = {f.name}\n" for f in self.files + [path])
        path.write_text(text)
        logger.info(f"Wrote {path}")
        return path


def _start(scenario: Scenario, output: Union[str, Path, None]) -> Artifacts:
    artifacts = Artifacts(output or scenario.output)
    artifacts.add(scenario.save(artifacts.path(RESOLVED_SCENARIO)))
    return artifacts


def _solve(scenario: Scenario, density: DensityField) -> Trajectory:
    solver = ShallowWaterSolver(scenario.mesh, scenario.physical, scenario.boundaries, scenario.solver)
    friction = density_to_friction(density, scenario.turbine)
    if scenario.simulation.is_steady:
        return Trajectory((solver.steady(friction),))
    return solver.transient(friction, scenario.simulation.stepping, scenario.simulation.initial)


def _flux_lines(scenario: Scenario, density: DensityField, trajectory: Trajectory) -> str:
    solver = ShallowWaterSolver(scenario.mesh, scenario.physical, scenario.boundaries, scenario.solver)
    friction = density_to_friction(density, scenario.turbine)
    previous = None if trajectory.is_steady else trajectory[-2]
    fluxes = solver.boundary_fluxes(friction, trajectory.final, previous, trajectory.dt)
    lines = [f"flux.{tag} = {value!r}" for tag, value in fluxes.items()]
    lines.append(f"flux.net = {sum(fluxes.values())!r}")
    return '\n'.join(lines) + '\n'


def _functional(scenario: Scenario) -> ProfitFunctional:
    return ProfitFunctional(scenario.mesh, scenario.turbine, scenario.economics, scenario.physical,
                            scenario.solver.velocity_smoothing, scenario.simulation.average)


def load_density(scenario: Scenario, path: Optional[Union[str, Path]]) -> DensityField:
    """Density from a table written for the scenario mesh, or zero when ``path`` is None."""
    upper = scenario.upper_bound().values
    if path is None:
        return DensityField(scenario.mesh, np.zeros(scenario.mesh.num_vertices), upper)
    density = import_density(scenario.mesh, path)
    return DensityField.projected(scenario.mesh, density.values, upper)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def simulate(scenario: Scenario, output=None, density_path=None) -> Artifacts:
    """Forward run for a given density (no farm by default)."""
    artifacts = _start(scenario, output)
    density = load_density(scenario, density_path)
    trajectory = _solve(scenario, density)
    artifacts.add(*export_trajectory(scenario.mesh, trajectory, artifacts.directory,
                                     scenario.simulation.export_every))
    breakdown = _functional(scenario).evaluate(trajectory, density)
    body = summary_block(breakdown) + _flux_lines(scenario, density, trajectory)
    artifacts.write_summary('simulate', scenario, body)
    return artifacts


def optimize(scenario: Scenario, output=None) -> Artifacts:
    """Optimal density, its flow, and the optimization trace."""
    artifacts = _start(scenario, output)
    problem = DesignProblem.from_scenario(scenario)
    result = optimize_density(problem)
    artifacts.add(result.trace.write_csv(artifacts.path('trace.csv')))
    artifacts.add(export_density(result.density, artifacts.path('density.txt')))
    for iteration, values in sorted(result.trace.snapshots.items()):
        snapshot = DensityField(scenario.mesh, values, problem.upper.values)
        artifacts.add(export_density(snapshot, artifacts.path(f"density_{iteration:05d}.txt")))
    artifacts.add(*export_trajectory(scenario.mesh, result.trajectory, artifacts.directory,
                                     scenario.simulation.export_every))
    farms = None
    if len(problem.upper.farm_vertices) > 1:
        farms = problem.reduced.functional.farm_breakdown(result.trajectory, result.density,
                                                          problem.upper.farm_vertices)
    body = summary_block(result.breakdown, farms)
    body += (f"stop_reason = {result.stop_reason}\n"
             f"iterations = {result.trace.iterations}\n"
             f"forward_solves = {result.forward_solves}\n"
             f"adjoint_solves = {result.adjoint_solves}\n"
             f"cost_coefficient_W = {problem.reduced.functional.cost_coefficient!r}\n")
    artifacts.write_summary('optimize', scenario, body)
    return artifacts


def convert(scenario: Scenario, output=None, density_path=None) -> Artifacts:
    """Discrete layout from an optimized density (``density.txt`` of the output directory by default)."""
    artifacts = _start(scenario, output)
    density_path = Path(density_path) if density_path else artifacts.path('density.txt')
    if not density_path.exists():
        raise TidalFarmError(f"density file {density_path} not found; run 'optimize' first or pass --density",
                             'layout.input')
    density = load_density(scenario, density_path)
    settings = scenario.layout
    layout = convert_density(density, scenario.turbine, settings.seed, settings.count, settings.max_attempts)
    artifacts.add(write_layout(layout, artifacts.path('layout.txt')))
    body = (f"turbines = {len(layout)}\n"
            f"seed = {settings.seed}\n"
            f"min_spacing_m = {layout.min_spacing()!r}\n")
    if settings.evaluate:
        trajectory = _solve(scenario, density)
        continuous = _functional(scenario).power(trajectory, density)
        evaluation = evaluate_discrete_layout(layout, scenario, density=density, continuous_power=continuous)
        body += (f"continuous_power_W = {continuous!r}\n"
                 f"discrete_power_W = {evaluation.power!r}\n"
                 f"discrete_power_MW = {evaluation.power / 1e6:.6f}\n"
                 f"bump_amplitude = {evaluation.bumps.amplitude!r}\n")
        if evaluation.ratio is not None:
            body += f"discrete_to_continuous = {evaluation.ratio!r}\n"
    artifacts.write_summary('convert', scenario, body)
    return artifacts


def taylor(scenario: Scenario, output=None) -> bool:
    """Write the Taylor report; True when the gradient passes."""
    artifacts = _start(scenario, output)
    report = run_taylor_test(scenario)
    artifacts.add(report.write(artifacts.path('taylor_report.txt')))
    body = (f"min_second_order = {report.min_order!r}\n"
            f"central_difference_relative_error = {report.central_difference_error!r}\n"
            f"passed = {str(report.passed).lower()}\n")
    artifacts.write_summary('taylor-test', scenario, body)
    return report.passed
