"""
Scenario loading and validation.

A scenario file is merged over the packaged defaults by ConfigManager and
turned into the frozen parameter objects of every module. All problems are
collected first and reported together as one ScenarioError whose lines read
``section.field: rule``.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from tidalfarm.adjoint.taylor import TaylorSettings
from tidalfarm.config.manager import ConfigManager
from tidalfarm.errors import TidalFarmError
from tidalfarm.farm.density import FarmRegion, InstallationConstraints, UpperBound, build_upper_bound
from tidalfarm.farm.models import EconomicParams, TurbineSpec
from tidalfarm.layout.conversion import LayoutSettings
from tidalfarm.mesh.generate import generate_rectangle
from tidalfarm.mesh.geometry import BOUNDARY_KINDS, Mesh
from tidalfarm.mesh.io import read_mesh
from tidalfarm.optimization.lbfgsb import OptimizerSettings
from tidalfarm.shallow_water.models import (
    BoundaryCondition, BoundaryConditionSet, PhysicalParams, SolverSettings, TimeSteppingParams,
)
from tidalfarm.utils import read_table

logger = logging.getLogger(__name__)

SCENARIO_FORMAT = 'tidalfarm-scenario'
SCENARIO_VERSION = 1
MESH_SOURCES = ('generate', 'file')
BATHYMETRY_KINDS = ('constant', 'plane', 'table')
SIMULATION_MODES = ('steady', 'transient')
INITIAL_CONDITIONS = ('rest', 'steady')
AVERAGES = ('left', 'right')
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')

Box = Tuple[float, float, float, float]


class ScenarioError(TidalFarmError):
    code = 'config.validation'

    def __init__(self, problems: Sequence[str], source: Union[str, Path] = None):
        self.problems = list(problems)
        self.source = source
        prefix = f"{source}: " if source else ''
        super().__init__(prefix + '; '.join(self.problems))


@dataclass(frozen=True)
class MeshSettings:
    source: str = 'generate'
    path: str = ''
    width: float = 4000.0
    height: float = 4000.0
    coarse_size: float = 100.0
    fine_box: Optional[Box] = None
    fine_size: float = 20.0
    grading: float = 1.2
    diagonal: str = 'mirrored'

    def errors(self) -> List[str]:
        problems = []
        if self.source not in MESH_SOURCES:
            return [f"source must be one of {MESH_SOURCES}"]
        if self.source == 'file':
            if not self.path:
                problems.append("path is required when source is 'file'")
            return problems
        if not (self.width > 0 and self.height > 0):
            problems.append("width and height must be positive")
        if not self.coarse_size > 0:
            problems.append("coarse_size must be positive")
        if self.fine_box is not None:
            x0, y0, x1, y1 = self.fine_box
            if not (x1 > x0 and y1 > y0):
                problems.append(f"fine_box {self.fine_box} must satisfy x1 > x0 and y1 > y0")
            elif x0 < 0 or y0 < 0 or x1 > self.width or y1 > self.height:
                problems.append(f"fine_box {self.fine_box} lies outside the domain "
                                f"[0, {self.width:g}] x [0, {self.height:g}]")
            if not 0 < self.fine_size <= self.coarse_size:
                problems.append("fine_size must be positive and at most coarse_size")
        if not self.grading >= 1:
            problems.append("grading must be at least 1")
        if self.diagonal not in ('mirrored', 'right', 'left'):
            problems.append("diagonal must be one of ('mirrored', 'right', 'left')")
        return problems

    def build(self, regions: Sequence[Tuple[int, Box]] = (), base: Path = None) -> Mesh:
        if self.source == 'file':
            path = Path(self.path)
            if base is not None and not path.is_absolute():
                path = base / path
            return read_mesh(path)
        return generate_rectangle(self.width, self.height, self.coarse_size, self.fine_box,
                                  self.fine_size if self.fine_box else None, regions,
                                  self.grading, self.diagonal)


@dataclass(frozen=True)
class BathymetrySettings:
    """Depth at rest: constant, a plane ``depth + slope_x x + slope_y y``, or a per-vertex table."""
    kind: str = 'constant'
    depth: float = 50.0
    slope_x: float = 0.0
    slope_y: float = 0.0
    path: str = ''

    def errors(self) -> List[str]:
        if self.kind not in BATHYMETRY_KINDS:
            return [f"kind must be one of {BATHYMETRY_KINDS}"]
        if self.kind == 'table' and not self.path:
            return ["path is required when kind is 'table'"]
        return []

    def on(self, mesh: Mesh, base: Path = None) -> np.ndarray:
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        if self.kind == 'constant':
            return np.full(mesh.num_vertices, float(self.depth))
        if self.kind == 'plane':
            return self.depth + self.slope_x * x + self.slope_y * y
        path = Path(self.path)
        if base is not None and not path.is_absolute():
            path = base / path
        table = read_table(path, 3)
        if table.shape[0] == 0:
            raise ScenarioError([f"bathymetry.path: {path} holds no values"])
        distance, index = cKDTree(table[:, :2]).query(mesh.vertices)
        scale = max(1.0, float(np.abs(mesh.vertices).max()))
        if np.max(distance) > 1e-6 * scale:
            raise ScenarioError([f"bathymetry.path: {path} has no value at vertex {int(np.argmax(distance))}"])
        return table[index, 2]


@dataclass(frozen=True)
class FarmDefinition:
    name: str
    label: int
    box: Optional[Box] = None
    max_density: Optional[float] = None

    @property
    def region(self) -> FarmRegion:
        return FarmRegion(self.name, self.label, self.max_density)


@dataclass(frozen=True)
class SimulationSettings:
    mode: str = 'steady'
    stepping: Optional[TimeSteppingParams] = None
    initial: str = 'steady'
    average: str = 'left'
    export_every: int = 0

    @property
    def is_steady(self) -> bool:
        return self.mode == 'steady'

    def errors(self) -> List[str]:
        problems = []
        if self.mode not in SIMULATION_MODES:
            problems.append(f"mode must be one of {SIMULATION_MODES}")
        if self.initial not in INITIAL_CONDITIONS:
            problems.append(f"initial must be one of {INITIAL_CONDITIONS}")
        if self.average not in AVERAGES:
            problems.append(f"average must be one of {AVERAGES}")
        if self.export_every < 0:
            problems.append("export_every must be non-negative")
        if self.mode == 'transient' and self.stepping is not None:
            problems.extend(self.stepping.errors())
        return problems


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated scenario with its mesh built and its bathymetry resolved on it."""
    name: str
    mesh_settings: MeshSettings
    mesh: Mesh
    bathymetry: BathymetrySettings
    physical: PhysicalParams
    boundaries: BoundaryConditionSet
    turbine: TurbineSpec
    economics: EconomicParams
    farms: Tuple[FarmDefinition, ...]
    constraints: InstallationConstraints
    simulation: SimulationSettings
    solver: SolverSettings
    warm_start: bool
    optimizer: OptimizerSettings
    layout: LayoutSettings
    taylor: TaylorSettings
    output: Path
    threads: int
    log_level: str
    log_file: str
    config: ConfigManager
    source: Optional[Path] = None

    @property
    def farm_regions(self) -> Tuple[FarmRegion, ...]:
        return tuple(farm.region for farm in self.farms)

    def physical_on(self, mesh: Mesh) -> PhysicalParams:
        """Physical parameters with the depth carried over to another mesh."""
        if mesh is self.mesh:
            return self.physical
        if self.bathymetry.kind == 'table':
            depth = self.mesh.interpolate_p1(self.physical.depth, mesh.vertices)
        else:
            depth = self.bathymetry.on(mesh)
        return PhysicalParams(self.physical.gravity, self.physical.density, self.physical.viscosity,
                              self.physical.background_friction, depth, self.physical.depth_floor)

    def upper_bound(self, mesh: Mesh = None) -> UpperBound:
        mesh = mesh or self.mesh
        return build_upper_bound(mesh, self.farm_regions, self.turbine, self.constraints,
                                 self.physical_on(mesh).depth)

    def save(self, path: Union[str, Path]) -> Path:
        """Write the resolved scenario (defaults and overrides included)."""
        return self.config.save_config(path)


class _Reader:
    """Typed access to the merged configuration that records problems instead of raising."""

    def __init__(self, config: ConfigManager):
        self.config = config
        self.problems: List[str] = []

    def fail(self, key: str, rule: str):
        self.problems.append(f"{key}: {rule}")

    def value(self, key: str, source: Dict[str, Any] = None):
        if source is None:
            return self.config.get(key)
        return source.get(key)

    def number(self, key: str, source: Dict[str, Any] = None, prefix: str = None) -> float:
        value = self.value(key, source)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(prefix or key, f"expected a number, found {value!r}")
            return float('nan')
        return float(value)

    def optional(self, key: str, source: Dict[str, Any] = None, prefix: str = None) -> Optional[float]:
        """Negative numbers mean "not set"."""
        value = self.number(key, source, prefix)
        return None if value < 0 else value

    def integer(self, key: str, source: Dict[str, Any] = None, prefix: str = None) -> int:
        value = self.value(key, source)
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(prefix or key, f"expected an integer, found {value!r}")
            return 0
        return value

    def boolean(self, key: str) -> bool:
        value = self.value(key)
        if not isinstance(value, bool):
            self.fail(key, f"expected true or false, found {value!r}")
            return False
        return value

    def text(self, key: str, source: Dict[str, Any] = None, prefix: str = None) -> str:
        value = self.value(key, source)
        if not isinstance(value, str):
            self.fail(prefix or key, f"expected a string, found {value!r}")
            return ''
        return value

    def numbers(self, key: str, source: Dict[str, Any] = None, prefix: str = None) -> Tuple[float, ...]:
        value = self.value(key, source)
        if value is None:
            return ()
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float))
                                              for v in value):
            self.fail(prefix or key, f"expected a list of numbers, found {value!r}")
            return ()
        return tuple(float(v) for v in value)

    def box(self, key: str, source: Dict[str, Any] = None, prefix: str = None) -> Optional[Box]:
        values = self.numbers(key, source, prefix)
        if not values:
            return None
        if len(values) != 4:
            self.fail(prefix or key, "expected [x0, y0, x1, y1]")
            return None
        return values

    def qualify(self, section: str, problems: Sequence[str]):
        """Attach ``section.field`` to component messages that start with a field name."""
        known = self.config.get(section, {})
        for p in problems:
            field = p.split(' ', 1)[0]
            if isinstance(known, dict) and field in known:
                self.problems.append(f"{section}.{field}: {p}")
            else:
                self.problems.append(f"{section}: {p}")


def _boundaries(reader: _Reader) -> BoundaryConditionSet:
    conditions = {}
    for tag, entry in reader.config.entries('boundaries').items():
        prefix = f"boundary.{tag}"
        kind = reader.text('kind', entry, f"{prefix}.kind")
        if kind not in BOUNDARY_KINDS:
            reader.fail(f"{prefix}.kind", f"kind must be one of {BOUNDARY_KINDS}")
            continue
        size = {'velocity_dirichlet': 2, 'eta_dirichlet': 1, 'free_slip': 0}[kind]
        value = reader.numbers('value', entry, f"{prefix}.value") or (0.0,) * size
        amplitude = reader.numbers('amplitude', entry, f"{prefix}.amplitude") or (0.0,) * size
        bc = BoundaryCondition(kind, value, amplitude, reader.number('period', entry, f"{prefix}.period"),
                               reader.number('phase', entry, f"{prefix}.phase"))
        reader.problems.extend(f"{prefix}: {p}" for p in bc.errors())
        conditions[tag] = bc
    return BoundaryConditionSet(conditions)


def _farms(reader: _Reader) -> Tuple[FarmDefinition, ...]:
    farms = []
    names, labels = set(), set()
    for key, entry in reader.config.entries('farms').items():
        name = reader.text('name', entry, f"{key}.name")
        label = reader.integer('label', entry, f"{key}.label")
        box = reader.box('box', entry, f"{key}.box")
        cap = reader.optional('max_density', entry, f"{key}.max_density")
        if name in names:
            reader.fail(f"{key}.name", f"duplicate farm name {name!r}")
        if label in labels:
            reader.fail(f"{key}.label", f"duplicate region label {label}")
        if label < 1:
            reader.fail(f"{key}.label", "label must be at least 1 (0 marks the open sea)")
        if box is not None and not (box[2] > box[0] and box[3] > box[1]):
            reader.fail(f"{key}.box", f"box {box} must satisfy x1 > x0 and y1 > y0")
        names.add(name)
        labels.add(label)
        farms.append(FarmDefinition(name, label, box, cap))
    return tuple(farms)


def _read(config: ConfigManager, source: Optional[Path]) -> Scenario:
    reader = _Reader(config)
    for key in config.unknown_keys():
        reader.fail(key, "unknown key")
    if config.get('format') != SCENARIO_FORMAT:
        reader.fail('format', f"expected {SCENARIO_FORMAT!r}")
    if config.get('version') != SCENARIO_VERSION:
        reader.fail('version', f"unsupported version {config.get('version')!r}, expected {SCENARIO_VERSION}")

    mesh_settings = MeshSettings(
        reader.text('mesh.source'), reader.text('mesh.path'), reader.number('mesh.width'),
        reader.number('mesh.height'), reader.number('mesh.coarse_size'), reader.box('mesh.fine_box'),
        reader.number('mesh.fine_size'), reader.number('mesh.grading'), reader.text('mesh.diagonal'))
    reader.qualify('mesh', mesh_settings.errors())

    bathymetry = BathymetrySettings(reader.text('bathymetry.kind'), reader.number('bathymetry.depth'),
                                    reader.number('bathymetry.slope_x'), reader.number('bathymetry.slope_y'),
                                    reader.text('bathymetry.path'))
    reader.qualify('bathymetry', bathymetry.errors())

    turbine = TurbineSpec(reader.number('turbine.thrust_coefficient'), reader.number('turbine.cross_section'),
                          reader.number('turbine.min_distance'), reader.number('turbine.diameter'))
    reader.qualify('turbine', turbine.errors())

    economics = EconomicParams(reader.optional('economics.cost_coefficient'),
                               reader.number('economics.profit_margin'), reader.number('economics.peak_speed'),
                               reader.number('economics.tidal_factor'), reader.text('economics.mode'))
    reader.qualify('economics', economics.errors())

    constraints = InstallationConstraints(
        reader.optional('constraints.max_slope'), reader.optional('constraints.min_depth'),
        reader.optional('constraints.max_depth'),
        tuple(tuple(float(v) for v in box) for box in (config.get('constraints.exclusions') or [])),
        reader.text('constraints.interface'))
    reader.qualify('constraints', constraints.errors())

    mode = reader.text('simulation.mode')
    stepping = TimeSteppingParams(reader.number('simulation.dt'), reader.number('simulation.t_start'),
                                  reader.number('simulation.t_end'))
    simulation = SimulationSettings(mode, stepping if mode == 'transient' else None,
                                    reader.text('simulation.initial'), reader.text('simulation.average'),
                                    reader.integer('simulation.export_every'))
    reader.qualify('simulation', simulation.errors())

    solver = SolverSettings(
        reader.number('solver.newton_rel_tol'), reader.number('solver.newton_abs_tol'),
        reader.integer('solver.newton_max_iter'), reader.number('solver.damping'),
        reader.number('solver.velocity_smoothing'), reader.boolean('solver.fixed_depth'),
        reader.integer('solver.max_states'),
        min_step=reader.number('solver.min_step'),
        continuation_levels=reader.integer('solver.continuation_levels'),
        continuation_viscosity=reader.number('solver.continuation_viscosity'))
    reader.qualify('solver', solver.errors())

    optimizer = OptimizerSettings(
        reader.integer('optimizer.memory'), reader.number('optimizer.ftol'), reader.number('optimizer.pgtol'),
        reader.integer('optimizer.max_iter'), reader.integer('optimizer.max_line_search'),
        reader.number('optimizer.initial_fraction'), reader.text('optimizer.inner_product'),
        reader.number('optimizer.objective_scale'), reader.integer('optimizer.snapshot_every'))
    reader.qualify('optimizer', optimizer.errors())

    count = reader.integer('layout.count')
    layout = LayoutSettings(reader.integer('layout.seed'), None if count < 0 else count,
                            reader.integer('layout.max_attempts'), reader.boolean('layout.evaluate'),
                            reader.number('layout.evaluation_fine_size'))
    reader.qualify('layout', layout.errors())

    taylor = TaylorSettings(reader.numbers('taylor.steps'), reader.integer('taylor.seed'),
                            reader.number('taylor.fraction'), reader.number('taylor.perturbation'))
    reader.qualify('taylor', taylor.errors())

    log_level = reader.text('logging.log_level').upper()
    if log_level not in LOG_LEVELS:
        reader.fail('logging.log_level', f"log_level must be one of {LOG_LEVELS}")
    threads = reader.integer('threads')
    if threads < 0:
        reader.fail('threads', "threads must be non-negative")

    boundaries = _boundaries(reader)
    farms = _farms(reader)
    physics = dict(gravity=reader.number('physics.gravity'), density=reader.number('physics.density'),
                   viscosity=reader.number('physics.viscosity'),
                   background_friction=reader.number('physics.background_friction'),
                   depth_floor=reader.number('physics.depth_floor'))
    reader.qualify('physics', PhysicalParams(depth=max(physics['depth_floor'], 1.0), **physics).errors())

    if reader.problems:
        raise ScenarioError(reader.problems, source)

    # Everything below needs the mesh.
    base = source.parent if source else None
    regions = [(farm.label, farm.box) for farm in farms if farm.box is not None]
    if mesh_settings.source == 'file' and regions:
        logger.warning("Farm boxes are ignored for imported meshes; region labels come from the file")
    try:
        mesh = mesh_settings.build(regions, base)
    except TidalFarmError as e:
        raise ScenarioError([f"mesh: {e}"], source)
    except OSError as e:
        raise ScenarioError([f"mesh.path: {e}"], source)
    try:
        depth = bathymetry.on(mesh, base)
    except ScenarioError as e:
        raise ScenarioError(e.problems, source)
    except TidalFarmError as e:
        raise ScenarioError([f"bathymetry: {e}"], source)
    except OSError as e:
        raise ScenarioError([f"bathymetry.path: {e}"], source)
    physical = PhysicalParams(depth=depth, **physics)
    reader.qualify('bathymetry', [p for p in physical.errors() if p.startswith('depth')])
    reader.problems.extend(boundaries.errors(mesh))
    for farm in farms:
        if not np.any(mesh.region_id == farm.label):
            reader.fail(f"farms.{farm.name}", f"no triangle carries region label {farm.label}")
    if reader.problems:
        raise ScenarioError(reader.problems, source)

    name = reader.text('name')
    return Scenario(name, mesh_settings, mesh, bathymetry, physical, boundaries, turbine, economics, farms,
                    constraints, simulation, solver, reader.boolean('solver.warm_start'), optimizer, layout,
                    taylor, Path(config.get('output')), threads, log_level, config.get('logging.log_file', ''),
                    config, source)


def load_scenario(path: Union[str, Path], overrides: Dict[str, Any] = None) -> Scenario:
    """
    Read, merge, override and validate a scenario file.

    Args:
        path:      Scenario TOML file.
        overrides: Dotted keys replacing merged values (command-line flags).

    Raises:
        ScenarioError: one line per violated rule.
    """
    path = Path(path)
    config = ConfigManager(path)
    for key, value in (overrides or {}).items():
        if value is not None:
            config.set(key, value)
    scenario = _read(config, path)
    logger.info(f"Scenario {scenario.name!r} loaded from {path}: {scenario.mesh.num_triangles} triangles, "
                f"{len(scenario.farms)} farm(s), {scenario.simulation.mode}")
    return scenario


def validate_scenario(path: Union[str, Path], overrides: Dict[str, Any] = None) -> List[str]:
    """Problems found in a scenario file (empty when valid)."""
    try:
        load_scenario(path, overrides)
    except ScenarioError as e:
        return e.problems
    except TidalFarmError as e:
        return [str(e)]
    return []


def scenario_directory() -> Path:
    """Directory of the scenarios shipped with the package."""
    return Path(__file__).resolve().parent.parent / 'scenarios'
