"""
Turbine density control: upper-bound construction, friction map and counting.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from tidalfarm.farm.models import FarmError, TurbineSpec
from tidalfarm.mesh.geometry import Mesh
from tidalfarm.shallow_water.spaces import function_spaces
from tidalfarm.utils import read_table, write_table

logger = logging.getLogger(__name__)

Box = Tuple[float, float, float, float]

INTERFACE_RULES = ('exclude', 'include')
DENSITY_HEADER = 'x y d dbar'


class DensityError(FarmError):
    code = 'farm.density'


@dataclass(frozen=True, eq=False)
class DensityField:
    """
    Nodal turbine density d and its upper bound d_bar on the mesh vertices
    (turbines per m^2), with 0 <= d <= d_bar at every node.
    """
    mesh: Mesh
    values: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        n = self.mesh.num_vertices
        values = np.array(self.values, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if values.shape != (n,) or upper.shape != (n,):
            raise DensityError(f"density fields need {n} nodal values")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(upper))):
            raise DensityError("density values must be finite")
        if np.any(upper < 0):
            raise DensityError("upper bound must be non-negative")
        if np.any(values < 0) or np.any(values > upper):
            worst = int(np.argmax(np.maximum(-values, values - upper)))
            raise DensityError(f"density violates 0 <= d <= d_bar at node {worst}")
        values.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'upper', upper)

    @classmethod
    def projected(cls, mesh: Mesh, values, upper) -> 'DensityField':
        """Clip ``values`` onto the box [0, upper] before construction."""
        upper = np.asarray(upper, dtype=float)
        return cls(mesh, np.clip(np.asarray(values, dtype=float), 0.0, upper), upper)

    @classmethod
    def fraction_of_upper(cls, mesh: Mesh, upper, fraction: float) -> 'DensityField':
        return cls(mesh, fraction * np.asarray(upper, dtype=float), upper)

    def with_values(self, values) -> 'DensityField':
        return DensityField(self.mesh, values, self.upper)

    @property
    def support(self) -> np.ndarray:
        """Vertex mask where d_bar > 0."""
        return self.upper > 0


@dataclass(frozen=True)
class FarmRegion:
    """One farm: triangles carrying ``label``, with its own maximum density."""
    name: str
    label: int
    max_density: Optional[float] = None


@dataclass(frozen=True)
class InstallationConstraints:
    """
    Attributes:
        max_slope:  Largest admissible bathymetry gradient norm |grad h|.
        min_depth:  Shallowest admissible depth at rest (m).
        max_depth:  Deepest admissible depth at rest (m).
        exclusions: Boxes (x0, y0, x1, y1) where no turbine may stand.
        interface:  "exclude" zeroes nodes touching a masked triangle,
                    "include" keeps every node touching an allowed one.
    """
    max_slope: Optional[float] = None
    min_depth: Optional[float] = None
    max_depth: Optional[float] = None
    exclusions: Sequence[Box] = field(default_factory=tuple)
    interface: str = 'exclude'

    def errors(self) -> List[str]:
        problems = []
        if self.max_slope is not None and not self.max_slope > 0:
            problems.append("max_slope must be positive")
        if self.min_depth is not None and self.max_depth is not None and self.min_depth > self.max_depth:
            problems.append("min_depth must not exceed max_depth")
        if self.interface not in INTERFACE_RULES:
            problems.append(f"interface must be one of {INTERFACE_RULES}")
        for box in self.exclusions:
            if len(box) != 4 or not (box[2] > box[0] and box[3] > box[1]):
                problems.append(f"exclusion box {tuple(box)} must be (x0, y0, x1, y1) with x1 > x0, y1 > y0")
        return problems


@dataclass(frozen=True, eq=False)
class UpperBound:
    """d_bar together with the vertices owned by each farm."""
    values: np.ndarray
    farm_vertices: Dict[str, np.ndarray]

    @property
    def farm_names(self) -> List[str]:
        return list(self.farm_vertices)


def _allowed_triangles(mesh: Mesh, depth: np.ndarray, constraints: InstallationConstraints) -> np.ndarray:
    allowed = np.ones(mesh.num_triangles, dtype=bool)
    tri_depth = depth[mesh.triangles]
    if constraints.max_slope is not None:
        slope = np.linalg.norm(function_spaces(mesh).p1_cell_gradient(depth), axis=1)
        allowed &= slope < constraints.max_slope
    if constraints.min_depth is not None:
        allowed &= tri_depth.min(axis=1) >= constraints.min_depth
    if constraints.max_depth is not None:
        allowed &= tri_depth.max(axis=1) <= constraints.max_depth
    c = mesh.centroids
    for x0, y0, x1, y1 in constraints.exclusions:
        allowed &= ~((c[:, 0] >= x0) & (c[:, 0] <= x1) & (c[:, 1] >= y0) & (c[:, 1] <= y1))
    return allowed


def _touching(mesh: Mesh, triangle_mask: np.ndarray) -> np.ndarray:
    mask = np.zeros(mesh.num_vertices, dtype=bool)
    mask[mesh.triangles[triangle_mask].ravel()] = True
    return mask


def build_upper_bound(mesh: Mesh, farms: Sequence[FarmRegion], spec: TurbineSpec,
                      constraints: InstallationConstraints = None,
                      depth: Union[float, np.ndarray] = None) -> UpperBound:
    """
    Nodal upper bound d_bar from farm regions and installation constraints.

    A node gets the maximum density of a farm when it touches one of the
    farm's allowed triangles; with the "exclude" interface rule it is set to
    zero again when it also touches a farm triangle removed by a constraint.
    Nodes touching no farm triangle get zero. Each positive node is owned by
    the first farm that claims it.
    """
    constraints = constraints or InstallationConstraints()
    problems = constraints.errors() + spec.errors()
    if problems:
        raise FarmError('; '.join(problems))
    depth = np.full(mesh.num_vertices, 50.0) if depth is None else np.broadcast_to(
        np.asarray(depth, dtype=float), (mesh.num_vertices,))
    allowed = _allowed_triangles(mesh, depth, constraints)

    upper = np.zeros(mesh.num_vertices)
    owner = np.full(mesh.num_vertices, -1, dtype=np.int64)
    for index, farm in enumerate(farms):
        cap = spec.max_density if farm.max_density is None else float(farm.max_density)
        if not cap >= 0:
            raise FarmError(f"farm {farm.name!r}: max_density must be non-negative")
        in_farm = mesh.region_mask([farm.label])
        if not np.any(in_farm):
            raise FarmError(f"farm {farm.name!r}: no triangle carries region label {farm.label}")
        nodes = _touching(mesh, in_farm & allowed)
        if constraints.interface == 'exclude':
            masked = _touching(mesh, in_farm & ~allowed)
            if np.any(nodes & masked):
                logger.warning(f"Farm {farm.name!r}: {int(np.sum(nodes & masked))} interface nodes "
                               f"next to masked triangles set to zero")
            nodes &= ~masked
        claim = nodes & (owner < 0) & (cap > 0)
        owner[claim] = index
        upper[claim] = cap
    farm_vertices = {farm.name: np.flatnonzero(owner == i) for i, farm in enumerate(farms)}
    logger.info(f"Upper bound: {int(np.sum(upper > 0))} admissible nodes in {len(farms)} farm(s)")
    return UpperBound(upper, farm_vertices)


def density_to_friction(density: Union[DensityField, np.ndarray], spec: TurbineSpec) -> np.ndarray:
    """Nodal turbine friction c_t = 0.5 C_T A_T d."""
    values = density.values if isinstance(density, DensityField) else np.asarray(density, dtype=float)
    return spec.friction_per_density * values


def turbine_count(density: DensityField) -> float:
    """Exact integral of the piecewise linear density (number of turbines)."""
    return float(function_spaces(density.mesh).p1_integrals @ density.values)


def rounded_count(count: float) -> int:
    """Nearest integer, halves rounded up."""
    return int(math.floor(count + 0.5))


def export_density(density: DensityField, path: Union[str, Path]) -> Path:
    mesh = density.mesh
    return write_table(path, DENSITY_HEADER,
                       [mesh.vertices[:, 0], mesh.vertices[:, 1], density.values, density.upper])


def import_density(mesh: Mesh, path: Union[str, Path], tolerance: float = 1e-9) -> DensityField:
    """Read a density table written for the same mesh (vertex order and coordinates must match)."""
    table = read_table(path, 4)
    if table.shape[0] != mesh.num_vertices:
        raise DensityError(f"{path}: {table.shape[0]} rows for a mesh of {mesh.num_vertices} vertices")
    scale = max(1.0, float(np.max(np.abs(mesh.vertices))))
    if np.max(np.abs(table[:, :2] - mesh.vertices)) > tolerance * scale:
        raise DensityError(f"{path}: vertex coordinates do not match the mesh")
    return DensityField(mesh, table[:, 2], table[:, 3])
