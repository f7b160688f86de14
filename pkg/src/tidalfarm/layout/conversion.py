"""
Conversion of an optimal turbine density into discrete turbine positions.

Proposals are drawn uniformly over the bounding box of the admissible area
and accepted with probability d(x) / max d_bar, provided every already placed
turbine is at least D_min away. The count is round(int d dx) unless given.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from tidalfarm.errors import TidalFarmError
from tidalfarm.farm.density import DensityField, rounded_count, turbine_count
from tidalfarm.farm.models import TurbineSpec
from tidalfarm.utils import header_comments, read_table, write_table

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 1_000_000
BATCH_SIZE = 4096


class LayoutError(TidalFarmError):
    code = 'layout.error'


class PackingError(LayoutError):
    code = 'layout.packing'

    def __init__(self, message: str, placed: int = 0, requested: int = 0):
        super().__init__(message)
        self.placed = placed
        self.requested = requested


@dataclass(frozen=True)
class LayoutSettings:
    """
    Attributes:
        seed:                 Random seed of the conversion.
        count:                Turbine count override (None uses round(int d)).
        max_attempts:         Proposal budget before giving up.
        evaluate:             Evaluate the layout with bump friction after converting.
        evaluation_fine_size: Cell size around the farm for that evaluation (m).
    """
    seed: int = 0
    count: Optional[int] = None
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    evaluate: bool = False
    evaluation_fine_size: float = 5.0

    def errors(self) -> List[str]:
        problems = []
        if self.seed < 0:
            problems.append("seed must be non-negative")
        if self.count is not None and self.count < 0:
            problems.append("count must be non-negative")
        if self.max_attempts < 1:
            problems.append("max_attempts must be at least 1")
        if not self.evaluation_fine_size > 0:
            problems.append("evaluation_fine_size must be positive")
        return problems


@dataclass(frozen=True, eq=False)
class TurbineLayout:
    """Turbine positions (n, 2) in metres, with the turbine spec and the seed that produced them."""
    positions: np.ndarray
    spec: TurbineSpec
    seed: int = 0

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float).reshape(-1, 2)
        positions.flags.writeable = False
        object.__setattr__(self, 'positions', positions)

    def __len__(self):
        return self.positions.shape[0]

    def min_spacing(self) -> float:
        """Smallest pairwise distance (inf for fewer than two turbines)."""
        if len(self) < 2:
            return float('inf')
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(dist, np.inf)
        return float(dist.min())


class _SpacingGrid:
    """Spatial hash with cells of size D_min; a neighbour lies in the 3x3 block around a point."""

    def __init__(self, min_distance: float):
        self.size = min_distance
        self.cells: Dict[Tuple[int, int], List[np.ndarray]] = {}

    def _cell(self, point) -> Tuple[int, int]:
        return int(np.floor(point[0] / self.size)), int(np.floor(point[1] / self.size))

    def admits(self, point) -> bool:
        i, j = self._cell(point)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for other in self.cells.get((i + di, j + dj), ()):
                    if np.hypot(point[0] - other[0], point[1] - other[1]) < self.size:
                        return False
        return True

    def add(self, point):
        self.cells.setdefault(self._cell(point), []).append(point)


def _proposal_box(density: DensityField) -> Tuple[np.ndarray, np.ndarray]:
    mesh = density.mesh
    touching = np.any(density.support[mesh.triangles], axis=1)
    corners = mesh.vertices[mesh.triangles[touching].ravel()]
    return corners.min(axis=0), corners.max(axis=0)


def convert_density(density: DensityField, spec: TurbineSpec, seed: int = 0, count: Optional[int] = None,
                    max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> TurbineLayout:
    """
    Place ``count`` turbines (default round(int d dx)) by rejection sampling.

    Raises:
        PackingError: the proposal budget ran out first.
    """
    if count is None:
        count = rounded_count(turbine_count(density))
    if count < 0:
        raise LayoutError("turbine count must be non-negative")
    peak = float(density.upper.max(initial=0.0))
    if count == 0:
        logger.info("Density integrates to zero turbines, empty layout")
        return TurbineLayout(np.zeros((0, 2)), spec, seed)
    if peak <= 0 or not np.any(density.values > 0):
        raise PackingError(f"placed 0 of {count} turbines: the density vanishes everywhere", 0, count)

    rng = np.random.default_rng(seed)
    lo, hi = _proposal_box(density)
    grid = _SpacingGrid(spec.min_distance)
    placed: List[np.ndarray] = []
    attempts = 0
    while len(placed) < count and attempts < max_attempts:
        batch = min(BATCH_SIZE, max_attempts - attempts)
        points = rng.uniform(lo, hi, size=(batch, 2))
        draws = rng.uniform(size=batch)
        tri, bary = density.mesh.locate(points)
        inside = tri >= 0
        values = np.zeros(batch)
        values[inside] = np.einsum('ni,ni->n', density.values[density.mesh.triangles[tri[inside]]], bary[inside])
        accepted = np.flatnonzero(draws < values / peak)
        used = batch
        for k in accepted:
            point = points[k]
            if grid.admits(point):
                grid.add(point)
                placed.append(point)
                if len(placed) == count:
                    used = k + 1
                    break
        attempts += used
    if len(placed) < count:
        raise PackingError(f"placed {len(placed)} of {count} turbines after {attempts} proposals "
                           f"(D_min {spec.min_distance:g} m)", len(placed), count)
    logger.info(f"Placed {count} turbines with seed {seed} after {attempts} proposals")
    return TurbineLayout(np.array(placed), spec, seed)


def write_layout(layout: TurbineLayout, path: Union[str, Path]) -> Path:
    """``x y`` per turbine after a comment recording seed, N and D_min."""
    comments = [f"seed={layout.seed} N={len(layout)} D_min={layout.spec.min_distance!r}"]
    return write_table(path, 'x y', [layout.positions[:, 0], layout.positions[:, 1]], comments)


def read_layout(path: Union[str, Path], spec: TurbineSpec) -> TurbineLayout:
    positions = read_table(path, 2)
    header = header_comments(path)
    seed = int(header.get('seed', 0))
    if 'N' in header and int(header['N']) != positions.shape[0]:
        raise LayoutError(f"{path}: header announces {header['N']} turbines, found {positions.shape[0]}")
    return TurbineLayout(positions, spec, seed)
