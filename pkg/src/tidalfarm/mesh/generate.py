"""
Structured rectangle meshing.

The rectangle is cut into a tensor grid of cells, each split into two
triangles. Along each axis the grid is uniform at ``fine_size`` across the
fine box and grows geometrically (factor ``grading``) up to ``coarse_size``
outside it; every segment is rescaled so its cells add up to its length
exactly, which can only shrink cells.
"""
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from tidalfarm.mesh.geometry import Mesh, MeshError

logger = logging.getLogger(__name__)

Box = Tuple[float, float, float, float]

DIAGONALS = ('mirrored', 'right', 'left')
DEFAULT_GRADING = 1.2


def _graded_sizes(length: float, start: float, cap: float, ratio: float) -> np.ndarray:
    """Cell sizes growing from ``start`` by ``ratio`` up to ``cap``, summing to ``length``."""
    if length <= 0.0:
        return np.zeros(0)
    sizes = []
    size = min(start * ratio, cap)
    total = 0.0
    while total < length * (1.0 - 1e-12):
        sizes.append(size)
        total += size
        size = min(size * ratio, cap)
    sizes = np.array(sizes)
    return sizes * (length / sizes.sum())


def _cell_count(length: float, size: float) -> int:
    return max(1, int(math.ceil(length / size - 1e-9)))


def _axis_nodes(length: float, coarse: float, band: Optional[Tuple[float, float]],
                fine: float, ratio: float, even: bool) -> np.ndarray:
    if band is None:
        n = _cell_count(length, coarse)
        if even and n > 1 and n % 2:
            n += 1
        nodes = np.linspace(0.0, length, n + 1)
    else:
        lo, hi = band
        nb = _cell_count(hi - lo, fine)
        left = _graded_sizes(lo, fine, coarse, ratio)
        right = _graded_sizes(length - hi, fine, coarse, ratio)
        if even and (nb + left.size + right.size) % 2:
            nb += 1
        core = np.linspace(lo, hi, nb + 1)
        before = lo - np.cumsum(left)[::-1]
        after = hi + np.cumsum(right)
        nodes = np.concatenate([before, core, after])
    nodes[0] = 0.0
    nodes[-1] = length
    return nodes


def _symmetrize(nodes: np.ndarray, length: float) -> np.ndarray:
    mirrored = 0.5 * (nodes + (length - nodes[::-1]))
    mirrored[0] = 0.0
    mirrored[-1] = length
    return mirrored


def _is_centered(band: Optional[Tuple[float, float]], length: float) -> bool:
    if band is None:
        return True
    return abs((band[0] + band[1]) - length) <= 1e-12 * max(length, 1.0)


def generate_rectangle(width: float, height: float, coarse_size: float,
                       fine_box: Optional[Box] = None, fine_size: Optional[float] = None,
                       regions: Sequence[Tuple[int, Box]] = (),
                       grading: float = DEFAULT_GRADING,
                       diagonal: str = 'mirrored') -> Mesh:
    """
    Mesh the rectangle [0, width] x [0, height].

    Args:
        width, height: Domain extent in metres.
        coarse_size:   Largest triangle diameter (maximum norm) away from the fine box.
        fine_box:      Optional (x0, y0, x1, y1) refined to ``fine_size``.
        fine_size:     Triangle diameter inside the fine box.
        regions:       (label, box) pairs; a triangle takes the label of the last
                       box containing its centroid, 0 otherwise.
        grading:       Geometric growth factor between fine and coarse cells.
        diagonal:      Split pattern: "right" (/), "left" (\\) or "mirrored"
                       (/ below the horizontal mid-axis, \\ above).

    Returns:
        A validated Mesh with boundary tags west, east, north and south.
    """
    if not (width > 0 and height > 0):
        raise MeshError(f"degenerate rectangle {width} x {height}")
    if not coarse_size > 0:
        raise MeshError("coarse_size must be positive")
    if grading < 1.0:
        raise MeshError("grading must be at least 1")
    if diagonal not in DIAGONALS:
        raise MeshError(f"unknown diagonal pattern {diagonal!r}")

    xband = yband = None
    if fine_box is not None:
        if fine_size is None or not fine_size > 0:
            raise MeshError("fine_size must be positive when fine_box is given")
        if fine_size > coarse_size:
            raise MeshError("fine_size must not exceed coarse_size")
        x0, y0, x1, y1 = (float(v) for v in fine_box)
        if not (x1 > x0 and y1 > y0):
            raise MeshError(f"degenerate fine_box {tuple(fine_box)}")
        if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
            raise MeshError(f"fine_box {tuple(fine_box)} exceeds the domain")
        xband, yband = (x0, x1), (y0, y1)

    mirrored = diagonal == 'mirrored'
    xs = _axis_nodes(width, coarse_size, xband, fine_size or coarse_size, grading, even=False)
    ys = _axis_nodes(height, coarse_size, yband, fine_size or coarse_size, grading, even=mirrored)
    if _is_centered(xband, width):
        xs = _symmetrize(xs, width)
    if _is_centered(yband, height):
        ys = _symmetrize(ys, height)

    nx, ny = xs.size - 1, ys.size - 1
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii, jj = ii.ravel(), jj.ravel()
    v00 = jj * (nx + 1) + ii
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1

    if diagonal == 'right':
        slash = np.ones(ii.size, dtype=bool)
    elif diagonal == 'left':
        slash = np.zeros(ii.size, dtype=bool)
    else:
        slash = 2 * jj < ny

    first = np.where(slash[:, None],
                     np.column_stack([v00, v10, v11]),
                     np.column_stack([v00, v10, v01]))
    second = np.where(slash[:, None],
                      np.column_stack([v00, v11, v01]),
                      np.column_stack([v10, v11, v01]))
    triangles = np.empty((2 * ii.size, 3), dtype=np.int64)
    triangles[0::2] = first
    triangles[1::2] = second

    def node(i, j):
        return j * (nx + 1) + i

    i_range = np.arange(nx)
    j_range = np.arange(ny)
    edges = [
        (np.column_stack([node(i_range, 0), node(i_range + 1, 0)]), 'south'),
        (np.column_stack([node(nx, j_range), node(nx, j_range + 1)]), 'east'),
        (np.column_stack([node(i_range + 1, ny), node(i_range, ny)]), 'north'),
        (np.column_stack([node(0, j_range + 1), node(0, j_range)]), 'west'),
    ]
    boundary_edges = np.vstack([e for e, _ in edges])
    boundary_tags = tuple(tag for e, tag in edges for _ in range(e.shape[0]))

    centroids = vertices[triangles].mean(axis=1)
    region_id = np.zeros(triangles.shape[0], dtype=np.int64)
    for label, box in regions:
        bx0, by0, bx1, by1 = box
        inside = ((centroids[:, 0] >= bx0) & (centroids[:, 0] <= bx1)
                  & (centroids[:, 1] >= by0) & (centroids[:, 1] <= by1))
        region_id[inside] = int(label)

    mesh = Mesh(vertices, triangles, boundary_edges, boundary_tags, region_id).validate()
    logger.info(f"Generated {nx}x{ny} cell mesh: {mesh.num_vertices} vertices, "
                f"{mesh.num_triangles} triangles")
    return mesh
