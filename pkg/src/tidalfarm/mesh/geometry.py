"""
Conforming triangular meshes with tagged boundary segments and region labels.

A Mesh is immutable once constructed: its arrays are flagged read-only and
derived quantities (edges, normals, point locator) are cached on first use,
so one instance can be shared by any number of readers.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from tidalfarm.errors import TidalFarmError

logger = logging.getLogger(__name__)

BOUNDARY_KINDS = ('velocity_dirichlet', 'eta_dirichlet', 'free_slip')

# Local edge k of a triangle is the edge opposite local vertex k.
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class MeshError(TidalFarmError):
    """Raised for invalid mesh generation parameters."""
    code = 'mesh.generation'


class MeshValidationError(MeshError):
    """Raised when a mesh violates one of the Mesh invariants."""
    code = 'mesh.validation'


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Planar triangulation in metres.

    Attributes:
        vertices:       (nv, 2) vertex coordinates.
        triangles:      (nt, 3) counter-clockwise vertex indices.
        boundary_edges: (nb, 2) vertex pairs on the boundary.
        boundary_tags:  tag name of every boundary edge.
        region_id:      (nt,) integer label per triangle (0 = background).
    """
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: Tuple[str, ...]
    region_id: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        edges = np.array(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        region = np.array(self.region_id, dtype=np.int64).reshape(-1)
        if region.size == 0 and triangles.shape[0]:
            region = np.zeros(triangles.shape[0], dtype=np.int64)
        for arr in (vertices, triangles, edges, region):
            arr.flags.writeable = False
        object.__setattr__(self, 'vertices', vertices)
        object.__setattr__(self, 'triangles', triangles)
        object.__setattr__(self, 'boundary_edges', edges)
        object.__setattr__(self, 'boundary_tags', tuple(str(t) for t in self.boundary_tags))
        object.__setattr__(self, 'region_id', region)

    # ------------------------------------------------------------------
    # Sizes
    # ------------------------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def tag_names(self) -> Tuple[str, ...]:
        """Distinct boundary tag names in order of first appearance."""
        return tuple(dict.fromkeys(self.boundary_tags))

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------

    def validate(self) -> 'Mesh':
        """
        Check every Mesh invariant.

        Raises:
            MeshValidationError naming the violated rule.

        Returns:
            self, so that construction and validation can be chained.
        """
        nv = self.num_vertices
        if self.num_triangles == 0:
            raise MeshValidationError("mesh has no triangles")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshValidationError("non-finite vertex coordinate")
        for name, arr in (('triangle', self.triangles), ('boundary edge', self.boundary_edges)):
            if arr.size and (arr.min() < 0 or arr.max() >= nv):
                raise MeshValidationError(f"{name} references a vertex index outside 0..{nv - 1}")
        if self.region_id.shape[0] != self.num_triangles:
            raise MeshValidationError("region_id length does not match the triangle count")
        if len(self.boundary_tags) != self.boundary_edges.shape[0]:
            raise MeshValidationError("every boundary edge needs exactly one tag")

        bad = np.flatnonzero(self.signed_areas() <= 0.0)
        if bad.size:
            raise MeshValidationError(f"non-positive area in triangle {int(bad[0])}")

        counts = np.bincount(self.edge_inverse, minlength=self.edges.shape[0])
        if np.any(counts > 2):
            raise MeshValidationError("non-conforming triangulation: an edge is shared by more than two triangles")

        bnd_ids, found = self._lookup_edges(self.boundary_edges)
        if not np.all(found):
            raise MeshValidationError("boundary edge does not belong to any triangle")
        if np.any(counts[bnd_ids] != 1):
            raise MeshValidationError("boundary edge must belong to exactly one triangle")
        if np.unique(bnd_ids).size != bnd_ids.size:
            raise MeshValidationError("boundary edge listed twice (tags must partition the boundary)")
        open_edges = np.flatnonzero(counts == 1)
        if open_edges.size != bnd_ids.size:
            raise MeshValidationError(
                "non-conforming triangulation: hanging vertex or untagged boundary edge"
            )
        return self

    # ------------------------------------------------------------------
    # Geometry
    # ------------------------------------------------------------------

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        return np.abs(self.signed_areas())

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """(nt, 3, 2) constant gradients of the barycentric coordinates."""
        p = self.vertices[self.triangles]
        area2 = 2.0 * self.signed_areas()
        grads = np.empty((self.num_triangles, 3, 2))
        for k, (i, j) in enumerate(LOCAL_EDGES):
            edge = p[:, j] - p[:, i]
            grads[:, k, 0] = -edge[:, 1] / area2
            grads[:, k, 1] = edge[:, 0] / area2
        return grads

    def cell_sizes(self) -> np.ndarray:
        """Triangle diameters in the maximum norm (largest axis-aligned extent)."""
        p = self.vertices[self.triangles]
        extent = p.max(axis=1) - p.min(axis=1)
        return extent.max(axis=1)

    def total_area(self) -> float:
        return float(self.triangle_areas.sum())

    # ------------------------------------------------------------------
    # Edges
    # ------------------------------------------------------------------

    @cached_property
    def _edge_table(self):
        local = self.triangles[:, LOCAL_EDGES].reshape(-1, 2)
        local = np.sort(local, axis=1)
        edges, inverse = np.unique(local, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1)

    @property
    def edges(self) -> np.ndarray:
        """(ne, 2) unique edges, vertex pairs sorted ascending."""
        return self._edge_table[0]

    @property
    def edge_inverse(self) -> np.ndarray:
        return self._edge_table[1]

    @cached_property
    def triangle_edges(self) -> np.ndarray:
        """(nt, 3) global edge index of local edge k (opposite local vertex k)."""
        return self.edge_inverse.reshape(-1, 3)

    def _lookup_edges(self, pairs: np.ndarray):
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        nv = max(self.num_vertices, 1)
        keys = self.edges[:, 0] * nv + self.edges[:, 1]
        query = pairs[:, 0] * nv + pairs[:, 1]
        pos = np.searchsorted(keys, query)
        pos = np.clip(pos, 0, max(keys.size - 1, 0))
        found = keys[pos] == query if keys.size else np.zeros(query.size, bool)
        return pos, found

    @cached_property
    def boundary_edge_ids(self) -> np.ndarray:
        ids, found = self._lookup_edges(self.boundary_edges)
        if not np.all(found):
            raise MeshValidationError("boundary edge does not belong to any triangle")
        return ids

    @cached_property
    def boundary_normals(self) -> np.ndarray:
        """(nb, 2) outward unit normals of the boundary edges."""
        ids = self.boundary_edge_ids
        owner = np.zeros(self.edges.shape[0], dtype=np.int64)
        owner[self.edge_inverse] = np.repeat(np.arange(self.num_triangles), 3)
        tri = owner[ids]
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        t = b - a
        n = np.column_stack([t[:, 1], -t[:, 0]])
        n /= np.linalg.norm(n, axis=1)[:, None]
        inward = self.centroids[tri] - a
        flip = np.einsum('ij,ij->i', n, inward) > 0
        n[flip] *= -1.0
        return n

    def boundary_edge_lengths(self) -> np.ndarray:
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        return np.linalg.norm(b - a, axis=1)

    def edges_with_tag(self, name: str) -> np.ndarray:
        """Indices into boundary_edges carrying the given tag."""
        return np.flatnonzero(np.asarray(self.boundary_tags, dtype=object) == name)

    def vertices_with_tag(self, name: str) -> np.ndarray:
        return np.unique(self.boundary_edges[self.edges_with_tag(name)])

    # ------------------------------------------------------------------
    # Regions and point location
    # ------------------------------------------------------------------

    def region_mask(self, labels: Sequence[int]) -> np.ndarray:
        """Boolean per-triangle mask of the given region labels."""
        return np.isin(self.region_id, np.asarray(list(labels), dtype=np.int64))

    @cached_property
    def _locator(self):
        p = self.vertices[self.triangles]
        t = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        return cKDTree(self.centroids), np.linalg.inv(t), p[:, 0]

    def locate(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """
        Find the triangle containing each point.

        Args:
            points: (n, 2) coordinates.

        Returns:
            (triangle index per point, -1 outside the mesh; (n, 3) barycentric coordinates)
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tree, inv, origin = self._locator
        n = points.shape[0]
        tri = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        if n == 0:
            return tri, bary
        k = min(8, self.num_triangles)
        _, candidates = tree.query(points, k=k)
        candidates = np.asarray(candidates).reshape(n, k)
        tol = -1e-12
        for col in range(k):
            todo = np.flatnonzero(tri < 0)
            if todo.size == 0:
                break
            c = candidates[todo, col]
            lam = np.einsum('nij,nj->ni', inv[c], points[todo] - origin[c])
            full = np.column_stack([1.0 - lam.sum(axis=1), lam])
            inside = np.all(full >= tol, axis=1)
            tri[todo[inside]] = c[inside]
            bary[todo[inside]] = full[inside]
        for idx in np.flatnonzero(tri < 0):
            lam = np.einsum('nij,nj->ni', inv, points[idx] - origin)
            full = np.column_stack([1.0 - lam.sum(axis=1), lam])
            hits = np.flatnonzero(np.all(full >= tol, axis=1))
            if hits.size:
                tri[idx] = hits[0]
                bary[idx] = full[hits[0]]
        return tri, bary

    def interpolate_p1(self, values: np.ndarray, points) -> np.ndarray:
        """Evaluate a nodal piecewise-linear field at points (0 outside the mesh)."""
        tri, bary = self.locate(points)
        out = np.zeros(tri.shape[0])
        inside = tri >= 0
        out[inside] = np.einsum('ni,ni->n', np.asarray(values)[self.triangles[tri[inside]]], bary[inside])
        return out
