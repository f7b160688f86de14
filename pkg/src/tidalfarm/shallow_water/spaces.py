"""
Quadratic/linear (Taylor-Hood) finite-element spaces on a Mesh.

P2 degrees of freedom are numbered vertices first, then one per mesh edge
(the edge midpoint). Local P2 node 3+k sits on local edge k, the edge
opposite local vertex k. P1 degrees of freedom are the mesh vertices.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from tidalfarm.mesh.geometry import Mesh

# Symmetric 12-point rule on the reference triangle, exact for degree 6.
# Weights are relative to the triangle area.
_DUNAVANT_ORBITS = (
    (0.116786275726379, (0.501426509658179, 0.249286745170910, 0.249286745170910)),
    (0.050844906370207, (0.873821971016996, 0.063089014491502, 0.063089014491502)),
    (0.082851075618374, (0.053145049844817, 0.310352451033784, 0.636502499121399)),
)


def _triangle_rule():
    points, weights = [], []
    for weight, (a, b, c) in _DUNAVANT_ORBITS:
        orbit = {(a, b, c), (b, c, a), (c, a, b), (a, c, b), (c, b, a), (b, a, c)}
        for p in sorted(orbit):
            points.append(p)
            weights.append(weight)
    return np.array(points), np.array(weights)


QUAD_POINTS, QUAD_WEIGHTS = _triangle_rule()

# 3-point Gauss rule on [0, 1].
EDGE_POINTS = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


def p2_values(bary: np.ndarray) -> np.ndarray:
    """P2 basis values (n, 6) at barycentric points (n, 3)."""
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    return np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ])


def p2_barycentric_derivatives(bary: np.ndarray) -> np.ndarray:
    """dN_i/dL_k, shape (n, 6, 3)."""
    n = bary.shape[0]
    d = np.zeros((n, 6, 3))
    for k in range(3):
        d[:, k, k] = 4 * bary[:, k] - 1
    for k, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        d[:, 3 + k, a] = 4 * bary[:, b]
        d[:, 3 + k, b] = 4 * bary[:, a]
    return d


def edge_p2_values(t: np.ndarray) -> np.ndarray:
    """P2 traces on an edge from vertex a (t=0) to vertex b (t=1): columns a, b, midpoint."""
    return np.column_stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)])


def edge_p1_values(t: np.ndarray) -> np.ndarray:
    return np.column_stack([1 - t, t])


def batched_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sum_q a[t, q, i] * b[t, q, j] -> (t, i, j)."""
    return np.matmul(np.swapaxes(a, 1, 2), b)


@dataclass(frozen=True, eq=False)
class FunctionSpaces:
    """Quadrature data and dof maps shared by every assembly on one mesh."""
    mesh: Mesh

    @property
    def n1(self) -> int:
        return self.mesh.num_vertices

    @property
    def n2(self) -> int:
        return self.mesh.num_vertices + self.mesh.edges.shape[0]

    @property
    def size(self) -> int:
        return 2 * self.n2 + self.n1

    @property
    def eta_offset(self) -> int:
        return 2 * self.n2

    @cached_property
    def p1_dofs(self) -> np.ndarray:
        return self.mesh.triangles

    @cached_property
    def p2_dofs(self) -> np.ndarray:
        return np.hstack([self.mesh.triangles, self.mesh.num_vertices + self.mesh.triangle_edges])

    @cached_property
    def p2_coordinates(self) -> np.ndarray:
        m = self.mesh
        midpoints = m.vertices[m.edges].mean(axis=1)
        return np.vstack([m.vertices, midpoints])

    # ------------------------------------------------------------------
    # Reference data at the triangle quadrature points
    # ------------------------------------------------------------------

    @cached_property
    def weights(self) -> np.ndarray:
        """(nt, Q) quadrature weights in physical units (m^2)."""
        return self.mesh.triangle_areas[:, None] * QUAD_WEIGHTS[None, :]

    @cached_property
    def p1_basis(self) -> np.ndarray:
        return QUAD_POINTS.copy()

    @cached_property
    def p2_basis(self) -> np.ndarray:
        return p2_values(QUAD_POINTS)

    @cached_property
    def p1_gradients(self) -> np.ndarray:
        """(nt, 3, 2), constant per triangle."""
        return self.mesh.barycentric_gradients

    @cached_property
    def p2_gradients(self) -> np.ndarray:
        """(nt, Q, 6, 2)."""
        dn = p2_barycentric_derivatives(QUAD_POINTS)
        return np.einsum('qik,tkd->tqid', dn, self.p1_gradients)

    # ------------------------------------------------------------------
    # Evaluation helpers
    # ------------------------------------------------------------------

    def p1_at_quadrature(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values)[self.p1_dofs] @ QUAD_POINTS.T

    def p2_at_quadrature(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values)[self.p2_dofs] @ self.p2_basis.T

    def p1_cell_gradient(self, values: np.ndarray) -> np.ndarray:
        """(nt, 2) gradient of a P1 field on every triangle."""
        return np.einsum('tkd,tk->td', self.p1_gradients, np.asarray(values)[self.p1_dofs])

    def evaluate_p2(self, values: np.ndarray, points) -> np.ndarray:
        """Evaluate a P2 field at points; 0 outside the mesh."""
        tri, bary = self.mesh.locate(points)
        out = np.zeros(tri.shape[0])
        inside = tri >= 0
        local = np.asarray(values)[self.p2_dofs[tri[inside]]]
        out[inside] = np.einsum('ni,ni->n', local, p2_values(bary[inside]))
        return out

    # ------------------------------------------------------------------
    # Matrices and integrals
    # ------------------------------------------------------------------

    def _scatter(self, dofs: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
        k = dofs.shape[1]
        rows = np.repeat(dofs, k, axis=1).ravel()
        cols = np.tile(dofs, (1, k)).ravel()
        return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    @cached_property
    def p1_mass(self) -> sp.csr_matrix:
        w = self.weights[..., None] * self.p1_basis[None]
        local = batched_outer(w, np.broadcast_to(self.p1_basis, w.shape))
        return self._scatter(self.p1_dofs, local, self.n1)

    @cached_property
    def p2_mass(self) -> sp.csr_matrix:
        w = self.weights[..., None] * self.p2_basis[None]
        local = batched_outer(w, np.broadcast_to(self.p2_basis, w.shape))
        return self._scatter(self.p2_dofs, local, self.n2)

    @cached_property
    def mixed_mass(self) -> sp.csr_matrix:
        """Block diagonal mass of the (u_x, u_y, eta) unknown vector."""
        return sp.block_diag([self.p2_mass, self.p2_mass, self.p1_mass], format='csr')

    @cached_property
    def p1_integrals(self) -> np.ndarray:
        """Integral of every P1 basis function (lumped mass)."""
        return np.bincount(self.p1_dofs.ravel(),
                           weights=np.repeat(self.mesh.triangle_areas / 3.0, 3),
                           minlength=self.n1)

    def integrate(self, values_at_quadrature: np.ndarray, cells: np.ndarray = None) -> float:
        w = self.weights if cells is None else self.weights[cells]
        return float(np.sum(w * values_at_quadrature))

    def integrate_against_p1(self, values_at_quadrature: np.ndarray) -> np.ndarray:
        """Vector of integrals of the quadrature field against every P1 basis function."""
        local = (self.weights * values_at_quadrature) @ QUAD_POINTS
        return np.bincount(self.p1_dofs.ravel(), weights=local.ravel(), minlength=self.n1)

    def integrate_against_p2(self, values_at_quadrature: np.ndarray) -> np.ndarray:
        local = (self.weights * values_at_quadrature) @ self.p2_basis
        return np.bincount(self.p2_dofs.ravel(), weights=local.ravel(), minlength=self.n2)


@lru_cache(maxsize=16)
def function_spaces(mesh: Mesh) -> FunctionSpaces:
    """Return the cached FunctionSpaces of a mesh."""
    return FunctionSpaces(mesh)
