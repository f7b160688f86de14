"""
Residual and exact Jacobian of the discrete shallow-water equations.

Unknown vector layout: ``[u_x (P2), u_y (P2), eta (P1)]``.

Momentum, tested with every P2 basis function N_i::

    (u - u_old)/dt N_i + (u . grad u) N_i + nu grad u : grad N_i
        + g grad(eta) N_i + (c_b + c_t)/H |u| u N_i

Continuity, tested with every P1 basis function L_i::

    (eta - eta_old)/dt L_i - H u . grad L_i      (+ H u.n L_i on Dirichlet edges)

with H = h + eta (h alone in fixed-depth mode) and |u| smoothed as
sqrt(u.u + eps^2). Steady assembly drops the time-derivative terms.
Dirichlet rows are replaced by ``x_D - g`` and identity rows.
"""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from tidalfarm.mesh.geometry import Mesh
from tidalfarm.shallow_water.models import (
    ETA_DIRICHLET, FREE_SLIP, VELOCITY_DIRICHLET, FlowState,
    ParameterError, PhysicalParams, SolverSettings, as_boundary_set,
)
from tidalfarm.shallow_water.spaces import (
    EDGE_POINTS, EDGE_WEIGHTS, QUAD_POINTS, batched_outer, edge_p1_values, edge_p2_values,
    function_spaces,
)

logger = logging.getLogger(__name__)

_EDGE_P2 = edge_p2_values(EDGE_POINTS)
_EDGE_P1 = edge_p1_values(EDGE_POINTS)


def _block_indices(rows: np.ndarray, cols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a, b = rows.shape[1], cols.shape[1]
    return np.repeat(rows, b, axis=1).ravel(), np.tile(cols, (1, a)).ravel()


class ShallowWaterForm:
    """
    Discrete shallow-water operator for one mesh, parameter set and friction field.

    Args:
        mesh:      Validated mesh.
        physical:  Physical constants and depth at rest.
        bcs:       One prescription per boundary tag.
        friction:  Nodal turbine friction c_t on the mesh vertices (None for zero).
        settings:  Smoothing and fixed-depth switches.
        dt:        Time step; None assembles the steady equations.
    """

    def __init__(self, mesh: Mesh, physical: PhysicalParams, bcs, friction=None,
                 settings: SolverSettings = None, dt: Optional[float] = None):
        self.mesh = mesh
        self.spaces = function_spaces(mesh)
        self.physical = physical
        self.bcs = as_boundary_set(bcs)
        self.settings = settings or SolverSettings()
        self.dt = dt

        problems = physical.errors() + self.settings.errors() + self.bcs.errors(mesh)
        if problems:
            raise ParameterError('; '.join(problems))

        n1 = self.spaces.n1
        self.depth = physical.depth_on(mesh)
        friction = np.zeros(n1) if friction is None else np.asarray(friction, dtype=float)
        if friction.shape != (n1,):
            raise ParameterError(f"friction field has {friction.size} values, expected {n1}")
        if np.any(friction < 0) or not np.all(np.isfinite(friction)):
            raise ParameterError("friction field must be finite and non-negative")
        self.friction = friction

        self._depth_q = self.spaces.p1_at_quadrature(self.depth)
        self._drag_q = physical.background_friction + self.spaces.p1_at_quadrature(friction)
        self._setup_boundary()
        self._setup_pattern()

    # ------------------------------------------------------------------
    # Boundary data
    # ------------------------------------------------------------------

    def _setup_boundary(self):
        mesh, spaces = self.mesh, self.spaces
        n2, nv = spaces.n2, mesh.num_vertices
        owner = np.full(spaces.size, -1, dtype=np.int64)
        entries = []
        for tag, bc in self.bcs.conditions.items():
            edge_idx = mesh.edges_with_tag(tag)
            if bc.kind == VELOCITY_DIRICHLET:
                p2 = np.unique(np.concatenate([mesh.boundary_edges[edge_idx].ravel(),
                                               nv + mesh.boundary_edge_ids[edge_idx]]))
                for component, offset in ((0, 0), (1, n2)):
                    owner[offset + p2] = len(entries)
                    entries.append((tag, component))
            elif bc.kind == ETA_DIRICHLET:
                owner[spaces.eta_offset + np.unique(mesh.boundary_edges[edge_idx])] = len(entries)
                entries.append((tag, 0))
        self.dirichlet_dofs = np.flatnonzero(owner >= 0)
        self._dirichlet_owner = owner[self.dirichlet_dofs]
        self._dirichlet_entries = entries
        self.free_mask = owner < 0

        tags = np.asarray(mesh.boundary_tags, dtype=object)
        kinds = np.array([self.bcs[t].kind for t in tags], dtype=object) if tags.size else tags
        open_edges = np.flatnonzero(kinds != FREE_SLIP) if tags.size else np.zeros(0, dtype=np.int64)
        self._edge_tags = tags[open_edges]
        self._edge_kinds = kinds[open_edges]
        self._edge_p1 = mesh.boundary_edges[open_edges]
        self._edge_p2 = np.column_stack([self._edge_p1, nv + mesh.boundary_edge_ids[open_edges]]) \
            if open_edges.size else np.zeros((0, 3), dtype=np.int64)
        self._edge_normals = mesh.boundary_normals[open_edges]
        self._edge_weights = mesh.boundary_edge_lengths()[open_edges, None] * EDGE_WEIGHTS[None, :]
        self._edge_depth = self.depth[self._edge_p1] @ _EDGE_P1.T

    @property
    def depth_at_quadrature(self) -> np.ndarray:
        return self._depth_q

    @property
    def drag_at_quadrature(self) -> np.ndarray:
        """c_b + c_t at the triangle quadrature points."""
        return self._drag_q

    def open_edge_data(self):
        """(P1 dofs, P2 dofs, outward normals, quadrature weights) of non-free-slip edges."""
        return self._edge_p1, self._edge_p2, self._edge_normals, self._edge_weights

    def dirichlet_values(self, t: float) -> np.ndarray:
        values = np.array([self.bcs[tag].at(t)[component]
                           for tag, component in self._dirichlet_entries])
        return values[self._dirichlet_owner] if values.size else np.zeros(0)

    def lift(self, vector: np.ndarray, t: float) -> np.ndarray:
        """Copy of ``vector`` with the Dirichlet data at time t imposed."""
        out = np.array(vector, dtype=float)
        out[self.dirichlet_dofs] = self.dirichlet_values(t)
        return out

    # ------------------------------------------------------------------
    # Sparsity pattern
    # ------------------------------------------------------------------

    def _setup_pattern(self):
        spaces = self.spaces
        d2, d1 = spaces.p2_dofs, spaces.p1_dofs
        ox, oy, oe = 0, spaces.n2, spaces.eta_offset
        blocks = [
            (ox + d2, ox + d2), (ox + d2, oy + d2), (ox + d2, oe + d1),
            (oy + d2, ox + d2), (oy + d2, oy + d2), (oy + d2, oe + d1),
            (oe + d1, ox + d2), (oe + d1, oy + d2), (oe + d1, oe + d1),
        ]
        e2, e1 = self._edge_p2, self._edge_p1
        blocks += [(oe + e1, ox + e2), (oe + e1, oy + e2), (oe + e1, oe + e1)]
        rows, cols = zip(*(_block_indices(r, c) for r, c in blocks))
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)

    # ------------------------------------------------------------------
    # Assembly
    # ------------------------------------------------------------------

    def _split(self, vector: np.ndarray):
        n2 = self.spaces.n2
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.spaces.size,):
            raise ParameterError(f"state vector has {vector.size} entries, expected {self.spaces.size}")
        return vector[:n2], vector[n2:2 * n2], vector[2 * n2:]

    def _edge_terms(self, ux, uy, eta, want_jacobian: bool, edge_mask=None):
        p2, p1 = self._edge_p2, self._edge_p1
        normals, weights = self._edge_normals, self._edge_weights
        if edge_mask is not None:
            weights = weights * edge_mask[:, None]
        ue = np.stack([ux[p2] @ _EDGE_P2.T, uy[p2] @ _EDGE_P2.T], axis=-1)
        depth = self._edge_depth.copy()
        if not self.settings.fixed_depth:
            depth = depth + eta[p1] @ _EDGE_P1.T
        un = np.einsum('eqc,ec->eq', ue, normals)
        residual = (weights * depth * un) @ _EDGE_P1
        if not want_jacobian:
            return residual, None
        psi = np.broadcast_to(_EDGE_P1, weights.shape + (2,))
        phi = np.broadcast_to(_EDGE_P2, weights.shape + (3,))
        blocks = [batched_outer((weights * depth * normals[:, None, c])[..., None] * psi, phi)
                  for c in (0, 1)]
        if self.settings.fixed_depth:
            blocks.append(np.zeros((p1.shape[0], 2, 2)))
        else:
            blocks.append(batched_outer((weights * un)[..., None] * psi, psi))
        return residual, blocks

    def assemble(self, vector: np.ndarray, previous: Optional[np.ndarray] = None,
                 t: float = 0.0, constrain: bool = True, want_jacobian: bool = True,
                 edge_kinds: Sequence[str] = (VELOCITY_DIRICHLET, ETA_DIRICHLET)):
        """
        Residual (and Jacobian) at ``vector``.

        Args:
            vector:        Current unknown vector.
            previous:      Unknowns of the previous time level (transient only).
            t:             Time at which Dirichlet data are evaluated.
            constrain:     Replace Dirichlet rows by ``x_D - g`` / identity rows.
            want_jacobian: Also assemble the sparse Jacobian.
            edge_kinds:    Boundary kinds whose H u.n edge integral is included.

        Returns:
            (residual, Jacobian or None)
        """
        spaces, phys = self.spaces, self.physical
        nu, g = phys.viscosity, phys.gravity
        eps2 = self.settings.velocity_smoothing ** 2
        transient = self.dt is not None and previous is not None
        inv_dt = 1.0 / self.dt if transient else 0.0

        ux, uy, eta = self._split(vector)
        d2, d1 = spaces.p2_dofs, spaces.p1_dofs
        N, L = spaces.p2_basis, QUAD_POINTS
        dN, G, w = spaces.p2_gradients, spaces.p1_gradients, spaces.weights
        nt, nq = w.shape

        U = np.stack([ux[d2], uy[d2]], axis=-1)
        u = np.einsum('qj,tjc->tqc', N, U)
        grad_u = np.einsum('tqjd,tjc->tqcd', dN, U)
        eta_local = eta[d1]
        eta_q = eta_local @ L.T
        grad_eta = np.einsum('tkd,tk->td', G, eta_local)
        depth = self._depth_q if self.settings.fixed_depth else self._depth_q + eta_q
        if np.any(depth <= 0):
            raise ParameterError("total depth h + eta became non-positive")
        speed = np.sqrt(u[..., 0] ** 2 + u[..., 1] ** 2 + eps2)
        drag = self._drag_q
        fric = drag * speed / depth
        advection = np.einsum('tqd,tqcd->tqc', u, grad_u)

        momentum = advection + g * grad_eta[:, None, :] + fric[..., None] * u
        continuity_time = np.zeros((nt, nq))
        if transient:
            prev_x, prev_y, prev_eta = self._split(previous)
            u_old = np.einsum('qj,tjc->tqc', N, np.stack([prev_x[d2], prev_y[d2]], axis=-1))
            momentum = momentum + inv_dt * (u - u_old)
            continuity_time = inv_dt * (eta_q - prev_eta[d1] @ L.T)

        res_mom = np.einsum('tqc,qi->tic', w[..., None] * momentum, N)
        res_mom += nu * np.einsum('tqcd,tqid->tic', w[..., None, None] * grad_u, dN)
        res_con = (w * continuity_time) @ L - np.einsum('tq,tqd,tid->ti', w * depth, u, G)

        edge_mask = np.isin(self._edge_kinds, list(edge_kinds)).astype(float) \
            if self._edge_kinds.size else np.zeros(0)
        res_edge, edge_blocks = self._edge_terms(ux, uy, eta, want_jacobian, edge_mask)

        n2, size = spaces.n2, spaces.size
        residual = np.concatenate([
            np.bincount(d2.ravel(), weights=res_mom[..., 0].ravel(), minlength=n2),
            np.bincount(d2.ravel(), weights=res_mom[..., 1].ravel(), minlength=n2),
            np.bincount(d1.ravel(), weights=res_con.ravel(), minlength=spaces.n1),
        ])
        if self._edge_p1.size:
            residual[spaces.eta_offset:] += np.bincount(
                self._edge_p1.ravel(), weights=res_edge.ravel(), minlength=spaces.n1)

        jacobian = None
        if want_jacobian:
            Nb = np.broadcast_to(N, (nt, nq, 6))
            Lb = np.broadcast_to(L, (nt, nq, 3))

            def p2p2(coef):
                return batched_outer((w * coef)[..., None] * Nb, Nb)

            adv_basis = np.einsum('tqd,tqjd->tqj', u, dN)
            common = batched_outer(w[..., None] * Nb, adv_basis)
            for d in (0, 1):
                common += nu * batched_outer(w[..., None] * dN[..., d], dN[..., d])
            lin = drag / depth / speed
            diag = inv_dt + fric
            k_xx = p2p2(diag + grad_u[..., 0, 0] + lin * u[..., 0] ** 2) + common
            k_xy = p2p2(grad_u[..., 0, 1] + lin * u[..., 0] * u[..., 1])
            k_yx = p2p2(grad_u[..., 1, 0] + lin * u[..., 1] * u[..., 0])
            k_yy = p2p2(diag + grad_u[..., 1, 1] + lin * u[..., 1] ** 2) + common

            int_n = w @ N
            k_xe = g * int_n[:, :, None] * G[:, None, :, 0]
            k_ye = g * int_n[:, :, None] * G[:, None, :, 1]
            int_hn = (w * depth) @ N
            k_ex = -G[:, :, 0][:, :, None] * int_hn[:, None, :]
            k_ey = -G[:, :, 1][:, :, None] * int_hn[:, None, :]
            k_ee = inv_dt * batched_outer(w[..., None] * Lb, Lb)
            if not self.settings.fixed_depth:
                dfric = drag * speed / depth ** 2
                k_xe = k_xe - batched_outer((w * dfric * u[..., 0])[..., None] * Nb, Lb)
                k_ye = k_ye - batched_outer((w * dfric * u[..., 1])[..., None] * Nb, Lb)
                u_dot_grad = np.einsum('tqd,tid->tqi', u, G)
                k_ee = k_ee - batched_outer(w[..., None] * u_dot_grad, Lb)

            values = [k_xx, k_xy, k_xe, k_yx, k_yy, k_ye, k_ex, k_ey, k_ee] + edge_blocks
            data = np.concatenate([v.ravel() for v in values])
            jacobian = sp.coo_matrix((data, (self._rows, self._cols)), shape=(size, size)).tocsr()

        if constrain:
            return self.constrain(residual, jacobian, vector, t)
        return residual, jacobian

    def constrain(self, residual: np.ndarray, jacobian, vector: np.ndarray, t: float):
        """Impose Dirichlet rows on an unconstrained residual/Jacobian pair."""
        dofs = self.dirichlet_dofs
        residual = residual.copy()
        residual[dofs] = np.asarray(vector)[dofs] - self.dirichlet_values(t)
        if jacobian is not None:
            free = self.free_mask.astype(float)
            jacobian = (sp.diags(free) @ jacobian + sp.diags(1.0 - free)).tocsr()
        return residual, jacobian

    # ------------------------------------------------------------------
    # Derivatives with respect to the friction field
    # ------------------------------------------------------------------

    def friction_adjoint_action(self, vector: np.ndarray, adjoint: np.ndarray) -> np.ndarray:
        """
        Transposed friction derivative of the residual applied to an adjoint vector.

        Returns, for every vertex j, the integral of L_j |u| (u . lambda_u) / H,
        i.e. (dR/dc_t)^T lambda with lambda zeroed on Dirichlet rows.
        """
        spaces = self.spaces
        lam = np.where(self.free_mask, adjoint, 0.0)
        ux, uy, eta = self._split(vector)
        lx, ly, _ = self._split(lam)
        u_x, u_y = spaces.p2_at_quadrature(ux), spaces.p2_at_quadrature(uy)
        l_x, l_y = spaces.p2_at_quadrature(lx), spaces.p2_at_quadrature(ly)
        depth = self._depth_q if self.settings.fixed_depth else self._depth_q + spaces.p1_at_quadrature(eta)
        speed = np.sqrt(u_x ** 2 + u_y ** 2 + self.settings.velocity_smoothing ** 2)
        return spaces.integrate_against_p1(speed / depth * (u_x * l_x + u_y * l_y))

    # ------------------------------------------------------------------
    # Boundary fluxes
    # ------------------------------------------------------------------

    def boundary_fluxes(self, vector: np.ndarray, previous: Optional[np.ndarray] = None) -> dict:
        """
        Outward volume flux (m^3/s) through every boundary tag.

        Velocity-Dirichlet tags report the edge integral of H u.n. Elevation
        tags report the reaction flux: minus the continuity residual (without
        their own edge term) summed over the tag's vertices, which balances the
        discrete equations exactly. Free-slip tags carry no flux.
        """
        spaces, mesh = self.spaces, self.mesh
        ux, uy, eta = self._split(vector)
        direct, _ = self._edge_terms(ux, uy, eta, False)
        reaction, _ = self.assemble(vector, previous, constrain=False, want_jacobian=False,
                                    edge_kinds=(VELOCITY_DIRICHLET,))
        reaction = reaction[spaces.eta_offset:]
        fluxes = {}
        for tag in mesh.tag_names:
            kind = self.bcs[tag].kind
            if kind == VELOCITY_DIRICHLET:
                fluxes[tag] = float(direct[self._edge_tags == tag].sum())
            elif kind == ETA_DIRICHLET:
                fluxes[tag] = float(-reaction[mesh.vertices_with_tag(tag)].sum())
            else:
                fluxes[tag] = 0.0
        return fluxes


def assemble_residual_and_jacobian(form: ShallowWaterForm, state: FlowState,
                                   previous_state: Optional[FlowState] = None,
                                   constrain: bool = True):
    """Residual vector and sparse Jacobian of ``form`` at ``state``."""
    previous = previous_state.vector if previous_state is not None else None
    return form.assemble(state.vector, previous, t=state.time, constrain=constrain)
