"""
Term-by-term assembly of the discrete adjoint shallow-water operator.

Rows are the test functions (Psi, Phi), columns the adjoint unknowns
(lambda_u, lambda_eta); the unknown layout matches the forward solver.
Each block below is one term of the adjoint weak form::

    momentum:   <lambda_u / dt, Psi> + <lambda_u, Psi . grad u> + <lambda_u, u . grad Psi>
                + nu <grad lambda_u, grad Psi> - <H grad lambda_eta, Psi>
                + <H lambda_eta, Psi . n>_open
                + <(c/H) (|u| Psi + (u . Psi)/|u| u), lambda_u>
    continuity: <lambda_eta / dt, Phi> + g <lambda_u, grad Phi> - <grad lambda_eta, Phi u>
                + <lambda_eta, Phi u . n>_open - <(c/H^2) Phi |u| u, lambda_u>

It is written independently of the forward Jacobian and serves to check it.
"""
from typing import Optional

import numpy as np
import scipy.sparse as sp

from tidalfarm.shallow_water.assembly import ShallowWaterForm
from tidalfarm.shallow_water.spaces import (
    EDGE_POINTS, QUAD_POINTS, batched_outer, edge_p1_values, edge_p2_values,
)


def _scatter(rows: np.ndarray, cols: np.ndarray, local: np.ndarray, size: int) -> sp.csr_matrix:
    a, b = rows.shape[1], cols.shape[1]
    r = np.repeat(rows, b, axis=1).ravel()
    c = np.tile(cols, (1, a)).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=(size, size)).tocsr()


def assemble_printed_adjoint_operator(form: ShallowWaterForm, vector: np.ndarray,
                                      transient: Optional[bool] = None) -> sp.csr_matrix:
    """
    Unconstrained adjoint operator at the state ``vector``.

    Args:
        form:      Forward form (fixes mesh, parameters, friction and dt).
        vector:    Forward unknown vector of the level.
        transient: Include the 1/dt terms; defaults to ``form.dt is not None``.
    """
    if form.settings.fixed_depth:
        raise ValueError("the adjoint form is written for the total-depth equations")
    spaces, phys = form.spaces, form.physical
    transient = form.dt is not None if transient is None else transient
    inv_dt = 1.0 / form.dt if transient else 0.0
    n2, size = spaces.n2, spaces.size
    vector = np.asarray(vector, dtype=float)
    ux, uy, eta = vector[:n2], vector[n2:2 * n2], vector[2 * n2:]

    d2, d1 = spaces.p2_dofs, spaces.p1_dofs
    N, L = spaces.p2_basis, QUAD_POINTS
    dN, G, w = spaces.p2_gradients, spaces.p1_gradients, spaces.weights
    nt, nq = w.shape
    Nb = np.broadcast_to(N, (nt, nq, 6))
    Lb = np.broadcast_to(L, (nt, nq, 3))

    U = np.stack([ux[d2], uy[d2]], axis=-1)
    u = np.einsum('qj,tjc->tqc', N, U)
    grad_u = np.einsum('tqjd,tjc->tqcd', dN, U)
    H = form.depth_at_quadrature + eta[d1] @ L.T
    s = np.sqrt(u[..., 0] ** 2 + u[..., 1] ** 2 + form.settings.velocity_smoothing ** 2)
    c = form.drag_at_quadrature

    offsets = (0, n2)
    oe = spaces.eta_offset
    pieces = []

    # Momentum rows: test Psi = N_i e_a, adjoint lambda_u = N_j e_b.
    time_mass = batched_outer((w * inv_dt)[..., None] * Nb, Nb)
    u_grad_test = np.einsum('tqd,tqid->tqi', u, dN)
    transport = batched_outer(w[..., None] * u_grad_test, Nb)
    diffusion = sum(phys.viscosity * batched_outer(w[..., None] * dN[..., d], dN[..., d]) for d in (0, 1))
    for a in (0, 1):
        for b in (0, 1):
            # <lambda_u, Psi . grad u>: (Psi . grad u)_b = N_i d_a u_b
            coef = grad_u[..., b, a]
            coef = coef + c / H * (u[..., a] * u[..., b] / s + (s if a == b else 0.0))
            block = batched_outer((w * coef)[..., None] * Nb, Nb)
            if a == b:
                block = block + time_mass + transport + diffusion
            pieces.append(_scatter(offsets[a] + d2, offsets[b] + d2, block, size))
        # -<H grad lambda_eta, Psi>
        int_hn = (w * H) @ N
        block = -int_hn[:, :, None] * G[:, None, :, a]
        pieces.append(_scatter(offsets[a] + d2, oe + d1, block, size))

    # Continuity rows: test Phi = L_i.
    for b in (0, 1):
        # g <lambda_u, grad Phi>
        block = phys.gravity * G[:, :, b][:, :, None] * (w @ N)[:, None, :]
        # -<(c/H^2) Phi |u| u, lambda_u>
        block = block - batched_outer((w * c * s * u[..., b] / H ** 2)[..., None] * Lb, Nb)
        pieces.append(_scatter(oe + d1, offsets[b] + d2, block, size))
    # <lambda_eta/dt, Phi> - <grad lambda_eta, Phi u>
    u_dot_grad = np.einsum('tqd,tkd->tqk', u, G)
    block = batched_outer((w * inv_dt)[..., None] * Lb, Lb) - batched_outer(w[..., None] * Lb, u_dot_grad)
    pieces.append(_scatter(oe + d1, oe + d1, block, size))

    # Open boundary terms.
    p1, p2, normals, weights = form.open_edge_data()
    if p1.size:
        psi_q = edge_p1_values(EDGE_POINTS)
        phi_q = edge_p2_values(EDGE_POINTS)
        psi = np.broadcast_to(psi_q, weights.shape + (2,))
        phi = np.broadcast_to(phi_q, weights.shape + (3,))
        ue = np.stack([ux[p2] @ phi_q.T, uy[p2] @ phi_q.T], axis=-1)
        He = form.depth[p1] @ psi_q.T + eta[p1] @ psi_q.T
        un = np.einsum('eqc,ec->eq', ue, normals)
        for a in (0, 1):
            # <H lambda_eta, Psi . n>
            block = batched_outer((weights * He * normals[:, None, a])[..., None] * phi, psi)
            pieces.append(_scatter(offsets[a] + p2, oe + p1, block, size))
        # <lambda_eta, Phi u . n>
        block = batched_outer((weights * un)[..., None] * psi, psi)
        pieces.append(_scatter(oe + p1, oe + p1, block, size))

    return sum(pieces[1:], pieces[0]).tocsr()
