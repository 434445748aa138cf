"""Nonlinear residual of one implicit transport step (or its steady limit).

Transient, gradually lumped mass:
    T(u) = M(u)(u - u_old)/dt + [F(u) + B(u)] u - g
Transient, constant mass with mass-compensated viscosity:
    T(u) = M (u - u_old)/dt + [F(u) + B~(u)] u - g
Steady:
    T(u) = [F(u) + B(u)] u - g

Inflow rows are replaced strongly: row i of the operator becomes the identity
and the residual entry u_i - u_D(x_i).  The Jacobian is exact for the smooth
detector variants, including the detector chain rule through the regularized
maxima and the state dependence of the transport operator; its sparsity
extends to the distance-2 adjacency because every detector value depends on
the whole neighborhood.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import stabilization as stab
from .assembly import (SparseOperator, assemble_convection,
                       assemble_convection_state_derivative, assemble_mass,
                       convection_entry_derivative_tensor, pattern)


class SingularSystemError(RuntimeError):
    """The inner linear solve hit a (numerically) singular operator."""


@dataclass(frozen=True)
class AdmissibleBounds:
    """Global bounds from the extrema of initial and inflow data."""

    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")


@dataclass(frozen=True)
class DirichletBC:
    nodes: np.ndarray
    values: np.ndarray


def solve_linear(A, b):
    """Direct sparse solve; raises SingularSystemError on breakdown."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(A.tocsc(), b)
        except (spla.MatrixRankWarning, RuntimeError, ValueError) as exc:
            raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("linear solve produced non-finite values")
    return x


class ResidualSystem:
    """Assembles A(u), G, T(u) and the exact Jacobian for one solve."""

    def __init__(self, mesh, velocity, params, g=None, dirichlet=None,
                 dt=None, u_old=None, bounds=None, freeze_mass_alpha=False):
        if dt is not None and dt <= 0:
            raise ValueError("dt must be positive")
        self.mesh = mesh
        self.velocity = velocity
        self.params = params
        self.dt = dt
        self.u_old = None if u_old is None else np.asarray(u_old, dtype=float)
        if dt is not None and self.u_old is None:
            raise ValueError("transient systems need the previous state")
        self.bounds = bounds
        self.freeze_mass_alpha = freeze_mass_alpha

        self.pattern = pattern(mesh)
        self.n = mesh.n_nodes
        self.mass = assemble_mass(mesh)
        self.lumped = self.mass.row_sums()
        self.g = np.zeros(self.n) if g is None else np.asarray(g, dtype=float)

        if dirichlet is None:
            dirichlet = DirichletBC(np.empty(0, dtype=np.int64), np.empty(0))
        self.dirichlet = dirichlet
        free = np.ones(self.n)
        free[dirichlet.nodes] = 0.0
        self._free = free
        self._dir_ind = 1.0 - free

        self._F_linear = assemble_convection(mesh, velocity, np.zeros(self.n)) \
            if velocity.is_linear else None

    # ------------------------------------------------------------------

    @property
    def steady(self):
        return self.dt is None

    def convection(self, u):
        if self._F_linear is not None:
            return self._F_linear
        return assemble_convection(self.mesh, self.velocity, u)

    def alphas(self, u):
        return stab.detector_values(self.mesh, u, self.params)

    def _viscous_operator(self, F, alphas):
        """B (or B~) for the configured mass treatment."""
        if self.params.detector == stab.GALERKIN:
            return SparseOperator.zeros(self.pattern)
        if not self.steady and self.params.mass == stab.SYMMETRIC_MASS:
            nu = stab.viscosity_symmetric_mass(self.mesh, F, self.mass,
                                               alphas, self.dt, self.params)
        else:
            nu = stab.viscosity(self.mesh, F, alphas, self.params)
        return stab.assemble_B(self.mesh, nu)

    def _mass_operator(self, alphas):
        if self.params.detector == stab.GALERKIN or \
                self.params.mass == stab.SYMMETRIC_MASS:
            return self.mass
        return stab.assemble_nonlinear_mass(self.mesh, self.mass,
                                            self.lumped, alphas)

    def assemble_operator(self, u):
        """Fixed-point operator and right side: A(u) u_next = G(u)."""
        u = np.asarray(u, dtype=float)
        F = self.convection(u)
        alphas = self.alphas(u)
        B = self._viscous_operator(F, alphas)
        K = (F + B).to_csr()
        if self.steady:
            A, G = K, self.g.copy()
        else:
            M = self._mass_operator(alphas).to_csr()
            A = M / self.dt + K
            G = self.g + (M @ self.u_old) / self.dt
        A = (sp.diags(self._free) @ A + sp.diags(self._dir_ind)).tocsr()
        G[self.dirichlet.nodes] = self.dirichlet.values
        return A, G

    def residual(self, u):
        """T(u); Dirichlet rows carry u_i - u_D."""
        A, G = self.assemble_operator(u)
        return A @ np.asarray(u, dtype=float) - G

    def picard_solve(self, u):
        """One fixed-point sweep: solve A(u) u_next = G."""
        A, G = self.assemble_operator(u)
        return solve_linear(A, G)

    def rhs_scale(self):
        """Norm of the assembled right side, for relative residual checks."""
        u0 = self.u_old if self.u_old is not None else np.zeros(self.n)
        _, G = self.assemble_operator(u0)
        return float(np.linalg.norm(G))

    # ------------------------------------------------------------------
    # exact Jacobian
    # ------------------------------------------------------------------

    def jacobian(self, u):
        if self.params.detector == stab.GALERKIN:
            return self._finish_jacobian(self._galerkin_jacobian(u))
        if not self.params.is_smooth:
            raise ValueError(
                "the exact Jacobian needs a smooth detector variant")
        u = np.asarray(u, dtype=float)
        pat = self.pattern
        alphas, dalpha = stab.detector_derivative(self.mesh, u, self.params)
        F = self.convection(u)
        J = F.to_csr()
        Fp = assemble_convection_state_derivative(self.mesh, self.velocity, u)
        J = J + Fp.to_csr()

        du_edge = u[pat.edge_rows] - u[pat.edge_cols]

        # viscosity from the transport operator
        a = alphas[pat.edge_rows] * F.data[pat.edge_pos]
        b = alphas[pat.edge_cols] * F.data[pat.edge_transpose_pos]
        nu_edge = stab.smooth_max(stab.smooth_max(a, b, self.params.sigma),
                                  0.0, self.params.sigma)
        w_a, w_b = stab.viscosity_chain_weights(a, b, self.params.sigma, True)
        p_off = du_edge * w_b * F.data[pat.edge_transpose_pos]
        p_diag = np.bincount(pat.edge_rows,
                             weights=du_edge * w_a * F.data[pat.edge_pos],
                             minlength=self.n)
        W1 = du_edge * w_a * alphas[pat.edge_rows]
        W2 = du_edge * w_b * alphas[pat.edge_cols]

        # mass-compensated extra viscosity
        symmetric_mass = (not self.steady
                          and self.params.mass == stab.SYMMETRIC_MASS)
        if symmetric_mass:
            # smooth maxes act on alpha_i M_ij; the 1/dt factor sits outside,
            # exactly as in the assembled viscosity
            am = alphas[pat.edge_rows] * self.mass.data[pat.edge_pos]
            bm = alphas[pat.edge_cols] * self.mass.data[pat.edge_transpose_pos]
            nu_edge = nu_edge + stab.smooth_max(
                stab.smooth_max(am, bm, self.params.sigma), 0.0,
                self.params.sigma) / self.dt
            wm_a, wm_b = stab.viscosity_chain_weights(
                am, bm, self.params.sigma, True)
            p_off = p_off + du_edge * wm_b * \
                self.mass.data[pat.edge_transpose_pos] / self.dt
            p_diag = p_diag + np.bincount(
                pat.edge_rows,
                weights=du_edge * wm_a * self.mass.data[pat.edge_pos] / self.dt,
                minlength=self.n)

        B = stab.assemble_B(self.mesh, _operator_from_edges(pat, nu_edge))
        J = J + B.to_csr()

        p_data = np.zeros(pat.nnz)
        p_data[pat.edge_pos] = p_off
        p_data[pat.diag_pos] = p_diag[pat.rows[pat.diag_pos]]
        P = SparseOperator(pat, p_data).to_csr()
        J = J + P @ dalpha

        # state dependence of F inside the viscosity (nonlinear flux only)
        T3 = convection_entry_derivative_tensor(self.mesh, self.velocity, u)
        if T3 is not None:
            J = J + self._viscosity_flux_term(W1, W2, T3)

        # time term
        if not self.steady:
            du = u - self.u_old
            if symmetric_mass:
                J = J + self.mass.to_csr() / self.dt
            else:
                Mb = stab.assemble_nonlinear_mass(self.mesh, self.mass,
                                                  self.lumped, alphas)
                J = J + Mb.to_csr() / self.dt
                if not self.freeze_mass_alpha:
                    wvec = (self.lumped * du - self.mass.matvec(du)) / self.dt
                    J = J + sp.diags(wvec) @ dalpha
        return self._finish_jacobian(J)

    def _galerkin_jacobian(self, u):
        u = np.asarray(u, dtype=float)
        F = self.convection(u)
        Fp = assemble_convection_state_derivative(self.mesh, self.velocity, u)
        J = F.to_csr() + Fp.to_csr()
        if not self.steady:
            J = J + self.mass.to_csr() / self.dt
        return J

    def _viscosity_flux_term(self, W1, W2, T3):
        """Rows sum_j du_ij [w_a alpha_i dF_ij/du + w_b alpha_j dF_ji/du]."""
        pat = self.pattern
        w1_data = np.zeros(pat.nnz)
        w1_data[pat.edge_pos] = W1
        w2_data = np.zeros(pat.nnz)
        w2_data[pat.edge_pos] = W2
        emap = pat.element_map
        W1e = w1_data[emap]            # (ne, nloc, nloc)
        W2e = w2_data[emap]
        contrib = np.einsum("eab,eabc->eac", W1e, T3)
        contrib += np.einsum("eab,ebac->eac", W2e, T3)
        conn = self.mesh.elements
        nloc = conn.shape[1]
        rows = np.repeat(conn, nloc, axis=1).ravel()
        cols = np.tile(conn, (1, nloc)).ravel()
        return sp.coo_matrix((contrib.ravel(), (rows, cols)),
                             shape=(self.n, self.n)).tocsr()

    def _finish_jacobian(self, J):
        return (sp.diags(self._free) @ J + sp.diags(self._dir_ind)).tocsr()


def _operator_from_edges(pat, edge_vals):
    data = np.zeros(pat.nnz)
    data[pat.edge_pos] = edge_vals
    diag = np.bincount(pat.edge_rows, weights=edge_vals, minlength=pat.n)
    data[pat.diag_pos] = diag[pat.rows[pat.diag_pos]]
    return SparseOperator(pat, data)
