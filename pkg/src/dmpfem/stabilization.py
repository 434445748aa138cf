"""Shock detectors, graph-Laplacian artificial viscosity, and gradual mass
lumping.

Four detector variants are provided.  The two *gradient* detectors compare,
per node, the jump and the mean of directional difference quotients built
from each neighbor and its symmetric point; the two *edge* detectors use
plain nodal differences.  The smooth variants replace absolute values and
maxima with twice-differentiable surrogates so that the assembled operators
admit an exact Jacobian.

At a boundary node whose symmetric point does not exist, the missing value
is replaced by the mirrored ghost value 2 u_i - u_j, so the pair contributes
nothing to the jump but keeps its magnitude in the mean.  A one-sided sum
would flag every boundary node under a monotone normal profile as an
extremum and smear an O(h) band along characteristic boundaries, destroying
second-order convergence on smooth solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import SparseOperator, pattern

NONSMOOTH = "nonsmooth"
SIMPLIFIED = "simplified"
SMOOTH = "smooth"
SIMPLIFIED_SMOOTH = "simplified_smooth"
GALERKIN = "galerkin"
DETECTOR_KINDS = (NONSMOOTH, SIMPLIFIED, SMOOTH, SIMPLIFIED_SMOOTH, GALERKIN)

GRADUAL_LUMPING = "gradual_lumping"
SYMMETRIC_MASS = "symmetric_mass"
MASS_KINDS = (GRADUAL_LUMPING, SYMMETRIC_MASS)

_SMOOTH_KINDS = (SMOOTH, SIMPLIFIED_SMOOTH)
_EDGE_KINDS = (SIMPLIFIED, SIMPLIFIED_SMOOTH)

# denominator below this is treated as the "otherwise" branch of the
# non-smooth detectors; far below any physical gradient scale
_ZERO_DEN = 1e-300


@dataclass
class StabParams:
    """Regularization constants and variant selectors of the stabilization."""

    q: float = 25.0
    eps: float = 1e-4
    sigma: float = 0.0
    gamma: float = 1e-10
    detector: str = SMOOTH
    mass: str = GRADUAL_LUMPING
    beta_bound: float = 1.0

    def __post_init__(self):
        if self.q <= 0:
            raise ValueError("q must be positive")
        if self.eps < 0 or self.sigma < 0 or self.gamma < 0:
            raise ValueError("eps, sigma and gamma must be nonnegative")
        if self.detector not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector kind {self.detector!r}")
        if self.mass not in MASS_KINDS:
            raise ValueError(f"unknown mass kind {self.mass!r}")
        if self.detector in _SMOOTH_KINDS and self.eps == 0 and self.gamma == 0:
            raise ValueError("smooth detectors need eps > 0 or gamma > 0")

    @property
    def is_smooth(self):
        return self.detector in _SMOOTH_KINDS


# ----------------------------------------------------------------------
# smooth primitives
# ----------------------------------------------------------------------

def smooth_abs_upper(x, eps):
    """sqrt(x^2 + eps), an upper C-infinity surrogate of |x|."""
    return np.sqrt(np.square(x) + eps)


def smooth_abs_lower(x, eps):
    """x^2 / sqrt(x^2 + eps), a lower surrogate of |x| (0 at x = 0)."""
    x = np.asarray(x, dtype=float)
    den = np.sqrt(np.square(x) + eps)
    return np.divide(np.square(x), den, out=np.zeros_like(den), where=den > 0)


def _smooth_abs_lower_d1(x, eps):
    x = np.asarray(x, dtype=float)
    den = np.power(np.square(x) + eps, 1.5)
    num = x * (np.square(x) + 2.0 * eps)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def smooth_max(x, y, sigma):
    """(sqrt((x-y)^2 + sigma) + x + y) / 2 >= max(x, y).

    Grouped so the result is bitwise symmetric in (x, y).
    """
    return 0.5 * (np.sqrt(np.square(np.asarray(x) - y) + sigma) + (x + y))


def _smooth_max_dx(x, y, sigma):
    """d smooth_max / dx; symmetric subgradient 1/2 at the kink when sigma=0."""
    d = np.asarray(x, dtype=float) - y
    den = np.sqrt(np.square(d) + sigma)
    r = np.divide(d, den, out=np.zeros_like(den), where=den > 0)
    return 0.5 * (1.0 + r)


def limiter_f(x):
    """C^2 limiter: 2x^4 - 5x^3 + 3x^2 + x below 1, then 1."""
    x = np.asarray(x, dtype=float)
    poly = ((2.0 * x - 5.0) * x + 3.0) * x * x + x
    return np.where(x < 1.0, poly, 1.0)


def limiter_df(x):
    x = np.asarray(x, dtype=float)
    dpoly = ((8.0 * x - 15.0) * x + 6.0) * x + 1.0
    return np.where(x < 1.0, dpoly, 0.0)


# ----------------------------------------------------------------------
# per-pair quantities (scalar API used by the tests; the solvers use the
# vectorized stencil below)
# ----------------------------------------------------------------------

def _pair_terms(mesh, u, i, j):
    u = np.asarray(u, dtype=float)
    r = float(np.linalg.norm(mesh.coords[j] - mesh.coords[i]))
    d_main = (u[j] - u[i]) / r
    spn = mesh.sym_info.get((i, j))
    if spn is None:
        # mirrored ghost value: (2 u_i - u_j - u_i) / r = -d_main
        return d_main, -d_main
    u_sym = float(sum(c * u[col] for col, c in zip(spn.cols, spn.coefs)))
    return d_main, (u_sym - u[i]) / spn.dist


def jump(mesh, u, i, j):
    """Directional gradient jump at node i toward j (ghost-mirrored at the
    boundary, where it vanishes identically)."""
    d_main, d_sym = _pair_terms(mesh, u, i, j)
    return d_main + d_sym


def mean_abs(mesh, u, i, j):
    """Mean absolute directional derivative at node i toward j."""
    d_main, d_sym = _pair_terms(mesh, u, i, j)
    return 0.5 * (abs(d_main) + abs(d_sym))


# ----------------------------------------------------------------------
# detector stencil
# ----------------------------------------------------------------------

class DetectorStencil:
    """Flattened directional terms of one detector family on a mesh.

    Every term t belongs to a node (``term_row``) and is a fixed linear
    functional of the nodal vector, z_t = (Z u)_t.  Gradient-family terms are
    the difference quotients toward each neighbor and its symmetric point
    (mirrored ghost at the boundary); edge-family terms are the plain
    differences u_i - u_j.
    """

    def __init__(self, mesh, family):
        rows, cols, vals = [], [], []
        term_row = []
        t = 0
        for i in range(mesh.n_nodes):
            xi = mesh.coords[i]
            for j in mesh.neighborhoods[i]:
                if j == i:
                    continue
                if family == "edge":
                    rows += [t, t]
                    cols += [i, j]
                    vals += [1.0, -1.0]
                    term_row.append(i)
                    t += 1
                    # neighbors without a symmetric counterpart get a mirrored
                    # ghost so the signed sum stays pair-balanced at boundaries
                    if (i, j) not in mesh.sym_info:
                        rows += [t, t]
                        cols += [i, j]
                        vals += [-1.0, 1.0]
                        term_row.append(i)
                        t += 1
                    continue
                r = float(np.linalg.norm(mesh.coords[j] - xi))
                rows += [t, t]
                cols += [j, i]
                vals += [1.0 / r, -1.0 / r]
                term_row.append(i)
                t += 1
                spn = mesh.sym_info.get((i, j))
                if spn is not None:
                    for col, c in zip(spn.cols, spn.coefs):
                        rows.append(t)
                        cols.append(col)
                        vals.append(c / spn.dist)
                    rows.append(t)
                    cols.append(i)
                    vals.append(-1.0 / spn.dist)
                else:
                    # ghost term, the negated main difference quotient
                    rows += [t, t]
                    cols += [j, i]
                    vals += [-1.0 / r, 1.0 / r]
                term_row.append(i)
                t += 1
        self.n_terms = t
        self.term_row = np.array(term_row, dtype=np.int64)
        self.Z = sp.coo_matrix((vals, (rows, cols)),
                               shape=(t, mesh.n_nodes)).tocsr()
        ones = np.ones(t)
        self.aggregate = sp.coo_matrix((ones, (self.term_row, np.arange(t))),
                                       shape=(mesh.n_nodes, t)).tocsr()
        self.jump_map = (self.aggregate @ self.Z).tocsr()  # constant d(sum z)/du
        self.n_nodes = mesh.n_nodes


def _stencil(mesh, family):
    key = ("detector_stencil", family)
    if key not in mesh._cache:
        mesh._cache[key] = DetectorStencil(mesh, family)
    return mesh._cache[key]


def _family(kind):
    return "edge" if kind in _EDGE_KINDS else "sym"


def _smooth_constants(mesh, params):
    """Effective (eps, gamma): edge variant rescales with the mesh size."""
    if params.detector == SIMPLIFIED_SMOOTH:
        h = mesh.h_mean
        return h * h * params.eps, h * params.gamma
    return params.eps, params.gamma


def detector_values(mesh, u, params):
    """Shock detector value per node, in [0, 1], for the configured variant."""
    if params.detector == GALERKIN:
        return np.zeros(mesh.n_nodes)
    st = _stencil(mesh, _family(params.detector))
    z = st.Z @ np.asarray(u, dtype=float)
    num_sum = np.bincount(st.term_row, weights=z, minlength=st.n_nodes)

    if params.detector in _SMOOTH_KINDS:
        eps, gamma = _smooth_constants(mesh, params)
        den = np.bincount(st.term_row, weights=smooth_abs_lower(z, eps),
                          minlength=st.n_nodes)
        ratio = (smooth_abs_upper(num_sum, eps) + gamma) / (den + gamma)
        return limiter_f(ratio) ** params.q

    den = np.bincount(st.term_row, weights=np.abs(z), minlength=st.n_nodes)
    ratio = np.divide(np.abs(num_sum), den,
                      out=np.zeros(st.n_nodes), where=den > _ZERO_DEN)
    return np.clip(ratio, 0.0, 1.0) ** params.q


def detector_derivative(mesh, u, params):
    """(alpha, d alpha / d u) for the smooth variants.

    The derivative is a CSR matrix supported on the adjacency graph; raises
    for the non-differentiable variants.
    """
    if not params.is_smooth:
        raise ValueError("exact derivatives require a smooth detector variant")
    st = _stencil(mesh, _family(params.detector))
    u = np.asarray(u, dtype=float)
    eps, gamma = _smooth_constants(mesh, params)
    z = st.Z @ u
    num_sum = np.bincount(st.term_row, weights=z, minlength=st.n_nodes)
    den = np.bincount(st.term_row, weights=smooth_abs_lower(z, eps),
                      minlength=st.n_nodes)
    upper = smooth_abs_upper(num_sum, eps)
    ratio = (upper + gamma) / (den + gamma)
    fr = limiter_f(ratio)
    alpha = fr ** params.q

    common = params.q * fr ** (params.q - 1.0) * limiter_df(ratio)
    # d ratio = upper'/(den+gamma) dJ - ratio/(den+gamma) dD
    c_num = common * np.divide(num_sum, upper, out=np.zeros_like(upper),
                               where=upper > 0) / (den + gamma)
    c_den = -common * ratio / (den + gamma)
    d_den = st.aggregate @ st.Z.multiply(_smooth_abs_lower_d1(z, eps)[:, None])
    dalpha = (sp.diags(c_num) @ st.jump_map + sp.diags(c_den) @ d_den).tocsr()
    return alpha, dalpha


def detector_nonsmooth(mesh, u, i, params):
    p = _with_detector(params, NONSMOOTH)
    return float(detector_values(mesh, u, p)[i])


def detector_simplified(mesh, u, i, params):
    p = _with_detector(params, SIMPLIFIED)
    return float(detector_values(mesh, u, p)[i])


def detector_smooth(mesh, u, i, params):
    p = _with_detector(params, SMOOTH)
    return float(detector_values(mesh, u, p)[i])


def detector_simplified_smooth(mesh, u, i, params):
    p = _with_detector(params, SIMPLIFIED_SMOOTH)
    return float(detector_values(mesh, u, p)[i])


def _with_detector(params, kind):
    if params.detector == kind:
        return params
    return StabParams(q=params.q, eps=params.eps, sigma=params.sigma,
                      gamma=params.gamma, detector=kind, mass=params.mass,
                      beta_bound=params.beta_bound)


# ----------------------------------------------------------------------
# artificial viscosity and stabilization operator
# ----------------------------------------------------------------------

def _edge_states(mesh, F, alphas):
    pat = pattern(mesh)
    if F.pattern is not pat:
        raise ValueError("operator does not live on this mesh's sparsity pattern")
    a = alphas[pat.edge_rows] * F.data[pat.edge_pos]
    b = alphas[pat.edge_cols] * F.data[pat.edge_transpose_pos]
    return pat, a, b


def _edge_operator(pat, edge_vals):
    """Symmetric operator with given off-diagonal entries and row-sum diagonal."""
    data = np.zeros(pat.nnz)
    data[pat.edge_pos] = edge_vals
    diag = np.bincount(pat.edge_rows, weights=edge_vals, minlength=pat.n)
    data[pat.diag_pos] = diag[pat.rows[pat.diag_pos]]
    return SparseOperator(pat, data)


def viscosity(mesh, F, alphas, params):
    """Edge viscosity nu_ij from the detector and the transport operator.

    Non-smooth variants use max(alpha_i F_ij, alpha_j F_ji, 0); smooth
    variants use the regularized maximum with parameter sigma, first over the
    two detector terms and then against zero.
    """
    pat, a, b = _edge_states(mesh, F, alphas)
    if params.is_smooth:
        nu = smooth_max(smooth_max(a, b, params.sigma), 0.0, params.sigma)
    else:
        nu = np.maximum(np.maximum(a, b), 0.0)
    return _edge_operator(pat, nu)


def viscosity_symmetric_mass(mesh, F, M, alphas, dt, params):
    """Viscosity augmented with max(alpha_i M_ij, 0, alpha_j M_ji) / dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    base = viscosity(mesh, F, alphas, params)
    pat, a, b = _edge_states(mesh, M, alphas)
    if params.is_smooth:
        extra = smooth_max(smooth_max(a, b, params.sigma), 0.0, params.sigma)
    else:
        extra = np.maximum(np.maximum(a, b), 0.0)
    return base + _edge_operator(pat, extra / dt)


def viscosity_chain_weights(a, b, sigma, smooth):
    """(d nu/d a, d nu/d b) of the edge viscosity as a function of its two
    detector-scaled arguments."""
    if smooth:
        dc_da = _smooth_max_dx(a, b, sigma)
        c = smooth_max(a, b, sigma)
        dnu_dc = _smooth_max_dx(c, 0.0, sigma)
        return dnu_dc * dc_da, dnu_dc * (1.0 - dc_da)
    w_a = ((a >= b) & (a > 0)).astype(float)
    w_b = ((b > a) & (b > 0)).astype(float)
    return w_a, w_b


def assemble_B(mesh, nu):
    """Graph-Laplacian stabilization: B_ii = nu_ii, B_ij = -nu_ij."""
    pat = nu.pattern
    data = nu.data.copy()
    data[pat.edge_pos] = -data[pat.edge_pos]
    return SparseOperator(pat, data)


def assemble_nonlinear_mass(mesh, M, lumped, alphas):
    """Gradually lumped mass: row i is (1 - alpha_i) M_i + alpha_i m_i e_i.

    Row sums equal the lumped masses for every alpha, so constants are
    propagated exactly.
    """
    pat = M.pattern
    alphas = np.asarray(alphas, dtype=float)
    data = (1.0 - alphas[pat.rows]) * M.data
    data[pat.diag_pos] += alphas * lumped
    return SparseOperator(pat, data)
