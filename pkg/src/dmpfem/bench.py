"""Benchmark problem catalog, error norms, convergence studies, and
maximum-principle audits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import VelocityModel
from .mesh import Q1, build_structured
from .timeloop import dirichlet_bc, run_steady

STEADY_PARABOLIC = "STEADY_PARABOLIC"
STRAIGHT_DISCONTINUITY = "STRAIGHT_DISCONTINUITY"
CIRCULAR_CONVECTION = "CIRCULAR_CONVECTION"
THREE_BODY_ROTATION = "THREE_BODY_ROTATION"
BURGERS2D = "BURGERS2D"

OMEGA = "omega"
OUTFLOW = "outflow"

_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class ProblemSpec:
    """One benchmark: domain, velocity, boundary/initial data, exact solution."""

    name: str
    domain: tuple
    velocity: VelocityModel
    inflow_where: callable          # (x, y) -> bool mask on the boundary
    u_dirichlet: callable           # (x, y, t) -> values
    u0: callable = None             # (x, y) -> values; None for steady-only
    exact: callable = None          # (x, y) -> values, where available
    g: callable = None
    steady: bool = True
    default_dt: float = None


def _near(v, target):
    return np.abs(np.asarray(v, dtype=float) - target) < _EDGE_TOL


# ----------------------------------------------------------------------
# catalog
# ----------------------------------------------------------------------

def _steady_parabolic():
    def u_exact(x, y):
        return y - y * y

    return ProblemSpec(
        name=STEADY_PARABOLIC,
        domain=(0.0, 1.0, 0.0, 1.0),
        velocity=VelocityModel.linear(
            lambda x, y: (np.ones_like(np.asarray(x, dtype=float)),
                          np.zeros_like(np.asarray(x, dtype=float))),
            beta_bound=1.0),
        inflow_where=lambda x, y: _near(x, 0.0) | _near(y, 0.0) | _near(y, 1.0),
        u_dirichlet=lambda x, y, t: u_exact(x, y),
        exact=u_exact,
        steady=True)


def _straight_discontinuity():
    slope = 2.0 * np.sin(-np.pi / 3.0)     # characteristics dy/dx

    def u_exact(x, y):
        return np.where(np.asarray(y, dtype=float) > 0.7 + slope * np.asarray(x, dtype=float),
                        1.0, 0.0)

    def u_d(x, y, t):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.where((_near(x, 0.0) & (y > 0.7)) | _near(y, 1.0), 1.0, 0.0)

    return ProblemSpec(
        name=STRAIGHT_DISCONTINUITY,
        domain=(0.0, 1.0, 0.0, 1.0),
        velocity=VelocityModel.linear(
            lambda x, y: (np.full_like(np.asarray(x, dtype=float), 0.5),
                          np.full_like(np.asarray(x, dtype=float), np.sin(-np.pi / 3.0))),
            beta_bound=1.0),
        inflow_where=lambda x, y: _near(x, 0.0) | _near(y, 1.0),
        u_dirichlet=u_d,
        exact=u_exact,
        steady=True)


def _circular_convection():
    def annulus(x, y):
        r = np.sqrt(np.square(np.asarray(x, dtype=float)) + np.square(np.asarray(y, dtype=float)))
        return np.where((r > 0.35) & (r < 0.65), 1.0, 0.0)

    def inflow(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return ((_near(x, 0.0) & (y > 0)) | _near(y, 1.0)
                | (_near(x, 1.0) & (y < 0)))

    return ProblemSpec(
        name=CIRCULAR_CONVECTION,
        domain=(0.0, 1.0, -1.0, 1.0),
        velocity=VelocityModel.linear(
            lambda x, y: (np.asarray(y, dtype=float), -np.asarray(x, dtype=float)),
            beta_bound=np.sqrt(2.0)),
        inflow_where=inflow,
        u_dirichlet=lambda x, y, t: annulus(x, y),
        exact=annulus,
        steady=True)


def _three_body():
    def u0(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = np.zeros(np.broadcast(x, y).shape)
        r_hump = np.sqrt((x - 0.25) ** 2 + (y - 0.5) ** 2) / 0.15
        u = np.where(r_hump <= 1.0, 0.25 * (1.0 + np.cos(np.pi * np.minimum(r_hump, 1.0))), u)
        r_cone = np.sqrt((x - 0.5) ** 2 + (y - 0.25) ** 2) / 0.15
        u = np.where(r_cone <= 1.0, 1.0 - r_cone, u)
        r_cyl = np.sqrt((x - 0.5) ** 2 + (y - 0.75) ** 2) / 0.15
        slot = (x > 0.45) & (x < 0.55) & (y < 0.85)
        u = np.where((r_cyl <= 1.0) & ~slot, 1.0, u)
        return u

    def inflow(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return ((_near(x, 0.0) & (y < 0.5)) | (_near(y, 0.0) & (x > 0.5))
                | (_near(x, 1.0) & (y > 0.5)) | (_near(y, 1.0) & (x < 0.5)))

    return ProblemSpec(
        name=THREE_BODY_ROTATION,
        domain=(0.0, 1.0, 0.0, 1.0),
        velocity=VelocityModel.linear(
            lambda x, y: (0.5 - np.asarray(y, dtype=float),
                          np.asarray(x, dtype=float) - 0.5),
            beta_bound=np.sqrt(0.5)),
        inflow_where=inflow,
        u_dirichlet=lambda x, y, t: np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape),
        u0=u0,
        steady=False,
        default_dt=1e-3)


def _burgers():
    def u0(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        top = y >= 0.5
        right = x >= 0.5
        return np.where(top, np.where(right, -1.0, -0.2),
                        np.where(right, 0.8, 0.5))

    def inflow(x, y):
        # where the characteristic speed (u0, u0) of the boundary data
        # points into the square
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (_near(y, 0.0) | _near(y, 1.0)
                | (_near(x, 0.0) & (y < 0.5)) | (_near(x, 1.0) & (y >= 0.5)))

    return ProblemSpec(
        name=BURGERS2D,
        domain=(0.0, 1.0, 0.0, 1.0),
        velocity=VelocityModel.burgers(beta_bound=np.sqrt(2.0) / 2.0),
        inflow_where=inflow,
        u_dirichlet=lambda x, y, t: u0(x, y),
        u0=u0,
        steady=False,
        default_dt=1e-2)


_CATALOG = {
    STEADY_PARABOLIC: _steady_parabolic,
    STRAIGHT_DISCONTINUITY: _straight_discontinuity,
    CIRCULAR_CONVECTION: _circular_convection,
    THREE_BODY_ROTATION: _three_body,
    BURGERS2D: _burgers,
}

PROBLEM_NAMES = tuple(sorted(_CATALOG))


def make_problem(name):
    """Build a catalog problem by name."""
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise ValueError(
            f"unknown problem {name!r}; known problems: {', '.join(PROBLEM_NAMES)}") \
            from None
    return factory()


def check_consistency(mesh, problem):
    """Initial data must match the inflow data at t = 0 on the inflow nodes."""
    if problem.u0 is None:
        return True
    bc = dirichlet_bc(mesh, problem, 0.0)
    x, y = mesh.coords[bc.nodes, 0], mesh.coords[bc.nodes, 1]
    u0_vals = np.asarray(problem.u0(x, y), dtype=float)
    return bool(np.all(np.abs(u0_vals - bc.values) < 1e-12))


# ----------------------------------------------------------------------
# error norms
# ----------------------------------------------------------------------

_GPTS3 = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GWTS3 = np.array([5.0, 8.0, 5.0]) / 9.0


def _reference_subcell_rule(kind, refine):
    """(local points, local weight fractions) of a refine-times subdivided
    reference element; weights are fractions of the element measure."""
    pts, wts = [], []
    if kind == Q1:
        g = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
        for a in range(refine):
            for b in range(refine):
                for gx in g:
                    for gy in g:
                        pts.append(((a + gx) / refine, (b + gy) / refine))
                        wts.append(1.0 / (4.0 * refine * refine))
        return np.array(pts), np.array(wts)
    # reference triangle split into refine^2 congruent copies, 3-midpoint
    # rule on each
    def add_tri(c0, c1, c2):
        for p, q in ((c0, c1), (c1, c2), (c0, c2)):
            pts.append(((p[0] + q[0]) / (2.0 * refine),
                        (p[1] + q[1]) / (2.0 * refine)))
            wts.append(1.0 / (3.0 * refine * refine))

    for a in range(refine):
        for b in range(refine - a):
            add_tri((a, b), (a + 1, b), (a, b + 1))
            if a + b < refine - 1:
                add_tri((a + 1, b), (a + 1, b + 1), (a, b + 1))
    return np.array(pts), np.array(wts)


def _refined_quadrature(mesh, refine):
    """Per-element quadrature fine enough for discontinuous integrands."""
    xy = mesh.coords[mesh.elements]
    loc, frac = _reference_subcell_rule(mesh.kind, refine)
    xi, eta = loc[:, 0], loc[:, 1]
    if mesh.kind == Q1:
        shape = np.column_stack([(1 - xi) * (1 - eta), xi * (1 - eta),
                                 xi * eta, (1 - xi) * eta])
        measure = ((xy[:, 1, 0] - xy[:, 0, 0])
                   * (xy[:, 3, 1] - xy[:, 0, 1]))
    else:
        shape = np.column_stack([1 - xi - eta, xi, eta])
        v0, v1, v2 = xy[:, 0], xy[:, 1], xy[:, 2]
        measure = 0.5 * np.abs(
            (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1])
            - (v1[:, 1] - v0[:, 1]) * (v2[:, 0] - v0[:, 0]))
    pts = np.einsum("qa,ead->eqd", shape, xy)
    wts = measure[:, None] * frac[None, :]
    return pts, wts


def _fe_values_at(mesh, u, pts_local):
    """Evaluate u_h at per-element points given in physical coordinates."""
    conn = mesh.elements
    xy = mesh.coords[conn]
    u_e = np.asarray(u, dtype=float)[conn]
    if mesh.kind == Q1:
        x0 = xy[:, 0, 0][:, None]
        y0 = xy[:, 0, 1][:, None]
        wx = (xy[:, 1, 0] - xy[:, 0, 0])[:, None]
        wy = (xy[:, 3, 1] - xy[:, 0, 1])[:, None]
        xi = (pts_local[..., 0] - x0) / wx
        eta = (pts_local[..., 1] - y0) / wy
        return (u_e[:, 0][:, None] * (1 - xi) * (1 - eta)
                + u_e[:, 1][:, None] * xi * (1 - eta)
                + u_e[:, 2][:, None] * xi * eta
                + u_e[:, 3][:, None] * (1 - xi) * eta)
    v0, v1, v2 = xy[:, 0], xy[:, 1], xy[:, 2]
    d = pts_local - v0[:, None, :]
    jac = np.stack([v1 - v0, v2 - v0], axis=2)
    inv = np.linalg.inv(jac)
    loc = np.einsum("end,edk->enk", d, inv)
    xi, eta = loc[..., 0], loc[..., 1]
    return (u_e[:, 0][:, None] * (1 - xi - eta)
            + u_e[:, 1][:, None] * xi + u_e[:, 2][:, None] * eta)


def _boundary_edges(mesh):
    count = {}
    for conn in mesh.elements:
        k = len(conn)
        for a in range(k):
            e = (int(conn[a]), int(conn[(a + 1) % k]))
            key = (min(e), max(e))
            count[key] = count.get(key, 0) + 1
    return [key for key, c in count.items() if c == 1]


def error_norms(mesh, u, exact, region=OMEGA, inflow_where=None, refine=4):
    """(L1, L2) norms of u_h - exact over the domain or the outflow boundary.

    The domain integral uses an element-subdivided Gauss rule so that
    discontinuous exact solutions are integrated accurately; the outflow
    integral uses 3-point Gauss on each non-inflow boundary edge.
    """
    if exact is None:
        raise ValueError("error norms need an exact solution")
    u = np.asarray(u, dtype=float)
    if region == OMEGA:
        pts, wts = _refined_quadrature(mesh, refine)
        uh = _fe_values_at(mesh, u, pts)
        diff = np.abs(uh - exact(pts[..., 0], pts[..., 1]))
        l1 = float(np.sum(wts * diff))
        l2 = float(np.sqrt(np.sum(wts * diff * diff)))
        return l1, l2
    if region != OUTFLOW:
        raise ValueError(f"unknown region {region!r}")
    if inflow_where is None:
        raise ValueError("outflow norms need the problem's inflow predicate")
    l1 = l2 = 0.0
    for a, b in _boundary_edges(mesh):
        xa, xb = mesh.coords[a], mesh.coords[b]
        mid = 0.5 * (xa + xb)
        if bool(np.asarray(inflow_where(mid[0], mid[1]))):
            continue
        half = 0.5 * np.linalg.norm(xb - xa)
        for gp, gw in zip(_GPTS3, _GWTS3):
            x = 0.5 * (xa + xb) + 0.5 * gp * (xb - xa)
            ua, ub = u[a], u[b]
            uh = 0.5 * (ua + ub) + 0.5 * gp * (ub - ua)
            diff = abs(uh - float(exact(x[0], x[1])))
            l1 += gw * half * diff
            l2 += gw * half * diff * diff
    return float(l1), float(np.sqrt(l2))


# ----------------------------------------------------------------------
# studies and audits
# ----------------------------------------------------------------------

def eoc(errors, hs):
    """Experimental orders of convergence between consecutive refinements."""
    out = [np.nan]
    for k in range(1, len(errors)):
        if errors[k] <= 0 or errors[k - 1] <= 0:
            out.append(np.nan)
        else:
            out.append(np.log(errors[k - 1] / errors[k])
                       / np.log(hs[k - 1] / hs[k]))
    return out


def convergence_study(problem, sizes, cfg, kind=Q1):
    """Steady L2 errors and orders over a mesh sweep; rows (h, L2, EOC)."""
    if problem.exact is None:
        raise ValueError("convergence study needs an exact solution")
    hs, errs = [], []
    for n in sizes:
        mesh = build_structured(n, n, domain=problem.domain, kind=kind)
        u, report = run_steady(mesh, problem, cfg)
        if not report.converged:
            raise RuntimeError(f"steady solve at n={n} did not converge")
        _, l2 = error_norms(mesh, u, problem.exact)
        x0, x1, _, _ = problem.domain
        hs.append((x1 - x0) / n)
        errs.append(l2)
    orders = eoc(errs, hs)
    return [(h, e, o) for h, e, o in zip(hs, errs, orders)]


def dmp_audit(u, bounds):
    """Positive parts of the global bound violations (max side, min side)."""
    u = np.asarray(u, dtype=float)
    return (max(float(np.max(u) - bounds.upper), 0.0),
            max(float(bounds.lower - np.min(u)), 0.0))


def local_dmp_audit(mesh, u, tol=1e-10):
    """Interior nodes whose value leaves the hull of their neighbors."""
    u = np.asarray(u, dtype=float)
    bad = []
    for i in mesh.interior_nodes:
        nb = mesh.neighborhoods[i]
        others = nb[nb != i]
        lo, hi = np.min(u[others]), np.max(u[others])
        if u[i] > hi + tol or u[i] < lo - tol:
            bad.append(int(i))
    return bad


def dissipation(mesh, nu, u):
    """sum_i sum_{j in N_i} nu_ij (u_i - u_j)^2 over the stored edges.

    Counts each unordered pair twice (once per row), so it equals twice the
    quadratic form <B u, u>.
    """
    pat = nu.pattern
    u = np.asarray(u, dtype=float)
    d = u[pat.edge_rows] - u[pat.edge_cols]
    return float(np.sum(nu.data[pat.edge_pos] * d * d))
