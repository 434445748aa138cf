"""Nonlinear solvers: relaxed Anderson-accelerated fixed point iterations and
Newton's method with line search, both with optional projection of every
iterate onto the admissible bounds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .system import SingularSystemError, solve_linear

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SolverReport:
    """Per-iteration record of one nonlinear solve."""

    iterations: int = 0
    converged: bool = False
    nlerr_history: list = field(default_factory=list)
    dmp_violation_history: list = field(default_factory=list)
    omega_or_xi_history: list = field(default_factory=list)
    residual_norm: float = np.nan
    failure: str | None = None


def project_admissible(u, bounds):
    """Clip nodal values to the admissible interval (idempotent)."""
    return np.clip(u, bounds.lower, bounds.upper)


def _dmp_violation(u, bounds):
    if bounds is None:
        return (0.0, 0.0)
    return (max(float(np.max(u) - bounds.upper), 0.0),
            max(float(bounds.lower - np.min(u)), 0.0))


def _rel_update(delta_norm, u_new):
    scale = float(np.linalg.norm(u_new))
    if scale == 0.0:
        return float(delta_norm)
    return float(delta_norm) / scale


def _anderson_coefficients(residuals):
    """Affine combination weights minimizing || sum_i xi_i r_i ||, sum xi = 1.

    The constraint is eliminated against the last weight, leaving a small
    unconstrained least-squares problem in the residual differences.
    """
    m = len(residuals)
    if m == 1:
        return np.array([1.0])
    r_last = residuals[-1]
    cols = np.column_stack([r - r_last for r in residuals[:-1]])
    sol, *_ = np.linalg.lstsq(cols, -r_last, rcond=None)
    xi = np.empty(m)
    xi[:-1] = sol
    xi[-1] = 1.0 - sol.sum()
    return xi


def _log_slope(errors):
    """OLS slope of log10(nlerr) against the iteration index."""
    vals = np.log10(np.maximum(np.asarray(errors, dtype=float), 1e-300))
    k = np.arange(len(vals), dtype=float)
    if len(vals) < 2:
        return 0.0
    k -= k.mean()
    denom = float(k @ k)
    return float(k @ (vals - vals.mean()) / denom) if denom > 0 else 0.0


def anderson_solve(sys, u0, m=5, s_min=-0.05, omega0=1.0, omega_min=0.3,
                   tol=1e-6, k_max=500, project=False, bounds=None):
    """Fixed-point iterations with windowed Anderson acceleration.

    Each sweep solves A(u_k) u~ = G, combines the last m residuals by
    constrained least squares, blends the accelerated point with relaxation
    omega, and optionally projects onto the admissible bounds.  The
    relaxation is reduced by 0.1 (down to omega_min) whenever the fitted
    slope of log10(nlerr) over the window drops below s_min.
    """
    if m < 1:
        raise ValueError("window size m must be >= 1")
    if not (0 < omega_min <= omega0 <= 1):
        raise ValueError("need 0 < omega_min <= omega0 <= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    bounds = bounds if bounds is not None else getattr(sys, "bounds", None)
    if project and bounds is None:
        raise ValueError("projection requested without admissible bounds")

    u = np.asarray(u0, dtype=float).copy()
    report = SolverReport()
    omega = omega0
    hist_u, hist_ut, hist_r = [], [], []

    for k in range(1, k_max + 1):
        try:
            u_tilde = sys.picard_solve(u)
        except SingularSystemError as exc:
            report.failure = f"singular fixed-point operator: {exc}"
            report.iterations = k - 1
            return u, report
        r = u_tilde - u
        hist_u.append(u)
        hist_ut.append(u_tilde)
        hist_r.append(r)
        m_hat = min(k, m)
        hist_u, hist_ut, hist_r = hist_u[-m_hat:], hist_ut[-m_hat:], hist_r[-m_hat:]

        xi = _anderson_coefficients(hist_r)
        mix_u = sum(x * v for x, v in zip(xi, hist_u))
        mix_ut = sum(x * v for x, v in zip(xi, hist_ut))
        u_next = (1.0 - omega) * mix_u + omega * mix_ut
        if project:
            u_next = project_admissible(u_next, bounds)

        nlerr = _rel_update(np.linalg.norm(u_next - u), u_next)
        report.nlerr_history.append(nlerr)
        report.dmp_violation_history.append(_dmp_violation(u_next, bounds))
        report.omega_or_xi_history.append(omega)
        report.iterations = k
        u = u_next

        if not np.all(np.isfinite(u)):
            report.failure = "non-finite iterate"
            return u, report
        if nlerr < tol:
            report.converged = True
            break
        slope = _log_slope(report.nlerr_history[-(m_hat + 1):])
        if slope < s_min and omega > omega_min:
            omega = max(omega - 0.1, omega_min)

    report.residual_norm = float(np.linalg.norm(sys.residual(u))) \
        if hasattr(sys, "residual") else np.nan
    return u, report


def line_search(sys, u, du, ls_tol=1e-4):
    """Golden-section minimization of ||T(u + xi du)|| over xi in [0, 1].

    Returns the best evaluated point, so a strictly decreasing profile yields
    exactly 1.0 (the endpoints are always sampled).
    """
    evals = {}

    def phi(xi):
        if xi not in evals:
            evals[xi] = float(np.linalg.norm(sys.residual(u + xi * du)))
        return evals[xi]

    phi(0.0)
    phi(1.0)
    a, b = 0.0, 1.0
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = phi(x1), phi(x2)
    while b - a > ls_tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = phi(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = phi(x2)
    return min(evals, key=evals.get)


def newton_solve(sys, u0, tol=1e-6, k_max=500, project=False, bounds=None,
                 ls_tol=1e-4):
    """Newton's method with residual-norm line search and optional projection."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    bounds = bounds if bounds is not None else getattr(sys, "bounds", None)
    if project and bounds is None:
        raise ValueError("projection requested without admissible bounds")

    u = np.asarray(u0, dtype=float).copy()
    report = SolverReport()

    for k in range(1, k_max + 1):
        T = sys.residual(u)
        if not np.all(np.isfinite(T)):
            report.failure = "non-finite residual"
            report.iterations = k - 1
            return u, report
        try:
            du = solve_linear(sys.jacobian(u), -T)
        except SingularSystemError as exc:
            report.failure = f"singular Jacobian: {exc}"
            report.iterations = k - 1
            return u, report

        xi = line_search(sys, u, du, ls_tol)
        step = xi * du
        u_next = u + step
        if project:
            u_next = project_admissible(u_next, bounds)

        nlerr = _rel_update(np.linalg.norm(step), u_next)
        report.nlerr_history.append(nlerr)
        report.dmp_violation_history.append(_dmp_violation(u_next, bounds))
        report.omega_or_xi_history.append(xi)
        report.iterations = k
        u = u_next

        if nlerr < tol:
            resid = float(np.linalg.norm(sys.residual(u)))
            report.residual_norm = resid
            # a vanishing accepted step with a large residual is a stall of
            # the line search, not convergence
            if xi == 0.0 and resid > tol * max(1.0, float(np.linalg.norm(u))):
                report.failure = "line search stalled"
                return u, report
            report.converged = True
            return u, report

    report.residual_norm = float(np.linalg.norm(sys.residual(u)))
    return u, report
