"""Damped least-squares (Levenberg-Marquardt) minimizer with analytic
Jacobians and a finite-difference cross-check helper."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LmResult", "levenberg_marquardt", "jacobian_fd_error"]


@dataclass
class LmResult:
    params: np.ndarray
    objective: float
    iterations: int
    grad_norm: float
    converged: bool


def levenberg_marquardt(
    residual_jac,
    p0: np.ndarray,
    max_iter: int = 500,
    rel_obj_tol: float = 1e-10,
    tau: float = 1e-3,
) -> LmResult:
    """Minimize sum(r(p)^2) with r, J = residual_jac(p).

    Accepted steps never increase the objective; damping follows the
    standard gain-ratio update (Nielsen).  Stops on relative objective
    change below ``rel_obj_tol`` across an accepted step, a tiny gradient,
    or ``max_iter``.
    """
    p = np.asarray(p0, dtype=float).copy()
    r, J = residual_jac(p)
    obj = float(r @ r)
    g = 2.0 * (J.T @ r)
    JtJ = J.T @ J
    mu = tau * float(np.max(np.diag(JtJ))) if JtJ.size else tau
    nu = 2.0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) <= 1e-12 * (1.0 + obj):
            converged = True
            break
        D = np.diag(np.maximum(np.diag(JtJ), 1e-12))
        try:
            step = np.linalg.solve(JtJ + mu * D, -0.5 * g)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2.0
            continue
        p_new = p + step
        r_new, J_new = residual_jac(p_new)
        obj_new = float(r_new @ r_new)
        predicted = float(step @ (mu * (D @ step) - 0.5 * g))
        rho = (obj - obj_new) / predicted if predicted > 0 else -1.0
        if np.isfinite(obj_new) and obj_new < obj:
            rel_change = (obj - obj_new) / max(obj, 1e-300)
            p, r, J, obj = p_new, r_new, J_new, obj_new
            g = 2.0 * (J.T @ r)
            JtJ = J.T @ J
            mu = mu * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if rel_change < rel_obj_tol:
                converged = True
                break
        else:
            mu *= nu
            nu *= 2.0
            if mu > 1e16:
                converged = True  # damping saturated: stationary point
                break
    return LmResult(
        params=p,
        objective=obj,
        iterations=it,
        grad_norm=float(np.linalg.norm(g)),
        converged=converged,
    )


def jacobian_fd_error(residual_jac, p: np.ndarray, rel_step: float = 1e-6) -> float:
    """Max elementwise gap between the analytic Jacobian and central
    finite differences with a relative step, scaled by (1 + |J|)."""
    p = np.asarray(p, dtype=float)
    _, J = residual_jac(p)
    J_fd = np.empty_like(J)
    for j in range(p.shape[0]):
        h = rel_step * max(1.0, abs(p[j]))
        up = p.copy()
        dn = p.copy()
        up[j] += h
        dn[j] -= h
        r_up, _ = residual_jac(up)
        r_dn, _ = residual_jac(dn)
        J_fd[:, j] = (r_up - r_dn) / (2.0 * h)
    return float(np.max(np.abs(J - J_fd) / (1.0 + np.abs(J))))
