"""Nuclear-norm minimization under an aggregate residual budget.

Solves

    minimize    ||K||_*
    subject to  sum_i | -x_i' K x_i + 2 y_i x_i' g - y_i^2 |  <=  eta

by two-block ADMM: block one updates (K, g) through an inexact
least-squares-plus-nuclear-prox step (warm-started FISTA with a bounded
inner iteration count), block two projects the residual vector onto the
l1 ball of radius eta, followed by a scaled dual update.  eta = 0 turns the
splitting into the method of multipliers for the exact-interpolation
program, which is the noiseless setting.

eta is an oracle parameter: the supporting theory sets it proportional to
sqrt(n) ||e||_2 ||beta2 - beta1||_2, quantities an experimenter has from
generation metadata.  ``EtaRule`` packages that rule.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .linops import ResidualMap
from .model import LiftedEstimate, MixedDataset
from .reports import SolverReport

__all__ = [
    "EtaRule",
    "ConstrainedConfig",
    "project_l1_ball",
    "svt",
    "solve_constrained",
    "InfeasibleError",
]


class InfeasibleError(RuntimeError):
    """The residual budget is below what any (K, g) can attain."""


@dataclass(frozen=True)
class EtaRule:
    """eta = c4 * sqrt(n) * ||e||_2 * ||beta2 - beta1||_2 with user estimates."""

    c4: float = 1.0
    e_norm_estimate: float = 0.0
    sep_estimate: float = 1.0

    def resolve(self, n: int) -> float:
        return self.c4 * np.sqrt(n) * self.e_norm_estimate * self.sep_estimate


@dataclass(frozen=True)
class ConstrainedConfig:
    eta: float | EtaRule = 0.0
    max_iter: int = 5000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    rho_admm: float = 1.0
    adapt_penalty: bool = True
    inner_max: int = 40

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("tolerances must be positive")
        if isinstance(self.eta, (int, float)) and self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.rho_admm <= 0:
            raise ValueError("rho_admm must be positive")


def project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto {u : ||u||_1 <= radius}.

    Interior points return unchanged; radius zero projects to the origin.
    Sort-based threshold search, O(n log n).
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    v = np.asarray(v, dtype=float)
    if radius == 0.0:
        return np.zeros_like(v)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    valid = u - (css - radius) / k > 0
    r = int(np.max(np.nonzero(valid)[0]))
    theta = (css[r] - radius) / (r + 1)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def svt(M: np.ndarray, tau: float) -> np.ndarray:
    """Singular value thresholding: U max(S - tau, 0) V'.

    The proximal operator of tau ||.||_*; tau = 0 returns M unchanged.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    M = np.asarray(M, dtype=float)
    if tau == 0.0:
        return M.copy()
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    if not keep.any():
        return np.zeros_like(M)
    return (U[:, keep] * s[keep]) @ Vt[keep]


def _nuclear_norm(K: np.ndarray) -> float:
    return float(np.linalg.svd(K, compute_uv=False).sum())


def _fista_block(amap, c, rho, K, g, L, max_iter, tol):
    """Inexact argmin of ||K||_* + (rho/2)||A(K,g) - c||^2, warm-started.

    Returns the iterate once the composite gradient mapping falls below
    ``tol`` relative to its scale or the iteration budget runs out.
    """
    step = 1.0 / (rho * L)
    yK, yg = K.copy(), g.copy()
    t = 1.0
    for _ in range(max_iter):
        s = amap.apply(yK, yg) - c
        GK, gg = amap.adjoint(s)
        K_new = svt(yK - step * rho * GK, step)
        g_new = yg - step * rho * gg
        gap = np.sqrt(np.sum((K_new - yK) ** 2) + np.sum((g_new - yg) ** 2))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        yK = K_new + mom * (K_new - K)
        yg = g_new + mom * (g_new - g)
        K, g, t = K_new, g_new, t_new
        if gap <= tol * (1.0 + np.sqrt(np.sum(K * K) + np.sum(g * g))):
            break
    return K, g


def solve_constrained(
    data: MixedDataset, cfg: ConstrainedConfig
) -> tuple[LiftedEstimate, SolverReport]:
    """Run the constrained program on a dataset.

    Returns the best iterate seen that satisfies the budget to tolerance
    (smallest nuclear norm), or the final iterate if none did.  The report
    carries the objective and residual traces and the stop reason; a budget
    below the certified attainable residual raises :class:`InfeasibleError`.
    """
    eta = cfg.eta.resolve(data.n) if isinstance(cfg.eta, EtaRule) else float(cfg.eta)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    amap = ResidualMap(data.X, data.y)
    n, p = amap.n, amap.p
    y_sq = data.y * data.y
    scale = max(1.0, float(np.sum(np.abs(y_sq))))
    abs_slack = cfg.tol_primal * scale
    L = amap.gram_norm()
    rho = cfg.rho_admm

    K = np.zeros((p, p))
    g = np.zeros(p)
    r = project_l1_ball(-y_sq, eta)
    u = np.zeros(n)

    obj_trace, pri_trace, dual_trace = [], [], []
    best_obj = np.inf
    best = None
    stop_reason = "max_iter"
    stall_mark = np.inf
    t0 = time.perf_counter()

    for it in range(1, cfg.max_iter + 1):
        c = y_sq + r - u
        K, g = _fista_block(amap, c, rho, K, g, L,
                            cfg.inner_max, 0.1 * cfg.tol_primal)
        Rv = amap.apply(K, g) - y_sq
        r_old = r
        r = project_l1_ball(Rv + u, eta)
        u = u + Rv - r

        obj = _nuclear_norm(K)
        pri = float(np.linalg.norm(Rv - r))
        dual = rho * float(np.linalg.norm(amap.adjoint_flat(r - r_old)))
        obj_trace.append(obj)
        pri_trace.append(pri)
        dual_trace.append(dual)

        l1 = float(np.abs(Rv).sum())
        feasible = l1 <= eta * (1.0 + cfg.tol_primal) + abs_slack
        if feasible and obj < best_obj:
            best_obj = obj
            best = (K.copy(), g.copy())

        proj_gap = float(np.linalg.norm(Rv - project_l1_ball(Rv, eta)))
        primal_ok = proj_gap <= cfg.tol_primal * max(1.0, float(np.linalg.norm(Rv)))
        dual_ok = dual <= cfg.tol_dual * max(1.0, rho * float(np.linalg.norm(r)))
        if primal_ok and dual_ok and feasible:
            stop_reason = "converged"
            break

        if cfg.adapt_penalty and it % 10 == 0:
            if pri > 10.0 * dual and rho < 1e8:
                rho *= 2.0
                u /= 2.0
            elif dual > 10.0 * pri and rho > 1e-8:
                rho /= 2.0
                u *= 2.0

        # stalled and never feasible: check whether the budget is attainable
        if not np.isfinite(best_obj) and it % 100 == 0:
            gap = l1 - eta
            if gap > 0.01 * scale and gap > stall_mark * 0.99:
                min_res = amap.min_l2_residual()
                if min_res > eta + 10.0 * abs_slack:
                    elapsed = time.perf_counter() - t0
                    report = SolverReport(
                        iterations=it,
                        objective_trace=np.array(obj_trace),
                        primal_residual_trace=np.array(pri_trace),
                        dual_residual_trace=np.array(dual_trace),
                        stop_reason="infeasible-detected",
                        wall_time=elapsed,
                    )
                    raise InfeasibleError(
                        f"residual budget eta={eta:.6g} is below the certified "
                        f"attainable level {min_res:.6g}"
                    )
            stall_mark = gap

    elapsed = time.perf_counter() - t0
    if best is not None:
        K, g = best
    report = SolverReport(
        iterations=len(obj_trace),
        objective_trace=np.array(obj_trace),
        primal_residual_trace=np.array(pri_trace),
        dual_residual_trace=np.array(dual_trace),
        stop_reason=stop_reason,
        wall_time=elapsed,
    )
    return LiftedEstimate(K, g), report
