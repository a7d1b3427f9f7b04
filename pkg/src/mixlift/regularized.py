"""Nuclear-norm-regularized least squares for stochastic noise.

Solves

    minimize  sum_i ( -x_i' K x_i + 2 y_i x_i' g - y_i^2 + sigma^2 )^2
              + lambda ||K||_*

by FISTA with backtracking line search.  The smooth part is quadratic in
(K, g); the proximal step soft-thresholds the singular values of K while g
takes a plain gradient step.  A monotone restart keeps the recorded
objective non-increasing.

The noise variance sigma^2 is assumed known (an approximate estimator lives
in :func:`mixlift.baselines.estimate_sigma2_blind`).  lambda is an oracle
parameter; ``LambdaRule`` packages the reference scaling
c5 * sigma * (gamma + sigma) * sqrt(n p) * log(n)^exponent with a crude
data-driven gamma proxy when none is supplied.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .constrained import svt
from .linops import ResidualMap
from .model import LiftedEstimate, MixedDataset
from .reports import SolverReport

__all__ = [
    "LambdaRule",
    "RegularizedConfig",
    "solve_regularized",
    "smooth_objective_and_gradient",
    "NumericalFailure",
]


class NumericalFailure(RuntimeError):
    """The iteration diverged (objective rose on consecutive steps)."""


@dataclass(frozen=True)
class LambdaRule:
    """lambda = c5 * sigma * (gamma + sigma) * sqrt(n p) * log(n)^exponent.

    ``gamma_estimate=None`` falls back to sqrt(2) * sqrt(mean(y^2) - sigma^2),
    a heuristic norm proxy; pass the oracle value when you have it.
    """

    c5: float = 1.0
    gamma_estimate: float | None = None
    log_exponent: float = 3.0

    def resolve(self, data: MixedDataset, sigma2: float) -> float:
        sigma = math.sqrt(max(sigma2, 0.0))
        if sigma == 0.0:
            raise ValueError("the lambda rule needs sigma > 0; pass lambda directly")
        if self.gamma_estimate is not None:
            gamma = self.gamma_estimate
        else:
            gamma = math.sqrt(2.0 * max(float(np.mean(data.y**2)) - sigma2, 0.0))
        n, p = data.n, data.p
        return self.c5 * sigma * (gamma + sigma) * math.sqrt(n * p) * math.log(n) ** self.log_exponent


@dataclass(frozen=True)
class RegularizedConfig:
    lam: float | LambdaRule = 1.0
    sigma2: float = 0.0
    max_iter: int = 5000
    tol_rel_obj: float = 1e-10
    step_rule: str = "backtracking"  # or "fixed"
    bt_growth: float = 2.0
    L_estimate: float | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol_rel_obj <= 0:
            raise ValueError("tol_rel_obj must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError("step_rule must be 'backtracking' or 'fixed'")
        if self.bt_growth <= 1.0:
            raise ValueError("bt_growth must exceed 1")
        if isinstance(self.lam, (int, float)) and self.lam <= 0:
            raise ValueError("lambda must be positive")


def smooth_objective_and_gradient(
    est: LiftedEstimate, data: MixedDataset, sigma2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Value and gradients of the smooth part sum_i (r_i + sigma^2)^2.

    Returns (value, dK, dg) with dK = -2 X' diag(s) X (symmetric) and
    dg = 4 X' (y o s) for s = r + sigma^2.
    """
    amap = ResidualMap(data.X, data.y)
    s = amap.residuals(est.K, est.g) + sigma2
    GK, gg = amap.adjoint(s)
    return float(s @ s), 2.0 * GK, 2.0 * gg


def _nuclear_norm(K: np.ndarray) -> float:
    return float(np.linalg.svd(K, compute_uv=False).sum())


def solve_regularized(
    data: MixedDataset, cfg: RegularizedConfig
) -> tuple[LiftedEstimate, SolverReport]:
    """Run the regularized program on a dataset.

    Stops when the composite gradient-mapping norm falls below
    tol_rel_obj * (1 + lambda), or at the iteration cap.  Raises
    :class:`NumericalFailure` if the objective rises on 10 consecutive
    accepted steps (possible only under a bad fixed step size).
    """
    lam = cfg.lam.resolve(data, cfg.sigma2) if isinstance(cfg.lam, LambdaRule) else float(cfg.lam)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    amap = ResidualMap(data.X, data.y)
    n, p = amap.n, amap.p
    q = data.y * data.y - cfg.sigma2  # smooth part is ||A(K,g) - q||^2

    def smooth(K, g):
        s = amap.apply(K, g) - q
        return float(s @ s), s

    if cfg.step_rule == "fixed":
        L = cfg.L_estimate if cfg.L_estimate is not None else 2.0 * amap.gram_norm()
    else:
        L = 2.0 * amap.gram_norm()

    K = np.zeros((p, p))
    g = np.zeros(p)
    yK, yg = K.copy(), g.copy()
    t = 1.0
    F_prev = smooth(K, g)[0] + lam * _nuclear_norm(K)
    obj_trace, map_trace, rel_trace = [], [], []
    stop_reason = "max_iter"
    rises = 0
    t0 = time.perf_counter()

    for it in range(1, cfg.max_iter + 1):
        f_y, s = smooth(yK, yg)
        GK, gg = amap.adjoint(2.0 * s)
        while True:
            KC = svt(yK - GK / L, lam / L)
            gC = yg - gg / L
            dK, dg = KC - yK, gC - yg
            f_c = smooth(KC, gC)[0]
            quad = f_y + float(np.sum(GK * dK)) + float(gg @ dg) \
                + 0.5 * L * (float(np.sum(dK * dK)) + float(dg @ dg))
            if f_c <= quad * (1.0 + 1e-12) + 1e-12 or cfg.step_rule == "fixed":
                break
            L *= cfg.bt_growth
        gmap = L * math.sqrt(float(np.sum(dK * dK)) + float(dg @ dg))
        F_cand = f_c + lam * _nuclear_norm(KC)

        if F_cand > F_prev * (1.0 + 1e-12) + 1e-12:
            rises += 1
            if rises >= 10:
                raise NumericalFailure(
                    f"objective rose for {rises} consecutive steps at iteration {it}"
                )
            # monotone restart: momentum back to the best iterate
            yK, yg = K.copy(), g.copy()
            t = 1.0
            F_new = F_prev
        else:
            rises = 0
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            mom = (t - 1.0) / t_new
            yK = KC + mom * (KC - K)
            yg = gC + mom * (gC - g)
            K, g, t = KC, gC, t_new
            F_new = F_cand

        obj_trace.append(F_new)
        map_trace.append(gmap)
        rel_trace.append(abs(F_prev - F_new) / max(1.0, abs(F_new)))
        F_prev = F_new
        if gmap <= cfg.tol_rel_obj * (1.0 + lam):
            stop_reason = "converged"
            break

    report = SolverReport(
        iterations=len(obj_trace),
        objective_trace=np.array(obj_trace),
        primal_residual_trace=np.array(map_trace),
        dual_residual_trace=np.array(rel_trace),
        stop_reason=stop_reason,
        wall_time=time.perf_counter() - t0,
    )
    return LiftedEstimate(K, g), report
