"""Reference estimators: EM, blind least absolute deviation, labels-known OLS.

These are the comparison points for the convex programs.  The oracle is the
performance floor; blind LAD is the right tool once the noise norm swamps
the component separation; EM is the classical local method, here in its
standard mixture-of-regressions form with equal known mixing weights.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .model import MixedDataset, RegressorPair, rho
from .rng import stream

__all__ = [
    "EmConfig",
    "EmResult",
    "fit_em",
    "fit_blind_lad",
    "fit_oracle",
    "estimate_sigma2_blind",
]

_SIGMA2_FLOOR = 1e-12


@dataclass(frozen=True)
class EmConfig:
    """EM settings.

    init: 'random', a RegressorPair to start from, or 'spectral-warmstart'
    (runs the regularized program and spectral recovery to seed EM).
    variance_mode 'known' holds sigma2 fixed; 'estimated' updates it each
    round.  Mixing weights are fixed at 1/2 unless ``estimate_weights``.
    """

    init: Literal["random", "spectral-warmstart"] | RegressorPair = "random"
    seed: int = 0
    init_scale: float = 1.0
    max_rounds: int = 200
    tol_param_change: float = 1e-8
    variance_mode: Literal["known", "estimated"] = "known"
    sigma2: float = 1.0
    estimate_weights: bool = False

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")


@dataclass(frozen=True)
class EmResult:
    pair: RegressorPair
    rounds: int
    responsibilities: np.ndarray
    log_likelihood_trace: np.ndarray


def _weighted_ls(X, y, w, which: int) -> np.ndarray:
    Xw = X * w[:, None]
    G = Xw.T @ X
    b = Xw.T @ y
    try:
        sol = np.linalg.solve(G, b)
    except np.linalg.LinAlgError:
        raise RuntimeError(
            f"weighted normal equations are singular for component {which}"
        ) from None
    if not np.isfinite(sol).all():
        raise RuntimeError(
            f"weighted normal equations are singular for component {which}"
        )
    return sol


def fit_em(data: MixedDataset, cfg: EmConfig) -> EmResult:
    """Soft-assignment EM for a two-component Gaussian regression mixture.

    Alternates posterior responsibilities under N(0, sigma2) residual noise
    with per-component weighted least squares, until the pair moves by less
    than ``tol_param_change`` (in rho) or the round budget runs out.
    """
    X, y = data.X, data.y
    n, p = data.n, data.p
    if n < 2 * p:
        warnings.warn(f"EM with n={n} < 2p={2 * p} samples is underdetermined")
    if isinstance(cfg.init, RegressorPair):
        pair = cfg.init
    elif cfg.init == "random":
        rng = stream(cfg.seed, "em-init")
        pair = RegressorPair(cfg.init_scale * rng.standard_normal(p),
                             cfg.init_scale * rng.standard_normal(p))
    elif cfg.init == "spectral-warmstart":
        pair = _spectral_warmstart(data, cfg.sigma2)
    else:
        raise ValueError(f"unknown init {cfg.init!r}")

    sigma2 = max(cfg.sigma2, _SIGMA2_FLOOR * max(1.0, float(np.mean(y * y))))
    pi1 = 0.5
    w = np.full(n, 0.5)
    ll_trace = []
    rounds = 0
    for rounds in range(1, cfg.max_rounds + 1):
        r1 = y - X @ pair.beta1
        r2 = y - X @ pair.beta2
        # responsibilities in a stable log-domain form
        a1 = np.log(pi1) - 0.5 * r1 * r1 / sigma2
        a2 = np.log(1.0 - pi1) - 0.5 * r2 * r2 / sigma2
        m = np.maximum(a1, a2)
        w = np.exp(a1 - m) / (np.exp(a1 - m) + np.exp(a2 - m))
        ll = float(np.sum(m + np.log(np.exp(a1 - m) + np.exp(a2 - m)))
                   - 0.5 * n * math.log(2.0 * math.pi * sigma2))
        ll_trace.append(ll)

        b1 = _weighted_ls(X, y, w, which=1)
        b2 = _weighted_ls(X, y, 1.0 - w, which=2)
        new_pair = RegressorPair(b1, b2)
        if cfg.variance_mode == "estimated":
            rr1 = y - X @ b1
            rr2 = y - X @ b2
            sigma2 = max(float(np.sum(w * rr1**2 + (1.0 - w) * rr2**2) / n),
                         _SIGMA2_FLOOR * max(1.0, float(np.mean(y * y))))
        if cfg.estimate_weights:
            pi1 = min(max(float(np.mean(w)), 1e-6), 1.0 - 1e-6)
        moved = rho(new_pair, pair)
        pair = new_pair
        if moved <= cfg.tol_param_change:
            break
    return EmResult(pair, rounds, w, np.array(ll_trace))


def _spectral_warmstart(data: MixedDataset, sigma2: float) -> RegressorPair:
    from .regularized import LambdaRule, RegularizedConfig, solve_regularized
    from .spectral import recover_betas

    s2 = sigma2 if sigma2 > 0 else estimate_sigma2_blind(data)
    if s2 <= 0:
        lam = 1e-6 * max(1.0, float(np.sum(data.y**2)))
        cfg = RegularizedConfig(lam=lam, sigma2=0.0)
    else:
        cfg = RegularizedConfig(lam=LambdaRule(c5=0.01), sigma2=s2)
    est, _ = solve_regularized(data, cfg)
    return recover_betas(est)


def fit_blind_lad(data: MixedDataset, tol: float = 1e-8, max_iter: int = 500) -> np.ndarray:
    """Minimize sum_i |x_i' beta - y_i| over a single regressor.

    Iteratively reweighted least squares on the smoothed objective
    sum_i sqrt(r_i^2 + eps^2) with eps = 1e-8 * scale; each sweep is a
    majorize-minimize step, so the smoothed objective never increases.  A
    diminishing-step subgradient fallback guards the (rare) stalled case.
    """
    X, y = data.X, data.y
    n, p = data.n, data.p
    if n < p:
        raise ValueError(f"blind fit needs n >= p, got n={n}, p={p}")
    scale = max(float(np.median(np.abs(y))), 1e-12)
    eps = 1e-8 * scale
    beta = np.linalg.lstsq(X, y, rcond=None)[0]

    def smoothed(b):
        r = X @ b - y
        return float(np.sum(np.sqrt(r * r + eps * eps)))

    obj = smoothed(beta)
    stalls = 0
    for _ in range(max_iter):
        r = X @ beta - y
        w = 1.0 / np.sqrt(r * r + eps * eps)
        Xw = X * w[:, None]
        try:
            beta_new = np.linalg.solve(Xw.T @ X, Xw.T @ y)
        except np.linalg.LinAlgError:
            break
        obj_new = smoothed(beta_new)
        if obj - obj_new <= tol * max(1.0, obj):
            beta = beta_new if obj_new <= obj else beta
            stalls += 1
            if stalls >= 3:
                break
        else:
            stalls = 0
            beta = beta_new
        obj = min(obj, obj_new)
    else:
        # subgradient fallback for stalled iterates
        step0 = scale / max(float(np.linalg.norm(X, ord="fro")), 1.0)
        best, best_obj = beta.copy(), obj
        for k in range(1, 201):
            r = X @ beta - y
            gsub = X.T @ np.sign(r)
            beta = beta - step0 / math.sqrt(k) * gsub
            o = smoothed(beta)
            if o < best_obj:
                best, best_obj = beta.copy(), o
        beta = best
    return beta


def fit_oracle(data: MixedDataset) -> RegressorPair:
    """Per-class ordinary least squares with the hidden labels revealed."""
    if data.z is None:
        raise ValueError("oracle fit needs recorded labels")
    X, y, z = data.X, data.y, data.z
    p = data.p
    betas = []
    for b, mask in ((1, z == 1), (2, z == 0)):
        nb = int(mask.sum())
        if nb < p:
            raise ValueError(f"component {b} has {nb} < p={p} samples")
        Xb = X[mask]
        if np.linalg.matrix_rank(Xb) < p:
            raise ValueError(f"component {b} design is rank deficient")
        betas.append(np.linalg.lstsq(Xb, y[mask], rcond=None)[0])
    return RegressorPair(betas[0], betas[1])


def estimate_sigma2_blind(data: MixedDataset) -> float:
    """Residual variance of the blind LAD fit.

    Approximate only: on genuinely mixed data the residuals fold in the
    component separation, so this overestimates the noise variance.
    """
    beta = fit_blind_lad(data)
    r = data.y - data.X @ beta
    return float(np.mean(r * r))
