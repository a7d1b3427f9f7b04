"""Spectral extraction of the regressor pair from a lifted estimate.

Given (K, g), the matrix J = g g' - K concentrates around a rank-one PSD
matrix whose top eigenpair (lam, v) recovers the pair as g +/- sqrt(lam) v.
The recovery is stable: a Frobenius perturbation of size d moves
sqrt(lam) v by at most 10 min(d / sqrt(||J||), sqrt(d)), and
``check_perturbation_lemma`` measures that bound on sampled instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LiftedEstimate, RegressorPair, j_matrix, lift
from .rng import stream

__all__ = [
    "EigenpairResult",
    "top_eigenpair",
    "recover_betas",
    "perturbation_bound",
    "check_perturbation_lemma",
    "PerturbationRow",
]

_DENSE_FALLBACK_MAX_P = 64


@dataclass(frozen=True)
class EigenpairResult:
    """Algebraically largest eigenpair of a symmetric matrix."""

    lambda_hat: float
    v_hat: np.ndarray
    iterations: int
    residual: float


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def top_eigenpair(M: np.ndarray, tol: float = 1e-12, max_iter: int = 10_000) -> EigenpairResult:
    """Power iteration for the algebraically largest eigenpair.

    The iteration runs on M + s I with s = max row sum of |M|, which is PSD,
    so it converges to the eigenvector of the largest (signed) eigenvalue of
    M.  The start vector is the normalized all-ones vector plus a tiny
    index-dependent tiebreak, making the output deterministic.  If the
    residual test ||M v - lam v|| <= tol ||M|| is not met within ``max_iter``
    sweeps, a dense solve takes over for p <= 64; larger problems raise.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"M must be square, got {M.shape}")
    if not np.allclose(M, M.T, atol=1e-8 * (1.0 + np.abs(M).max())):
        raise ValueError("M must be symmetric")
    p = M.shape[0]
    norm_bound = float(np.abs(M).sum(axis=1).max())
    if norm_bound == 0.0:
        v = np.zeros(p)
        v[0] = 1.0
        return EigenpairResult(0.0, v, 0, 0.0)
    shift = norm_bound
    v = np.ones(p) + 1e-8 * np.arange(p)
    v /= np.linalg.norm(v)
    lam = float(v @ (M @ v))
    for it in range(1, max_iter + 1):
        w = M @ v + shift * v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
        lam = float(v @ (M @ v))
        residual = float(np.linalg.norm(M @ v - lam * v))
        if residual <= tol * norm_bound:
            return EigenpairResult(lam, _canonical_sign(v), it, residual)
    if p <= _DENSE_FALLBACK_MAX_P:
        evals, evecs = np.linalg.eigh(M)
        v = evecs[:, -1]
        lam = float(evals[-1])
        residual = float(np.linalg.norm(M @ v - lam * v))
        return EigenpairResult(lam, _canonical_sign(v), max_iter, residual)
    residual = float(np.linalg.norm(M @ v - lam * v))
    raise RuntimeError(
        f"power iteration did not converge in {max_iter} sweeps (residual {residual:.3e})"
    )


def recover_betas(est: LiftedEstimate) -> RegressorPair:
    """Extract (beta1, beta2) = g +/- sqrt(lam) v from a lifted estimate.

    lam is the top eigenvalue of g g' - K, clamped to zero when negative so
    an indefinite estimate degrades to the equal pair (g, g).  The
    eigenvector sign is canonicalized (largest-magnitude entry positive);
    the output pair is invariant to it as a set anyway.
    """
    pair = top_eigenpair(j_matrix(est))
    lam = max(pair.lambda_hat, 0.0)
    step = math.sqrt(lam) * pair.v_hat
    return RegressorPair(est.g + step, est.g - step)


def perturbation_bound(delta: float, j_norm: float) -> float:
    """Stability envelope 10 min(delta / sqrt(||J*||), sqrt(delta))."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if j_norm <= 0:
        return 10.0 * math.sqrt(delta)
    return 10.0 * min(delta / math.sqrt(j_norm), math.sqrt(delta))


@dataclass(frozen=True)
class PerturbationRow:
    delta: float
    max_lhs: float
    bound: float
    max_ratio: float
    trials: int


def check_perturbation_lemma(
    truth: RegressorPair,
    delta_grid,
    trials: int = 100,
    seed: int = 0,
) -> list[PerturbationRow]:
    """Measure the spectral stability bound on random perturbations.

    For each delta, draws symmetric perturbations D with ||D||_F = delta,
    computes the top eigenpairs of J* and J* + D, and reports the largest
    sign-aligned error ||sqrt(lam^) v^ - sqrt(lam*) v*|| against the
    envelope.  All ratios are <= 1 when the bound holds.
    """
    if np.allclose(truth.beta1, truth.beta2):
        raise ValueError("perturbation check needs a separated pair")
    J = j_matrix(lift(truth))
    star = top_eigenpair(J)
    lam_star = max(star.lambda_hat, 0.0)
    base = math.sqrt(lam_star) * star.v_hat
    j_norm = lam_star  # J* is PSD rank one, so ||J*|| = lam*
    rng = stream(seed, "perturb")
    p = truth.p
    rows = []
    for delta in delta_grid:
        max_lhs = 0.0
        for _ in range(trials):
            G = rng.standard_normal((p, p))
            D = 0.5 * (G + G.T)
            nf = np.linalg.norm(D)
            D = (delta / nf) * D if nf > 0 else D
            hat = top_eigenpair(J + D)
            lam_hat = max(hat.lambda_hat, 0.0)
            cand = math.sqrt(lam_hat) * hat.v_hat
            lhs = min(
                float(np.linalg.norm(cand - base)),
                float(np.linalg.norm(cand + base)),
            )
            max_lhs = max(max_lhs, lhs)
        bound = perturbation_bound(float(delta), j_norm)
        ratio = max_lhs / bound if bound > 0 else (0.0 if max_lhs == 0 else math.inf)
        rows.append(PerturbationRow(float(delta), max_lhs, bound, ratio, trials))
    return rows
