"""Numerical verification of the supporting machinery.

Everything the error analysis leans on is measured here at desk scale: the
paired-difference measurement operator and its l1 isometry on low-rank
matrices, the fourth-moment identity behind it (including the Rademacher
blind spot), the KL bound for symmetric two-point Gaussian mixtures, the
Gaussian moment identities, and the mutual-information accounting that
turns a packing into a minimax lower bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import RegressorPair, rho
from .rng import stream
from .synth import BoundedDesign

__all__ = [
    "OperatorBundle",
    "sample_design",
    "design_fourth_moment",
    "sample_low_rank",
    "RipScanResult",
    "rip_scan",
    "SecondMomentReport",
    "second_moment_identity_check",
    "kl_divergence_mixture",
    "kl_pair_bound",
    "KlCell",
    "kl_mixture_bound_check",
    "MomentReport",
    "gaussian_moment_check",
    "FanoReport",
    "fano_accounting",
    "gaussian_product_moment",
]


# ---------------------------------------------------------------------------
# measurement operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorBundle:
    """The three averaged measurement maps for one sample block.

    With rows x_1..x_nb (and optional noise e), the maps send

    - a matrix Z to (<x_i x_i', Z>)_i / n_b                      ``apply_a``
    - a matrix Z to (<B_j, Z>)_j / m, B_j = x_{2j} x_{2j}' -
      x_{2j-1} x_{2j-1}'  over m = floor(n_b / 2) row pairs      ``apply_b``
    - a vector z to (<d_j, z>)_j / m, d_j = e_{2j} x_{2j} -
      e_{2j-1} x_{2j-1}                                          ``apply_d``

    All three are linear.
    """

    X: np.ndarray
    e: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        if self.e is not None:
            e = np.asarray(self.e, dtype=float)
            if e.size != self.X.shape[0]:
                raise ValueError("e must have one entry per row of X")
            object.__setattr__(self, "e", e)

    @classmethod
    def from_dataset(cls, data, b: int) -> "OperatorBundle":
        if data.z is None:
            raise ValueError("dataset has no label record")
        mask = data.z == 1 if b == 1 else data.z == 0
        e = data.e[mask] if data.e is not None else None
        return cls(data.X[mask], e)

    @property
    def n_b(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[0] // 2

    def _quad(self, Z: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ij->i", self.X @ np.asarray(Z, dtype=float), self.X)

    def apply_a(self, Z: np.ndarray) -> np.ndarray:
        return self._quad(Z) / self.n_b

    def apply_b(self, Z: np.ndarray) -> np.ndarray:
        q = self._quad(Z)[: 2 * self.m]
        return (q[1::2] - q[0::2]) / self.m

    def apply_d(self, z: np.ndarray) -> np.ndarray:
        if self.e is None:
            raise ValueError("bundle has no noise record")
        t = (self.e * (self.X @ np.asarray(z, dtype=float)))[: 2 * self.m]
        return (t[1::2] - t[0::2]) / self.m


def sample_design(name: str, n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Design rows for the lab: 'gaussian', 'rademacher' or 'bounded'.

    Rademacher exists here only to demonstrate the fourth-moment blind spot
    of the paired-difference operator; it is not an estimation design.
    """
    if name == "gaussian":
        return rng.standard_normal((n, p))
    if name == "rademacher":
        return rng.integers(0, 2, size=(n, p)) * 2.0 - 1.0
    if name == "bounded":
        return BoundedDesign().sample(n, p, rng)
    raise ValueError(f"unknown design {name!r}")


def design_fourth_moment(name: str) -> float:
    """Entry fourth moment mu for designs where it is exact."""
    if name == "gaussian":
        return 3.0
    if name == "rademacher":
        return 1.0
    raise ValueError(f"fourth moment of design {name!r} is not known in closed form")


def sample_low_rank(p: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Random rank-r matrix with unit Frobenius norm.

    U diag(s) V' with orthonormal factors from QR of Gaussian matrices and
    singular values drawn uniformly on the simplex, then l2-normalized.
    """
    U = np.linalg.qr(rng.standard_normal((p, r)))[0]
    V = np.linalg.qr(rng.standard_normal((p, r)))[0]
    s = rng.dirichlet(np.ones(r))
    s = s / np.linalg.norm(s)
    return (U * s) @ V.T


@dataclass(frozen=True)
class RipScanResult:
    delta_lower: float
    delta_upper: float
    values: np.ndarray
    mode: str


def rip_scan(
    design: str,
    p: int,
    n: int,
    r: int,
    num_samples: int,
    seed: int = 0,
    mode: str = "rip",
    sigma: float = 1.0,
) -> RipScanResult:
    """Empirical two-sided l1 isometry bounds for the paired-difference map.

    Draws one design matrix, then ``num_samples`` random rank-r directions
    and records ||B Z||_1 over unit-Frobenius Z (mode 'rip'), or
    ||B Z - D z||_1 over the combined normalization ||Z||_F + sigma ||z||_2
    = 1 (mode 'rip2', which also draws noise with deviation sigma).
    Returns the min and max observed values; a vanishing min fails loudly.
    """
    if mode not in ("rip", "rip2"):
        raise ValueError("mode must be 'rip' or 'rip2'")
    if n < 10 * p * r:
        warnings.warn(f"n={n} is small for rank {r} at p={p}; bounds will be loose")
    X = sample_design(design, n, p, stream(seed, "design"))
    e = sigma * stream(seed, "noise").standard_normal(n) if mode == "rip2" else None
    bundle = OperatorBundle(X, e)
    rng = stream(seed, "directions")
    values = np.empty(num_samples)
    for k in range(num_samples):
        Z = sample_low_rank(p, r, rng)
        if mode == "rip":
            values[k] = np.abs(bundle.apply_b(Z)).sum()
        else:
            t = rng.uniform(0.05, 0.95)
            zdir = rng.standard_normal(p)
            zdir /= np.linalg.norm(zdir)
            z = ((1.0 - t) / sigma) * zdir
            values[k] = np.abs(bundle.apply_b(t * Z) - bundle.apply_d(z)).sum()
    lo, hi = float(values.min()), float(values.max())
    if lo <= 0.0:
        raise RuntimeError(f"degenerate scan: min ||B Z||_1 = {lo}")
    return RipScanResult(lo, hi, values, mode)


# ---------------------------------------------------------------------------
# second moment identity for the paired-difference operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SecondMomentReport:
    empirical: float
    analytic: float
    stderr: float
    within_5se: bool


def second_moment_identity_check(
    design: str, Z: np.ndarray, trials: int, seed: int = 0
) -> SecondMomentReport:
    """Monte-Carlo E <B, Z>^2 against 4 ||Z||_F^2 + 2 (mu - 3) ||diag Z||_F^2.

    The operator only senses the symmetric part of Z, so the analytic value
    uses (Z + Z')/2.  Rademacher entries (mu = 1) zero the identity exactly
    on trace-free diagonal directions.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    Z = np.asarray(Z, dtype=float)
    p = Z.shape[0]
    mu = design_fourth_moment(design)
    Zs = 0.5 * (Z + Z.T)
    analytic = 4.0 * float(np.sum(Zs * Zs)) + 2.0 * (mu - 3.0) * float(
        np.sum(np.diag(Zs) ** 2)
    )
    rng = stream(seed, "pairs")
    X = sample_design(design, 2 * trials, p, rng)
    q = np.einsum("ij,ij->i", X @ Z, X)
    xi = q[1::2] - q[0::2]
    sq = xi * xi
    emp = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    ok = abs(emp - analytic) <= 5.0 * se + 1e-12
    return SecondMomentReport(emp, analytic, se, ok)


# ---------------------------------------------------------------------------
# KL bound for symmetric two-point Gaussian mixtures
# ---------------------------------------------------------------------------

def _log_mixture_density(x: np.ndarray, a: float, sigma: float) -> np.ndarray:
    # log of (N(a, s^2) + N(-a, s^2))/2 = -log(s sqrt(2 pi))
    #   - (x^2 + a^2)/(2 s^2) + logcosh(x a / s^2)
    t = x * a / sigma**2
    at = np.abs(t)
    logcosh = at + np.log1p(np.exp(-2.0 * at)) - math.log(2.0)
    return (
        -math.log(sigma * math.sqrt(2.0 * math.pi))
        - (x * x + a * a) / (2.0 * sigma**2)
        + logcosh
    )


def kl_divergence_mixture(
    u: float, v: float, sigma: float, tol: float = 1e-10
) -> float:
    """Quadrature KL divergence between the symmetric mixtures at u and v.

    Simpson's rule on [-(max(u,v) + 10 sigma), +(max(u,v) + 10 sigma)] with a
    doubling grid until two successive refinements agree to ``tol``; the
    truncated Gaussian tails are far below that.  Raises on non-convergence.
    """
    if u < 0 or v < 0:
        raise ValueError("u and v must be nonnegative")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if u == v:
        return 0.0
    half = max(u, v) + 10.0 * sigma

    def integrand(x):
        lfu = _log_mixture_density(x, u, sigma)
        lfv = _log_mixture_density(x, v, sigma)
        return np.exp(lfu) * (lfu - lfv)

    prev = None
    m = 64
    while m <= 2**22:
        x = np.linspace(-half, half, m + 1)
        fx = integrand(x)
        h = 2.0 * half / m
        s = h / 3.0 * (fx[0] + fx[-1] + 4.0 * fx[1:-1:2].sum() + 2.0 * fx[2:-1:2].sum())
        if prev is not None and abs(s - prev) <= tol:
            return float(s)
        prev = s
        m *= 2
    raise RuntimeError(f"quadrature did not converge for (u={u}, v={v}, sigma={sigma})")


def kl_pair_bound(u: float, v: float, sigma: float) -> float:
    """Closed-form upper bound on the mixture KL divergence:

    (u^2 - v^2) u^2 / (2 s^4)
      + v^3 max(0, v - u) (u^4 + 6 u^2 s^2 + 3 s^4) / (2 s^8).
    """
    if u < 0 or v < 0:
        raise ValueError("u and v must be nonnegative")
    s2 = sigma * sigma
    first = (u * u - v * v) * u * u / (2.0 * s2 * s2)
    second = (
        v**3 * max(0.0, v - u) * (u**4 + 6.0 * u * u * s2 + 3.0 * s2 * s2)
        / (2.0 * s2**4)
    )
    return first + second


@dataclass(frozen=True)
class KlCell:
    u: float
    v: float
    numeric: float
    bound: float
    holds: bool


def kl_mixture_bound_check(
    u_grid, v_grid, sigma: float, tol: float = 1e-10, slack: float = 1e-8
) -> list[KlCell]:
    """Evaluate numeric KL <= closed-form bound over a (u, v) grid."""
    cells = []
    for u in u_grid:
        for v in v_grid:
            numeric = kl_divergence_mixture(float(u), float(v), sigma, tol=tol)
            bound = kl_pair_bound(float(u), float(v), sigma)
            cells.append(
                KlCell(float(u), float(v), numeric, bound, numeric <= bound + slack)
            )
    return cells


# ---------------------------------------------------------------------------
# Gaussian moment identities
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _pairing_coeff(m: int, n: int, j: int) -> float:
    # number of Isserlis pairings with j cross pairs
    if (m - j) % 2 or (n - j) % 2 or j > min(m, n):
        return 0.0
    mf, nf = (m - j) // 2, (n - j) // 2
    return (
        math.factorial(m)
        * math.factorial(n)
        / (
            math.factorial(j)
            * 2**mf
            * math.factorial(mf)
            * 2**nf
            * math.factorial(nf)
        )
    )


def gaussian_product_moment(m: int, n: int, var_u: float, var_v: float, cov: float) -> float:
    """Exact E[u^m v^n] for centered jointly Gaussian (u, v)."""
    if m < 0 or n < 0:
        raise ValueError("moment orders must be nonnegative")
    total = 0.0
    for j in range(min(m, n) + 1):
        c = _pairing_coeff(m, n, j)
        if c:
            total += c * cov**j * var_u ** ((m - j) / 2) * var_v ** ((n - j) / 2)
    return total


@dataclass(frozen=True)
class MomentReport:
    """Monte-Carlo check of E u^2 v^2 = |a|^2 |b|^2 + 2 <a, b>^2 for
    u = x'a, v = x'b, plus the two derived inequalities (equal norms only)."""

    product_empirical: float
    product_exact: float
    product_stderr: float
    product_within_5se: bool
    cross_empirical: float | None
    cross_bound: float | None
    cross_holds: bool | None
    sq_diff_empirical: float | None
    sq_diff_exact: float | None
    sq_diff_bound: float | None
    sq_diff_holds: bool | None


def gaussian_moment_check(
    alpha: np.ndarray, beta: np.ndarray, trials: int, seed: int = 0
) -> MomentReport:
    """Verify the product-moment identity and its consequences by sampling.

    With a = ||alpha||, b = ||beta||, c = <alpha, beta>, the joint law of
    (u, v) is 2-d Gaussian, so the draws are taken in that plane.  The two
    inequality checks require equal norms:

    - E[(u^2 - v^2) u^2]  <=  2 a^2 ||alpha - beta||^2
    - E[(u^2 - v^2)^2] = 4 (a^4 - c^2)  <=  2 (a^2 + b^2) ||alpha - beta||^2

    (the second moment of the squared difference admits the exact value
    shown, which the sampled estimate is compared against as well).
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    a2 = float(alpha @ alpha)
    b2 = float(beta @ beta)
    c = float(alpha @ beta)
    rng = stream(seed, "moments")
    g = rng.standard_normal((trials, 2))
    a = math.sqrt(a2)
    u = a * g[:, 0]
    v = (c / a) * g[:, 0] + math.sqrt(max(b2 - c * c / a2, 0.0)) * g[:, 1]

    prod = u * u * v * v
    prod_exact = a2 * b2 + 2.0 * c * c
    prod_emp = float(prod.mean())
    prod_se = float(prod.std(ddof=1) / math.sqrt(trials))
    prod_ok = abs(prod_emp - prod_exact) <= 5.0 * prod_se

    equal_norms = abs(a2 - b2) <= 1e-9 * max(a2, b2)
    if equal_norms:
        d2 = float(np.sum((alpha - beta) ** 2))
        cross = (u * u - v * v) * u * u
        cross_emp = float(cross.mean())
        cross_se = float(cross.std(ddof=1) / math.sqrt(trials))
        cross_bound = 2.0 * a2 * d2
        cross_ok = cross_emp <= cross_bound + 5.0 * cross_se
        sqd = (u * u - v * v) ** 2
        sqd_emp = float(sqd.mean())
        sqd_se = float(sqd.std(ddof=1) / math.sqrt(trials))
        sqd_exact = 4.0 * (a2 * a2 - c * c)
        sqd_bound = 2.0 * (a2 + b2) * d2
        sqd_ok = sqd_emp <= sqd_bound + 5.0 * sqd_se
        return MomentReport(
            prod_emp, prod_exact, prod_se, prod_ok,
            cross_emp, cross_bound, cross_ok,
            sqd_emp, sqd_exact, sqd_bound, sqd_ok,
        )
    return MomentReport(
        prod_emp, prod_exact, prod_se, prod_ok,
        None, None, None, None, None, None, None,
    )


# ---------------------------------------------------------------------------
# mutual-information accounting for packing lower bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FanoReport:
    """Bookkeeping that converts a packing into a testing lower bound.

    ``mi_bound`` is the KL-sum upper bound on I(truth; data) over n samples;
    the predicted minimax lower bound separation/2 is justified whenever
    ``quarter_rule_holds`` (mi <= log(M)/4) and M is large enough that
    1 - 1/4 - log(2)/log(M) >= 1/2.
    """

    mi_bound: float
    log_m: float
    separation: float
    predicted_lower_bound: float
    quarter_rule_holds: bool
    error_prob_lower: float
    degenerate: bool


def _per_sample_kl_bound(b_i: np.ndarray, b_j: np.ndarray, sigma: float) -> float:
    """Deterministic upper bound on E_x KL between the response mixtures of
    two antipodal instances, via the closed-form KL bound, Cauchy-Schwarz,
    and exact Gaussian product moments."""
    a2 = float(b_i @ b_i)
    b2 = float(b_j @ b_j)
    c = float(b_i @ b_j)
    s2 = sigma * sigma
    # E[(u^2 - v^2) u^2], exact
    first = (3.0 * a2 * a2 - a2 * b2 - 2.0 * c * c) / (2.0 * s2 * s2)
    # E[(u^2 - v^2)^2], exact
    sq_diff = 3.0 * a2 * a2 + 3.0 * b2 * b2 - 2.0 * a2 * b2 - 4.0 * c * c
    # E[v^4 (u^4 + 6 u^2 s^2 + 3 s^4)^2], exact via product moments
    mom = lambda m, n: gaussian_product_moment(m, n, a2, b2, c)
    weighted = (
        mom(8, 4)
        + 12.0 * s2 * mom(6, 4)
        + 42.0 * s2 * s2 * mom(4, 4)
        + 36.0 * s2**3 * mom(2, 4)
        + 9.0 * s2**4 * mom(0, 4)
    )
    second = math.sqrt(max(sq_diff, 0.0)) * math.sqrt(weighted) / (2.0 * s2**4)
    return first + second


def fano_accounting(pairs, sigma: float, n: int) -> FanoReport:
    """Bound the mutual information carried by n samples about which packing
    member generated them, and compare against log(M)/4.

    ``pairs`` is an antipodal packing family (e.g. from
    :func:`mixlift.synth.gen_packing_instance`).  The bound is exactly
    linear in n.  A single-member family is flagged degenerate: there is no
    testing problem.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    betas = [np.asarray(pr.beta1, dtype=float) for pr in pairs]
    M = len(betas)
    if M <= 1:
        return FanoReport(0.0, 0.0, 0.0, 0.0, False, 0.0, True)
    log_m = math.log(M)
    total = 0.0
    sep = math.inf
    for i in range(M):
        for j in range(M):
            if i == j:
                continue
            total += _per_sample_kl_bound(betas[i], betas[j], sigma)
            if j > i:
                sep = min(sep, rho(pairs[i], pairs[j]))
    mi_bound = n * total / (M * M)
    quarter = mi_bound <= 0.25 * log_m
    err_lb = max(0.0, 1.0 - (mi_bound + math.log(2.0)) / log_m)
    predicted = 0.5 * sep
    return FanoReport(mi_bound, log_m, sep, predicted, quarter, err_lb, False)
