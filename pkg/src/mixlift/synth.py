"""Synthetic instance generators.

Covers every data model the estimators and the analysis lab consume:
mixed-regression samples under Gaussian or bounded sub-Gaussian designs with
stochastic or adversarial noise, the norm-budgeted cancellation adversary
that produces indistinguishable dataset pairs, minimax packing families, and
the two phase-retrieval measurement models.

All generators are pure functions of (seed, parameters): same inputs, bit
identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np

from .model import MixedDataset, RegressorPair, rho
from .rng import stream

__all__ = [
    "NoNoise",
    "StochasticNoise",
    "AdversarialNoise",
    "GaussianDesign",
    "BoundedDesign",
    "gen_mixed",
    "random_pair",
    "AdversarialCancelPair",
    "gen_adversarial_cancel",
    "PackingFamily",
    "gen_packing_instance",
    "vg_codebook",
    "PhaseDataset",
    "gen_phase_retrieval",
]


# ---------------------------------------------------------------------------
# noise and design models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoNoise:
    name = "none"


@dataclass(frozen=True)
class StochasticNoise:
    """i.i.d. zero-mean noise with standard deviation sigma.

    ``distribution`` is 'gaussian' or 'bounded' (Gaussian resampled until all
    entries fall inside 3.5 standard deviations, then rescaled to unit
    variance; a bounded sub-Gaussian with the same second moment).
    """

    sigma: float
    distribution: Literal["gaussian", "bounded"] = "gaussian"
    name = "stochastic"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.sigma == 0.0:
            return np.zeros(n)
        if self.distribution == "gaussian":
            return self.sigma * rng.standard_normal(n)
        draw = _bounded_standard(n, rng, bound=3.5)
        return self.sigma * draw


@dataclass(frozen=True)
class AdversarialNoise:
    """Noise with l2 budget ``epsilon``, otherwise worst case.

    The default 'aligned-cancel' strategy spends the whole budget pushing
    each response toward the opposite component along the separation
    direction, which realizes the error floor epsilon/sqrt(n) exactly.  A
    custom vector with ||e||_2 <= epsilon may be supplied instead.
    """

    epsilon: float
    strategy: Literal["aligned-cancel", "custom"] = "aligned-cancel"
    vector: np.ndarray | None = None
    name = "adversarial"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.strategy == "custom":
            if self.vector is None:
                raise ValueError("custom strategy requires a noise vector")
            v = np.asarray(self.vector, dtype=float)
            if np.linalg.norm(v) > self.epsilon * (1.0 + 1e-9):
                raise ValueError("custom noise exceeds the l2 budget")

    def realize(self, X, z, pair: RegressorPair) -> np.ndarray:
        if self.strategy == "custom":
            e = np.asarray(self.vector, dtype=float)
            if e.size != X.shape[0]:
                raise ValueError("custom noise has wrong length")
            return e
        sep = pair.separation
        nrm = np.linalg.norm(sep)
        if self.epsilon == 0.0 or nrm == 0.0:
            return np.zeros(X.shape[0])
        u = sep / nrm
        drift = (2.0 * z - 1.0) * (X @ u)
        scale = np.linalg.norm(drift)
        if scale == 0.0:
            return np.zeros(X.shape[0])
        return -(self.epsilon / scale) * drift


@dataclass(frozen=True)
class GaussianDesign:
    name = "gaussian"
    mu = 3.0  # fourth moment of a standard normal entry

    def sample(self, n: int, p: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, p))


@dataclass(frozen=True)
class BoundedDesign:
    """Entries resampled until |x| <= c sqrt(log n): bounded sub-Gaussian,
    mean zero, variance approximately one."""

    c: float = 3.0
    name = "bounded"

    def sample(self, n: int, p: int, rng: np.random.Generator) -> np.ndarray:
        bound = self.c * math.sqrt(math.log(max(n, 2)))
        return _bounded_standard(n * p, rng, bound=bound, rescale=False).reshape(n, p)


def _bounded_standard(count, rng, bound, rescale=True):
    draw = rng.standard_normal(count)
    for _ in range(64):
        mask = np.abs(draw) > bound
        k = int(mask.sum())
        if k == 0:
            break
        draw[mask] = rng.standard_normal(k)
    else:
        raise RuntimeError("entry resampling did not terminate")
    if rescale:
        # truncated-normal second moment, so the rescaled entries have var 1
        from scipy.stats import norm
        m2 = 1.0 - 2.0 * bound * norm.pdf(bound) / (2.0 * norm.cdf(bound) - 1.0)
        draw = draw / math.sqrt(m2)
    return draw


# ---------------------------------------------------------------------------
# mixed regression samples
# ---------------------------------------------------------------------------

def gen_mixed(
    pair: RegressorPair,
    n: int,
    labels="bernoulli",
    design=GaussianDesign(),
    noise=NoNoise(),
    seed: int = 0,
) -> MixedDataset:
    """Sample a mixed-regression dataset y_i = x_i' beta_{b(i)} + e_i.

    Parameters
    ----------
    pair : RegressorPair
        Generating regressors.
    n : int
        Sample count, >= 1.
    labels : 'bernoulli' or (n1, n2)
        'bernoulli' draws each hidden label fair-coin; a pair of counts
        fixes class sizes exactly (shuffled), and must sum to n.
    design : GaussianDesign or BoundedDesign
    noise : NoNoise, StochasticNoise or AdversarialNoise
    seed : int
        All randomness (design, labels, noise) derives from this seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    X = design.sample(n, pair.p, stream(seed, "design"))
    label_rng = stream(seed, "labels")
    if labels == "bernoulli":
        z = (label_rng.random(n) < 0.5).astype(np.int64)
        label_name = "bernoulli"
    else:
        n1, n2 = labels
        if n1 + n2 != n or n1 < 0 or n2 < 0:
            raise ValueError(f"fixed label counts ({n1}, {n2}) must sum to n={n}")
        z = np.concatenate([np.ones(n1, np.int64), np.zeros(n2, np.int64)])
        label_rng.shuffle(z)
        label_name = f"fixed({n1},{n2})"
    if isinstance(noise, AdversarialNoise):
        e = noise.realize(X, z, pair)
        sigma = 0.0
    elif isinstance(noise, StochasticNoise):
        e = noise.sample(n, stream(seed, "noise"))
        sigma = noise.sigma
    else:
        e = np.zeros(n)
        sigma = 0.0
    y = np.where(z == 1, X @ pair.beta1, X @ pair.beta2) + e
    n1 = int(z.sum())
    meta = {
        "model": f"mixed/{design.name}/{noise.name}/{label_name}",
        "seed": int(seed),
        "p": int(pair.p),
        "n": int(n),
        "sigma": float(sigma),
        "n1": n1,
        "n2": int(n - n1),
    }
    return MixedDataset(X=X, y=y, z=z, e=e, meta=meta)


def random_pair(
    p: int,
    seed: int,
    gamma: float | None = None,
    min_alpha: float = 0.0,
    antipodal: bool = False,
) -> RegressorPair:
    """Draw a random regressor pair, optionally rescaled to a target gamma
    and rejection-sampled to a separation floor ``min_alpha``.

    ``antipodal=True`` returns (b, -b), the maximally separated family with
    alpha = 2 used by the hardest-case experiments.
    """
    from .model import alpha as _alpha

    rng = stream(seed, "truth")
    if antipodal:
        b = rng.standard_normal(p)
        b /= np.linalg.norm(b)
        scale = (gamma / 2.0) if gamma is not None else 1.0
        return RegressorPair(scale * b, -scale * b)
    for _ in range(1000):
        b1 = rng.standard_normal(p)
        b2 = rng.standard_normal(p)
        pair = RegressorPair(b1, b2)
        if _alpha(pair) >= min_alpha:
            break
    else:
        raise RuntimeError(f"could not sample a pair with alpha >= {min_alpha}")
    if gamma is not None:
        s = gamma / pair.gamma
        pair = RegressorPair(s * pair.beta1, s * pair.beta2)
    return pair


# ---------------------------------------------------------------------------
# cancellation adversary: two indistinguishable instances
# ---------------------------------------------------------------------------

class AdversarialCancelPair(NamedTuple):
    dataset1: MixedDataset
    pair1: RegressorPair
    dataset2: MixedDataset
    pair2: RegressorPair


def gen_adversarial_cancel(
    v: np.ndarray,
    gamma_lb: float,
    delta: float,
    n: int,
    seed: int = 0,
) -> AdversarialCancelPair:
    """Construct two antipodal instances that the adversary makes y-identical.

    With unit direction v, truth 1 is (g v, -g v) for g = gamma_lb/2 and
    truth 2 inflates both components by delta along v.  Instance 1 carries no
    noise; instance 2 carries e = -delta (2z - 1) o (X v), which cancels the
    inflation sample by sample, so both instances share the same (X, y).  Any
    estimator therefore errs by at least delta on one of them.
    """
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("v must be a unit vector")
    if gamma_lb <= 0 or delta < 0:
        raise ValueError("gamma_lb must be positive and delta nonnegative")
    p = v.size
    half = 0.5 * gamma_lb
    pair1 = RegressorPair(half * v, -half * v)
    pair2 = RegressorPair((half + delta) * v, -(half + delta) * v)
    X = stream(seed, "design").standard_normal((n, p))
    z = (stream(seed, "labels").random(n) < 0.5).astype(np.int64)
    sgn = 2.0 * z - 1.0
    e2 = -delta * sgn * (X @ v)
    y1 = sgn * (X @ pair1.beta1)
    # the cancellation identity y2 = y1 is the whole point; building y2 from
    # its own signal would reintroduce rounding noise
    y2 = y1.copy()
    meta = {"model": "adversarial-cancel", "seed": int(seed), "p": int(p),
            "n": int(n), "sigma": 0.0, "n1": int(z.sum()), "n2": int(n - z.sum())}
    ds1 = MixedDataset(X=X, y=y1, z=z, e=np.zeros(n), meta={**meta, "instance": 1})
    ds2 = MixedDataset(X=X, y=y2, z=z, e=e2, meta={**meta, "instance": 2})
    return AdversarialCancelPair(ds1, pair1, ds2, pair2)


# ---------------------------------------------------------------------------
# packing families for the minimax experiments
# ---------------------------------------------------------------------------

def vg_codebook(m: int, target_size: int, min_dist: float, rng, max_rejects: int = 200_000):
    """Greedy binary codebook: keep random words at Hamming distance
    >= min_dist from every kept word and from every kept word's complement.

    Returns a (target_size, m) 0/1 array; raises after ``max_rejects``
    consecutive rejections.
    """
    kept: list[np.ndarray] = []
    rejects = 0
    while len(kept) < target_size:
        w = (rng.random(m) < 0.5).astype(np.int64)
        ok = True
        for u in kept:
            d = int(np.sum(u != w))
            if d < min_dist or (m - d) < min_dist:
                ok = False
                break
        if ok:
            kept.append(w)
            rejects = 0
        else:
            rejects += 1
            if rejects > max_rejects:
                raise RuntimeError(
                    f"codebook search stalled at {len(kept)}/{target_size} words"
                )
    return np.array(kept)


@dataclass(frozen=True)
class PackingFamily:
    """A separated family of antipodal pairs plus one dataset sampled from it.

    ``separation`` is the guaranteed pairwise rho lower bound; every member
    satisfies the regime's exact norm constraint.  Both properties are
    verified exhaustively at generation time.
    """

    regime: str
    pairs: tuple
    separation: float
    norm: float
    truth_index: int
    dataset: MixedDataset
    c0: float


_REGIMES = ("high-snr", "medium-snr", "low-snr")


def gen_packing_instance(
    regime: str,
    p: int,
    n: int,
    sigma: float,
    kappa: float,
    seed: int = 0,
    c0: float = 0.25,
) -> PackingFamily:
    """Build the minimax packing for one SNR regime and sample an instance.

    The family is {(b_i, -b_i)} with b_i = kappa0 e_p + sum_j (2 xi_i(j) - 1)
    tau e_j over codebook words xi_i.  Regimes fix (tau, kappa0):

    - 'high-snr':    tau = 2 c0 sigma / sqrt(n),                requires kappa > sigma/2
    - 'medium-snr':  tau = 2 c0 (sigma^2/kappa) / sqrt(n),      requires
      sqrt(2 c0) sigma ((p-1)/n)^(1/4) <= kappa <= sigma/2
    - 'low-snr':     kappa0 = 0, tau = 2 c0 sigma (p/n)^(1/4) / sqrt(p-1),
      requires kappa <= 2 c0 sigma (p/n)^(1/4)

    Pairwise separations and member norms are checked exhaustively; any
    violation raises.
    """
    if regime not in _REGIMES:
        raise ValueError(f"unknown regime {regime!r}; expected one of {_REGIMES}")
    if p < 17:
        raise ValueError("packing construction needs p >= 17")
    if sigma <= 0 or kappa <= 0:
        raise ValueError("sigma and kappa must be positive")
    m = p - 1
    if regime == "high-snr":
        if not kappa > sigma / 2.0:
            raise ValueError("high-snr regime needs kappa > sigma/2")
        tau = 2.0 * c0 * sigma / math.sqrt(n)
        kappa0_sq = kappa**2 - m * tau**2
        separation = 2.0 * c0 * sigma * math.sqrt(m / n)
        norm = kappa
    elif regime == "medium-snr":
        lo = math.sqrt(2.0 * c0) * sigma * (m / n) ** 0.25
        if not (lo <= kappa <= sigma / 2.0):
            raise ValueError(
                f"medium-snr regime needs kappa in [{lo:.6g}, {sigma / 2.0:.6g}]"
            )
        tau = 2.0 * c0 * (sigma**2 / kappa) / math.sqrt(n)
        kappa0_sq = kappa**2 - m * tau**2
        separation = 2.0 * c0 * (sigma**2 / kappa) * math.sqrt(m / n)
        norm = kappa
    else:
        tau = 2.0 * c0 * sigma * (p / n) ** 0.25 / math.sqrt(m)
        norm = 2.0 * c0 * sigma * (p / n) ** 0.25
        if kappa > norm * (1.0 + 1e-12):
            raise ValueError(f"low-snr regime needs kappa <= {norm:.6g}")
        kappa0_sq = 0.0
        separation = 2.0 * c0 * sigma * (p / n) ** 0.25
    if kappa0_sq < -1e-12 * kappa**2:
        raise ValueError("norm budget exhausted: kappa0^2 < 0")
    kappa0 = math.sqrt(max(kappa0_sq, 0.0))

    target = 2 ** math.ceil(m / 16)
    words = vg_codebook(m, target, m / 16.0, stream(seed, "codebook"))
    pairs = []
    for w in words:
        b = np.zeros(p)
        b[:m] = (2.0 * w - 1.0) * tau
        b[m] = kappa0
        pairs.append(RegressorPair(b, -b))

    for i, pr in enumerate(pairs):
        got = np.linalg.norm(pr.beta1)
        if abs(got - norm) > 1e-9 * max(1.0, norm):
            raise RuntimeError(f"member {i} norm {got} != {norm}")
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            d = rho(pairs[i], pairs[j])
            if d < separation * (1.0 - 1e-9):
                raise RuntimeError(
                    f"pair ({i},{j}) separation {d} below bound {separation}"
                )

    truth_index = int(stream(seed, "truth-pick").integers(len(pairs)))
    dataset = gen_mixed(
        pairs[truth_index], n,
        labels="bernoulli",
        noise=StochasticNoise(sigma),
        seed=seed,
    )
    dataset = MixedDataset(
        X=dataset.X, y=dataset.y, z=dataset.z, e=dataset.e,
        meta={**dataset.meta, "model": f"packing/{regime}", "kappa": float(kappa)},
    )
    return PackingFamily(
        regime=regime, pairs=tuple(pairs), separation=separation, norm=norm,
        truth_index=truth_index, dataset=dataset, c0=c0,
    )


# ---------------------------------------------------------------------------
# phase retrieval measurements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseDataset:
    """Magnitude measurements (X, zmeas) from a single signal.

    ``signs`` records sign(x_i' beta + e_i) when the generator knows the
    truth; it exists only so tests can track the noise through the
    sign-randomized reduction.
    """

    X: np.ndarray
    zmeas: np.ndarray
    e: np.ndarray | None = None
    signs: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "X", np.array(self.X, dtype=float))
        object.__setattr__(self, "zmeas", np.array(self.zmeas, dtype=float))
        if self.e is not None:
            object.__setattr__(self, "e", np.array(self.e, dtype=float))
        if self.signs is not None:
            object.__setattr__(self, "signs", np.array(self.signs, dtype=float))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def gen_phase_retrieval(
    beta: np.ndarray,
    n: int,
    model: Literal["noisy-phase", "noisy-magnitude"] = "noisy-phase",
    noise=NoNoise(),
    seed: int = 0,
) -> PhaseDataset:
    """Sample magnitude measurements of x_i' beta.

    'noisy-phase' applies noise before the magnitude, z = |x'b + e|;
    'noisy-magnitude' after, z = |x'b| + e.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    beta = np.asarray(beta, dtype=float)
    X = stream(seed, "design").standard_normal((n, beta.size))
    if isinstance(noise, StochasticNoise):
        e = noise.sample(n, stream(seed, "noise"))
        sigma = noise.sigma
    elif isinstance(noise, NoNoise):
        e = np.zeros(n)
        sigma = 0.0
    else:
        raise ValueError("phase retrieval supports stochastic noise only")
    inner = X @ beta
    if model == "noisy-phase":
        zmeas = np.abs(inner + e)
        signs = np.where(inner + e >= 0.0, 1.0, -1.0)  # sign(0) = +1
    elif model == "noisy-magnitude":
        zmeas = np.abs(inner) + e
        signs = np.where(inner >= 0.0, 1.0, -1.0)
    else:
        raise ValueError(f"unknown measurement model {model!r}")
    meta = {"model": f"phase/{model}", "seed": int(seed), "p": int(beta.size),
            "n": int(n), "sigma": float(sigma)}
    return PhaseDataset(X=X, zmeas=zmeas, e=e, signs=signs, meta=meta)
