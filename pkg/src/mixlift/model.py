"""Domain types for two-component mixed linear regression.

A problem instance is a pair of regressors (beta1, beta2); estimation works
in the lifted space of a symmetric matrix K = (beta1 beta2' + beta2 beta1')/2
together with the midpoint vector g = (beta1 + beta2)/2.  This module holds
the value types shared by the solvers, the recovery metric, and the dataset
container with its CSV/JSON serialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "RegressorPair",
    "LiftedEstimate",
    "MixedDataset",
    "ErrorBreakdown",
    "lift",
    "j_matrix",
    "rho_metric",
    "rho",
    "alpha",
    "residuals",
    "save_dataset",
    "load_dataset",
]

_FLOAT_FMT = "%.17g"


def _as_readonly(a, dtype=float, ndim=None):
    out = np.array(a, dtype=dtype)
    if ndim is not None and out.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RegressorPair:
    """An (ordered) pair of regression vectors of common dimension p.

    The pair is semantically unordered: all error measurements go through
    :func:`rho_metric`, which minimizes over the two pairings.
    """

    beta1: np.ndarray
    beta2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta1", _as_readonly(self.beta1, ndim=1))
        object.__setattr__(self, "beta2", _as_readonly(self.beta2, ndim=1))
        if self.beta1.shape != self.beta2.shape:
            raise ValueError(
                f"component dimensions differ: {self.beta1.shape} vs {self.beta2.shape}"
            )
        if self.beta1.size < 1:
            raise ValueError("components must have dimension >= 1")
        if not (np.isfinite(self.beta1).all() and np.isfinite(self.beta2).all()):
            raise ValueError("components must be finite")

    @property
    def p(self) -> int:
        return self.beta1.size

    @property
    def gamma(self) -> float:
        """Total norm ||beta1|| + ||beta2||, the natural scale of the pair."""
        return float(np.linalg.norm(self.beta1) + np.linalg.norm(self.beta2))

    @property
    def separation(self) -> np.ndarray:
        return self.beta1 - self.beta2

    def swapped(self) -> "RegressorPair":
        return RegressorPair(self.beta2, self.beta1)


@dataclass(frozen=True)
class LiftedEstimate:
    """The lifted parameterization (K, g).

    K is stored dense and symmetrized to (K + K')/2 on construction; solver
    output can carry tiny asymmetries that the measurement operator never
    senses.  An exact lift of a pair has rank(K) <= 2.
    """

    K: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        K = np.array(self.K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"K must be square, got shape {K.shape}")
        K = 0.5 * (K + K.T)
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "g", _as_readonly(self.g, ndim=1))
        if self.g.size != K.shape[0]:
            raise ValueError(
                f"dimension mismatch: K is {K.shape}, g has length {self.g.size}"
            )
        if not (np.isfinite(K).all() and np.isfinite(self.g).all()):
            raise ValueError("estimate entries must be finite")

    @property
    def p(self) -> int:
        return self.g.size


@dataclass(frozen=True)
class MixedDataset:
    """Observations (X, y) from a two-component mixed linear model.

    Optional generation-side records: hidden labels z (1 means the sample
    came from the first component), realized noise e, and a metadata dict
    (model, seed, p, n, sigma, n1, n2).  When z, e and the generating pair
    are all known, y_i = x_i' beta_{b(i)} + e_i holds exactly.
    """

    X: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None
    e: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "X", _as_readonly(self.X, ndim=2))
        object.__setattr__(self, "y", _as_readonly(self.y, ndim=1))
        n = self.X.shape[0]
        if self.y.size != n:
            raise ValueError(f"X has {n} rows but y has length {self.y.size}")
        if self.z is not None:
            z = _as_readonly(self.z, dtype=np.int64, ndim=1)
            if z.size != n:
                raise ValueError(f"z has length {z.size}, expected {n}")
            if not np.isin(z, (0, 1)).all():
                raise ValueError("z entries must be 0 or 1")
            object.__setattr__(self, "z", z)
        if self.e is not None:
            e = _as_readonly(self.e, ndim=1)
            if e.size != n:
                raise ValueError(f"e has length {e.size}, expected {n}")
            object.__setattr__(self, "e", e)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def reconstruction_gap(self, pair: RegressorPair) -> float:
        """Max |y_i - x_i' beta_{b(i)} - e_i| given recorded labels and noise.

        Zero (exactly) for any dataset produced by the generators in
        :mod:`mixlift.synth`.
        """
        if self.z is None:
            raise ValueError("dataset has no label record")
        e = self.e if self.e is not None else 0.0
        signal = np.where(self.z == 1, self.X @ pair.beta1, self.X @ pair.beta2)
        return float(np.max(np.abs(self.y - signal - e))) if self.n else 0.0


@dataclass(frozen=True)
class ErrorBreakdown:
    """A rho-metric evaluation: total, per-component, and pairing used."""

    rho: float
    per_beta: tuple[float, float]
    swapped: bool

    def __post_init__(self):
        if abs(self.rho - (self.per_beta[0] + self.per_beta[1])) > 1e-9 * (1.0 + self.rho):
            raise ValueError("rho must equal the sum of per-component errors")


def lift(pair: RegressorPair) -> LiftedEstimate:
    """Lift a pair to (K, g) with K = (b1 b2' + b2 b1')/2 and g = (b1 + b2)/2."""
    b1, b2 = pair.beta1, pair.beta2
    K = 0.5 * (np.outer(b1, b2) + np.outer(b2, b1))
    g = 0.5 * (b1 + b2)
    return LiftedEstimate(K, g)


def j_matrix(est: LiftedEstimate) -> np.ndarray:
    """Return g g' - K; for an exact lift this is the rank-one PSD matrix
    (b1 - b2)(b1 - b2)'/4 whose top eigenpair drives spectral recovery."""
    return np.outer(est.g, est.g) - est.K


def rho_metric(a: RegressorPair, b: RegressorPair) -> ErrorBreakdown:
    """Permutation-minimizing total l2 error between two pairs.

    Returns the smaller of the two pairings' summed errors together with the
    per-component errors under the minimizing pairing.  Ties report the
    identity pairing.  Symmetric, and satisfies the triangle inequality.
    """
    if a.p != b.p:
        raise ValueError(f"dimension mismatch: {a.p} vs {b.p}")
    e11 = float(np.linalg.norm(a.beta1 - b.beta1))
    e22 = float(np.linalg.norm(a.beta2 - b.beta2))
    e12 = float(np.linalg.norm(a.beta1 - b.beta2))
    e21 = float(np.linalg.norm(a.beta2 - b.beta1))
    straight = e11 + e22
    crossed = e12 + e21
    if crossed < straight:
        return ErrorBreakdown(crossed, (e12, e21), True)
    return ErrorBreakdown(straight, (e11, e22), False)


def rho(a: RegressorPair, b: RegressorPair) -> float:
    """Scalar shorthand for ``rho_metric(a, b).rho``."""
    return rho_metric(a, b).rho


def alpha(pair: RegressorPair) -> float:
    """Normalized squared separation ||b1 - b2||^2 / (||b1||^2 + ||b2||^2).

    Always in [0, 2]; zero iff the components coincide.  Undefined (raises)
    when both components are zero.
    """
    denom = float(np.dot(pair.beta1, pair.beta1) + np.dot(pair.beta2, pair.beta2))
    if denom == 0.0:
        raise ValueError("alpha is undefined for the all-zero pair")
    sep = pair.beta1 - pair.beta2
    return float(np.dot(sep, sep)) / denom


def residuals(est: LiftedEstimate, data: MixedDataset) -> np.ndarray:
    """Per-sample lifted residuals r_i = -x_i' K x_i + 2 y_i x_i' g - y_i^2.

    At the exact lift of the truth with zero noise, r vanishes identically;
    both convex programs are built from this vector.
    """
    if data.p != est.p:
        raise ValueError(f"dimension mismatch: data p={data.p}, estimate p={est.p}")
    X, y = data.X, data.y
    quad = np.einsum("ij,ij->i", X @ est.K, X)
    return -quad + 2.0 * y * (X @ est.g) - y * y


def _format_row(values) -> str:
    return ",".join(_FLOAT_FMT % v for v in values)


def save_dataset(data: MixedDataset, csv_path: str | Path) -> None:
    """Write a dataset as CSV plus a JSON metadata sidecar.

    The CSV header is ``x_1,...,x_p,y[,z][,e]``; floats carry 17 significant
    digits so the round trip is bit-exact.  The sidecar lands next to the CSV
    with suffix ``.meta.json``.
    """
    csv_path = Path(csv_path)
    cols = [f"x_{j + 1}" for j in range(data.p)] + ["y"]
    if data.z is not None:
        cols.append("z")
    if data.e is not None:
        cols.append("e")
    lines = [",".join(cols)]
    for i in range(data.n):
        parts = [_FLOAT_FMT % v for v in data.X[i]] + [_FLOAT_FMT % data.y[i]]
        if data.z is not None:
            parts.append(str(int(data.z[i])))
        if data.e is not None:
            parts.append(_FLOAT_FMT % data.e[i])
        lines.append(",".join(parts))
    csv_path.write_text("\n".join(lines) + "\n")
    meta_path = csv_path.with_suffix(csv_path.suffix + ".meta.json")
    meta_path.write_text(json.dumps(data.meta, indent=2, sort_keys=True) + "\n")


def load_dataset(csv_path: str | Path) -> MixedDataset:
    """Read a dataset written by :func:`save_dataset`."""
    csv_path = Path(csv_path)
    lines = csv_path.read_text().strip().splitlines()
    header = lines[0].split(",")
    try:
        y_idx = header.index("y")
    except ValueError:
        raise ValueError(f"{csv_path}: missing 'y' column") from None
    p = y_idx
    if header[:p] != [f"x_{j + 1}" for j in range(p)]:
        raise ValueError(f"{csv_path}: malformed design columns {header[:p]}")
    has_z = "z" in header
    has_e = "e" in header
    rows = [line.split(",") for line in lines[1:]]
    X = np.array([[float(v) for v in r[:p]] for r in rows])
    y = np.array([float(r[y_idx]) for r in rows])
    z = np.array([int(r[header.index("z")]) for r in rows]) if has_z else None
    e = np.array([float(r[header.index("e")]) for r in rows]) if has_e else None
    meta_path = csv_path.with_suffix(csv_path.suffix + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return MixedDataset(X=X, y=y, z=z, e=e, meta=meta)
