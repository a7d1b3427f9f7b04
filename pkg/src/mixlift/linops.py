"""The measurement operator shared by both convex programs.

Both programs act on the linear map

    A(K, g)_i = -x_i' K x_i + 2 y_i x_i' g,

whose offset by y_i^2 gives the lifted residual vector.  This module wraps
the map, its adjoint, a deterministic operator-norm estimate, and flat
(de)vectorization for library routines that want a plain matrix-free
operator.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ResidualMap"]


class ResidualMap:
    """Matrix-free A(K, g) for a fixed dataset, with adjoint and norm."""

    def __init__(self, X: np.ndarray, y: np.ndarray):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.n, self.p = self.X.shape
        self._gram_norm: float | None = None

    def apply(self, K: np.ndarray, g: np.ndarray) -> np.ndarray:
        X = self.X
        return -np.einsum("ij,ij->i", X @ K, X) + 2.0 * self.y * (X @ g)

    def adjoint(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = self.X
        GK = -(X * s[:, None]).T @ X
        gg = 2.0 * X.T @ (self.y * s)
        return GK, gg

    def residuals(self, K: np.ndarray, g: np.ndarray) -> np.ndarray:
        """r_i = A(K, g)_i - y_i^2."""
        return self.apply(K, g) - self.y * self.y

    def gram_norm(self, tol: float = 1e-8, max_iter: int = 2000) -> float:
        """Largest eigenvalue of A* A via deterministic power iteration.

        This is the Lipschitz scale of (K, g) -> ||A(K, g) - c||^2 / 2; the
        value is cached per instance.
        """
        if self._gram_norm is not None:
            return self._gram_norm
        p = self.p
        K = np.ones((p, p)) + np.diag(np.arange(p) * 1e-3)
        K = 0.5 * (K + K.T)
        g = np.ones(p)
        nrm = np.sqrt(np.sum(K * K) + np.sum(g * g))
        K, g = K / nrm, g / nrm
        lam = 0.0
        for _ in range(max_iter):
            WK, wg = self.adjoint(self.apply(K, g))
            lam_new = float(np.sqrt(np.sum(WK * WK) + np.sum(wg * wg)))
            if lam_new == 0.0:
                lam = 0.0
                break
            K, g = WK / lam_new, wg / lam_new
            if abs(lam_new - lam) <= tol * max(lam_new, 1.0):
                lam = lam_new
                break
            lam = lam_new
        self._gram_norm = max(lam, 1e-30)
        return self._gram_norm

    # flat views for scipy's matrix-free routines
    def flat_dim(self) -> int:
        return self.p * self.p + self.p

    def apply_flat(self, w: np.ndarray) -> np.ndarray:
        p = self.p
        return self.apply(w[: p * p].reshape(p, p), w[p * p:])

    def adjoint_flat(self, s: np.ndarray) -> np.ndarray:
        GK, gg = self.adjoint(s)
        return np.concatenate([GK.ravel(), gg])

    def min_l2_residual(self) -> float:
        """l2 norm of the residual at the least-squares minimizer of
        ||A(K, g) - y^2||_2; a certified lower bound on the attainable
        residual of either program (in any norm dominating l2)."""
        from scipy.sparse.linalg import LinearOperator, lsqr

        op = LinearOperator(
            (self.n, self.flat_dim()),
            matvec=self.apply_flat,
            rmatvec=self.adjoint_flat,
        )
        out = lsqr(op, self.y * self.y, atol=1e-10, btol=1e-10, iter_lim=2000)
        return float(out[3])  # final ||A w - b||_2
