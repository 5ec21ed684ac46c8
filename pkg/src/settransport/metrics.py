"""Distribution distances used for evaluation.

All functions take (n, d) sample arrays and return plain floats.  These are the
scoring routes; the differentiable training losses live in ``losses`` and are
checked against these implementations in the tests.

Conventions worth knowing:

* ``energy_distance`` and ``mmd_rbf`` are the plug-in estimators between the
  two empirical distributions: within-set terms average over all n^2 ordered
  pairs, diagonal included.  That makes both exactly zero when the arguments
  are the same set, and handles singletons with no special cases (the diagonal
  is 0 for a distance, 1 for an RBF kernel).
* ``mmd_rbf`` returns the squared statistic.
* ``swd`` subsamples the larger set without replacement when sizes differ, so
  it needs a Generator whenever sizes differ (and always for projections).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GaussianParams",
    "energy_distance",
    "swd",
    "mmd_rbf",
    "fit_gaussian",
    "gaussian_w2",
    "sqrtm_psd",
]


def _check_set(X: np.ndarray, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty (n, d) array")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def _cross_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def energy_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Energy distance between the empirical distributions of two sets."""
    A = _check_set(A, "A")
    B = _check_set(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError("dimension mismatch")
    cross = _cross_dists(A, B).mean()
    within_a = _cross_dists(A, A).mean()
    within_b = _cross_dists(B, B).mean()
    return float(2.0 * cross - within_a - within_b)


def swd(A: np.ndarray, B: np.ndarray, n_projections: int = 100,
        rng: np.random.Generator | None = None) -> float:
    """Sliced Wasserstein-2 distance estimate via random 1-D projections."""
    A = _check_set(A, "A")
    B = _check_set(B, "B")
    d = A.shape[1]
    if B.shape[1] != d:
        raise ValueError("dimension mismatch")
    if rng is None:
        raise ValueError("swd needs a Generator for projections")
    if A.shape[0] != B.shape[0]:
        n = min(A.shape[0], B.shape[0])
        if A.shape[0] > n:
            A = A[rng.choice(A.shape[0], n, replace=False)]
        else:
            B = B[rng.choice(B.shape[0], n, replace=False)]
    proj = rng.standard_normal((d, n_projections))
    proj /= np.linalg.norm(proj, axis=0, keepdims=True)
    pa = np.sort(A @ proj, axis=0)
    pb = np.sort(B @ proj, axis=0)
    return float(np.sqrt(np.mean((pa - pb) ** 2)))


def mmd_rbf(A: np.ndarray, B: np.ndarray, sigma: float | None = None) -> float:
    """Squared MMD with an RBF kernel exp(-r^2 / (2 sigma^2)).

    When ``sigma`` is None the bandwidth is the median pairwise distance over
    the pooled samples, self-distances excluded.
    """
    A = _check_set(A, "A")
    B = _check_set(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError("dimension mismatch")
    if sigma is None:
        pooled = np.vstack([A, B])
        D = _cross_dists(pooled, pooled)
        off = D[~np.eye(len(pooled), dtype=bool)]
        sigma = float(np.median(off))
        if sigma <= 0.0:
            sigma = 1.0  # fallback: pooled set had no two distinct points
    gamma = 1.0 / (2.0 * sigma * sigma)

    def k(X, Y):
        D = _cross_dists(X, Y)
        return np.exp(-gamma * D * D)

    return float(k(A, A).mean() + k(B, B).mean() - 2.0 * k(A, B).mean())


@dataclass(eq=False)
class GaussianParams:
    mean: np.ndarray
    cov: np.ndarray
    regularized: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        d = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (d, d):
            raise ValueError("mean must be (d,), cov must be (d, d)")
        if not np.allclose(self.cov, self.cov.T, atol=1e-8):
            raise ValueError("cov must be symmetric")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_gaussian(X: np.ndarray) -> GaussianParams:
    """Plug-in Gaussian fit: sample mean, unbiased sample covariance.

    Needs at least d+1 points.  A covariance whose Cholesky fails is nudged by
    1e-9 * I and flagged via ``regularized``.
    """
    X = _check_set(X, "X")
    n, d = X.shape
    if n < d + 1:
        raise ValueError(f"need at least {d + 1} points to fit a {d}-dim Gaussian")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (n - 1)
    cov = 0.5 * (cov + cov.T)
    regularized = False
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = cov + 1e-9 * np.eye(d)
        regularized = True
        np.linalg.cholesky(cov)  # still failing is a genuine error
    return GaussianParams(mean=mean, cov=cov, regularized=regularized)


def sqrtm_psd(M: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; analytic for 2x2, eigendecomposition above."""
    M = np.asarray(M, dtype=np.float64)
    d = M.shape[0]
    if d == 1:
        return np.sqrt(np.maximum(M, 0.0))
    if d == 2:
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        s = np.sqrt(max(det, 0.0))
        t = np.sqrt(max(M[0, 0] + M[1, 1] + 2.0 * s, 0.0))
        if t == 0.0:
            return np.zeros_like(M)
        return (M + s * np.eye(2)) / t
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def gaussian_w2(p: GaussianParams, q: GaussianParams) -> float:
    """Closed-form 2-Wasserstein distance between Gaussians."""
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    sq = sqrtm_psd(q.cov)
    cross = sqrtm_psd(sq @ p.cov @ sq)
    val = float(np.sum((p.mean - q.mean) ** 2)
                + np.trace(p.cov) + np.trace(q.cov) - 2.0 * np.trace(cross))
    return float(np.sqrt(max(val, 0.0)))
