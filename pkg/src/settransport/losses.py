"""Differentiable training losses.

Each works on a batch of pairs at once: generated and target sets are
(B, n, d) with pair b in row b.  Values agree with the evaluation metrics in
``metrics`` when restricted to a single pair and shared randomness; the tests
pin that down.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor, sort_by_key

__all__ = ["energy_batch_loss", "swd_batch_loss", "fm_batch_loss", "unit_projections"]

# floor under squared distances so sqrt has a finite slope at coincident
# points; masked diagonal entries then contribute exactly zero gradient
_SQDIST_FLOOR = 1e-24


def _pair_dists(a: Tensor, b: Tensor, B: int, n: int, d: int) -> Tensor:
    left = a.reshape(B, n, 1, d)
    right = b.reshape(B, 1, n, d)
    sq = (left - right).square().sum(axis=3)
    return sq.clamp_min(_SQDIST_FLOOR).sqrt()


def energy_batch_loss(out: Tensor, target: np.ndarray) -> Tensor:
    """Mean over pairs of the plug-in energy distance estimate.

    Within-set terms average over all n^2 ordered pairs, matching the
    evaluation metric.  The generated set's diagonal is masked (its true
    distances are zero; the floor under the sqrt would otherwise leak in).
    """
    out = as_tensor(out)
    B, n, d = out.shape
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (B, n, d):
        raise ValueError("target must match the generated batch shape")
    if n < 2:
        raise ValueError("energy loss needs at least two points per set")
    cross = _pair_dists(out, as_tensor(target), B, n, d).mean(axis=(1, 2))
    offdiag = (1.0 - np.eye(n))[None, :, :]
    within_out = (_pair_dists(out, out, B, n, d) * offdiag).sum(axis=(1, 2)) / (n * n)
    tdiff = target[:, :, None, :] - target[:, None, :, :]
    tdist = np.sqrt(np.einsum("bijk,bijk->bij", tdiff, tdiff))
    within_tgt = tdist.sum(axis=(1, 2)) / (n * n)
    per_pair = 2.0 * cross - within_out - as_tensor(within_tgt)
    return per_pair.mean()


def unit_projections(rng: np.random.Generator, d: int, n_projections: int) -> np.ndarray:
    proj = rng.standard_normal((d, n_projections))
    return proj / np.linalg.norm(proj, axis=0, keepdims=True)


def swd_batch_loss(out: Tensor, target: np.ndarray, projections: np.ndarray) -> Tensor:
    """Sliced Wasserstein-2 between generated and target batches.

    One scalar for the whole batch: the RMS over pairs, projections and sorted
    positions, which for B = 1 equals the evaluation metric under the same
    projections.
    """
    out = as_tensor(out)
    B, n, d = out.shape
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (B, n, d):
        raise ValueError("target must match the generated batch shape")
    proj = np.asarray(projections, dtype=np.float64)
    if proj.shape[0] != d:
        raise ValueError("projections must be (d, L)")
    po = (out.reshape(B * n, d) @ as_tensor(proj)).reshape(B, n, proj.shape[1])
    po = sort_by_key(po, axis=1)
    pt = np.sort(target.reshape(B * n, d).dot(proj).reshape(B, n, proj.shape[1]), axis=1)
    return (po - as_tensor(pt)).square().mean().sqrt()


def fm_batch_loss(field, x0: np.ndarray, x1: np.ndarray, t: np.ndarray,
                  eps: np.ndarray, sigma: float,
                  z_src_rows: Tensor, z_tgt_rows: Tensor | None) -> Tensor:
    """Flow-matching regression: field at the noised interpolant vs x1 - x0.

    x0, x1, t, eps are (B, n, ·) constants; embedding rows are (B*n, d_latent)
    and may carry gradients back into an encoder.
    """
    B, n, d = x0.shape
    xt = (1.0 - t) * x0 + t * x1 + sigma * eps
    v = field(xt.reshape(B * n, d), t.reshape(B * n, 1), z_src_rows, z_tgt_rows)
    resid = v - as_tensor((x1 - x0).reshape(B * n, d))
    return resid.square().sum(axis=1).mean()
