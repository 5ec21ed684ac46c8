"""Set-to-vector encoders.

The main encoder is permutation invariant by construction: a per-point MLP,
then a fixed number of blocks that concatenate each point's features with the
set mean and re-embed, then a final mean pool and linear projection with a
SELU.
Invariance holds up to floating-point reassociation of the mean; encoding in
``canonical`` mode sorts the rows lexicographically first, which makes the
result bit-identical across permutations of the same multiset.

The one-hot baseline skips sample sets entirely: it owns a trainable table of
embeddings indexed by unique-distribution id.  At evaluation time an unseen
set is mapped to the id whose stored training centroid is nearest to the set's
sample mean (ties resolved toward the lowest index).
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor, cat, gather_rows, repeat_rows
from .nn import MLP, Linear, scaled_uniform

__all__ = ["SetEncoder", "OneHotEncoder", "canonical_order", "dataset_centroids",
           "embed_sets_chunked"]


def canonical_order(X: np.ndarray) -> np.ndarray:
    """Rows sorted lexicographically (first column is the primary key)."""
    keys = tuple(X[:, c] for c in reversed(range(X.shape[1])))
    return X[np.lexsort(keys)]


class SetEncoder:
    def __init__(self, dim: int, d_hidden: int, d_latent: int,
                 rng: np.random.Generator, n_blocks: int = 2,
                 l2_normalize: bool = False):
        self.dim = dim
        self.d_hidden = d_hidden
        self.d_latent = d_latent
        self.n_blocks = n_blocks
        self.l2_normalize = l2_normalize
        self.point_mlp = MLP([dim, d_hidden, d_hidden], rng, activate_final=True)
        self.blocks = [MLP([2 * d_hidden, d_hidden, d_hidden], rng, activate_final=True)
                       for _ in range(n_blocks)]
        self.out = Linear(d_hidden, d_latent, rng, init="lecun_normal")

    def parameters(self):
        ps = self.point_mlp.parameters()
        for blk in self.blocks:
            ps += blk.parameters()
        return ps + self.out.parameters()

    def embed_sets(self, sets: np.ndarray, canonical: bool = False) -> Tensor:
        """(B, n, d) batch of equally sized sets -> (B, d_latent) embeddings."""
        sets = np.asarray(sets, dtype=np.float64)
        if sets.ndim != 3:
            raise ValueError("expected a (B, n, d) batch")
        B, n, d = sets.shape
        if d != self.dim:
            raise ValueError(f"point dimension {d} != encoder dimension {self.dim}")
        if canonical:
            sets = np.stack([canonical_order(s) for s in sets])
        h = self.point_mlp(as_tensor(sets.reshape(B * n, d)))
        for blk in self.blocks:
            pooled = h.reshape(B, n, self.d_hidden).mean(axis=1)
            h = blk(cat([h, repeat_rows(pooled, n)], axis=1))
        pooled = h.reshape(B, n, self.d_hidden).mean(axis=1)
        z = self.out(pooled).selu()
        if self.l2_normalize:
            norm = z.square().sum(axis=1, keepdims=True).clamp_min(1e-24).sqrt()
            z = z / norm
        return z

    def embed(self, X: np.ndarray, canonical: bool = False) -> np.ndarray:
        """Single (n, d) set -> (d_latent,) embedding as a plain array."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("expected an (n, d) set")
        return self.embed_sets(X[None], canonical=canonical).data[0]


class OneHotEncoder:
    """Embedding table over the K unique training distributions."""

    def __init__(self, K: int, d_latent: int, rng: np.random.Generator):
        self.K = K
        self.d_latent = d_latent
        # unit-variance rows, the usual lookup-table init; fan-in scaling
        # would leave the K codes too close together to separate quickly
        self.table = Tensor(rng.standard_normal((K, d_latent)), requires_grad=True)
        self.centroids: np.ndarray | None = None  # (K, d), set after training

    def parameters(self):
        return [self.table]

    def embed_ids(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids)
        if ids.min() < 0 or ids.max() >= self.K:
            raise IndexError("unique-distribution id out of range")
        return gather_rows(self.table, ids)

    def set_centroids(self, centroids: np.ndarray) -> None:
        centroids = np.asarray(centroids, dtype=np.float64)
        if centroids.shape[0] != self.K:
            raise ValueError("need one centroid per table row")
        self.centroids = centroids

    def nearest_id(self, X: np.ndarray) -> int:
        """Id of the training distribution whose centroid is closest to mean(X)."""
        if self.centroids is None:
            raise RuntimeError("centroids not set; call set_centroids after training")
        m = np.asarray(X, dtype=np.float64).mean(axis=0)
        d2 = np.sum((self.centroids - m) ** 2, axis=1)
        return int(np.argmin(d2))  # argmin takes the first hit, i.e. the lowest index

    def embed(self, X: np.ndarray) -> np.ndarray:
        return self.table.data[self.nearest_id(X)]


def embed_sets_chunked(encoder: SetEncoder, sets: np.ndarray,
                       max_points: int = 8192) -> np.ndarray:
    """Embed many sets without keeping one huge autodiff graph alive.

    Splits the (B, n, d) batch into chunks of at most ``max_points`` total
    points, embeds each chunk and returns the stacked plain (B, d_latent)
    array.  Values are identical to a single embed_sets call.
    """
    sets = np.asarray(sets, dtype=np.float64)
    if sets.ndim != 3:
        raise ValueError("expected a (B, n, d) batch")
    B, n, _ = sets.shape
    step = max(1, max_points // max(n, 1))
    out = np.empty((B, encoder.d_latent))
    for lo in range(0, B, step):
        out[lo:lo + step] = encoder.embed_sets(sets[lo:lo + step]).data
    return out


def dataset_centroids(points: np.ndarray, unique_id: np.ndarray, K: int) -> np.ndarray:
    """Mean of all stored points per unique distribution id."""
    d = points.shape[2]
    out = np.zeros((K, d))
    counts = np.zeros(K)
    flat_uid = np.repeat(unique_id, points.shape[1])
    np.add.at(out, flat_uid, points.reshape(-1, d))
    np.add.at(counts, flat_uid, 1.0)
    if np.any(counts == 0):
        raise ValueError("every unique id needs at least one set")
    return out / counts[:, None]
