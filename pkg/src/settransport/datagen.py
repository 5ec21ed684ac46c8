"""Synthetic benchmark data: Gaussian and Gaussian-mixture families.

Parameters are drawn from fixed priors (uniform means over a box, inverse
Wishart covariances, Dirichlet mixture weights), then sample sets are drawn
from those parameters.  A dataset holds K unique distributions, each repeated
``n_sets // K`` times, so the effect of distributional diversity can be studied
at constant dataset size.

Supervised pair datasets apply a known pushforward to each source set (a rigid
shift, or a bimodal split-and-shift) so ground-truth correspondences exist.

Everything is driven by named RNG streams derived from a single seed; building
the same dataset twice yields bit-identical arrays.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import stream

__all__ = [
    "PriorConfig",
    "MvnParams",
    "GmmParams",
    "Dataset",
    "PairedDataset",
    "sample_inverse_wishart",
    "sample_mvn_params",
    "sample_gmm_params",
    "draw_mvn_set",
    "draw_gmm_set",
    "draw_set",
    "build_unsupervised_dataset",
    "build_supervised_pairs",
    "ood_target_grid",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class PriorConfig:
    family: str = "mvn"  # "mvn" or "gmm"
    dim: int = 2
    mean_low: float = 0.0
    mean_high: float = 5.0
    iw_dof: float = 10.0
    iw_scale_eye: float = 1.0  # inverse-Wishart scale matrix is this multiple of I
    n_components: int = 3
    dirichlet_alpha: float = 1.0

    def __post_init__(self):
        if self.family not in ("mvn", "gmm"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.iw_dof <= self.dim + 1:
            raise ValueError("iw_dof must exceed dim + 1 for a finite prior mean")

    def content_hash(self) -> str:
        blob = json.dumps(self.__dict__, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(eq=False)
class MvnParams:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(eq=False)
class GmmParams:
    weights: np.ndarray  # (C,)
    means: np.ndarray    # (C, d)
    covs: np.ndarray     # (C, d, d)


def sample_inverse_wishart(rng: np.random.Generator, dof: float, scale: np.ndarray) -> np.ndarray:
    """Draw from InvWishart(dof, scale) by inverting a Bartlett-sampled Wishart.

    The Wishart is drawn with scale matrix inv(scale); its inverse then has the
    requested inverse-Wishart law with mean scale / (dof - d - 1).
    """
    scale = np.asarray(scale, dtype=np.float64)
    d = scale.shape[0]
    if dof <= d + 1:
        raise ValueError("dof must exceed d + 1")
    L = np.linalg.cholesky(np.linalg.inv(scale))
    A = np.zeros((d, d))
    for i in range(d):
        A[i, i] = np.sqrt(rng.chisquare(dof - i))
    if d > 1:
        A[np.tril_indices(d, -1)] = rng.standard_normal(d * (d - 1) // 2)
    LA = L @ A
    W = LA @ LA.T
    sigma = np.linalg.inv(W)
    return 0.5 * (sigma + sigma.T)


def sample_mvn_params(rng: np.random.Generator, config: PriorConfig,
                      mean_low: float | None = None, mean_high: float | None = None) -> MvnParams:
    lo = config.mean_low if mean_low is None else mean_low
    hi = config.mean_high if mean_high is None else mean_high
    mean = rng.uniform(lo, hi, size=config.dim)
    cov = sample_inverse_wishart(rng, config.iw_dof, config.iw_scale_eye * np.eye(config.dim))
    return MvnParams(mean=mean, cov=cov)


def sample_gmm_params(rng: np.random.Generator, config: PriorConfig,
                      mean_low: float | None = None, mean_high: float | None = None) -> GmmParams:
    C = config.n_components
    weights = rng.dirichlet(np.full(C, config.dirichlet_alpha))
    lo = config.mean_low if mean_low is None else mean_low
    hi = config.mean_high if mean_high is None else mean_high
    means = rng.uniform(lo, hi, size=(C, config.dim))
    covs = np.stack([
        sample_inverse_wishart(rng, config.iw_dof, config.iw_scale_eye * np.eye(config.dim))
        for _ in range(C)
    ])
    return GmmParams(weights=weights, means=means, covs=covs)


def draw_mvn_set(rng: np.random.Generator, params: MvnParams, n: int) -> np.ndarray:
    L = np.linalg.cholesky(params.cov)
    eps = rng.standard_normal((n, params.mean.shape[0]))
    return params.mean + eps @ L.T


def draw_gmm_set(rng: np.random.Generator, params: GmmParams, n: int) -> np.ndarray:
    """Ancestral sampling: component labels first, then the Gaussian draws."""
    C, d = params.means.shape
    comps = rng.choice(C, size=n, p=params.weights)
    chols = np.linalg.cholesky(params.covs)
    eps = rng.standard_normal((n, d))
    return params.means[comps] + np.einsum("nij,nj->ni", chols[comps], eps)


def draw_set(rng: np.random.Generator, params, n: int) -> np.ndarray:
    if isinstance(params, MvnParams):
        return draw_mvn_set(rng, params, n)
    if isinstance(params, GmmParams):
        return draw_gmm_set(rng, params, n)
    raise TypeError(f"unknown params type {type(params).__name__}")


@dataclass(eq=False)
class Dataset:
    family: str
    points: np.ndarray          # (n_sets, set_size, d)
    params: list                # K unique parameter records
    unique_id: np.ndarray       # (n_sets,) index into params
    K: int
    seed: int
    prior: PriorConfig
    tags: np.ndarray | None = None   # optional per-set split tags ("early"/"late")
    truncated: bool = False

    @property
    def n_sets(self) -> int:
        return self.points.shape[0]

    @property
    def set_size(self) -> int:
        return self.points.shape[1]

    @property
    def dim(self) -> int:
        return self.points.shape[2]

    def params_of(self, i: int):
        return self.params[self.unique_id[i]]


def build_unsupervised_dataset(config: PriorConfig, n_sets: int, set_size: int,
                               K: int, seed: int, tags=None) -> Dataset:
    """K unique distributions, each providing n_sets // K sample sets.

    If K does not divide n_sets the trailing remainder is dropped and the
    dataset is flagged ``truncated``.
    """
    if not 1 <= K <= n_sets:
        raise ValueError("need 1 <= K <= n_sets")
    reps = n_sets // K
    truncated = reps * K != n_sets
    n_sets = reps * K

    param_rng = stream(seed, "datagen/params")
    sampler = sample_mvn_params if config.family == "mvn" else sample_gmm_params
    params = [sampler(param_rng, config) for _ in range(K)]

    unique_id = np.repeat(np.arange(K), reps)
    points = np.empty((n_sets, set_size, config.dim))
    for i in range(n_sets):
        set_rng = stream(seed, "datagen/set", i)
        points[i] = draw_set(set_rng, params[unique_id[i]], set_size)

    tag_arr = None
    if tags is not None:
        tag_arr = np.asarray(tags)
        if tag_arr.shape != (n_sets,):
            raise ValueError("tags must have one entry per (possibly truncated) set")
    return Dataset(family=config.family, points=points, params=params,
                   unique_id=unique_id, K=K, seed=seed, prior=config,
                   tags=tag_arr, truncated=truncated)


@dataclass(eq=False)
class PairedDataset:
    family: str
    source_points: np.ndarray   # (n_pairs, set_size, d)
    target_points: np.ndarray
    source_params: list
    target_params: list
    kind: str                   # "mvn_shift" or "gmm_bimodal"
    shift: np.ndarray           # b
    offset: np.ndarray          # b_off (gmm_bimodal only; zeros otherwise)
    support_low: float
    support_high: float
    seed: int
    prior: PriorConfig

    @property
    def n_pairs(self) -> int:
        return self.source_points.shape[0]

    @property
    def set_size(self) -> int:
        return self.source_points.shape[1]


def _bimodal_target_params(p: GmmParams, b: np.ndarray, b_off: np.ndarray) -> GmmParams:
    # each source component splits into two half-weight components at +/- b_off
    means = np.concatenate([p.means + b + b_off, p.means + b - b_off], axis=0)
    covs = np.concatenate([p.covs, p.covs], axis=0)
    weights = np.concatenate([p.weights, p.weights]) * 0.5
    return GmmParams(weights=weights, means=means, covs=covs)


def build_supervised_pairs(config: PriorConfig, n_pairs: int, set_size: int,
                           kind: str, seed: int,
                           shift=(1.0, 1.0), offset=(-0.1, 0.1),
                           support_low: float = 0.0, support_high: float = 2.5) -> PairedDataset:
    """Aligned (source, target) set pairs from a known pushforward.

    mvn_shift: target points are source points + b, rows permuted.
    gmm_bimodal: each source point is duplicated into x + b + b_off and
    x + b - b_off; the doubled set is subsampled back to set_size and permuted.
    Source parameters are drawn with means restricted to the support box.
    """
    if kind not in ("mvn_shift", "gmm_bimodal"):
        raise ValueError(f"unknown pair kind {kind!r}")
    d = config.dim
    b = np.asarray(shift, dtype=np.float64)
    b_off = np.asarray(offset, dtype=np.float64)
    if b.shape != (d,) or b_off.shape != (d,):
        raise ValueError("shift/offset must be d-vectors")

    param_rng = stream(seed, "datagen/pair_params")
    src_params, tgt_params = [], []
    src_points = np.empty((n_pairs, set_size, d))
    tgt_points = np.empty((n_pairs, set_size, d))
    for i in range(n_pairs):
        if kind == "mvn_shift":
            p = sample_mvn_params(param_rng, config, support_low, support_high)
            tgt_params.append(MvnParams(mean=p.mean + b, cov=p.cov))
        else:
            p = sample_gmm_params(param_rng, config, support_low, support_high)
            tgt_params.append(_bimodal_target_params(p, b, b_off))
        src_params.append(p)
        set_rng = stream(seed, "datagen/pair_set", i)
        X = draw_set(set_rng, p, set_size)
        src_points[i] = X
        if kind == "mvn_shift":
            shifted = X + b
            tgt_points[i] = shifted[set_rng.permutation(set_size)]
        else:
            doubled = np.concatenate([X + b + b_off, X + b - b_off], axis=0)
            keep = set_rng.choice(2 * set_size, set_size, replace=False)
            tgt_points[i] = doubled[keep][set_rng.permutation(set_size)]
    return PairedDataset(family=config.family, source_points=src_points,
                         target_points=tgt_points, source_params=src_params,
                         target_params=tgt_params, kind=kind, shift=b,
                         offset=b_off if kind == "gmm_bimodal" else np.zeros(d),
                         support_low=support_low, support_high=support_high,
                         seed=seed, prior=config)


def ood_target_grid(config: PriorConfig, resolution: int, seed: int) -> list[MvnParams]:
    """Gaussian targets with means on a lattice spanning the mean box.

    The grid depends only on (config, resolution, seed), so every model under a
    given master seed is evaluated against the same targets.  Order is
    row-major: the second coordinate varies fastest.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    rng = stream(seed, "datagen/ood_grid")
    axis = np.linspace(config.mean_low, config.mean_high, resolution)
    out = []
    for x in axis:
        for y in axis:
            cov = sample_inverse_wishart(rng, config.iw_dof,
                                         config.iw_scale_eye * np.eye(config.dim))
            mean = np.zeros(config.dim)
            mean[0], mean[1] = x, y
            out.append(MvnParams(mean=mean, cov=cov))
    return out


# ---------------------------------------------------------------------------
# serialization: a small versioned binary container, little-endian throughout
#
#   magic   8s   b"STDSET01"
#   family  u32  0 = mvn, 1 = gmm
#   d, n_sets, set_size, K   u32 each
#   seed    u64
#   flags   u32  bit 0: truncated, bit 1: has tags
#   prior   u32-length-prefixed utf-8 json
#   params  mvn: K * (d + d*d) f64;  gmm: u32 C then K * (C + C*d + C*d*d) f64
#   uids    n_sets u32
#   tags    n_sets u8 (0 none, 1 early, 2 late), only if flagged
#   points  n_sets * set_size * d f64, row-major
# ---------------------------------------------------------------------------

_MAGIC = b"STDSET01"
_TAG_CODES = {"": 0, "early": 1, "late": 2}
_TAG_NAMES = {v: k for k, v in _TAG_CODES.items()}


def save_dataset(ds: Dataset, path) -> None:
    prior_json = json.dumps(ds.prior.__dict__, sort_keys=True).encode()
    flags = (1 if ds.truncated else 0) | (2 if ds.tags is not None else 0)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIIII", 0 if ds.family == "mvn" else 1,
                            ds.dim, ds.n_sets, ds.set_size, ds.K))
        f.write(struct.pack("<QI", ds.seed, flags))
        f.write(struct.pack("<I", len(prior_json)))
        f.write(prior_json)
        if ds.family == "mvn":
            for p in ds.params:
                f.write(p.mean.astype("<f8").tobytes())
                f.write(p.cov.astype("<f8").tobytes())
        else:
            f.write(struct.pack("<I", ds.params[0].weights.shape[0]))
            for p in ds.params:
                f.write(p.weights.astype("<f8").tobytes())
                f.write(p.means.astype("<f8").tobytes())
                f.write(p.covs.astype("<f8").tobytes())
        f.write(ds.unique_id.astype("<u4").tobytes())
        if ds.tags is not None:
            codes = np.array([_TAG_CODES[str(t)] for t in ds.tags], dtype="u1")
            f.write(codes.tobytes())
        f.write(ds.points.astype("<f8").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise ValueError("not a dataset file (bad magic)")
        fam_code, d, n_sets, set_size, K = struct.unpack("<IIIII", f.read(20))
        seed, flags = struct.unpack("<QI", f.read(12))
        (plen,) = struct.unpack("<I", f.read(4))
        prior = PriorConfig(**json.loads(f.read(plen).decode()))
        family = "mvn" if fam_code == 0 else "gmm"
        params = []
        if family == "mvn":
            for _ in range(K):
                mean = np.frombuffer(f.read(8 * d), dtype="<f8").copy()
                cov = np.frombuffer(f.read(8 * d * d), dtype="<f8").reshape(d, d).copy()
                params.append(MvnParams(mean=mean, cov=cov))
        else:
            (C,) = struct.unpack("<I", f.read(4))
            for _ in range(K):
                w = np.frombuffer(f.read(8 * C), dtype="<f8").copy()
                m = np.frombuffer(f.read(8 * C * d), dtype="<f8").reshape(C, d).copy()
                c = np.frombuffer(f.read(8 * C * d * d), dtype="<f8").reshape(C, d, d).copy()
                params.append(GmmParams(weights=w, means=m, covs=c))
        unique_id = np.frombuffer(f.read(4 * n_sets), dtype="<u4").astype(np.int64)
        tags = None
        if flags & 2:
            codes = np.frombuffer(f.read(n_sets), dtype="u1")
            tags = np.array([_TAG_NAMES[int(c)] for c in codes])
        points = np.frombuffer(f.read(8 * n_sets * set_size * d), dtype="<f8")
        points = points.reshape(n_sets, set_size, d).copy()
    return Dataset(family=family, points=points, params=params, unique_id=unique_id,
                   K=K, seed=seed, prior=prior, tags=tags, truncated=bool(flags & 1))
