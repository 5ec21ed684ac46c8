"""Minibatch training of conditional transport models.

One step draws a batch of (source, target) set pairs under a pairing policy,
subsamples each set to a fixed size, embeds the subsamples (or looks up table
rows for the one-hot baseline), evaluates the generator loss and applies one
Adam update.  Source+target-conditioned runs also evaluate the loss with the
roles of source and target swapped and train on the sum; supervised
source-only runs train on the forward direction alone.

Every step's randomness comes from a stream keyed by (seed, "train/step", s),
so a step's draws depend only on the step index.  Training the same config on
the same data twice is bit-identical.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tensor, repeat_rows
from .datagen import Dataset, PairedDataset
from .encoders import OneHotEncoder, SetEncoder, dataset_centroids
from .losses import energy_batch_loss, fm_batch_loss, swd_batch_loss, unit_projections
from .ode import ODESolverConfig
from .optim import Adam
from .rng import stream
from .transport import RegressionMap, VelocityField, fm_transport_set

__all__ = ["TrainConfig", "TransportModel", "Trainer", "train"]

GENERATORS = ("swd", "energy", "fm", "stoch_energy")
CONDITIONINGS = ("set", "onehot")
PAIRINGS = ("supervised_pairs", "any_to_any_uniform", "forward_time_only",
            "semi_supervised_mixture")


@dataclass
class TrainConfig:
    generator: str = "energy"
    conditioning: str = "set"
    stc: bool = True                      # condition on target embedding too
    pairing: str = "any_to_any_uniform"
    mixture_p: float = 0.25
    d_latent: int = 16
    d_hidden_encoder: int = 64
    d_hidden_generator: int = 64
    n_blocks: int = 2
    l2_normalize: bool = False
    epochs: int = 25
    batch_pairs: int = 32
    subsample: int = 64
    lr: float = 2e-4
    n_projections: int = 100
    fm_sigma: float = 0.5
    bidirectional: bool | None = None     # None -> bidirectional iff stc
    seed: int = 0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.conditioning not in CONDITIONINGS:
            raise ValueError(f"unknown conditioning {self.conditioning!r}")
        if self.pairing not in PAIRINGS:
            raise ValueError(f"unknown pairing {self.pairing!r}")
        if not self.stc and self.pairing != "supervised_pairs":
            raise ValueError("source-only conditioning needs supervised pairs")
        if not self.stc and self.conditioning == "onehot":
            raise ValueError("source-only one-hot conditioning is not supported")

    @property
    def effective_bidirectional(self) -> bool:
        return self.stc if self.bidirectional is None else self.bidirectional


@dataclass(eq=False)
class TransportModel:
    family: str
    dim: int
    config: TrainConfig
    encoder: SetEncoder | OneHotEncoder
    generator: RegressionMap | VelocityField
    epoch_losses: list = field(default_factory=list)

    def embed(self, X: np.ndarray) -> np.ndarray:
        """Embed one sample set (nearest-centroid lookup for one-hot)."""
        return self.encoder.embed(X)

    def embed_id(self, uid: int) -> np.ndarray:
        if not isinstance(self.encoder, OneHotEncoder):
            raise TypeError("embed_id only applies to one-hot conditioning")
        return self.encoder.table.data[uid]

    def transport(self, X: np.ndarray, z_src: np.ndarray, z_tgt=None,
                  rng: np.random.Generator | None = None,
                  ode_config: ODESolverConfig | None = None) -> np.ndarray:
        if isinstance(self.generator, VelocityField):
            return fm_transport_set(self.generator, X, z_src, z_tgt,
                                    ode_config or ODESolverConfig())
        return self.generator.transport_set(X, z_src, z_tgt, rng=rng)


def _subsample(points: np.ndarray, idx: np.ndarray, m: int,
               rng: np.random.Generator) -> np.ndarray:
    """Pick m distinct points from each selected set.  (B, m, d) output."""
    sel = points[idx]
    B, S, d = sel.shape
    if m > S:
        raise ValueError(f"subsample size {m} exceeds stored set size {S}")
    if m == S:
        return sel
    cols = np.argsort(rng.random((B, S)), axis=1)[:, :m]
    return np.take_along_axis(sel, cols[:, :, None], axis=1)


class Trainer:
    def __init__(self, data: Dataset | PairedDataset, config: TrainConfig):
        self.data = data
        self.config = config
        paired = isinstance(data, PairedDataset)
        if config.pairing in ("supervised_pairs", "semi_supervised_mixture") and not paired:
            raise TypeError(f"{config.pairing} needs a PairedDataset")
        if config.pairing in ("any_to_any_uniform", "forward_time_only") and paired:
            raise TypeError(f"{config.pairing} needs an unpaired Dataset")
        if config.pairing == "forward_time_only":
            if data.tags is None:
                raise ValueError("forward_time_only needs split tags")
            self._early = np.flatnonzero(data.tags == "early")
            self._late = np.flatnonzero(data.tags == "late")
            if len(self._early) == 0 or len(self._late) == 0:
                raise ValueError("forward_time_only needs both early and late sets")
        self.paired = paired
        self.dim = data.source_points.shape[2] if paired else data.dim
        self.n_units = data.n_pairs if paired else data.n_sets

        cfg = config
        if cfg.conditioning == "onehot":
            if paired:
                raise TypeError("one-hot conditioning indexes unique ids of an unpaired Dataset")
            enc_rng = stream(cfg.seed, "init/table")
            self.encoder = OneHotEncoder(data.K, cfg.d_latent, enc_rng)
        else:
            enc_rng = stream(cfg.seed, "init/encoder")
            self.encoder = SetEncoder(self.dim, cfg.d_hidden_encoder, cfg.d_latent,
                                      enc_rng, n_blocks=cfg.n_blocks,
                                      l2_normalize=cfg.l2_normalize)
        gen_rng = stream(cfg.seed, "init/generator")
        conditioning = "stc" if cfg.stc else "sc"
        if cfg.generator == "fm":
            self.generator = VelocityField(self.dim, cfg.d_latent,
                                           cfg.d_hidden_generator, gen_rng,
                                           conditioning=conditioning)
        else:
            noise_dim = self.dim if cfg.generator == "stoch_energy" else 0
            self.generator = RegressionMap(self.dim, cfg.d_latent,
                                           cfg.d_hidden_generator, gen_rng,
                                           conditioning=conditioning,
                                           noise_dim=noise_dim)
        self.params = list(self.encoder.parameters()) + list(self.generator.parameters())
        self.opt = Adam(self.params, lr=cfg.lr)
        self.steps_per_epoch = max(1, self.n_units // cfg.batch_pairs)

    # ---- batch assembly ------------------------------------------------------

    def _draw_pair_indices(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        B = cfg.batch_pairs
        if cfg.pairing == "supervised_pairs":
            u = rng.integers(0, self.n_units, B)
            return u, u
        if cfg.pairing == "any_to_any_uniform":
            return rng.integers(0, self.n_units, B), rng.integers(0, self.n_units, B)
        if cfg.pairing == "forward_time_only":
            u = self._early[rng.integers(0, len(self._early), B)]
            v = self._late[rng.integers(0, len(self._late), B)]
            return u, v
        # semi_supervised_mixture: the true partner with probability p
        u = rng.integers(0, self.n_units, B)
        keep = rng.random(B) < cfg.mixture_p
        v = np.where(keep, u, rng.integers(0, self.n_units, B))
        return u, v

    def _batch(self, rng: np.random.Generator):
        cfg = self.config
        u, v = self._draw_pair_indices(rng)
        if self.paired:
            src = _subsample(self.data.source_points, u, cfg.subsample, rng)
            tgt = _subsample(self.data.target_points, v, cfg.subsample, rng)
        else:
            src = _subsample(self.data.points, u, cfg.subsample, rng)
            tgt = _subsample(self.data.points, v, cfg.subsample, rng)
        return u, v, src, tgt

    def _embeddings(self, u, v, src, tgt):
        """Per-pair embeddings as (B, d_latent) tensors; z_tgt None when sc."""
        cfg = self.config
        if cfg.conditioning == "onehot":
            uid = self.data.unique_id
            z = self.encoder.embed_ids(np.concatenate([uid[u], uid[v]]))
            B = len(u)
            return z[:B], z[B:]
        if cfg.stc:
            both = np.concatenate([src, tgt], axis=0)
            z = self.encoder.embed_sets(both)
            B = src.shape[0]
            return z[:B], z[B:]
        return self.encoder.embed_sets(src), None

    def _direction_loss(self, rng, src, tgt, z_src, z_tgt) -> Tensor:
        """Loss for transporting src -> tgt under the configured generator."""
        cfg = self.config
        B, m, d = src.shape
        zs_rows = repeat_rows(z_src, m)
        zt_rows = repeat_rows(z_tgt, m) if z_tgt is not None else None
        if cfg.generator == "fm":
            t = rng.random((B, m, 1))
            eps = rng.standard_normal((B, m, d))
            return fm_batch_loss(self.generator, src, tgt, t, eps, cfg.fm_sigma,
                                 zs_rows, zt_rows)
        x = src.reshape(B * m, d)
        if cfg.generator == "stoch_energy":
            xi = rng.standard_normal((B * m, d))
            out = self.generator(x, zs_rows, zt_rows, xi=xi)
        else:
            out = self.generator(x, zs_rows, zt_rows)
        out = out.reshape(B, m, d)
        if cfg.generator == "swd":
            proj = unit_projections(rng, d, cfg.n_projections)
            return swd_batch_loss(out, tgt, proj)
        return energy_batch_loss(out, tgt)

    def loss(self, step_index: int) -> Tensor:
        """The full step objective for a given step index (no update)."""
        rng = stream(self.config.seed, "train/step", step_index)
        u, v, src, tgt = self._batch(rng)
        z_src, z_tgt = self._embeddings(u, v, src, tgt)
        total = self._direction_loss(rng, src, tgt, z_src, z_tgt)
        if self.config.effective_bidirectional:
            total = total + self._direction_loss(rng, tgt, src, z_tgt, z_src)
        return total

    def step(self, step_index: int) -> float:
        loss = self.loss(step_index)
        val = loss.item()
        if not np.isfinite(val):
            raise RuntimeError(
                f"non-finite loss {val!r} at step {step_index} "
                f"({self.config.generator}/{self.config.conditioning}, seed {self.config.seed})")
        self.opt.zero_grad()
        loss.backward()
        self.opt.step()
        return val

    # ---- full run ------------------------------------------------------------

    def run(self, log_path=None) -> TransportModel:
        cfg = self.config
        log_f = open(log_path, "w") if log_path else None
        epoch_losses = []
        t0 = time.perf_counter()
        try:
            s = 0
            for epoch in range(cfg.epochs):
                acc = 0.0
                for _ in range(self.steps_per_epoch):
                    val = self.step(s)
                    acc += val
                    if log_f is not None:
                        log_f.write(json.dumps({
                            "step": s, "epoch": epoch, "loss": val,
                            "wall": round(time.perf_counter() - t0, 6)}) + "\n")
                    s += 1
                epoch_losses.append(acc / self.steps_per_epoch)
        finally:
            if log_f is not None:
                log_f.close()
        if cfg.conditioning == "onehot":
            self.encoder.set_centroids(
                dataset_centroids(self.data.points, self.data.unique_id, self.data.K))
        family = self.data.family
        model = TransportModel(family=family, dim=self.dim, config=cfg,
                               encoder=self.encoder, generator=self.generator,
                               epoch_losses=epoch_losses)
        return model


def train(data: Dataset | PairedDataset, config: TrainConfig, log_path=None) -> TransportModel:
    return Trainer(data, config).run(log_path=log_path)


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)
