"""Versioned binary serialization of trained transport models.

Layout: an 8-byte magic, a little-endian uint64 header length, a JSON header,
then one raw blob of little-endian float64 values.  The header carries the
training config and enough structure to rebuild the networks; the blob holds
every parameter tensor in declaration order (encoder first, then generator),
followed by the one-hot centroid table when present.  A checksum of the blob
is stored in the header and verified on load, so silent corruption fails
loudly instead of producing a subtly wrong model.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict

import numpy as np

from .encoders import OneHotEncoder, SetEncoder
from .rng import stream
from .training import TrainConfig, TransportModel
from .transport import RegressionMap, VelocityField

__all__ = ["save_model", "load_model", "MAGIC", "FORMAT_VERSION"]

MAGIC = b"STMODEL1"
FORMAT_VERSION = 1


def _parameters(model: TransportModel):
    return list(model.encoder.parameters()) + list(model.generator.parameters())


def save_model(model: TransportModel, path) -> None:
    params = _parameters(model)
    pieces = [np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in params]
    if isinstance(model.encoder, OneHotEncoder):
        encoder_info = {"kind": "onehot", "K": model.encoder.K,
                        "has_centroids": model.encoder.centroids is not None}
        if model.encoder.centroids is not None:
            pieces.append(np.ascontiguousarray(model.encoder.centroids,
                                               dtype="<f8").tobytes())
    else:
        encoder_info = {"kind": "set", "K": None, "has_centroids": False}
    blob = b"".join(pieces)

    header = {
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "dim": model.dim,
        "config": asdict(model.config),
        "encoder": encoder_info,
        "epoch_losses": [float(v) for v in model.epoch_losses],
        "n_doubles": len(blob) // 8,
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint64(len(head)).tobytes())
        f.write(head)
        f.write(blob)


def _rebuild_networks(header: dict):
    cfg = TrainConfig(**header["config"])
    dim = int(header["dim"])
    enc = header["encoder"]
    if enc["kind"] == "onehot":
        encoder = OneHotEncoder(int(enc["K"]), cfg.d_latent,
                                stream(cfg.seed, "init/table"))
    else:
        encoder = SetEncoder(dim, cfg.d_hidden_encoder, cfg.d_latent,
                             stream(cfg.seed, "init/encoder"),
                             n_blocks=cfg.n_blocks,
                             l2_normalize=cfg.l2_normalize)
    gen_rng = stream(cfg.seed, "init/generator")
    conditioning = "stc" if cfg.stc else "sc"
    if cfg.generator == "fm":
        generator = VelocityField(dim, cfg.d_latent, cfg.d_hidden_generator,
                                  gen_rng, conditioning=conditioning)
    else:
        noise_dim = dim if cfg.generator == "stoch_energy" else 0
        generator = RegressionMap(dim, cfg.d_latent, cfg.d_hidden_generator,
                                  gen_rng, conditioning=conditioning,
                                  noise_dim=noise_dim)
    return cfg, dim, encoder, generator


def load_model(path) -> TransportModel:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a transport model file")
        head_len = int(np.frombuffer(f.read(8), dtype="<u8")[0])
        header = json.loads(f.read(head_len).decode("utf-8"))
        if header["format_version"] != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version "
                             f"{header['format_version']}")
        blob = f.read()

    if hashlib.sha256(blob).hexdigest() != header["sha256"]:
        raise ValueError(f"{path}: checksum mismatch, file is corrupted")
    values = np.frombuffer(blob, dtype="<f8")
    if len(values) != header["n_doubles"]:
        raise ValueError(f"{path}: parameter blob has wrong length")

    cfg, dim, encoder, generator = _rebuild_networks(header)
    params = list(encoder.parameters()) + list(generator.parameters())
    offset = 0
    for p in params:
        size = p.data.size
        p.data[...] = values[offset:offset + size].reshape(p.data.shape)
        offset += size
    if header["encoder"]["has_centroids"]:
        size = header["encoder"]["K"] * dim
        encoder.set_centroids(values[offset:offset + size].reshape(-1, dim))
        offset += size
    if offset != len(values):
        raise ValueError(f"{path}: parameter blob has wrong length")

    return TransportModel(family=header["family"], dim=dim, config=cfg,
                          encoder=encoder, generator=generator,
                          epoch_losses=list(header["epoch_losses"]))
