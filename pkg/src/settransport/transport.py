"""Conditional generators that move samples between distributions.

Two network families:

* :class:`RegressionMap` — a direct map y = T([x; (xi;) z...]).  With a noise
  input (``noise_dim`` > 0) the same architecture acts as a stochastic
  sampler; randomness enters only through the explicit noise argument.
* :class:`VelocityField` — v([x; t; z...]) trained by flow matching and
  integrated from t=0 to 1 at sampling time with the adaptive solver.

Conditioning is either on the source embedding alone ("sc") or on source and
target embeddings ("stc").  Embedding rows must be aligned with the point rows
by the caller (one row per point); the ``*_set`` helpers do that tiling for a
single set.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor, cat
from .nn import MLP
from .ode import ODESolverConfig, integrate

__all__ = ["RegressionMap", "VelocityField", "fm_transport_set"]


def _tile(z: np.ndarray, n: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.broadcast_to(z, (n, z.shape[-1]))


class RegressionMap:
    def __init__(self, dim: int, d_latent: int, d_hidden: int,
                 rng: np.random.Generator, conditioning: str = "stc",
                 noise_dim: int = 0, n_layers: int = 4):
        if conditioning not in ("stc", "sc"):
            raise ValueError(f"unknown conditioning {conditioning!r}")
        self.dim = dim
        self.d_latent = d_latent
        self.conditioning = conditioning
        self.noise_dim = noise_dim
        in_dim = dim + noise_dim + d_latent * (2 if conditioning == "stc" else 1)
        self.net = MLP([in_dim] + [d_hidden] * (n_layers - 1) + [dim], rng)

    def parameters(self):
        return self.net.parameters()

    def __call__(self, x, z_src, z_tgt=None, xi=None) -> Tensor:
        """Row-aligned forward: all arguments are (m, ·) with matching m."""
        parts = [as_tensor(x)]
        if self.noise_dim:
            if xi is None:
                raise ValueError("this map needs a noise input")
            parts.append(as_tensor(xi))
        parts.append(as_tensor(z_src))
        if self.conditioning == "stc":
            if z_tgt is None:
                raise ValueError("stc conditioning needs a target embedding")
            parts.append(as_tensor(z_tgt))
        elif z_tgt is not None:
            raise ValueError("sc conditioning takes no target embedding")
        out = self.net(cat(parts, axis=1))
        if not np.all(np.isfinite(out.data)):
            raise FloatingPointError("non-finite value produced by transport map")
        return out

    def transport_set(self, X: np.ndarray, z_src: np.ndarray, z_tgt=None,
                      rng: np.random.Generator | None = None) -> np.ndarray:
        """Apply the map to one set; draws noise from `rng` if stochastic."""
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        xi = None
        if self.noise_dim:
            if rng is None:
                raise ValueError("stochastic map needs an rng at sampling time")
            xi = rng.standard_normal((n, self.noise_dim))
        zs = _tile(z_src, n)
        zt = _tile(z_tgt, n) if self.conditioning == "stc" else None
        return self(X, zs, zt, xi).data


class VelocityField:
    def __init__(self, dim: int, d_latent: int, d_hidden: int,
                 rng: np.random.Generator, conditioning: str = "stc",
                 n_layers: int = 4):
        if conditioning not in ("stc", "sc"):
            raise ValueError(f"unknown conditioning {conditioning!r}")
        self.dim = dim
        self.d_latent = d_latent
        self.conditioning = conditioning
        in_dim = dim + 1 + d_latent * (2 if conditioning == "stc" else 1)
        self.net = MLP([in_dim] + [d_hidden] * (n_layers - 1) + [dim], rng)

    def parameters(self):
        return self.net.parameters()

    def __call__(self, x, t, z_src, z_tgt=None) -> Tensor:
        """x: (m, d); t: (m, 1) raw times; embeddings row-aligned."""
        parts = [as_tensor(x), as_tensor(t)]
        parts.append(as_tensor(z_src))
        if self.conditioning == "stc":
            if z_tgt is None:
                raise ValueError("stc conditioning needs a target embedding")
            parts.append(as_tensor(z_tgt))
        elif z_tgt is not None:
            raise ValueError("sc conditioning takes no target embedding")
        return self.net(cat(parts, axis=1))


def fm_transport_set(field: VelocityField, X: np.ndarray, z_src: np.ndarray,
                     z_tgt=None, ode_config: ODESolverConfig = ODESolverConfig()) -> np.ndarray:
    """Push one set through the learned flow from t=0 to t=1.

    Sampling is deterministic: the integration starts at the data itself.  The
    field acts on each point separately; points share only the step-size
    schedule.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    zs = np.array(_tile(z_src, n))
    zt = np.array(_tile(z_tgt, n)) if field.conditioning == "stc" else None

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        tcol = np.full((n, 1), t)
        return field(y, tcol, zs, zt).data

    out = integrate(rhs, X, 0.0, 1.0, ode_config)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite value produced by flow sampling")
    return out
