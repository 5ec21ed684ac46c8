"""Diagnostics: pairing alignment, embedding concentration, subsampling bias,
and latent-space geodesic probes.

These routines answer questions about a trained model or encoder rather than
producing headline metrics:

* does a generator move individual points coherently with their source
  position, or does it only match the target distribution as a whole
  (:func:`alignment_report`)?
* do set embeddings concentrate at the 1/sqrt(m) parametric rate as the set
  size grows (:func:`clt_scaling`)?
* how fast does the subsampled training loss approach its full-set value
  (:func:`plugin_loss_convergence`)?
* does walking the straight line between two embeddings trace something close
  to the Wasserstein geodesic between the two fitted Gaussians
  (:func:`latent_interpolation_path`)?
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .autodiff import as_tensor
from .datagen import draw_set
from .encoders import embed_sets_chunked
from .losses import energy_batch_loss, fm_batch_loss, swd_batch_loss, unit_projections
from .metrics import GaussianParams, fit_gaussian, gaussian_w2
from .ode import ODESolverConfig
from .training import TransportModel

__all__ = [
    "AlignmentReport",
    "alignment_report",
    "alignment_diagnostic",
    "CltReport",
    "clt_scaling",
    "PluginConvergenceReport",
    "plugin_loss_convergence",
    "gaussian_ot_displacement",
    "TrajectoryReport",
    "latent_interpolation_path",
]


# ---------------------------------------------------------------------------
# pairing alignment


@dataclass
class AlignmentReport:
    d_pair: float            # mean centered distance x_i -> its transported point
    d_rand: float            # same under random re-pairing with true target draws
    ratio: float             # d_pair / d_rand; ~0 pointwise coupling, ~1 shuffling
    spearman_rho: float      # rank correlation of projections on the shift axis
    n_samples: int
    n_permutations: int
    degenerate_direction: bool


def _centered_pair_distance(Xc: np.ndarray, Yc: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(Xc - Yc, axis=1)))


def alignment_report(X: np.ndarray, Y_hat: np.ndarray, Y: np.ndarray,
                     n_perm: int = 50, rng: np.random.Generator | None = None,
                     direction: np.ndarray | None = None) -> AlignmentReport:
    """Quantify how much of the source ordering survives transport.

    Row i of ``Y_hat`` must be the image of row i of ``X``; ``Y`` holds true
    target draws of the same size.  Both sides are centered at their own mean
    before distances are taken, so the three distance statistics are invariant
    to translating the target side.  A deterministic map that preserves
    neighborhoods gives ``ratio`` near 0; a sampler that ignores which source
    point it started from gives ``ratio`` near 1.

    ``spearman_rho`` correlates the ranks of source and transported points
    projected on ``direction``.  By default the direction is the empirical
    mean shift from X to Y, which tracks the data; pass an explicit direction
    to make the correlation invariant to translations as well.
    """
    X = np.asarray(X, dtype=np.float64)
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y_hat.shape or X.shape != Y.shape or X.ndim != 2:
        raise ValueError("X, Y_hat and Y must share one (n, d) shape")
    n = X.shape[0]
    if n < 2:
        raise ValueError("alignment needs at least two paired points")
    if n_perm < 1:
        raise ValueError("need at least one permutation")
    if rng is None:
        raise ValueError("alignment needs a Generator for the permutations")

    mu_u = X.mean(axis=0)
    mu_v = Y.mean(axis=0)
    Xc = X - mu_u
    d_pair = _centered_pair_distance(Xc, Y_hat - mu_v)
    Yc = Y - mu_v
    d_rand = float(np.mean([
        _centered_pair_distance(Xc, Yc[rng.permutation(n)]) for _ in range(n_perm)]))
    ratio = d_pair / d_rand if d_rand > 0.0 else math.nan

    delta = (mu_v - mu_u) if direction is None else np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(delta))
    degenerate = norm < 1e-12
    if degenerate:
        rho = math.nan
    else:
        axis = delta / norm
        rho = float(spearmanr(X @ axis, Y_hat @ axis).statistic)
    return AlignmentReport(d_pair=d_pair, d_rand=d_rand, ratio=ratio,
                           spearman_rho=rho, n_samples=n, n_permutations=n_perm,
                           degenerate_direction=degenerate)


def alignment_diagnostic(model: TransportModel, source_params, target_params,
                         n: int = 200, n_perm: int = 50,
                         rng: np.random.Generator | None = None) -> AlignmentReport:
    """Draw a fresh pair, transport it, and run :func:`alignment_report`."""
    if rng is None:
        raise ValueError("alignment needs a Generator")
    X = draw_set(rng, source_params, n)
    Y = draw_set(rng, target_params, n)
    z_src = model.embed(X)
    z_tgt = model.embed(Y) if model.config.stc else None
    Y_hat = model.transport(X, z_src, z_tgt, rng=rng)
    return alignment_report(X, Y_hat, Y, n_perm=n_perm, rng=rng)


# ---------------------------------------------------------------------------
# embedding concentration


@dataclass
class CltReport:
    m_values: np.ndarray     # set sizes probed
    spreads: np.ndarray      # RMS per-coordinate std of embeddings across reps
    slope: float             # log-log fit; ~-0.5 for mean-like encoders
    degenerate: bool         # some spread underflowed (constant encoder)
    covariance: np.ndarray   # embedding covariance at the largest size


def clt_scaling(encoder, params, m_values, reps: int = 100,
                rng: np.random.Generator | None = None) -> CltReport:
    """Spread of set embeddings as a function of set size.

    For each size m, ``reps`` independent sets are drawn from ``params`` and
    embedded; the spread is the root mean squared per-coordinate standard
    deviation across the replicates.  Anything built from empirical averages
    should shrink like m^-0.5.  ``encoder`` only needs ``embed_sets`` and
    ``d_latent``, so simple closed-form encoders can be probed too.
    """
    m_values = np.asarray(m_values, dtype=np.int64)
    if m_values.ndim != 1 or len(m_values) < 3:
        raise ValueError("need at least three set sizes for a rate fit")
    if np.any(m_values < 2) or len(np.unique(m_values)) != len(m_values):
        raise ValueError("set sizes must be distinct and at least 2")
    if reps < 30:
        raise ValueError("need at least 30 replicates per size")
    if rng is None:
        raise ValueError("clt scaling needs a Generator")

    spreads = np.zeros(len(m_values))
    cov = None
    largest = int(np.argmax(m_values))
    for j, m in enumerate(m_values):
        sets = np.stack([draw_set(rng, params, int(m)) for _ in range(reps)])
        Z = embed_sets_chunked(encoder, sets)
        spreads[j] = float(np.sqrt(np.mean(np.var(Z, axis=0, ddof=1))))
        if j == largest:
            cov = np.atleast_2d(np.cov(Z, rowvar=False))
    degenerate = bool(np.any(spreads < 1e-15))
    slope = math.nan
    if not degenerate:
        slope = float(np.polyfit(np.log(m_values), np.log(spreads), 1)[0])
    return CltReport(m_values=m_values, spreads=spreads, slope=slope,
                     degenerate=degenerate, covariance=cov)


# ---------------------------------------------------------------------------
# subsampled-loss bias


@dataclass
class PluginConvergenceReport:
    m_values: np.ndarray
    gaps: np.ndarray         # mean |subsampled loss - full-set loss| per size
    reference_loss: float
    slope: float             # log-log fit over the positive gaps
    reps: int


def _frozen_loss_fn(model: TransportModel, X_eval: np.ndarray, Y_eval: np.ndarray,
                    rng: np.random.Generator):
    """Training-objective evaluator with every random input pre-drawn.

    Returns a function of the two embeddings only, so repeated calls isolate
    the effect of embedding a subsample instead of the full set.
    """
    cfg = model.config
    gen = model.generator
    n, d = X_eval.shape

    def rows(z):
        return None if z is None else as_tensor(np.repeat(z[None, :], n, axis=0))

    if cfg.generator == "fm":
        t = rng.random((1, n, 1))
        eps = rng.standard_normal((1, n, d))

        def fn(z_src, z_tgt):
            return fm_batch_loss(gen, X_eval[None], Y_eval[None], t, eps,
                                 cfg.fm_sigma, rows(z_src), rows(z_tgt)).item()
        return fn

    xi = rng.standard_normal((n, d)) if cfg.generator == "stoch_energy" else None
    proj = unit_projections(rng, d, cfg.n_projections) if cfg.generator == "swd" else None

    def fn(z_src, z_tgt):
        out = gen(X_eval, rows(z_src), rows(z_tgt), xi=xi).reshape(1, n, d)
        if proj is not None:
            return swd_batch_loss(out, Y_eval[None], proj).item()
        return energy_batch_loss(out, Y_eval[None]).item()
    return fn


def plugin_loss_convergence(model: TransportModel, source_params, target_params,
                            m_values, reps: int = 20, n_eval: int = 256,
                            reference_size: int = 8192,
                            rng: np.random.Generator | None = None) -> PluginConvergenceReport:
    """Gap between the subsampled training loss and its full-set value.

    One large reference set per side is drawn once; embedding it defines the
    reference loss.  For each probed size m the sets are subsampled without
    replacement, re-embedded, and the frozen loss re-evaluated, so the gap is
    purely the embedding error from seeing m of the points.  Subsampling the
    full size recovers the reference exactly (indices are sorted), which pins
    the gap at zero there.
    """
    if model.config.conditioning != "set":
        raise TypeError("loss convergence probes set-encoder embeddings")
    m_values = np.asarray(m_values, dtype=np.int64)
    if m_values.ndim != 1 or len(m_values) < 3:
        raise ValueError("need at least three subsample sizes for a rate fit")
    if np.any(m_values < 2) or np.any(m_values > reference_size):
        raise ValueError(f"subsample sizes must lie in [2, {reference_size}]")
    if reps < 1:
        raise ValueError("need at least one replicate")
    if rng is None:
        raise ValueError("loss convergence needs a Generator")

    S_u = draw_set(rng, source_params, reference_size)
    S_v = draw_set(rng, target_params, reference_size)
    X_eval = draw_set(rng, source_params, n_eval)
    Y_eval = draw_set(rng, target_params, n_eval)
    loss_fn = _frozen_loss_fn(model, X_eval, Y_eval, rng)

    stc = model.config.stc
    z_u_full = model.embed(S_u)
    z_v_full = model.embed(S_v) if stc else None
    reference = loss_fn(z_u_full, z_v_full)

    gaps = np.zeros(len(m_values))
    for j, m in enumerate(m_values):
        acc = 0.0
        for _ in range(reps):
            iu = np.sort(rng.choice(reference_size, int(m), replace=False))
            z_u = model.embed(S_u[iu])
            if stc:
                iv = np.sort(rng.choice(reference_size, int(m), replace=False))
                z_v = model.embed(S_v[iv])
            else:
                z_v = None
            acc += abs(loss_fn(z_u, z_v) - reference)
        gaps[j] = acc / reps

    pos = gaps > 0.0
    slope = math.nan
    if np.count_nonzero(pos) >= 2:
        slope = float(np.polyfit(np.log(m_values[pos]), np.log(gaps[pos]), 1)[0])
    return PluginConvergenceReport(m_values=m_values, gaps=gaps,
                                   reference_loss=reference, slope=slope, reps=reps)


# ---------------------------------------------------------------------------
# Gaussian displacement interpolation and latent paths


def _eigh_floor(M: np.ndarray, floor: float = 1e-12):
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    return np.clip(vals, floor, None), vecs


def gaussian_ot_displacement(p: GaussianParams, q: GaussianParams,
                             t: float) -> GaussianParams:
    """Point at fraction t along the 2-Wasserstein geodesic from p to q.

    The mean interpolates linearly; the covariance follows
    ``C_t = ((1-t) I + t T) cov_p ((1-t) I + t T)`` with T the optimal linear
    map between the two Gaussians.  Both covariances must be positive
    definite.
    """
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    for name, g in (("p", p), ("q", q)):
        try:
            np.linalg.cholesky(g.cov)
        except np.linalg.LinAlgError:
            raise ValueError(f"covariance of {name} is not positive definite")

    vals, vecs = _eigh_floor(p.cov)
    half = (vecs * np.sqrt(vals)) @ vecs.T
    inv_half = (vecs / np.sqrt(vals)) @ vecs.T
    mid = half @ q.cov @ half
    mvals, mvecs = _eigh_floor(mid, floor=0.0)
    mid_half = (mvecs * np.sqrt(mvals)) @ mvecs.T
    T = inv_half @ mid_half @ inv_half
    C = (1.0 - t) * np.eye(p.dim) + t * T
    cov_t = C @ p.cov @ C.T
    mean_t = (1.0 - t) * p.mean + t * q.mean
    return GaussianParams(mean=mean_t, cov=0.5 * (cov_t + cov_t.T))


@dataclass
class TrajectoryReport:
    times: np.ndarray
    sets: list                    # transported sets, entry 0 is the source
    fits: list                    # Gaussian fit of each set
    interpolants: list            # geodesic Gaussians at the same times
    gaps: np.ndarray              # W2 between fit and geodesic point
    endpoint_w2: float            # W2 between the two endpoint fits


def latent_interpolation_path(model: TransportModel, S_u: np.ndarray,
                              S_v: np.ndarray, K_steps: int = 10,
                              rng: np.random.Generator | None = None,
                              ode_config: ODESolverConfig | None = None) -> TrajectoryReport:
    """Hop a set along the straight latent line between two embeddings.

    Step k maps the current set from the embedding at time t_k to the one at
    t_{k+1}, so the model is always asked for a small move.  Each fitted
    Gaussian along the way is compared with the displacement interpolation
    between the endpoint fits; small gaps mean latent interpolation follows
    the Wasserstein geodesic.
    """
    if not model.config.stc:
        raise TypeError("latent interpolation needs both embeddings as inputs")
    if K_steps < 1:
        raise ValueError("need at least one step")
    S_u = np.asarray(S_u, dtype=np.float64)
    S_v = np.asarray(S_v, dtype=np.float64)
    z_u = model.embed(S_u)
    z_v = model.embed(S_v)
    times = np.linspace(0.0, 1.0, K_steps + 1)

    sets = [S_u.copy()]
    for k in range(K_steps):
        z_a = (1.0 - times[k]) * z_u + times[k] * z_v
        z_b = (1.0 - times[k + 1]) * z_u + times[k + 1] * z_v
        sets.append(model.transport(sets[-1], z_a, z_b, rng=rng,
                                    ode_config=ode_config))

    fits = [fit_gaussian(S) for S in sets]
    fit_u, fit_v = fits[0], fits[-1]
    interpolants = [gaussian_ot_displacement(fit_u, fit_v, float(t)) for t in times]
    gaps = np.array([gaussian_w2(f, g) for f, g in zip(fits, interpolants)])
    return TrajectoryReport(times=times, sets=sets, fits=fits,
                            interpolants=interpolants, gaps=gaps,
                            endpoint_w2=gaussian_w2(fit_u, fit_v))
