"""Semi-supervised transport: ridge embedding predictor and regime harness.

The semi-supervised recipe trains a source+target-conditioned model on
unpaired data covering the full prior support, then fits a ridge regression
from source embeddings to target embeddings on the (restricted-support)
paired subset.  At test time the target embedding is predicted from the
source embedding alone.

Three regimes are compared on supervised test pairs:

* ``supervised_SC`` — a source-only-conditioned model trained on the pairs;
  never sees target samples at evaluation.
* ``semi_supervised_STC`` — the any-to-any model with the ridge-predicted
  target embedding.
* ``oracle_STC`` — the same model conditioned on the true target embedding;
  an upper bound since it uses strictly more information.

Evaluation records carry the L-infinity norm bucket of the true source mean
so performance can be resolved inside vs outside the supervised support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datagen import GmmParams, MvnParams, PairedDataset
from .encoders import embed_sets_chunked
from .metrics import energy_distance, fit_gaussian, gaussian_w2, mmd_rbf, swd
from .records import MetricsRecord
from .rng import stream
from .training import TransportModel

__all__ = [
    "RidgePredictor",
    "RegimeSpec",
    "REGIMES",
    "fit_ridge_cv",
    "predict_target_embedding",
    "fit_embedding_predictor",
    "regime_transport",
    "evaluate_regime",
    "source_mean",
    "bucket_label",
]

REGIMES = ("supervised_SC", "semi_supervised_STC", "oracle_STC")

DEFAULT_ALPHAS = np.logspace(-6.0, 6.0, 13)


@dataclass
class RidgePredictor:
    weight: np.ndarray            # (d_out, d_in); prediction is W z + b
    bias: np.ndarray              # (d_out,)
    alpha: float
    cv_mse: np.ndarray = field(default_factory=lambda: np.array([]))
    alphas: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("ridge predictor has non-finite coefficients")


def _ridge_coef(Xc: np.ndarray, Yc: np.ndarray, alpha: float) -> np.ndarray:
    """Closed-form centered ridge solution, (d_in, d_out)."""
    d = Xc.shape[1]
    G = Xc.T @ Xc + alpha * np.eye(d)
    return np.linalg.solve(G, Xc.T @ Yc)


def fit_ridge_cv(Z_src: np.ndarray, Z_tgt: np.ndarray, folds: int = 5,
                 alphas: np.ndarray | None = None,
                 rng: np.random.Generator | None = None) -> RidgePredictor:
    """Ridge regression Z_tgt ~ Z_src with K-fold selection of alpha.

    The intercept is handled by centering.  For each alpha the mean validation
    MSE across folds is computed; the best alpha is refit on all rows.  Folds
    are contiguous unless an rng is given to shuffle the row order.
    """
    Z_src = np.asarray(Z_src, dtype=np.float64)
    Z_tgt = np.asarray(Z_tgt, dtype=np.float64)
    if Z_src.ndim != 2 or Z_tgt.ndim != 2 or Z_src.shape[0] != Z_tgt.shape[0]:
        raise ValueError("need matching (n, d) embedding matrices")
    n = Z_src.shape[0]
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError(f"{n} pairs cannot fill {folds} folds")
    alphas = DEFAULT_ALPHAS if alphas is None else np.asarray(alphas, dtype=np.float64)

    order = rng.permutation(n) if rng is not None else np.arange(n)
    fold_idx = np.array_split(order, folds)

    cv_mse = np.zeros(len(alphas))
    for a, alpha in enumerate(alphas):
        fold_scores = []
        for f in range(folds):
            val = fold_idx[f]
            trn = np.concatenate([fold_idx[g] for g in range(folds) if g != f])
            xm, ym = Z_src[trn].mean(axis=0), Z_tgt[trn].mean(axis=0)
            coef = _ridge_coef(Z_src[trn] - xm, Z_tgt[trn] - ym, alpha)
            pred = (Z_src[val] - xm) @ coef + ym
            fold_scores.append(np.mean((pred - Z_tgt[val]) ** 2))
        cv_mse[a] = np.mean(fold_scores)

    best = int(np.argmin(cv_mse))
    xm, ym = Z_src.mean(axis=0), Z_tgt.mean(axis=0)
    coef = _ridge_coef(Z_src - xm, Z_tgt - ym, alphas[best])
    return RidgePredictor(weight=coef.T, bias=ym - xm @ coef,
                          alpha=float(alphas[best]), cv_mse=cv_mse,
                          alphas=np.array(alphas))


def predict_target_embedding(pred: RidgePredictor, z_src: np.ndarray) -> np.ndarray:
    """W z + b for a single embedding or row-wise for a stack of them."""
    z = np.asarray(z_src, dtype=np.float64)
    d_in = pred.weight.shape[1]
    if z.shape[-1] != d_in:
        raise ValueError(f"embedding dimension {z.shape[-1]} != predictor input {d_in}")
    if z.ndim == 1:
        return pred.weight @ z + pred.bias
    if z.ndim == 2:
        return z @ pred.weight.T + pred.bias
    raise ValueError("z_src must be a vector or a matrix of rows")


def fit_embedding_predictor(model: TransportModel, pairs: PairedDataset,
                            folds: int = 5, alphas: np.ndarray | None = None,
                            rng: np.random.Generator | None = None) -> RidgePredictor:
    """Embed both sides of a paired dataset and fit the ridge predictor."""
    Z_src = embed_sets_chunked(model.encoder, pairs.source_points)
    Z_tgt = embed_sets_chunked(model.encoder, pairs.target_points)
    return fit_ridge_cv(Z_src, Z_tgt, folds=folds, alphas=alphas, rng=rng)


# ---------------------------------------------------------------------------
# regime harness


@dataclass
class RegimeSpec:
    regime: str
    model: TransportModel
    predictor: RidgePredictor | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.model.config.conditioning != "set":
            raise ValueError("regime comparison is defined for set-conditioned models")
        wants_stc = self.regime != "supervised_SC"
        if self.model.config.stc != wants_stc:
            raise ValueError(f"{self.regime} needs a model with stc={wants_stc}")
        if self.regime == "semi_supervised_STC" and self.predictor is None:
            raise ValueError("semi-supervised regime needs a fitted predictor")


def source_mean(params) -> np.ndarray:
    """True mean of a source distribution from its parameters."""
    if isinstance(params, MvnParams):
        return params.mean
    if isinstance(params, GmmParams):
        return params.weights @ params.means
    raise TypeError(f"unknown params type {type(params).__name__}")


def bucket_label(mu: np.ndarray, width: float = 0.5) -> str:
    """Label of the half-open norm bucket (k-1)w < |mu|_inf <= k w, as 'k*w'."""
    norm = float(np.max(np.abs(mu)))
    edge = width * max(1, int(np.ceil(norm / width - 1e-12)))
    return f"{edge:.1f}"


def regime_transport(spec: RegimeSpec, pairs: PairedDataset, seed: int) -> list[np.ndarray]:
    """Transported source sets for every test pair under one regime.

    The supervised regime reads only the source side of the pairs, so its
    outputs cannot depend on the target samples at all.
    """
    model = spec.model
    out = []
    for i in range(pairs.n_pairs):
        X = pairs.source_points[i]
        z_src = model.embed(X)
        if spec.regime == "supervised_SC":
            z_tgt = None
        elif spec.regime == "semi_supervised_STC":
            z_tgt = predict_target_embedding(spec.predictor, z_src)
        else:
            z_tgt = model.embed(pairs.target_points[i])
        noise = stream(seed, "semisup/noise", i)
        out.append(model.transport(X, z_src, z_tgt, rng=noise))
    return out


def evaluate_regime(spec: RegimeSpec, pairs: PairedDataset,
                    metrics: tuple[str, ...] = ("energy", "swd", "mmd_rbf"),
                    seed: int = 0, support_edge: float = 2.5) -> list[MetricsRecord]:
    """Score one regime on supervised test pairs, one record per metric.

    The split is IID when the true source mean satisfies |mu|_inf <=
    ``support_edge`` (inside the supervised training support), OOD otherwise.
    """
    if pairs.n_pairs == 0:
        return []
    transported = regime_transport(spec, pairs, seed)
    cfg = spec.model.config
    records = []
    for i in range(pairs.n_pairs):
        Y = pairs.target_points[i]
        Yhat = transported[i]
        mu = source_mean(pairs.source_params[i])
        split = "IID" if float(np.max(np.abs(mu))) <= support_edge else "OOD"
        bucket = bucket_label(mu)
        score_rng = stream(seed, "semisup/score", i)
        for name in metrics:
            if name == "energy":
                value = energy_distance(Yhat, Y)
            elif name == "swd":
                value = swd(Yhat, Y, rng=score_rng)
            elif name == "mmd_rbf":
                value = mmd_rbf(Yhat, Y)
            elif name == "gaussian_w2":
                value = gaussian_w2(fit_gaussian(Yhat), fit_gaussian(Y))
            else:
                raise ValueError(f"unknown metric {name!r}")
            records.append(MetricsRecord(
                generator=cfg.generator, conditioning=cfg.conditioning,
                regime=spec.regime, split=split, metric=name, value=value,
                seed=seed, mu_inf_bucket=bucket))
    return records
