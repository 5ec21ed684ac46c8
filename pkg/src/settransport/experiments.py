"""Config-driven experiment matrix runner with deterministic persistence.

An experiment is a grid of independent cells (generator x conditioning x K x
seed).  Each cell builds its datasets, trains its model(s), evaluates, and
returns metric records plus optional sidecar payloads; the runner writes one
CSV of all records in cell order, per-cell training logs, sidecar JSONs, and
a manifest tying everything together.  Cells are pure functions of (config,
cell coordinates), so rerunning a config reproduces the CSV byte for byte,
with any number of workers.

Experiment kinds:

* ``k_scaling``, ``ood_grid`` — train one model per cell on K unique
  distributions, score fresh in-distribution pairs and a fixed grid of novel
  targets (per-grid-point values also land in a sidecar).
* ``semisup_curve`` — per cell, train the any-to-any model on unpaired data
  and the supervised model on restricted-support pairs, fit the ridge
  embedding predictor, and score the three regimes on wide-support pairs.
* ``alignment_table``, ``clt_report`` — train one any-to-any model and run
  the corresponding diagnostic; results go to sidecars only.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .datagen import (PriorConfig, build_supervised_pairs,
                      build_unsupervised_dataset, draw_set, ood_target_grid,
                      sample_gmm_params, sample_mvn_params)
from .diagnostics import alignment_diagnostic, clt_scaling
from .encoders import embed_sets_chunked
from .metrics import (GaussianParams, energy_distance, fit_gaussian,
                      gaussian_w2, mmd_rbf, swd)
from .modelio import save_model
from .records import MetricsRecord, read_csv, write_csv
from .rng import stream
from .semisup import RegimeSpec, evaluate_regime, fit_ridge_cv
from .training import CONDITIONINGS, GENERATORS, TrainConfig, train

__all__ = [
    "ScalePreset", "DESK", "PAPER", "SCALES", "KINDS", "model_dims",
    "ExperimentConfig", "load_config", "resolve_preset", "run_experiment",
    "report", "alignment_summary", "CLT_M_VALUES",
]

KINDS = ("k_scaling", "ood_grid", "semisup_curve", "alignment_table", "clt_report")
SCALES = ("desk", "paper")
CLT_M_VALUES = (32, 64, 128, 256, 512, 1024, 2048)


@dataclass(frozen=True)
class ScalePreset:
    """Every size parameter an experiment needs, resolved per scale."""
    n_sets: int
    set_size: int
    gmm_set_size: int
    epochs: int
    batch_pairs: int
    subsample: int | None          # None: train on the full stored sets
    n_eval_pairs: int
    eval_set_size: int
    ood_resolution: int
    n_supervised_pairs: int
    n_semisup_eval_pairs: int
    alignment_pairs: int = 20
    alignment_samples: int = 200
    alignment_perms: int = 50
    clt_reps: int = 100

    def set_size_for(self, family: str) -> int:
        return self.gmm_set_size if family == "gmm" else self.set_size

    def subsample_for(self, family: str) -> int:
        return self.subsample if self.subsample else self.set_size_for(family)


# Desk scale fits the full acceptance matrix in well under an hour on one CPU
# core while preserving every qualitative ordering; paper scale matches the
# published protocol sizes.
DESK = ScalePreset(n_sets=2000, set_size=100, gmm_set_size=100, epochs=40,
                   batch_pairs=32, subsample=64, n_eval_pairs=50,
                   eval_set_size=256, ood_resolution=11,
                   n_supervised_pairs=600, n_semisup_eval_pairs=200)
PAPER = ScalePreset(n_sets=50000, set_size=100, gmm_set_size=1000, epochs=200,
                    batch_pairs=256, subsample=None, n_eval_pairs=100,
                    eval_set_size=1000, ood_resolution=21,
                    n_supervised_pairs=2000, n_semisup_eval_pairs=200)


def model_dims(family: str, scale: str) -> tuple[int, int]:
    """(d_latent, d_hidden) per data family and scale."""
    if family == "gmm":
        return (128, 256) if scale == "paper" else (32, 128)
    return (16, 64)


@dataclass
class ExperimentConfig:
    kind: str
    out: str
    family: str = "mvn"
    generators: tuple = ("swd", "energy", "fm")
    conditionings: tuple = ("set", "onehot")
    k_values: tuple = (10, 100)
    seeds: tuple = (0, 1, 2)
    scale: str = "desk"
    workers: int = 1
    save_models: bool = False
    preset_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.generators = tuple(self.generators)
        self.conditionings = tuple(self.conditionings)
        self.k_values = tuple(int(k) for k in self.k_values)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.family not in ("mvn", "gmm"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale {self.scale!r}")
        for g in self.generators:
            if g not in GENERATORS:
                raise ValueError(f"unknown generator {g!r}")
        for c in self.conditionings:
            if c not in CONDITIONINGS:
                raise ValueError(f"unknown conditioning {c!r}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if not self.generators:
            raise ValueError("need at least one generator")
        if any(k < 1 for k in self.k_values):
            raise ValueError("K values must be positive")
        if self.workers < 1:
            raise ValueError("need at least one worker")

    @property
    def experiment_id(self) -> str:
        return f"{self.kind}-{self.family}"


def load_config(path) -> ExperimentConfig:
    """Read an ExperimentConfig from a YAML mapping of field names."""
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a mapping of config fields")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return ExperimentConfig(**raw)


def resolve_preset(config: ExperimentConfig) -> ScalePreset:
    base = PAPER if config.scale == "paper" else DESK
    if not config.preset_overrides:
        return base
    unknown = set(config.preset_overrides) - set(ScalePreset.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown preset overrides {sorted(unknown)}")
    return replace(base, **config.preset_overrides)


# ---------------------------------------------------------------------------
# cell enumeration


def _cells(config: ExperimentConfig) -> list[dict]:
    cells = []
    if config.kind in ("k_scaling", "ood_grid"):
        for g in config.generators:
            for c in config.conditionings:
                for K in config.k_values:
                    for s in config.seeds:
                        cells.append({"generator": g, "conditioning": c,
                                      "K": K, "seed": s})
    elif config.kind == "semisup_curve":
        for g in config.generators:
            for s in config.seeds:
                cells.append({"generator": g, "conditioning": "set",
                              "K": None, "seed": s})
    else:
        for g in config.generators:
            for K in config.k_values:
                for s in config.seeds:
                    cells.append({"generator": g, "conditioning": "set",
                                  "K": K, "seed": s})
    return cells


def _cell_key(cell: dict) -> str:
    parts = [cell["generator"], cell["conditioning"]]
    if cell["K"] is not None:
        parts.append(f"K{cell['K']}")
    parts.append(f"s{cell['seed']}")
    return "-".join(parts)


def _hash_array(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# cell bodies (must stay module-level picklable for the worker pool)


def _score_rows(Yhat, Y, score_rng):
    return (("energy", energy_distance(Yhat, Y)),
            ("swd", swd(Yhat, Y, rng=score_rng)),
            ("mmd_rbf", mmd_rbf(Yhat, Y)))


def _eval_iid(model, data, preset, exp_id: str, seed: int) -> list[MetricsRecord]:
    """Fresh draws from pairs of the K training distributions."""
    n, m = preset.n_eval_pairs, preset.eval_set_size
    pair_rng = stream(seed, "eval/iid_pairs")
    u = pair_rng.integers(0, data.K, n)
    v = pair_rng.integers(0, data.K, n)
    cfg = model.config
    records = []
    for i in range(n):
        draw = stream(seed, "eval/iid_draw", i)
        X = draw_set(draw, data.params[u[i]], m)
        Y = draw_set(draw, data.params[v[i]], m)
        z_src = model.embed(X)
        z_tgt = model.embed(Y) if cfg.stc else None
        Yhat = model.transport(X, z_src, z_tgt, rng=stream(seed, "eval/iid_noise", i))
        for name, val in _score_rows(Yhat, Y, stream(seed, "eval/iid_score", i)):
            records.append(MetricsRecord(
                experiment=exp_id, generator=cfg.generator,
                conditioning=cfg.conditioning, K=data.K, split="IID",
                metric=name, value=val, seed=seed))
    return records


def _eval_ood(model, data, preset, exp_id: str, seed: int,
              sidecar_path: Path | None) -> list[MetricsRecord]:
    """One fixed source against Gaussian targets on a mean-box lattice.

    Targets are novel distributions, not among the K training ones; a set
    model must generalize from samples while the one-hot baseline can only
    snap to its nearest training centroid.
    """
    grid = ood_target_grid(data.prior, preset.ood_resolution, seed)
    m = preset.eval_set_size
    X = draw_set(stream(seed, "eval/ood_source"), data.params[0], m)
    cfg = model.config
    z_src = model.embed(X)
    records = []
    values = {name: [] for name in ("energy", "swd", "mmd_rbf", "gaussian_w2")}
    for j, g in enumerate(grid):
        Y = draw_set(stream(seed, "eval/ood_target", j), g, m)
        z_tgt = model.embed(Y) if cfg.stc else None
        Yhat = model.transport(X, z_src, z_tgt, rng=stream(seed, "eval/ood_noise", j))
        scored = list(_score_rows(Yhat, Y, stream(seed, "eval/ood_score", j)))
        scored.append(("gaussian_w2", gaussian_w2(
            fit_gaussian(Yhat), GaussianParams(mean=g.mean, cov=g.cov))))
        for name, val in scored:
            values[name].append(float(val))
            records.append(MetricsRecord(
                experiment=exp_id, generator=cfg.generator,
                conditioning=cfg.conditioning, K=data.K, split="OOD",
                metric=name, value=val, seed=seed))
    if sidecar_path is not None:
        _write_json(sidecar_path, {
            "generator": cfg.generator, "conditioning": cfg.conditioning,
            "K": data.K, "seed": seed, "resolution": preset.ood_resolution,
            "means": [g.mean.tolist() for g in grid], "metrics": values})
    return records


def _train_cell_model(payload, preset, data, stc=True,
                      pairing="any_to_any_uniform", log_suffix=""):
    d_latent, d_hidden = model_dims(payload["family"], payload["scale"])
    tcfg = TrainConfig(
        generator=payload["generator"], conditioning=payload["conditioning"],
        stc=stc, pairing=pairing, d_latent=d_latent,
        d_hidden_encoder=d_hidden, d_hidden_generator=d_hidden,
        epochs=preset.epochs, batch_pairs=preset.batch_pairs,
        subsample=preset.subsample_for(payload["family"]),
        seed=payload["seed"])
    out_dir = Path(payload["out"])
    log = out_dir / "logs" / f"{payload['key']}{log_suffix}.jsonl"
    model = train(data, tcfg, log_path=log)
    if payload["save_models"]:
        save_model(model, out_dir / "models" / f"{payload['key']}{log_suffix}.stm")
    return model


def _metric_cell(payload, preset, prior):
    seed, K = payload["seed"], payload["K"]
    data = build_unsupervised_dataset(
        prior, preset.n_sets, preset.set_size_for(payload["family"]), K, seed)
    ds_info = {"family": payload["family"], "role": "unsupervised", "K": K,
               "seed": seed, "sha256": _hash_array(data.points)}
    model = _train_cell_model(payload, preset, data)
    sidecar = Path(payload["out"]) / "grid" / f"{payload['key']}.json"
    records = _eval_iid(model, data, preset, payload["exp_id"], seed)
    records += _eval_ood(model, data, preset, payload["exp_id"], seed, sidecar)
    return records, [ds_info]


def _semisup_cell(payload, preset, prior):
    seed, family = payload["seed"], payload["family"]
    set_size = preset.set_size_for(family)
    pair_kind = "mvn_shift" if family == "mvn" else "gmm_bimodal"
    unsup = build_unsupervised_dataset(prior, preset.n_sets, set_size,
                                       preset.n_sets, seed)
    pairs = build_supervised_pairs(prior, preset.n_supervised_pairs, set_size,
                                   pair_kind, seed)
    infos = [
        {"family": family, "role": "unsupervised", "K": preset.n_sets,
         "seed": seed, "sha256": _hash_array(unsup.points)},
        {"family": family, "role": "supervised_pairs", "K": None, "seed": seed,
         "sha256": _hash_array(np.stack([pairs.source_points,
                                         pairs.target_points]))},
    ]
    model_stc = _train_cell_model(payload, preset, unsup,
                                  stc=True, pairing="any_to_any_uniform",
                                  log_suffix="-stc")
    model_sc = _train_cell_model(payload, preset, pairs,
                                 stc=False, pairing="supervised_pairs",
                                 log_suffix="-sc")
    Z_src = embed_sets_chunked(model_stc.encoder, pairs.source_points)
    Z_tgt = embed_sets_chunked(model_stc.encoder, pairs.target_points)
    predictor = fit_ridge_cv(Z_src, Z_tgt, rng=stream(seed, "semisup/ridge"))
    _write_json(Path(payload["out"]) / "semisup" / f"{payload['key']}.json", {
        "generator": payload["generator"], "seed": seed,
        "alpha": predictor.alpha,
        "cv_mse": [float(v) for v in predictor.cv_mse],
        "alphas": [float(a) for a in predictor.alphas]})

    eval_pairs = build_supervised_pairs(
        prior, preset.n_semisup_eval_pairs, preset.eval_set_size, pair_kind,
        1000 + seed, support_low=0.0, support_high=prior.mean_high)
    specs = [RegimeSpec("supervised_SC", model_sc),
             RegimeSpec("semi_supervised_STC", model_stc, predictor),
             RegimeSpec("oracle_STC", model_stc)]
    records = []
    for spec in specs:
        recs = evaluate_regime(spec, eval_pairs, seed=seed,
                               support_edge=pairs.support_high)
        for r in recs:
            r.experiment = payload["exp_id"]
        records += recs
    return records, infos


def alignment_summary(model, prior: PriorConfig, n_pairs: int = 20,
                      n_samples: int = 200, n_perm: int = 50,
                      seed: int = 0) -> dict:
    """Alignment diagnostic averaged over fresh prior pairs.

    The headline ratio divides the mean paired distance by the mean
    random-pairing distance across all pairs; per-pair reports are kept too.
    """
    sampler = sample_mvn_params if prior.family == "mvn" else sample_gmm_params
    reports = []
    for j in range(n_pairs):
        prng = stream(seed, "align/pair", j)
        params_u = sampler(prng, prior)
        params_v = sampler(prng, prior)
        reports.append(alignment_diagnostic(model, params_u, params_v,
                                            n=n_samples, n_perm=n_perm,
                                            rng=stream(seed, "align/run", j)))
    d_pair = float(np.mean([r.d_pair for r in reports]))
    d_rand = float(np.mean([r.d_rand for r in reports]))
    return {
        "n_pairs": n_pairs, "n_samples": n_samples, "n_permutations": n_perm,
        "d_pair": d_pair, "d_rand": d_rand,
        "ratio": d_pair / d_rand,
        "mean_rho": float(np.mean([r.spearman_rho for r in reports])),
        "pairs": [{"d_pair": r.d_pair, "d_rand": r.d_rand, "ratio": r.ratio,
                   "spearman_rho": r.spearman_rho} for r in reports],
    }


def _alignment_cell(payload, preset, prior):
    seed, K = payload["seed"], payload["K"]
    data = build_unsupervised_dataset(
        prior, preset.n_sets, preset.set_size_for(payload["family"]), K, seed)
    ds_info = {"family": payload["family"], "role": "unsupervised", "K": K,
               "seed": seed, "sha256": _hash_array(data.points)}
    model = _train_cell_model(payload, preset, data)
    summary = alignment_summary(model, prior, preset.alignment_pairs,
                                preset.alignment_samples,
                                preset.alignment_perms, seed)
    summary.update({"generator": payload["generator"], "K": K, "seed": seed})
    _write_json(Path(payload["out"]) / "alignment" / f"{payload['key']}.json",
                summary)
    return [], [ds_info]


def _clt_cell(payload, preset, prior):
    seed, K = payload["seed"], payload["K"]
    data = build_unsupervised_dataset(
        prior, preset.n_sets, preset.set_size_for(payload["family"]), K, seed)
    ds_info = {"family": payload["family"], "role": "unsupervised", "K": K,
               "seed": seed, "sha256": _hash_array(data.points)}
    model = _train_cell_model(payload, preset, data)
    sampler = sample_mvn_params if prior.family == "mvn" else sample_gmm_params
    params = sampler(stream(seed, "clt/params"), prior)
    rep = clt_scaling(model.encoder, params, CLT_M_VALUES,
                      reps=preset.clt_reps, rng=stream(seed, "clt/run"))
    _write_json(Path(payload["out"]) / "clt" / f"{payload['key']}.json", {
        "generator": payload["generator"], "K": K, "seed": seed,
        "m_values": [int(m) for m in rep.m_values],
        "spreads": [float(v) for v in rep.spreads],
        "slope": rep.slope, "degenerate": rep.degenerate})
    return [], [ds_info]


_CELL_BODIES = {"k_scaling": _metric_cell, "ood_grid": _metric_cell,
                "semisup_curve": _semisup_cell,
                "alignment_table": _alignment_cell, "clt_report": _clt_cell}


def _run_cell(payload: dict) -> dict:
    """Worker entry point; never raises, reports failure in the result."""
    result = {"key": payload["key"], "status": "ok", "error": "",
              "records": [], "datasets": []}
    try:
        prior = PriorConfig(family=payload["family"])
        preset = ScalePreset(**payload["preset"])
        body = _CELL_BODIES[payload["kind"]]
        result["records"], result["datasets"] = body(payload, preset, prior)
    except Exception:
        result["status"] = "failed"
        result["error"] = traceback.format_exc(limit=20)
    return result


# ---------------------------------------------------------------------------
# runner


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every cell, write results.csv, sidecars, logs and manifest.json."""
    preset = resolve_preset(config)
    out_dir = Path(config.out)
    (out_dir / "logs").mkdir(parents=True, exist_ok=True)
    subdirs = {"k_scaling": ["grid"], "ood_grid": ["grid"],
               "semisup_curve": ["semisup"], "alignment_table": ["alignment"],
               "clt_report": ["clt"]}[config.kind]
    if config.save_models:
        subdirs = subdirs + ["models"]
    for sub in subdirs:
        (out_dir / sub).mkdir(exist_ok=True)

    cells = _cells(config)
    payloads = []
    for cell in cells:
        payloads.append({**cell, "key": _cell_key(cell), "kind": config.kind,
                         "family": config.family, "scale": config.scale,
                         "preset": asdict(preset), "out": str(out_dir),
                         "save_models": config.save_models,
                         "exp_id": config.experiment_id})

    results = {}
    if config.workers <= 1:
        for p in payloads:
            results[p["key"]] = _run_cell(p)
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=config.workers,
                                 mp_context=ctx) as pool:
            futures = [pool.submit(_run_cell, p) for p in payloads]
            for fut in as_completed(futures):
                res = fut.result()
                results[res["key"]] = res

    all_records = []
    cell_entries = []
    datasets = {}
    for p in payloads:
        res = results[p["key"]]
        all_records += res["records"]
        entry = {"key": p["key"], "generator": p["generator"],
                 "conditioning": p["conditioning"], "K": p["K"],
                 "seed": p["seed"], "status": res["status"],
                 "n_rows": len(res["records"])}
        if res["error"]:
            entry["error"] = res["error"]
        cell_entries.append(entry)
        for info in res["datasets"]:
            datasets[(info["family"], info["role"], str(info["K"]),
                      info["seed"])] = info

    csv_path = out_dir / "results.csv"
    write_csv(all_records, csv_path)
    manifest = {
        "format_version": 1,
        "experiment": config.experiment_id,
        "config": asdict(config),
        "preset": asdict(preset),
        "cells": cell_entries,
        "datasets": [datasets[k] for k in sorted(datasets)],
        "csv_sha256": hashlib.sha256(csv_path.read_bytes()).hexdigest(),
    }
    _write_json(out_dir / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# reporting


def _mean_stderr(per_seed: dict[int, list[float]]) -> tuple[float, float, int]:
    """Mean of per-seed means, and the standard error across seeds."""
    means = [float(np.mean(per_seed[s])) for s in sorted(per_seed)]
    n = len(means)
    mean = float(np.mean(means))
    stderr = 0.0 if n == 1 else float(np.std(means, ddof=1) / np.sqrt(n))
    return mean, stderr, n


def _group(records, key_fn):
    groups = {}
    for r in records:
        groups.setdefault(key_fn(r), {}).setdefault(r.seed, []).append(r.value)
    return groups


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(str(c) for c in row) + "\n")


def _sort_key(t):
    return tuple(-1 if v is None else v for v in t)


def report(out_dir) -> int:
    """Aggregate results.csv into summary tables and figure data files.

    Returns 0 on success and 3 when there is nothing to aggregate (missing or
    empty CSV).  Values are averaged within seed first, then across seeds,
    with the standard error taken across the per-seed means.
    """
    out_dir = Path(out_dir)
    csv_path = out_dir / "results.csv"
    if not csv_path.exists():
        return 3
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    records = read_csv(csv_path)

    groups = _group(records, lambda r: (r.experiment, r.generator,
                                        r.conditioning, r.regime, r.K,
                                        r.split, r.metric))
    rows = []
    for key in sorted(groups, key=_sort_key):
        mean, stderr, n = _mean_stderr(groups[key])
        exp, gen, cond, regime, K, split, metric = key
        rows.append([exp, gen, cond, regime, "" if K is None else K, split,
                     metric, repr(mean), repr(stderr), n])
    _write_table(out_dir / "summary.csv",
                 ["experiment", "generator", "conditioning", "regime", "K",
                  "split", "metric", "mean", "stderr", "n_seeds"], rows)

    k_rows = [r for r in records if r.K is not None and not r.regime]
    if k_rows:
        kg = _group(k_rows, lambda r: (r.generator, r.conditioning, r.split,
                                       r.metric, r.K))
        out = []
        for key in sorted(kg, key=_sort_key):
            mean, stderr, n = _mean_stderr(kg[key])
            gen, cond, split, metric, K = key
            out.append([gen, cond, split, metric, K, repr(mean), repr(stderr), n])
        _write_table(fig_dir / "k_scaling.csv",
                     ["generator", "conditioning", "split", "metric", "K",
                      "mean", "stderr", "n_seeds"], out)

    bucket_rows = [r for r in records if r.regime]
    if bucket_rows:
        bg = _group(bucket_rows, lambda r: (r.generator, r.regime, r.metric,
                                            float(r.mu_inf_bucket)))
        out = []
        for key in sorted(bg):
            mean, stderr, n = _mean_stderr(bg[key])
            gen, regime, metric, bucket = key
            out.append([gen, regime, metric, f"{bucket:.1f}", repr(mean),
                        repr(stderr), n])
        _write_table(fig_dir / "semisup_curves.csv",
                     ["generator", "regime", "metric", "mu_inf_bucket",
                      "mean", "stderr", "n_seeds"], out)

    _aggregate_grids(out_dir, fig_dir)
    _maybe_plot(out_dir, fig_dir)
    return 0 if records else 3


def _aggregate_grids(out_dir: Path, fig_dir: Path) -> None:
    """Average per-point grid sidecars across seeds, one file per model cell."""
    grid_dir = out_dir / "grid"
    if not grid_dir.is_dir():
        return
    merged = {}
    for path in sorted(grid_dir.glob("*.json")):
        with open(path) as f:
            payload = json.load(f)
        key = (payload["generator"], payload["conditioning"], payload["K"])
        merged.setdefault(key, []).append(payload)
    for (gen, cond, K), payloads in sorted(merged.items()):
        metrics = {
            name: np.mean([p["metrics"][name] for p in payloads], axis=0).tolist()
            for name in payloads[0]["metrics"]}
        _write_json(fig_dir / f"grid-{gen}-{cond}-K{K}.json", {
            "generator": gen, "conditioning": cond, "K": K,
            "n_seeds": len(payloads), "resolution": payloads[0]["resolution"],
            "means": payloads[0]["means"], "metrics": metrics})


def _maybe_plot(out_dir: Path, fig_dir: Path) -> None:
    """Static vector plots when matplotlib is importable; never required."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except Exception:
        return
    try:
        _plot_k_scaling(fig_dir, plt)
        _plot_semisup(fig_dir, plt)
        _plot_grids(fig_dir, plt)
    except Exception:
        pass


def _read_table(path: Path) -> list[dict]:
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def _plot_k_scaling(fig_dir: Path, plt) -> None:
    path = fig_dir / "k_scaling.csv"
    if not path.exists():
        return
    rows = [r for r in _read_table(path) if r["metric"] == "mmd_rbf"]
    if not rows:
        return
    splits = sorted({r["split"] for r in rows})
    fig, axes = plt.subplots(1, len(splits), figsize=(5 * len(splits), 4),
                             squeeze=False)
    for ax, split in zip(axes[0], splits):
        sub = [r for r in rows if r["split"] == split]
        lines = sorted({(r["generator"], r["conditioning"]) for r in sub})
        for gen, cond in lines:
            pts = sorted((int(r["K"]), float(r["mean"])) for r in sub
                         if r["generator"] == gen and r["conditioning"] == cond)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=f"{gen}/{cond}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("K")
        ax.set_ylabel("MMD")
        ax.set_title(split)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(fig_dir / "k_scaling.svg")
    plt.close(fig)


def _plot_semisup(fig_dir: Path, plt) -> None:
    path = fig_dir / "semisup_curves.csv"
    if not path.exists():
        return
    rows = [r for r in _read_table(path) if r["metric"] == "energy"]
    if not rows:
        return
    gens = sorted({r["generator"] for r in rows})
    fig, axes = plt.subplots(1, len(gens), figsize=(5 * len(gens), 4),
                             squeeze=False)
    for ax, gen in zip(axes[0], gens):
        sub = [r for r in rows if r["generator"] == gen]
        for regime in sorted({r["regime"] for r in sub}):
            pts = sorted((float(r["mu_inf_bucket"]), float(r["mean"]))
                         for r in sub if r["regime"] == regime)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=regime)
        ax.set_xlabel("|mu|_inf bucket")
        ax.set_ylabel("energy distance")
        ax.set_title(gen)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(fig_dir / "semisup_curves.svg")
    plt.close(fig)


def _plot_grids(fig_dir: Path, plt) -> None:
    for path in sorted(fig_dir.glob("grid-*.json")):
        with open(path) as f:
            payload = json.load(f)
        res = payload["resolution"]
        vals = np.array(payload["metrics"]["gaussian_w2"]).reshape(res, res)
        fig, ax = plt.subplots(figsize=(4.5, 4))
        im = ax.imshow(vals.T, origin="lower", aspect="equal")
        ax.set_title(path.stem)
        ax.set_xlabel("target mean x (grid index)")
        ax.set_ylabel("target mean y (grid index)")
        fig.colorbar(im, ax=ax, shrink=0.85)
        fig.tight_layout()
        fig.savefig(path.with_suffix(".svg"))
        plt.close(fig)
