"""Command line front end.

Subcommands:

* ``gen-data``  — sample an unsupervised dataset and write the binary file.
* ``train``     — train a single model on a dataset file, write model + log.
* ``eval``      — run a metric experiment config (k_scaling, ood_grid,
  semisup_curve) end to end.
* ``diagnose``  — run a diagnostic config (alignment_table, clt_report).
* ``report``    — aggregate an experiment directory into summary tables and
  figure data.

``eval``/``diagnose`` read an experiment config file; ``--seed``, ``--scale``,
``--out`` and ``--workers`` override single fields without editing the file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .datagen import PriorConfig, build_unsupervised_dataset, load_dataset, save_dataset
from .experiments import SCALES, load_config, report, run_experiment
from .modelio import save_model
from .training import TrainConfig, train

METRIC_KINDS = ("k_scaling", "ood_grid", "semisup_curve")
DIAGNOSTIC_KINDS = ("alignment_table", "clt_report")


def _cmd_gen_data(args) -> int:
    prior = PriorConfig(family=args.family)
    ds = build_unsupervised_dataset(prior, args.n_sets, args.set_size,
                                    args.k, args.seed)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    print(f"wrote {out}: {ds.n_sets} sets of {ds.set_size} points, "
          f"{ds.K} unique {ds.family} distributions, seed {ds.seed}")
    return 0


def _cmd_train(args) -> int:
    with open(args.config) as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise SystemExit(f"{args.config}: expected a mapping of training fields")
    if args.seed is not None:
        raw["seed"] = args.seed
    config = TrainConfig(**raw)
    data = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = train(data, config, log_path=out / "train_log.jsonl")
    save_model(model, out / "model.stm")
    print(f"wrote {out / 'model.stm'}; final epoch loss "
          f"{model.epoch_losses[-1]:.6f}")
    return 0


def _cmd_run(args, allowed_kinds) -> int:
    config = load_config(args.config)
    if config.kind not in allowed_kinds:
        raise SystemExit(f"{args.config}: kind {config.kind!r} belongs to "
                         f"another subcommand (expected one of {allowed_kinds})")
    updates = {}
    if args.seed is not None:
        updates["seeds"] = (args.seed,)
    if args.scale is not None:
        updates["scale"] = args.scale
    if args.out is not None:
        updates["out"] = str(args.out)
    if args.workers is not None:
        updates["workers"] = args.workers
    if updates:
        config = replace(config, **updates)
    manifest = run_experiment(config)
    n_rows = sum(c["n_rows"] for c in manifest["cells"])
    failed = [c["key"] for c in manifest["cells"] if c["status"] != "ok"]
    print(f"wrote {config.out}/results.csv ({n_rows} rows, "
          f"{len(manifest['cells'])} cells)")
    if failed:
        print(f"failed cells: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _cmd_report(args) -> int:
    code = report(args.out)
    if code == 0:
        print(f"wrote {Path(args.out) / 'summary.csv'}")
    else:
        print(f"nothing to aggregate under {args.out}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="settransport",
        description="distribution-conditioned transport experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample and save a dataset")
    p.add_argument("--family", choices=("mvn", "gmm"), default="mvn")
    p.add_argument("--k", type=int, default=10,
                   help="number of unique distributions")
    p.add_argument("--n-sets", type=int, default=2000)
    p.add_argument("--set-size", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset file")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train one model on a dataset file")
    p.add_argument("--config", required=True,
                   help="YAML mapping of training config fields")
    p.add_argument("--data", required=True, help="dataset file from gen-data")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_train)

    for name, kinds, blurb in (
            ("eval", METRIC_KINDS, "run a metric experiment config"),
            ("diagnose", DIAGNOSTIC_KINDS, "run a diagnostic config")):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True, help="experiment config YAML")
        p.add_argument("--seed", type=int, default=None,
                       help="run this single seed instead of the config list")
        p.add_argument("--scale", choices=SCALES, default=None)
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--workers", type=int, default=None)
        p.set_defaults(func=lambda args, kinds=kinds: _cmd_run(args, kinds))

    p = sub.add_parser("report", help="aggregate an experiment directory")
    p.add_argument("--out", required=True, help="experiment output directory")
    p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
