"""Row schema shared by every evaluation harness.

A MetricsRecord is one scored number with its full provenance: which
experiment, which model cell, which evaluation split, which metric, which
seed.  All result CSVs use the same fixed header so the reporter can
aggregate any mix of experiment kinds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["MetricsRecord", "CSV_HEADER", "METRIC_NAMES", "write_csv", "read_csv"]

CSV_HEADER = "experiment,generator,conditioning,regime,K,split,metric,value,seed,mu_inf_bucket"

METRIC_NAMES = ("energy", "swd", "mmd_rbf", "gaussian_w2")


@dataclass
class MetricsRecord:
    experiment: str = ""
    generator: str = ""
    conditioning: str = ""
    regime: str = ""
    K: int | None = None          # None for experiments without a K sweep
    split: str = ""               # "IID", "OOD", or "" when not applicable
    metric: str = ""
    value: float = float("nan")
    seed: int | None = None
    mu_inf_bucket: str = ""       # upper edge of the source-mean norm bucket

    def __post_init__(self):
        if self.metric and self.metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {self.metric!r}")
        self.value = float(self.value)
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite metric value for {self.metric!r}")

    def row(self) -> list[str]:
        return [
            self.experiment,
            self.generator,
            self.conditioning,
            self.regime,
            "" if self.K is None else str(self.K),
            self.split,
            self.metric,
            repr(self.value),
            "" if self.seed is None else str(self.seed),
            self.mu_inf_bucket,
        ]


def write_csv(records: list[MetricsRecord], path) -> None:
    """Write records in the given order; byte-deterministic for equal inputs."""
    with open(path, "w", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        for r in records:
            f.write(",".join(r.row()) + "\n")


def read_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != CSV_HEADER.split(","):
            raise ValueError(f"unexpected CSV header in {path}")
        out = []
        for row in reader:
            out.append(MetricsRecord(
                experiment=row[0], generator=row[1], conditioning=row[2],
                regime=row[3], K=int(row[4]) if row[4] else None, split=row[5],
                metric=row[6], value=float(row[7]),
                seed=int(row[8]) if row[8] else None, mu_inf_bucket=row[9]))
        return out
