"""Result rows, the results CSV and Hit@1."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..domain import EvalRecord
from ..errors import EmptyInput, SchemaError

FORMAT_VERSION = 1
COLUMNS = ["experiment", "dataset", "method", "metric", "value", "std", "params_digest"]
METHODS = ("raw", "bootstrapping", "stella", "stella_uniform_tm", "random")


@dataclass(frozen=True, order=True)
class ResultRow:
    experiment: str
    dataset: str
    method: str
    metric: str
    value: float
    std: float | None = None
    params_digest: str = ""

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if self.std is not None:
            object.__setattr__(self, "std", float(self.std))
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.metric.startswith(("hit_at_1", "invalid_rate")) and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"{self.metric}={self.value} outside [0, 1]")


def metric_key(name: str, **params: object) -> str:
    """``hit_at_1@m=5,default=1``-style metric names for parameterized rows."""
    if not params:
        return name
    return name + "@" + ",".join(f"{k}={v}" for k, v in params.items())


def parse_metric(metric: str) -> tuple[str, dict[str, str]]:
    name, _, rest = metric.partition("@")
    params = dict(kv.split("=", 1) for kv in rest.split(",")) if rest else {}
    return name, params


def params_digest(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.10g}"


def write_results(rows: Iterable[ResultRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(f"# format_version={FORMAT_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in sorted(rows, key=lambda r: (r.experiment, r.dataset, r.method, r.metric)):
        w.writerow([r.experiment, r.dataset, r.method, r.metric, _fmt(r.value), _fmt(r.std), r.params_digest])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_results(path: str | Path) -> list[ResultRow]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames != COLUMNS:
        raise SchemaError(f"{path}: expected columns {COLUMNS}, got {reader.fieldnames}")
    return [
        ResultRow(r["experiment"], r["dataset"], r["method"], r["metric"], float(r["value"]),
                  float(r["std"]) if r["std"] else None, r["params_digest"])
        for r in reader
    ]


def hit_at_1(records: Sequence[EvalRecord], resamples: int = 200, seed: int = 0) -> tuple[float, float]:
    """Mean Hit@1 and its spread.

    When every record carries a ``permutation_id`` the spread is the
    population std of per-arrangement accuracies; otherwise it is the std of
    bootstrap-resampled means.
    """
    if not records:
        raise EmptyInput("hit_at_1 of no records")
    scores = np.array([r.score for r in records])
    mean = float(scores.mean())
    pids = [r.slate.permutation_id for r in records]
    if all(p is not None for p in pids):
        groups: dict[int, list[float]] = defaultdict(list)
        for pid, s in zip(pids, scores):
            groups[pid].append(s)
        accs = np.array([np.mean(v) for _, v in sorted(groups.items())])
        return mean, float(accs.std())
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(scores), size=(resamples, len(scores)))
    return mean, float(scores[idx].mean(axis=1).std())
