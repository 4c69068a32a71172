"""Probing stage: build the probe set and estimate the transition matrix.

``T[i, y]`` is the probability that the ranker puts position ``y`` first
while the ground truth sits at position ``i``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .domain import CandidateSlate, ItemRef, UserHistory, derive_seed, truth_position_variants
from .errors import (
    DimensionMismatch,
    EmptyObservations,
    InsufficientHistory,
    InvalidAnswer,
    PoolTooSmall,
    ProbingAborted,
    SchemaError,
)
from .prompting import LabelScheme, PromptContext, PromptDomain

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
ROW_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    entries: np.ndarray
    counts: np.ndarray | None = None
    smoothing: bool = True
    backend: str = ""
    invalid_answers: int = field(default=0, compare=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] < 2:
            raise ValueError(f"transition matrix must be square with dim >= 2, got {entries.shape}")
        if (entries < 0).any():
            raise ValueError("transition matrix has negative entries")
        if np.abs(entries.sum(axis=1) - 1.0).max() > ROW_TOL:
            raise ValueError("transition matrix rows must sum to 1")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        if self.counts is not None:
            counts = np.asarray(self.counts, dtype=np.int64)
            if counts.shape != entries.shape:
                raise DimensionMismatch("counts and entries differ in shape")
            counts.setflags(write=False)
            object.__setattr__(self, "counts", counts)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def uniform(cls, j: int) -> "TransitionMatrix":
        return cls(np.full((j, j), 1.0 / j), smoothing=False, backend="uniform")

    @classmethod
    def identity(cls, j: int) -> "TransitionMatrix":
        return cls(np.eye(j), smoothing=False, backend="identity")

    def column(self, y: int) -> np.ndarray:
        return self.entries[:, y]

    def save_csv(self, path: str | Path) -> Path:
        """Write entries to ``path`` and raw counts to ``<stem>.counts.csv``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = (
            f"# format_version={FORMAT_VERSION} dim={self.dim} "
            f"smoothing={'add1' if self.smoothing else 'none'} backend={self.backend or '-'}\n"
        )
        rows = [",".join(repr(float(v)) for v in row) for row in self.entries]
        path.write_text(header + "\n".join(rows) + "\n", encoding="utf-8")
        if self.counts is not None:
            crows = [",".join(str(int(v)) for v in row) for row in self.counts]
            counts_path(path).write_text(header + "\n".join(crows) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load_csv(cls, path: str | Path) -> "TransitionMatrix":
        path = Path(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("#"):
            raise SchemaError(f"{path}: missing header line")
        meta = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
        if int(meta.get("format_version", "0")) != FORMAT_VERSION:
            raise SchemaError(f"{path}: unsupported format_version {meta.get('format_version')}")
        entries = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln.strip()])
        if entries.shape[0] != int(meta["dim"]):
            raise SchemaError(f"{path}: header dim={meta['dim']} but {entries.shape[0]} rows")
        counts = None
        cp = counts_path(path)
        if cp.exists():
            clines = cp.read_text(encoding="utf-8").splitlines()[1:]
            counts = np.array([[int(v) for v in ln.split(",")] for ln in clines if ln.strip()])
        backend = meta.get("backend", "-")
        return cls(entries, counts, meta.get("smoothing") == "add1", "" if backend == "-" else backend)


def counts_path(path: Path) -> Path:
    return path.with_name(path.stem + ".counts.csv")


def estimate_transition(
    observations: Iterable[tuple[int, int]],
    dim: int,
    smoothing: bool = True,
    backend: str = "",
) -> TransitionMatrix:
    obs = np.asarray(list(observations), dtype=np.int64).reshape(-1, 2)
    if obs.size and (obs.min() < 0 or obs.max() >= dim):
        raise ValueError(f"observation positions must lie in [0, {dim})")
    counts = kernels.count_transitions(obs[:, 0].copy(), obs[:, 1].copy(), dim)
    totals = counts.sum(axis=1, keepdims=True)
    if smoothing:
        entries = (counts + 1.0) / (totals + dim)
    else:
        if (totals == 0).any():
            empty = np.flatnonzero(totals[:, 0] == 0).tolist()
            raise EmptyObservations(f"no observations for truth positions {empty}")
        entries = counts / totals
    return TransitionMatrix(entries, counts, smoothing, backend)


@dataclass(frozen=True)
class ProbeExample:
    user_id: str
    step: int
    history_prefix: tuple[str, ...]
    base_slate: CandidateSlate
    variants: tuple[CandidateSlate, ...]


def build_probe_set(
    history: UserHistory,
    m: int,
    num_negatives: int,
    negative_pool: Sequence[ItemRef],
    seed: int,
    max_history: int | None = None,
) -> list[ProbeExample]:
    """Probe examples from the ``m`` positives preceding the held-out one.

    The final positive is reserved for evaluation and never probed.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    positives = history.positives
    if len(positives) < 2:
        raise InsufficientHistory(f"user {history.user_id!r} has {len(positives)} positives, need 2")
    if len(negative_pool) < num_negatives:
        raise PoolTooSmall(f"negative pool has {len(negative_pool)} items, need {num_negatives}")
    pos_ids = {it.id for it in positives}
    if any(it.id in pos_ids for it in negative_pool):
        raise ValueError("negative pool overlaps the user's positives")

    steps = min(m, len(positives) - 1)
    if steps < m:
        log.warning("user %s: ensemble steps clamped from %d to %d", history.user_id, m, steps)

    out = []
    for t in range(1, steps + 1):
        truth = positives[-1 - t]
        prefix = [it.title for it in positives[: -1 - t]]
        if max_history is not None:
            prefix = prefix[-max_history:] if max_history > 0 else []
        rng = np.random.default_rng(derive_seed(seed, history.user_id, "probe-negatives", t))
        picks = rng.choice(len(negative_pool), size=num_negatives, replace=False)
        base = CandidateSlate((truth, *(negative_pool[i] for i in picks)), truth_index=0)
        out.append(ProbeExample(history.user_id, t, tuple(prefix), base, tuple(truth_position_variants(base))))
    return out


def run_probing(
    backend,
    probe_set: Sequence[ProbeExample],
    parallelism: int = 1,
    seed: int = 0,
    scheme: LabelScheme | str = LabelScheme.UPPERCASE_LETTERS,
    domain: PromptDomain = PromptDomain(),
    smoothing: bool = True,
) -> TransitionMatrix:
    """Query ``backend`` once per variant and estimate the transition matrix."""
    if not probe_set:
        raise EmptyObservations("empty probe set")
    dims = {len(ex.base_slate) for ex in probe_set}
    if len(dims) != 1:
        raise DimensionMismatch(f"probe slates have mixed sizes {sorted(dims)}")
    (j,) = dims

    jobs = []
    for ex in probe_set:
        for v, slate in enumerate(ex.variants):
            ctx = PromptContext(ex.history_prefix, slate, scheme, domain)
            jobs.append((ctx, derive_seed(seed, ex.user_id, "probe-query", ex.step, v)))

    def query(job):
        ctx, s = job
        try:
            return ctx.slate.truth_index, backend.rank(ctx, s).top
        except InvalidAnswer as exc:
            log.debug("invalid probe answer: %s", exc)
            return None

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(query, jobs))
    else:
        results = [query(job) for job in jobs]

    observations = [r for r in results if r is not None]
    invalid = len(results) - len(observations)
    rate = invalid / len(results)
    log.info("probing: %d queries, invalid-answer rate %.3f", len(results), rate)
    if rate > 0.5:
        raise ProbingAborted(f"{invalid} of {len(results)} probe answers were invalid")
    tm = estimate_transition(observations, j, smoothing, getattr(backend, "identity", ""))
    return replace(tm, invalid_answers=invalid)
