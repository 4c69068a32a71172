"""Recommendation stage: posterior updating over candidates with an entropy indicator.

The posterior is indexed by item (base-slate index), never by position: the
slate is reshuffled every iteration and ``placement[c]`` records where item
``c`` sat when the ranker answered.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .domain import Ranking, derive_seed, shuffle_order
from .kernels._numpy import ENTROPY_DECIMALS
from .errors import BackendExhausted, DegenerateLikelihood, InvalidAnswer, LengthMismatch
from .probing import TransitionMatrix
from .prompting import PromptContext

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibrationConfig:
    max_iterations: int = 10
    entropy_epsilon: float = 1e-3
    consecutive_stable: int = 2
    aggregation_k: int = 3
    aggregate_source: Literal["posterior", "raw"] = "posterior"
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or self.aggregation_k < 1 or self.consecutive_stable < 1:
            raise ValueError("max_iterations, aggregation_k and consecutive_stable must be >= 1")
        if not self.entropy_epsilon > 0:
            raise ValueError("entropy_epsilon must be positive")
        if self.aggregate_source not in ("posterior", "raw"):
            raise ValueError(f"unknown aggregate_source {self.aggregate_source!r}")


@dataclass(frozen=True)
class Snapshot:
    probs: np.ndarray
    ranking: Ranking
    entropy: float
    raw: Ranking
    placement: tuple[int, ...]
    observed: int


@dataclass
class PosteriorState:
    probs: np.ndarray
    entropy_trace: list[float] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)
    iteration: int = 0
    queries: int = 0
    invalid: int = 0

    def write_trace(self, path: str | Path) -> None:
        """One JSON line per update, for auditing a single example."""
        with open(path, "w", encoding="utf-8") as fh:
            for i, snap in enumerate(self.snapshots, start=1):
                fh.write(json.dumps({
                    "format_version": 1,
                    "iteration": i,
                    "placement": list(snap.placement),
                    "observed_y": snap.observed,
                    "posterior": [float(x) for x in snap.probs],
                    "entropy": snap.entropy,
                }) + "\n")


def bayes_update(
    p: np.ndarray,
    T: TransitionMatrix | np.ndarray,
    observed_y: int,
    placement: Sequence[int] | np.ndarray,
) -> np.ndarray:
    """Multiply each item's mass by ``T[position of item, observed_y]`` and renormalize."""
    entries = T.entries if isinstance(T, TransitionMatrix) else np.asarray(T)
    placement = np.asarray(placement, dtype=np.int64)
    unnorm = np.asarray(p, dtype=np.float64) * entries[placement, observed_y]
    total = unnorm.sum()
    if not total > 0:
        raise DegenerateLikelihood(f"observation y={observed_y} has zero likelihood under every item")
    return unnorm / total


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(max(0.0, -(nz * np.log(nz)).sum()))


def posterior_ranking(p: np.ndarray, tie_break: Ranking) -> Ranking:
    """Items by descending probability; exact ties follow ``tie_break`` order."""
    rank_in_tie = {item: r for r, item in enumerate(tie_break.order)}
    order = sorted(range(len(p)), key=lambda c: (-p[c], rank_in_tie[c]))
    return Ranking(tuple(order))


def borda_aggregate(rankings: Sequence[Ranking], j: int | None = None) -> Ranking:
    """Borda count: rank ``r`` earns ``j - r`` points.

    Ties go to the item with the better best rank, then to the one that
    reached that rank in an earlier ranking, then to the lower slate index.
    """
    if not rankings:
        raise ValueError("borda_aggregate needs at least one ranking")
    j = len(rankings[0]) if j is None else j
    if any(len(r) != j for r in rankings):
        raise LengthMismatch(f"rankings must all have length {j}")
    total = [0] * j
    best = [j] * j
    first = [len(rankings)] * j
    for s, r in enumerate(rankings):
        for rank, c in enumerate(r.order):
            total[c] += j - rank
            if rank < best[c]:
                best[c], first[c] = rank, s
    return Ranking(tuple(sorted(range(j), key=lambda c: (-total[c], best[c], first[c], c))))


def _query(backend, ctx: PromptContext, seed: int, q: int):
    """One shuffled query; returns (perm, raw ranking in item space) or None if invalid."""
    j = len(ctx.slate)
    perm = shuffle_order(j, derive_seed(seed, "shuffle", q))
    shown = ctx.with_slate(ctx.slate.arranged(perm.tolist()))
    try:
        answer = backend.rank(shown, derive_seed(seed, "query", q))
    except InvalidAnswer as exc:
        log.debug("invalid answer on query %d: %s", q, exc)
        return None
    return perm, answer.remap(perm)


def calibrate(
    ctx: PromptContext,
    backend,
    T: TransitionMatrix,
    cfg: CalibrationConfig = CalibrationConfig(),
    seed: int | None = None,
) -> tuple[Ranking, PosteriorState]:
    """Calibrated ranking of ``ctx.slate`` (base-slate coordinates).

    Invalid answers are skipped without consuming an update; at most
    ``2 * max_iterations`` queries are spent.
    """
    j = len(ctx.slate)
    if T.dim != j:
        raise LengthMismatch(f"transition matrix dim {T.dim} != slate size {j}")
    seed = cfg.seed if seed is None else seed
    state = PosteriorState(np.full(j, 1.0 / j))
    anchor: Ranking | None = None
    stable = 0

    while state.iteration < cfg.max_iterations and state.queries < 2 * cfg.max_iterations:
        got = _query(backend, ctx, seed, state.queries)
        state.queries += 1
        if got is None:
            state.invalid += 1
            continue
        perm, raw = got
        placement = np.argsort(perm)
        observed = raw.order[0]
        observed_pos = int(placement[observed])
        if anchor is None:
            anchor = raw
        state.probs = bayes_update(state.probs, T, observed_pos, placement)
        h = entropy(state.probs)
        if state.entropy_trace and abs(h - state.entropy_trace[-1]) < cfg.entropy_epsilon:
            stable += 1
        else:
            stable = 0
        state.entropy_trace.append(h)
        state.snapshots.append(Snapshot(
            state.probs.copy(), posterior_ranking(state.probs, anchor), h, raw,
            tuple(int(x) for x in placement), observed_pos,
        ))
        state.iteration += 1
        if stable >= cfg.consecutive_stable:
            break

    if not state.snapshots:
        raise BackendExhausted(f"no valid answer in {state.queries} queries")
    # stable sort: equal entropies keep iteration order
    chosen = sorted(range(len(state.snapshots)),
                    key=lambda i: float(np.round(state.entropy_trace[i], ENTROPY_DECIMALS)))[: cfg.aggregation_k]
    if cfg.aggregate_source == "raw":
        picked = [state.snapshots[i].raw for i in chosen]
    else:
        picked = [state.snapshots[i].ranking for i in chosen]
    return borda_aggregate(picked, j), state


def bootstrap_baseline(
    ctx: PromptContext,
    backend,
    repeats: int = 3,
    seed: int = 0,
) -> Ranking:
    """Borda aggregate of ``repeats`` independently shuffled raw answers."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rankings: list[Ranking] = []
    q = 0
    while len(rankings) < repeats and q < 2 * repeats:
        got = _query(backend, ctx, seed, q)
        q += 1
        if got is not None:
            rankings.append(got[1])
    if not rankings:
        raise BackendExhausted(f"no valid answer in {q} queries")
    return borda_aggregate(rankings, len(ctx.slate))
