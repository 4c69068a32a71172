"""Leave-one-out evaluation and the experiment drivers.

Every query seed is derived from (root seed, user, method, ...) so methods
never share draws and results do not depend on execution order.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from ..calibration import CalibrationConfig, bootstrap_baseline, calibrate
from ..domain import (
    CandidateSlate,
    Dataset,
    EvalRecord,
    ItemRef,
    UserHistory,
    derive_seed,
    negative_pool,
    shuffle_order,
    truth_position_variants,
)
from ..errors import BackendExhausted, InsufficientHistory, InvalidAnswer, PoolTooSmall, SlateTooLarge
from ..probing import TransitionMatrix, build_probe_set, run_probing
from ..prompting import LabelScheme, PromptContext, PromptDomain
from .results import ResultRow, hit_at_1, metric_key

log = logging.getLogger(__name__)

T_ = TypeVar("T_")
R_ = TypeVar("R_")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "toy"
    num_negatives: int = 4
    m: int = 5
    calibration: CalibrationConfig = CalibrationConfig()
    bootstrap_repeats: int = 3
    scheme: LabelScheme = LabelScheme.UPPERCASE_LETTERS
    domain: PromptDomain = PromptDomain()
    max_users: int | None = 200
    max_history: int | None = None
    parallelism: int = 1
    seed: int = 0
    digest: str = ""

    @property
    def j(self) -> int:
        return self.num_negatives + 1


@dataclass(frozen=True)
class EvalExample:
    user_id: str
    history_prefix: tuple[str, ...]
    slate: CandidateSlate
    seed: int

    def context(self, scheme=LabelScheme.UPPERCASE_LETTERS, domain=PromptDomain(),
                slate: CandidateSlate | None = None) -> PromptContext:
        return PromptContext(self.history_prefix, slate or self.slate, scheme, domain)


def _pmap(fn: Callable[[T_], R_], items: Sequence[T_], parallelism: int) -> list[R_]:
    if parallelism > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def leave_one_out(
    history: UserHistory,
    num_negatives: int,
    pool: Sequence[ItemRef],
    seed: int,
    max_history: int | None = None,
) -> EvalExample:
    """Hold out the final positive; pair it with sampled negatives."""
    positives = history.positives
    if len(positives) < 2:
        raise InsufficientHistory(f"user {history.user_id!r} has {len(positives)} positives, need 2")
    if len(pool) < num_negatives:
        raise PoolTooSmall(f"negative pool has {len(pool)} items, need {num_negatives}")
    truth = positives[-1]
    prefix = [it.title for it in positives[:-1]]
    if max_history is not None:
        prefix = prefix[-max_history:] if max_history > 0 else []
    rng = np.random.default_rng(derive_seed(seed, history.user_id, "eval-negatives"))
    picks = rng.choice(len(pool), size=num_negatives, replace=False)
    slate = CandidateSlate((truth, *(pool[i] for i in picks)), truth_index=0)
    order = shuffle_order(len(slate), derive_seed(seed, history.user_id, "eval-arrangement"))
    slate = slate.arranged(order.tolist())
    return EvalExample(history.user_id, tuple(prefix), slate, derive_seed(seed, history.user_id, "eval"))


def select_users(dataset: Dataset, cfg: ExperimentConfig) -> list[UserHistory]:
    eligible = sorted(uid for uid, h in dataset.users.items() if len(h.positives) >= 2)
    if cfg.max_users is not None and len(eligible) > cfg.max_users:
        rng = np.random.default_rng(derive_seed(cfg.seed, dataset.name, "users"))
        eligible = sorted(rng.choice(eligible, size=cfg.max_users, replace=False).tolist())
    return [dataset.users[uid] for uid in eligible]


def build_examples(dataset: Dataset, cfg: ExperimentConfig, num_negatives: int | None = None) -> list[EvalExample]:
    k = cfg.num_negatives if num_negatives is None else num_negatives
    return [
        leave_one_out(h, k, negative_pool(dataset.catalog, h), cfg.seed, cfg.max_history)
        for h in select_users(dataset, cfg)
    ]


def probe_transition(backend, dataset: Dataset, cfg: ExperimentConfig, m: int | None = None) -> TransitionMatrix:
    m = cfg.m if m is None else m
    probe_set = []
    for h in select_users(dataset, cfg):
        probe_set.extend(build_probe_set(
            h, m, cfg.num_negatives, negative_pool(dataset.catalog, h),
            derive_seed(cfg.seed, "probe"), cfg.max_history,
        ))
    return run_probing(backend, probe_set, cfg.parallelism, derive_seed(cfg.seed, "probe"),
                       cfg.scheme, cfg.domain)


# -- per-method evaluation --------------------------------------------------


@dataclass
class MethodOutcome:
    records: list[EvalRecord] = field(default_factory=list)
    invalid: int = 0
    attempted: int = 0

    @property
    def invalid_rate(self) -> float:
        return self.invalid / self.attempted if self.attempted else 0.0

    def rows(self, experiment: str, dataset: str, method: str, digest: str,
             metric: str = "hit_at_1") -> list[ResultRow]:
        out = [ResultRow(experiment, dataset, method, metric.replace("hit_at_1", "invalid_rate", 1),
                         self.invalid_rate, None, digest)]
        if self.records:
            mean, std = hit_at_1(self.records)
            out.append(ResultRow(experiment, dataset, method, metric, mean, std, digest))
        return out


def _collect(results: Iterable[EvalRecord | None]) -> MethodOutcome:
    out = MethodOutcome()
    for r in results:
        out.attempted += 1
        if r is None:
            out.invalid += 1
        else:
            out.records.append(r)
    return out


def eval_raw_arrangements(backend, examples: Sequence[EvalExample], cfg: ExperimentConfig) -> MethodOutcome:
    """One query per truth position per example; records carry the position as permutation_id."""
    def run(ex: EvalExample) -> list[EvalRecord | None]:
        out = []
        for v in truth_position_variants(ex.slate):
            try:
                pred = backend.rank(ex.context(cfg.scheme, cfg.domain, v), derive_seed(ex.seed, "raw", v.permutation_id))
                out.append(EvalRecord(ex.user_id, v, pred, v.truth_index))
            except InvalidAnswer:
                out.append(None)
        return out
    return _collect(itertools.chain.from_iterable(_pmap(run, examples, cfg.parallelism)))


def eval_raw_shuffled(backend, examples: Sequence[EvalExample], cfg: ExperimentConfig) -> MethodOutcome:
    def run(ex: EvalExample) -> EvalRecord | None:
        order = shuffle_order(len(ex.slate), derive_seed(ex.seed, "raw-shuffled"))
        shown = ex.slate.arranged(order.tolist())
        try:
            pred = backend.rank(ex.context(cfg.scheme, cfg.domain, shown), derive_seed(ex.seed, "raw-shuffled", "q"))
        except InvalidAnswer:
            return None
        return EvalRecord(ex.user_id, shown, pred, shown.truth_index)
    return _collect(_pmap(run, examples, cfg.parallelism))


def eval_bootstrap(backend, examples: Sequence[EvalExample], cfg: ExperimentConfig) -> MethodOutcome:
    def run(ex: EvalExample) -> EvalRecord | None:
        try:
            pred = bootstrap_baseline(ex.context(cfg.scheme, cfg.domain), backend, cfg.bootstrap_repeats,
                                      derive_seed(ex.seed, "bootstrapping"))
        except BackendExhausted:
            return None
        return EvalRecord(ex.user_id, ex.slate, pred, ex.slate.truth_index)
    return _collect(_pmap(run, examples, cfg.parallelism))


def eval_stella(backend, examples: Sequence[EvalExample], T: TransitionMatrix, cfg: ExperimentConfig) -> MethodOutcome:
    def run(ex: EvalExample) -> EvalRecord | None:
        try:
            pred, _ = calibrate(ex.context(cfg.scheme, cfg.domain), backend, T, cfg.calibration,
                                derive_seed(ex.seed, "stella"))
        except BackendExhausted:
            return None
        return EvalRecord(ex.user_id, ex.slate, pred, ex.slate.truth_index)
    return _collect(_pmap(run, examples, cfg.parallelism))


# -- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class PositionTable:
    accuracy: np.ndarray  # per truth position
    valid: np.ndarray
    invalid: np.ndarray

    def rows(self, experiment: str, dataset: str, digest: str, **extra) -> list[ResultRow]:
        return [
            ResultRow(experiment, dataset, "raw", metric_key("hit_at_1", **extra, pos=i), float(a), None, digest)
            for i, a in enumerate(self.accuracy)
        ]


def run_position_sweep(backend, examples: Sequence[EvalExample], j: int | None = None,
                       scheme: LabelScheme | str = LabelScheme.UPPERCASE_LETTERS,
                       domain: PromptDomain = PromptDomain(), parallelism: int = 1) -> PositionTable:
    """Hit@1 with the truth placed at each position in turn."""
    j = len(examples[0].slate) if j is None else j
    if any(len(ex.slate) != j for ex in examples):
        raise ValueError(f"all examples must have {j} candidates")
    cfg = ExperimentConfig(num_negatives=j - 1, scheme=LabelScheme(scheme), domain=domain, parallelism=parallelism)
    outcome = eval_raw_arrangements(backend, examples, cfg)
    hits = np.zeros(j)
    valid = np.zeros(j, dtype=np.int64)
    for r in outcome.records:
        hits[r.slate.permutation_id] += r.score
        valid[r.slate.permutation_id] += 1
    attempted = np.full(j, len(examples), dtype=np.int64)
    with np.errstate(invalid="ignore"):
        acc = np.where(valid > 0, hits / np.maximum(valid, 1), 0.0)
    return PositionTable(acc, valid, attempted - valid)


@dataclass(frozen=True)
class PermutationGrid:
    accuracy: np.ndarray  # (truth position, negative-permutation rank)
    valid: np.ndarray

    @property
    def variance_over_negative_orders(self) -> np.ndarray:
        """Spread within each truth position, across negative orders."""
        return self.accuracy.var(axis=1)

    @property
    def variance_over_truth_positions(self) -> np.ndarray:
        return self.accuracy.var(axis=0)

    def rows(self, experiment: str, dataset: str, digest: str) -> list[ResultRow]:
        j, r = self.accuracy.shape
        return [
            ResultRow(experiment, dataset, "raw", metric_key("hit_at_1", pos=i, neg_perm=k),
                      float(self.accuracy[i, k]), None, digest)
            for i in range(j) for k in range(r)
        ]


def run_negative_permutation_grid(backend, examples: Sequence[EvalExample], j: int | None = None,
                                  scheme: LabelScheme | str = LabelScheme.UPPERCASE_LETTERS,
                                  domain: PromptDomain = PromptDomain(), parallelism: int = 1) -> PermutationGrid:
    j = len(examples[0].slate) if j is None else j
    if j > 5:
        raise SlateTooLarge(f"negative-permutation grid enumerates {(j - 1)} ! orders; j must be <= 5")
    perms = list(itertools.permutations(range(j - 1)))

    def run(ex: EvalExample) -> np.ndarray:
        g = ex.slate.truth_index
        negatives = [i for i in range(j) if i != g]
        cell = np.full((j, len(perms)), np.nan)
        for k, perm in enumerate(perms):
            negs = [negatives[q] for q in perm]
            for pos in range(j):
                v = ex.slate.arranged(negs[:pos] + [g] + negs[pos:], pos)
                try:
                    pred = backend.rank(ex.context(scheme, domain, v), derive_seed(ex.seed, "grid", pos, k))
                except InvalidAnswer:
                    continue
                cell[pos, k] = float(pred.top == pos)
        return cell

    cells = np.stack(_pmap(run, examples, parallelism))
    valid = (~np.isnan(cells)).sum(axis=0)
    acc = np.where(valid > 0, np.nansum(cells, axis=0) / np.maximum(valid, 1), 0.0)
    return PermutationGrid(acc, valid)


@dataclass(frozen=True)
class SizeRow:
    size: int
    max: float
    min: float
    mean: float
    random: float


def run_candidate_size_sweep(backend, examples: Sequence[EvalExample], sizes: Sequence[int],
                             scheme: LabelScheme | str = LabelScheme.UPPERCASE_LETTERS,
                             domain: PromptDomain = PromptDomain(), parallelism: int = 1) -> list[SizeRow]:
    """Per-position accuracy spread for each slate size, using each example's first negatives."""
    if any(not 2 <= s < 26 for s in sizes):
        raise ValueError("sizes must lie in [2, 26)")
    need = max(sizes)
    if any(len(ex.slate) < need for ex in examples):
        raise ValueError(f"examples need at least {need} candidates")
    out = []
    for s in sizes:
        sub = []
        for ex in examples:
            g = ex.slate.truth_index
            keep = [g] + [i for i in range(len(ex.slate)) if i != g][: s - 1]
            sub.append(EvalExample(ex.user_id, ex.history_prefix, ex.slate.arranged(keep),
                                   derive_seed(ex.seed, "size", s)))
        table = run_position_sweep(backend, sub, s, scheme, domain, parallelism)
        acc = table.accuracy
        out.append(SizeRow(s, float(acc.max()), float(acc.min()), float(acc.mean()), 1.0 / s))
    return out


def size_rows(table: Sequence[SizeRow], experiment: str, dataset: str, digest: str) -> list[ResultRow]:
    rows = []
    for r in table:
        for stat in ("max", "min", "mean"):
            rows.append(ResultRow(experiment, dataset, "raw", metric_key("hit_at_1", size=r.size, stat=stat),
                                  getattr(r, stat), None, digest))
        rows.append(ResultRow(experiment, dataset, "random", metric_key("hit_at_1", size=r.size, stat="mean"),
                              r.random, None, digest))
    return rows


def run_template_sweep(backend, examples: Sequence[EvalExample], schemes: Sequence[LabelScheme | str],
                       domain: PromptDomain = PromptDomain(), parallelism: int = 1) -> dict[LabelScheme, PositionTable]:
    if not schemes:
        raise ValueError("need at least one label scheme")
    return {
        LabelScheme(s): run_position_sweep(backend, examples, None, s, domain, parallelism)
        for s in schemes
    }


# -- headline experiments ---------------------------------------------------------


def run_main_experiment(backend, dataset: Dataset, cfg: ExperimentConfig,
                        transition: TransitionMatrix | None = None) -> tuple[list[ResultRow], TransitionMatrix]:
    """Raw output (mean +- std over truth arrangements), Bootstrapping and calibrated rows."""
    T = transition if transition is not None else probe_transition(backend, dataset, cfg)
    if T.dim != cfg.j:
        raise ValueError(f"transition matrix dim {T.dim} != candidate size {cfg.j}")
    examples = build_examples(dataset, cfg)
    exp, ds, dg = "main", dataset.name, cfg.digest
    raw = eval_raw_arrangements(backend, examples, cfg)
    rows = raw.rows(exp, ds, "raw", dg)
    counts = np.zeros(cfg.j)
    hits = np.zeros(cfg.j)
    for r in raw.records:
        counts[r.slate.permutation_id] += 1
        hits[r.slate.permutation_id] += r.score
    for i in range(cfg.j):
        if counts[i]:
            rows.append(ResultRow(exp, ds, "raw", metric_key("hit_at_1", pos=i), hits[i] / counts[i], None, dg))
    rows += eval_bootstrap(backend, examples, cfg).rows(exp, ds, "bootstrapping", dg)
    rows += eval_stella(backend, examples, T, cfg).rows(exp, ds, "stella", dg)
    return rows, T


def run_ablation_uniform_tm(backend, dataset: Dataset, cfg: ExperimentConfig,
                            transition: TransitionMatrix | None = None) -> list[ResultRow]:
    T = transition if transition is not None else probe_transition(backend, dataset, cfg)
    examples = build_examples(dataset, cfg)
    exp, ds, dg = "ablation_tm", dataset.name, cfg.digest
    rows = eval_stella(backend, examples, T, cfg).rows(exp, ds, "stella", dg)
    rows += eval_stella(backend, examples, TransitionMatrix.uniform(cfg.j), cfg).rows(exp, ds, "stella_uniform_tm", dg)
    rows += eval_raw_shuffled(backend, examples, cfg).rows(exp, ds, "raw", dg,
                                                           metric_key("hit_at_1", arrangement="shuffled"))
    return rows


DEFAULT_M_VALUES = (1, 2, 3, 4, 5)


def run_ensemble_length_sweep(backend, dataset: Dataset, cfg: ExperimentConfig,
                              m_values: Sequence[int] = DEFAULT_M_VALUES) -> list[ResultRow]:
    """Re-probe with each ensemble length and recalibrate the same evaluation set."""
    if any(not 1 <= m <= 10 for m in m_values):
        raise ValueError("m values must lie in [1, 10]")
    examples = build_examples(dataset, cfg)
    rows = []
    for m in m_values:
        T = probe_transition(backend, dataset, cfg, m)
        outcome = eval_stella(backend, examples, T, cfg)
        flags = {"m": m, "default": 1} if m == cfg.m else {"m": m}
        rows += outcome.rows("ensemble_length", dataset.name, "stella", cfg.digest, metric_key("hit_at_1", **flags))
    return rows


def random_baseline(j: int) -> float:
    return 1.0 / j


def accuracy(rows: Iterable[ResultRow], method: str, metric: str = "hit_at_1") -> float:
    for r in rows:
        if r.method == method and r.metric == metric:
            return r.value
    raise KeyError(f"no row for {method}/{metric}")


__all__ = [
    "EvalExample", "ExperimentConfig", "PermutationGrid", "PositionTable", "SizeRow",
    "accuracy", "build_examples", "leave_one_out", "probe_transition", "random_baseline",
    "run_ablation_uniform_tm", "run_candidate_size_sweep", "run_ensemble_length_sweep",
    "run_main_experiment", "run_negative_permutation_grid", "run_position_sweep",
    "run_template_sweep", "select_users", "size_rows",
]
