"""Command-line entry point.

Exit status: 0 on success, 2 for configuration problems (including a missing
API key for the remote backend), 1 for any other failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..calibration import calibrate
from ..domain import derive_seed
from ..errors import ConfigError, StellaError
from ..evalharness import charts
from ..evalharness.experiments import (
    build_examples,
    probe_transition,
    run_ablation_uniform_tm,
    run_candidate_size_sweep,
    run_ensemble_length_sweep,
    run_main_experiment,
    run_negative_permutation_grid,
    run_template_sweep,
    size_rows,
)
from ..evalharness.results import ResultRow, parse_metric, write_results
from ..probing import TransitionMatrix
from ..prompting import LabelScheme
from ..rankers import RemoteRanker, SimulatedRanker
from .config import RunConfig
from .datasets import load_dataset

log = logging.getLogger("stella")


class Run:
    """Resolved configuration plus lazily built dataset and backend."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self._dataset = None
        self._backend = None

    @property
    def dataset(self):
        if self._dataset is None:
            self._dataset, report = load_dataset(self.cfg.dataset, name=self.cfg.name)
            log.info("dataset %s: %d users, %d interactions", self.cfg.name, report.users, report.interactions)
        return self._dataset

    @property
    def backend(self):
        if self._backend is None:
            if self.cfg.backend == "simulated":
                self._backend = SimulatedRanker(self.cfg.profile)
            else:
                cache = Path(self.cfg.cache_path)
                if not cache.is_absolute():
                    cache = self.out / cache
                self._backend = RemoteRanker(self.cfg.endpoint_config(), cache=cache)
        return self._backend

    @property
    def experiment(self):
        return self.cfg.experiment_config()

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def write_config(self) -> None:
        self.path("config.json").write_text(self.cfg.to_json(), encoding="utf-8")


def _transition(run: Run, path: str | None) -> TransitionMatrix:
    if path:
        T = TransitionMatrix.load_csv(path)
        log.info("loaded %dx%d transition matrix from %s", T.dim, T.dim, path)
        return T
    return probe_transition(run.backend, run.dataset, run.experiment)


def _series(rows, method_filter, key: str, group: str | None = None) -> dict[str, list[tuple[float, float]]]:
    out: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        name, params = parse_metric(r.metric)
        if name != "hit_at_1" or key not in params or not method_filter(r):
            continue
        label = params.get(group, r.method) if group else r.method
        out.setdefault(label, []).append((float(params[key]), r.value))
    return out


# -- commands -----------------------------------------------------------------------


def cmd_ingest(run: Run, args) -> None:
    _, report = load_dataset(args.path or run.cfg.dataset)
    print(json.dumps(report.as_dict(), sort_keys=True))


def cmd_probe(run: Run, args) -> None:
    T = _transition(run, None)
    T.save_csv(run.path("transition.csv"))
    run.write_config()
    for row in T.entries:
        print(" ".join(f"{v:.3f}" for v in row))
    if T.invalid_answers:
        log.warning("%d probing answers were invalid", T.invalid_answers)


def cmd_calibrate(run: Run, args) -> None:
    T = _transition(run, args.transition)
    exp = run.experiment
    examples = build_examples(run.dataset, exp)
    if args.user:
        matches = [ex for ex in examples if ex.user_id == args.user]
        if not matches:
            raise ConfigError(f"user {args.user!r} is not in the evaluation set")
        ex = matches[0]
    else:
        ex = examples[0]
    ranking, state = calibrate(ex.context(exp.scheme, exp.domain), run.backend, T, exp.calibration,
                               derive_seed(ex.seed, "stella"))
    state.write_trace(run.path("calibration_trace.jsonl"))
    for it, h in enumerate(state.entropy_trace):
        print(f"iteration {it + 1}: entropy {h:.6f}")
    titles = [ex.slate.items[i].title for i in ranking.order]
    print(f"user {ex.user_id}: truth at {ex.slate.truth_index}, predicted top {ranking.top}")
    for rank, title in enumerate(titles, 1):
        print(f"  {rank}. {title}")


def cmd_evaluate(run: Run, args) -> None:
    T = _transition(run, args.transition)
    rows, T = run_main_experiment(run.backend, run.dataset, run.experiment, T)
    write_results(rows, run.path("results.csv"))
    run.write_config()
    _positions_chart(run, rows)
    _print_rows(rows)


def _positions_chart(run: Run, rows) -> None:
    rows = [r for r in rows if r.experiment == "main"]
    series = _series(rows, lambda r: r.method == "raw", "pos")
    flat = {r.method: r.value for r in rows if r.metric == "hit_at_1" and r.method != "raw"}
    xs = [x for x, _ in series.get("raw", [])]
    for method, v in flat.items():
        series[method] = [(x, v) for x in xs]
    charts.line_chart(series, f"Hit@1 by ground-truth position ({run.cfg.name})",
                      "ground-truth position", "Hit@1", run.path("positions.svg"))


def cmd_ablate_tm(run: Run, args) -> None:
    T = _transition(run, args.transition)
    rows = run_ablation_uniform_tm(run.backend, run.dataset, run.experiment, T)
    write_results(rows, run.path("ablation_tm.csv"))
    run.write_config()
    _print_rows(rows)


def _size_sweep(run: Run, sizes) -> list[ResultRow]:
    sizes = list(sizes)
    exp = run.experiment
    examples = build_examples(run.dataset, exp, num_negatives=max(sizes) - 1)
    table = run_candidate_size_sweep(run.backend, examples, sizes, exp.scheme, exp.domain, exp.parallelism)
    rows = size_rows(table, "size_sweep", run.cfg.name, exp.digest)
    series = {
        "max": [(r.size, r.max) for r in table],
        "min": [(r.size, r.min) for r in table],
        "mean": [(r.size, r.mean) for r in table],
        "random": [(r.size, r.random) for r in table],
    }
    charts.line_chart(series, "Hit@1 spread across positions by candidate count",
                      "candidates", "Hit@1", run.path("size_sweep.svg"))
    return rows


def _template_sweep(run: Run, schemes) -> list[ResultRow]:
    exp = run.experiment
    examples = build_examples(run.dataset, exp)
    tables = run_template_sweep(run.backend, examples, schemes, exp.domain, exp.parallelism)
    rows = []
    for scheme, table in tables.items():
        rows += table.rows("template_sweep", run.cfg.name, exp.digest, scheme=scheme.value)
    series = _series(rows, lambda r: True, "pos", group="scheme")
    charts.line_chart(series, "Hit@1 by position for each label scheme",
                      "ground-truth position", "Hit@1", run.path("template_sweep.svg"))
    return rows


def _ensemble_sweep(run: Run, m_values) -> list[ResultRow]:
    rows = run_ensemble_length_sweep(run.backend, run.dataset, run.experiment, m_values)
    series = _series(rows, lambda r: True, "m")
    charts.line_chart(series, "Calibrated Hit@1 by probing ensemble length",
                      "ensemble length m", "Hit@1", run.path("ensemble_length.svg"))
    return rows


def _heatmap(run: Run, size: int) -> list[ResultRow]:
    exp = replace(run.experiment, num_negatives=size - 1)
    examples = build_examples(run.dataset, exp)
    grid = run_negative_permutation_grid(run.backend, examples, size, exp.scheme, exp.domain, exp.parallelism)
    charts.heatmap(grid.accuracy, f"Hit@1 by truth position and negative order ({size} candidates)",
                   "ground-truth position", "negative permutation", run.path("heatmap.svg"))
    rows = grid.rows("heatmap", run.cfg.name, exp.digest)
    var = grid.variance_over_negative_orders
    log.info("variance over negative orders per position: %s", " ".join(f"{v:.4f}" for v in var))
    return rows


def cmd_sweep_size(run: Run, args) -> None:
    rows = _size_sweep(run, args.sizes or run.cfg.sweep.sizes)
    write_results(rows, run.path("size_sweep.csv"))
    run.write_config()
    _print_rows(rows)


def cmd_sweep_template(run: Run, args) -> None:
    rows = _template_sweep(run, args.schemes or run.cfg.sweep.schemes)
    write_results(rows, run.path("template_sweep.csv"))
    run.write_config()
    _print_rows(rows)


def cmd_sweep_ensemble(run: Run, args) -> None:
    rows = _ensemble_sweep(run, args.m_values or run.cfg.sweep.m_values)
    write_results(rows, run.path("ensemble_length.csv"))
    run.write_config()
    _print_rows(rows)


def cmd_heatmap(run: Run, args) -> None:
    size = args.size or run.cfg.sweep.heatmap_size
    rows = _heatmap(run, size)
    write_results(rows, run.path("heatmap.csv"))
    run.write_config()
    _print_rows(rows)


def cmd_simulate(run: Run, args) -> None:
    """Every experiment against the simulated ranker, into one results file."""
    if run.cfg.backend != "simulated":
        raise ConfigError("simulate requires the simulated backend")
    rows, T = run_main_experiment(run.backend, run.dataset, run.experiment)
    T.save_csv(run.path("transition.csv"))
    _positions_chart(run, rows)
    rows += run_ablation_uniform_tm(run.backend, run.dataset, run.experiment, T)
    rows += _size_sweep(run, run.cfg.sweep.sizes)
    rows += _template_sweep(run, run.cfg.sweep.schemes)
    rows += _ensemble_sweep(run, run.cfg.sweep.m_values)
    rows += _heatmap(run, run.cfg.sweep.heatmap_size)
    write_results(rows, run.path("results.csv"))
    run.write_config()
    _print_rows([r for r in rows if r.experiment in ("main", "ablation_tm") and r.metric == "hit_at_1"])


def _print_rows(rows) -> None:
    for r in rows:
        std = "" if r.std is None else f" +- {r.std:.4f}"
        print(f"{r.experiment:16s} {r.method:18s} {r.metric:36s} {r.value:.4f}{std}")


# -- argument parsing -------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _scheme_list(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    valid = {s.value for s in LabelScheme}
    bad = [n for n in names if n not in valid]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown schemes {bad}; choose from {sorted(valid)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--seed", type=int, help="root seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--backend", choices=["simulated", "remote"], help="ranker backend")
    common.add_argument("--profile", help="simulated bias profile")
    common.add_argument("--dataset", help="dataset path, or 'toy'")
    common.add_argument("--max-users", type=int, help="cap on evaluated users")
    common.add_argument("--parallelism", type=int, help="concurrent backend queries")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="stella", description="Position-bias probing and calibration for list-wise rankers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate a dataset and print statistics")
    p.add_argument("path", nargs="?", help="JSONL interaction file (default: config dataset)")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("probe", parents=[common], help="estimate the transition matrix")
    p.set_defaults(fn=cmd_probe)

    for name, fn, doc in [
        ("calibrate", cmd_calibrate, "calibrate one example and print its entropy trace"),
        ("evaluate", cmd_evaluate, "raw, Bootstrapping and calibrated Hit@1"),
        ("ablate-tm", cmd_ablate_tm, "probed vs uniform transition matrix"),
    ]:
        p = sub.add_parser(name, parents=[common], help=doc)
        p.add_argument("--transition", help="reuse a transition matrix CSV instead of probing")
        if name == "calibrate":
            p.add_argument("--user", help="user id to calibrate (default: first evaluated user)")
        p.set_defaults(fn=fn)

    p = sub.add_parser("sweep-size", parents=[common], help="accuracy spread vs candidate count")
    p.add_argument("--sizes", type=_int_list, help="comma-separated candidate counts")
    p.set_defaults(fn=cmd_sweep_size)

    p = sub.add_parser("sweep-template", parents=[common], help="accuracy by position for each label scheme")
    p.add_argument("--schemes", type=_scheme_list, help="comma-separated label schemes")
    p.set_defaults(fn=cmd_sweep_template)

    p = sub.add_parser("sweep-ensemble", parents=[common], help="calibrated accuracy vs probing ensemble length")
    p.add_argument("--m-values", type=_int_list, help="comma-separated ensemble lengths")
    p.set_defaults(fn=cmd_sweep_ensemble)

    p = sub.add_parser("heatmap", parents=[common], help="truth position x negative order grid")
    p.add_argument("--size", type=int, help="candidate count (2..5)")
    p.set_defaults(fn=cmd_heatmap)

    p = sub.add_parser("simulate", parents=[common], help="run every experiment against a simulated profile")
    p.set_defaults(fn=cmd_simulate)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {
        "seed": args.seed, "output_dir": args.out, "backend": args.backend, "profile": args.profile,
        "dataset": args.dataset, "max_users": args.max_users, "parallelism": args.parallelism,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides).validate()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        args.fn(Run(cfg), args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (StellaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
