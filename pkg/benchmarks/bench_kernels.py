"""Time the numba and numpy kernels on identical pre-drawn inputs.

    python benchmarks/bench_kernels.py --episodes 20000 --repeats 5

The first numba call includes JIT compilation and is reported separately.
"""

from __future__ import annotations

import argparse
import logging
import time

import numpy as np

from stella import kernels
from stella.evalharness.bulk import draw_episodes
from stella.kernels import _numpy
from stella.rankers import named_profile

log = logging.getLogger("bench_kernels")


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=20_000)
    ap.add_argument("--size", type=int, default=5)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    try:
        from stella.kernels import _numba
    except ImportError:
        log.error("numba is not installed; only the numpy path is available")
        return 1

    prof = named_profile("canonical", args.size)
    ep = draw_episodes(prof, args.episodes, 10, args.seed)
    T = prof.planted.entries
    rng = np.random.default_rng(args.seed)
    truth = rng.integers(0, args.size, 1_000_000)
    pred = rng.integers(0, args.size, 1_000_000)

    def batch(impl):
        return lambda: kernels.stella_batch(T, ep.placements, ep.observed, ep.raw_orders, impl=impl)

    def counts(impl):
        return lambda: impl.count_transitions(truth, pred, args.size)

    t0 = time.perf_counter()
    batch(_numba)()
    counts(_numba)()
    log.info("numba first call (includes compilation): %.2fs", time.perf_counter() - t0)

    a = batch(_numba)()
    b = batch(_numpy)()
    same = np.array_equal(a[0], b[0]) and np.array_equal(a[2], b[2])
    log.info("outputs identical: %s", same)

    rows = [
        ("stella_batch", f"{args.episodes} episodes, j={args.size}", batch),
        ("count_transitions", "1,000,000 pairs", counts),
    ]
    log.info("%-18s %-28s %10s %10s %8s", "kernel", "input", "numpy s", "numba s", "speedup")
    for name, what, make in rows:
        t_np = _best_of(make(_numpy), args.repeats)
        t_nb = _best_of(make(_numba), args.repeats)
        log.info("%-18s %-28s %10.4f %10.4f %7.1fx", name, what, t_np, t_nb, t_np / t_nb)
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
