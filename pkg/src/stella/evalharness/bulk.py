"""Bulk Monte Carlo against a bias profile, driven by the batch kernels.

All randomness is drawn up front with numpy, so the numba and numpy kernels
see identical inputs. Items are indexed 0..j-1; each episode's truth item
is drawn uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..calibration import CalibrationConfig
from ..probing import TransitionMatrix, estimate_transition
from ..rankers.simulator import BiasProfile


@dataclass(frozen=True)
class Episodes:
    truth: np.ndarray       # (n,) truth item
    placements: np.ndarray  # (n, N, j) position of each item
    observed: np.ndarray    # (n, N) top-1 position
    raw_orders: np.ndarray  # (n, N, j) raw ranking as items


def _draw_rows(cum: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    j = cum.shape[1]
    return np.minimum((u[..., None] >= cum[rows]).sum(axis=-1), j - 1)


def draw_episodes(profile: BiasProfile, n: int, steps: int, seed: int) -> Episodes:
    rng = np.random.default_rng(seed)
    j = profile.dim
    cum = np.cumsum(profile.planted.entries, axis=1)
    truth = rng.integers(0, j, size=n)
    # arrangement[e, t, pos] = item shown at pos
    arrangement = rng.permuted(np.broadcast_to(np.arange(j), (n, steps, j)), axis=-1)
    placements = np.argsort(arrangement, axis=-1)
    truth_pos = np.take_along_axis(placements, truth[:, None, None].repeat(steps, 1), -1)[..., 0]
    observed = _draw_rows(cum, truth_pos, rng.random((n, steps)))
    # tail positions in random order, observed position first
    keys = rng.random((n, steps, j))
    np.put_along_axis(keys, observed[..., None], -1.0, axis=-1)
    if profile.tail_rule == "position_order":
        keys = np.where(keys < 0, keys, np.arange(j, dtype=float))
    answer = np.argsort(keys, axis=-1)
    raw_orders = np.take_along_axis(arrangement, answer, axis=-1)
    return Episodes(truth, placements, observed, raw_orders)


@dataclass(frozen=True)
class BulkResult:
    stella: float
    raw: float
    mean_iterations: float


def bulk_stella(
    profile: BiasProfile,
    T: TransitionMatrix,
    n: int,
    cfg: CalibrationConfig = CalibrationConfig(),
    seed: int = 0,
    impl=None,
) -> BulkResult:
    ep = draw_episodes(profile, n, cfg.max_iterations, seed)
    final, _, n_iter = kernels.stella_batch(
        T.entries, ep.placements, ep.observed, ep.raw_orders,
        cfg.entropy_epsilon, cfg.consecutive_stable, cfg.aggregation_k,
        cfg.aggregate_source == "raw", impl=impl,
    )
    return BulkResult(
        float((final[:, 0] == ep.truth).mean()),
        float((ep.raw_orders[:, 0, 0] == ep.truth).mean()),
        float(n_iter.mean()),
    )


def bulk_probe(profile: BiasProfile, per_row: int, seed: int, smoothing: bool = True) -> TransitionMatrix:
    """Transition estimate from ``per_row`` simulated probes per truth position."""
    rng = np.random.default_rng(seed)
    j = profile.dim
    truth = np.repeat(np.arange(j), per_row)
    pred = _draw_rows(np.cumsum(profile.planted.entries, axis=1), truth, rng.random(truth.size))
    return estimate_transition(np.stack([truth, pred], axis=1), j, smoothing, f"bulk:{profile.name}")
