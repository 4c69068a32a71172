from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from stella import kernels
from stella.calibration import bayes_update, borda_aggregate, entropy, posterior_ranking
from stella.domain import Ranking
from stella.errors import DegenerateLikelihood
from stella.evalharness.bulk import bulk_probe, bulk_stella, draw_episodes
from stella.kernels import _numpy
from stella.probing import TransitionMatrix
from stella.rankers import named_profile

numba_impl = pytest.importorskip("stella.kernels._numba")


def _reference(T, placements, observed, raw_orders, eps=1e-3, c=2, k=3):
    """Per-episode loop written with the object-level primitives."""
    finals, iters = [], []
    for e in range(placements.shape[0]):
        p = np.full(T.shape[0], 1.0 / T.shape[0])
        anchor = Ranking(tuple(raw_orders[e, 0]))
        trace, ranks, stable = [], [], 0
        for t in range(placements.shape[1]):
            p = bayes_update(p, T, int(observed[e, t]), placements[e, t])
            h = entropy(p)
            stable = stable + 1 if trace and abs(h - trace[-1]) < eps else 0
            trace.append(h)
            ranks.append(posterior_ranking(p, anchor))
            if stable >= c:
                break
        chosen = sorted(range(len(trace)), key=lambda i: trace[i])[:k]
        finals.append(borda_aggregate([ranks[i] for i in chosen]).order)
        iters.append(len(trace))
    return np.array(finals), np.array(iters)


@pytest.mark.parametrize("profile", ["canonical", "degrading"])
def test_numba_and_numpy_agree_exactly(profile):
    prof = named_profile(profile, 5)
    ep = draw_episodes(prof, 3000, 10, seed=4)
    T = prof.planted.entries
    a = kernels.stella_batch(T, ep.placements, ep.observed, ep.raw_orders, impl=numba_impl)
    b = kernels.stella_batch(T, ep.placements, ep.observed, ep.raw_orders, impl=_numpy)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[2], b[2])
    assert np.allclose(a[1], b[1], atol=1e-12, equal_nan=True)
    assert np.array_equal(np.isnan(a[1]), np.isnan(b[1]))


def test_kernels_match_object_primitives():
    prof = named_profile("canonical", 4)
    ep = draw_episodes(prof, 400, 10, seed=8)
    T = bulk_probe(prof, 50, seed=1).entries
    ref_final, ref_iter = _reference(T, ep.placements, ep.observed, ep.raw_orders)
    for impl in (numba_impl, _numpy):
        final, _, n_iter = kernels.stella_batch(T, ep.placements, ep.observed, ep.raw_orders, impl=impl)
        assert np.array_equal(final, ref_final)
        assert np.array_equal(n_iter, ref_iter)


def test_uniform_matrix_keeps_first_raw_ranking():
    prof = named_profile("canonical", 5)
    ep = draw_episodes(prof, 500, 10, seed=2)
    for impl in (numba_impl, _numpy):
        final, ent, n_iter = kernels.stella_batch(np.full((5, 5), 0.2), ep.placements, ep.observed,
                                                  ep.raw_orders, impl=impl)
        assert np.array_equal(final, ep.raw_orders[:, 0])
        assert (n_iter == 3).all()
        assert np.allclose(ent[:, :3], np.log(5), atol=1e-12)


def test_count_transitions_agree():
    rng = np.random.default_rng(0)
    truth, pred = rng.integers(0, 7, 5000), rng.integers(0, 7, 5000)
    a = numba_impl.count_transitions(truth, pred, 7)
    b = _numpy.count_transitions(truth, pred, 7)
    assert np.array_equal(a, b) and a.sum() == 5000


def test_degenerate_likelihood_is_reported():
    prof = named_profile("canonical", 3)
    ep = draw_episodes(prof, 50, 10, seed=0)
    with pytest.raises(DegenerateLikelihood):
        kernels.stella_batch(np.eye(3), ep.placements, ep.observed, ep.raw_orders)


def test_bulk_result_fields():
    prof = named_profile("canonical", 5)
    res = bulk_stella(prof, prof.planted, 2000, seed=1)
    assert 0.75 < res.stella < 0.9 and 0.4 < res.raw < 0.5
    assert 3 <= res.mean_iterations <= 10
    res_np = bulk_stella(prof, prof.planted, 2000, seed=1, impl=_numpy)
    assert res_np == res


def test_env_flag_selects_numpy():
    code = "from stella import kernels; print(kernels.BACKEND)"
    env = {**os.environ, "STELLA_KERNELS": "numpy"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["STELLA_KERNELS"] = "auto"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"


def test_transition_from_bulk_probe_is_valid():
    T = bulk_probe(named_profile("degrading", 6), 100, seed=3)
    assert isinstance(T, TransitionMatrix) and T.dim == 6
    assert T.counts.sum() == 600
