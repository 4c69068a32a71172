"""Loop kernels compiled with numba.

Semantics must stay identical to :mod:`stella.kernels._numpy`; the test
suite feeds both the same pre-drawn randomness and compares outputs.
"""

import math

import numpy as np
from numba import njit

from ._numpy import ENTROPY_DECIMALS


@njit(cache=True)
def count_transitions(truth, pred, dim):
    counts = np.zeros((dim, dim), dtype=np.int64)
    for n in range(truth.shape[0]):
        counts[truth[n], pred[n]] += 1
    return counts


@njit(cache=True)
def _posterior_order(p, anchor_rank, out):
    # insertion sort on (-p, anchor_rank); j is small
    j = p.shape[0]
    for c in range(j):
        out[c] = c
    for a in range(1, j):
        cur = out[a]
        b = a - 1
        while b >= 0:
            prev = out[b]
            if p[prev] < p[cur] or (p[prev] == p[cur] and anchor_rank[prev] > anchor_rank[cur]):
                out[b + 1] = prev
                b -= 1
            else:
                break
        out[b + 1] = cur


@njit(cache=True)
def _borda(rankings, chosen, n_chosen, j, out):
    total = np.zeros(j, dtype=np.int64)
    best = np.full(j, j, dtype=np.int64)
    first = np.full(j, n_chosen, dtype=np.int64)
    for s in range(n_chosen):
        r = rankings[chosen[s]]
        for rank in range(j):
            c = r[rank]
            total[c] += j - rank
            if rank < best[c]:
                best[c] = rank
                first[c] = s
    for c in range(j):
        out[c] = c
    for a in range(1, j):
        cur = out[a]
        b = a - 1
        while b >= 0:
            prev = out[b]
            worse = False
            if total[prev] != total[cur]:
                worse = total[prev] < total[cur]
            elif best[prev] != best[cur]:
                worse = best[prev] > best[cur]
            elif first[prev] != first[cur]:
                worse = first[prev] > first[cur]
            else:
                worse = prev > cur
            if worse:
                out[b + 1] = prev
                b -= 1
            else:
                break
        out[b + 1] = cur


@njit(cache=True)
def stella_batch(T, placements, observed, raw_orders, eps, c_stable, k, use_raw):
    n, N, j = placements.shape
    final = np.zeros((n, j), dtype=np.int64)
    entropies = np.full((n, N), np.nan)
    n_iter = np.zeros(n, dtype=np.int64)
    posts = np.zeros((N, j), dtype=np.int64)
    p = np.empty(j)
    anchor_rank = np.empty(j, dtype=np.int64)
    for e in range(n):
        for c in range(j):
            p[c] = 1.0 / j
            anchor_rank[raw_orders[e, 0, c]] = c
        stable = 0
        used = N
        degenerate = False
        for it in range(N):
            y = observed[e, it]
            s = 0.0
            for c in range(j):
                p[c] = p[c] * T[placements[e, it, c], y]
                s += p[c]
            if not s > 0.0:
                degenerate = True
                break
            h = 0.0
            for c in range(j):
                p[c] = p[c] / s
                if p[c] > 0.0:
                    h -= p[c] * math.log(p[c])
            entropies[e, it] = h
            _posterior_order(p, anchor_rank, posts[it])
            if it > 0 and abs(h - entropies[e, it - 1]) < eps:
                stable += 1
            else:
                stable = 0
            if stable >= c_stable:
                used = it + 1
                break
        if degenerate:
            n_iter[e] = -1
            continue
        n_iter[e] = used
        chosen = np.argsort(np.round(entropies[e, :used], ENTROPY_DECIMALS), kind="mergesort")
        n_chosen = min(k, used)
        if use_raw:
            _borda(raw_orders[e], chosen, n_chosen, j, final[e])
        else:
            _borda(posts, chosen, n_chosen, j, final[e])
    return final, entropies, n_iter
