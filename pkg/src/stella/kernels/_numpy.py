"""Vectorized numpy kernels; the fallback when numba is unavailable or disabled."""

import numpy as np

# entropies equal to this many decimals count as tied (earlier iteration wins);
# keeps selection independent of last-ulp differences between libm builds
ENTROPY_DECIMALS = 10


def count_transitions(truth, pred, dim):
    flat = np.asarray(truth, dtype=np.int64) * dim + np.asarray(pred, dtype=np.int64)
    return np.bincount(flat, minlength=dim * dim).reshape(dim, dim).astype(np.int64)


def _rowsum(a):
    # left-to-right accumulation, the same rounding as the loop kernel
    out = a[:, 0].copy()
    for c in range(1, a.shape[1]):
        out += a[:, c]
    return out


def _borda(rankings, valid):
    """Borda winner order for ``rankings`` (n, s, j), ``valid`` (n, s)."""
    n, s, j = rankings.shape
    ranks = np.argsort(rankings, axis=-1, kind="stable")  # item -> rank
    points = np.where(valid[..., None], j - ranks, 0)
    total = points.sum(axis=1)
    masked = np.where(valid[..., None], ranks, j)
    best = masked.min(axis=1)
    idx = np.broadcast_to(np.arange(s)[None, :, None], (n, s, j))
    hit = valid[..., None] & (masked == best[:, None, :])
    first = np.where(hit, idx, s).min(axis=1)
    items = np.broadcast_to(np.arange(j), (n, j))
    return np.lexsort((items, first, best, -total), axis=-1)


def stella_batch(T, placements, observed, raw_orders, eps, c_stable, k, use_raw):
    n, N, j = placements.shape
    rows = np.arange(n)
    p = np.full((n, j), 1.0 / j)
    anchor_rank = np.argsort(raw_orders[:, 0, :], axis=-1, kind="stable")
    entropies = np.full((n, N), np.nan)
    posts = np.zeros((n, N, j), dtype=np.int64)
    degenerate_at = np.full(n, N)
    for it in range(N):
        like = T[placements[:, it, :], observed[:, it][:, None]]
        u = p * like
        s = _rowsum(u)
        bad = ~(s > 0.0)
        degenerate_at = np.where(bad & (degenerate_at == N), it, degenerate_at)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = u / s[:, None]
            terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
        h = -_rowsum(terms)
        h[degenerate_at <= it] = np.nan
        entropies[:, it] = h
        posts[:, it, :] = np.lexsort((anchor_rank, -p), axis=-1)

    # stopping point under the "c consecutive small changes" rule
    n_iter = np.full(n, N)
    stable = np.zeros(n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    for it in range(1, N):
        small = np.abs(entropies[:, it] - entropies[:, it - 1]) < eps
        stable = np.where(small, stable + 1, 0)
        hit = ~done & (stable >= c_stable)
        n_iter[hit] = it + 1
        done |= hit
    n_iter = np.where(degenerate_at < n_iter, -1, n_iter)

    steps = np.arange(N)
    live = steps[None, :] < np.maximum(n_iter, 0)[:, None]
    entropies = np.where(live, entropies, np.nan)
    masked = np.where(live, entropies, np.inf)
    chosen = np.argsort(np.round(masked, ENTROPY_DECIMALS), axis=-1, kind="stable")[:, :k]
    valid = np.take_along_axis(live, chosen, axis=-1)
    source = raw_orders if use_raw else posts
    picked = source[rows[:, None], chosen]
    final = _borda(picked, valid)
    final[n_iter < 0] = 0
    return final.astype(np.int64), entropies, n_iter.astype(np.int64)
