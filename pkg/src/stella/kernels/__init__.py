"""Hot numeric kernels with two interchangeable implementations.

Set ``STELLA_KERNELS=numpy`` to force the vectorized numpy path, or
``STELLA_KERNELS=numba`` to require the compiled one. The default picks numba
when it can be imported.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from ..errors import DegenerateLikelihood
from . import _numpy

log = logging.getLogger(__name__)

KERNEL_ENV = "STELLA_KERNELS"


def _select() -> str:
    wanted = os.environ.get(KERNEL_ENV, "auto").strip().lower()
    if wanted == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if wanted == "numba":
            raise
        log.info("numba not importable, using numpy kernels")
        return "numpy"
    return "numba"


BACKEND = _select()

if BACKEND == "numba":
    from . import _numba as _impl
else:
    _impl = _numpy


def count_transitions(truth: np.ndarray, pred: np.ndarray, dim: int) -> np.ndarray:
    """``(dim, dim)`` count matrix of (truth position, predicted top-1) pairs."""
    truth = np.ascontiguousarray(truth, dtype=np.int64)
    pred = np.ascontiguousarray(pred, dtype=np.int64)
    return _impl.count_transitions(truth, pred, int(dim))


def stella_batch(
    T: np.ndarray,
    placements: np.ndarray,
    observed: np.ndarray,
    raw_orders: np.ndarray,
    eps: float = 1e-3,
    c_stable: int = 2,
    k: int = 3,
    use_raw: bool = False,
    impl=None,
):
    """Run the posterior-update loop for a batch of pre-drawn episodes.

    ``placements[e, t, c]`` is the slate position of item ``c`` at step ``t``,
    ``observed[e, t]`` the top-1 position the ranker returned and
    ``raw_orders[e, t]`` that ranking expressed as items. Returns
    ``(final_rankings, entropy_traces, iterations_used)``; traces are NaN
    past the stopping step.
    """
    impl = impl or _impl
    final, entropies, n_iter = impl.stella_batch(
        np.ascontiguousarray(T, dtype=np.float64),
        np.ascontiguousarray(placements, dtype=np.int64),
        np.ascontiguousarray(observed, dtype=np.int64),
        np.ascontiguousarray(raw_orders, dtype=np.int64),
        float(eps),
        int(c_stable),
        int(k),
        bool(use_raw),
    )
    if (n_iter < 0).any():
        bad = int(np.flatnonzero(n_iter < 0)[0])
        raise DegenerateLikelihood(f"zero likelihood in episode {bad}; use a smoothed matrix")
    return final, entropies, n_iter
