"""Ranker backends: anything with ``rank(ctx, seed) -> Ranking`` and an ``identity``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from ..domain import Ranking, derive_seed
from ..errors import InvalidAnswer
from ..prompting import PromptContext
from .cache import CachedExchange, ResponseCache, exchange_key
from .remote import EndpointConfig, RemoteRanker, TokenBucket
from .simulator import BiasProfile, SimulatedRanker, canonical_matrix, named_profile, simulated_rank


class RankerBackend(Protocol):
    identity: str

    def rank(self, ctx: PromptContext, seed: int) -> Ranking: ...


@dataclass(frozen=True)
class Top1Distribution:
    freqs: np.ndarray
    valid: int
    invalid: int


def empirical_top1_distribution(
    backend: RankerBackend,
    contexts: Sequence[PromptContext],
    n: int,
    seed: int = 0,
) -> Top1Distribution:
    """Frequency of each slate position being ranked first over ``n`` draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not contexts:
        raise ValueError("need at least one context")
    j = len(contexts[0].slate)
    counts = np.zeros(j, dtype=np.int64)
    invalid = 0
    for d in range(n):
        ctx = contexts[d % len(contexts)]
        try:
            counts[backend.rank(ctx, derive_seed(seed, "top1", d)).top] += 1
        except InvalidAnswer:
            invalid += 1
    valid = n - invalid
    freqs = counts / valid if valid else np.zeros(j)
    return Top1Distribution(freqs, valid, invalid)


__all__ = [
    "BiasProfile",
    "CachedExchange",
    "EndpointConfig",
    "RankerBackend",
    "RemoteRanker",
    "ResponseCache",
    "SimulatedRanker",
    "TokenBucket",
    "Top1Distribution",
    "canonical_matrix",
    "empirical_top1_distribution",
    "exchange_key",
    "named_profile",
    "simulated_rank",
]
