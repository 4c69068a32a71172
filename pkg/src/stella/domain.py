"""Core value types: items, histories, candidate slates, rankings.

Positions are 0-based everywhere. Label schemes such as A/B/C only exist at
the prompt boundary (see :mod:`stella.prompting`).
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import InvalidRanking, InvalidSlate, MissingTruth, SlateTooLarge

MIN_SLATE = 2
MAX_SLATE = 26
MAX_ENUMERABLE = 8


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from arbitrary hashable parts.

    Equal parts give equal seeds in every process, which keeps parallel
    execution order-independent.
    """
    digest = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass(frozen=True)
class ItemRef:
    id: str
    title: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("item id must be non-empty")
        if not self.title or not self.title.strip():
            raise ValueError(f"item {self.id!r} has an empty title")


@dataclass(frozen=True)
class Interaction:
    item: ItemRef
    timestamp: float
    label: Literal["positive", "negative"]
    rating: float | None = None

    @property
    def positive(self) -> bool:
        return self.label == "positive"


def label_for_rating(rating: float, threshold: float = 3) -> str:
    return "positive" if rating > threshold else "negative"


@dataclass(frozen=True)
class UserHistory:
    user_id: str
    interactions: tuple[Interaction, ...]

    @classmethod
    def from_unsorted(cls, user_id: str, interactions: Sequence[Interaction]) -> "UserHistory":
        # sorted() is stable, so timestamp ties keep input order
        return cls(user_id, tuple(sorted(interactions, key=lambda x: x.timestamp)))

    def __post_init__(self):
        ts = [x.timestamp for x in self.interactions]
        if any(a > b for a, b in zip(ts, ts[1:])):
            raise ValueError(f"interactions of user {self.user_id!r} are not time-ordered")

    @property
    def positives(self) -> list[ItemRef]:
        return [x.item for x in self.interactions if x.positive]


@dataclass(frozen=True)
class CandidateSlate:
    items: tuple[ItemRef, ...]
    truth_index: int | None = None
    permutation_id: int | None = None

    def __post_init__(self):
        if not isinstance(self.items, tuple):
            object.__setattr__(self, "items", tuple(self.items))
        j = len(self.items)
        if not MIN_SLATE <= j <= MAX_SLATE:
            raise InvalidSlate(f"slate size {j} outside [{MIN_SLATE}, {MAX_SLATE}]")
        ids = [it.id for it in self.items]
        if len(set(ids)) != j:
            raise InvalidSlate(f"duplicate item ids in slate: {ids}")
        if self.truth_index is not None and not 0 <= self.truth_index < j:
            raise InvalidSlate(f"truth_index {self.truth_index} outside [0, {j})")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def truth(self) -> ItemRef:
        if self.truth_index is None:
            raise MissingTruth("slate has no ground-truth item")
        return self.items[self.truth_index]

    def arranged(self, order: Sequence[int], permutation_id: int | None = None) -> "CandidateSlate":
        """New slate whose position ``p`` holds ``self.items[order[p]]``."""
        truth = None if self.truth_index is None else list(order).index(self.truth_index)
        return CandidateSlate(tuple(self.items[i] for i in order), truth, permutation_id)


@dataclass(frozen=True)
class Ranking:
    order: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.order, tuple):
            object.__setattr__(self, "order", tuple(int(x) for x in self.order))
        j = len(self.order)
        if sorted(self.order) != list(range(j)):
            raise InvalidRanking(f"ranking {self.order} is not a permutation of 0..{j - 1}")

    def __len__(self) -> int:
        return len(self.order)

    @property
    def top(self) -> int:
        return self.order[0]

    def remap(self, mapping: Sequence[int]) -> "Ranking":
        """Translate positions through ``mapping`` (position -> new index)."""
        return Ranking(tuple(mapping[p] for p in self.order))


@dataclass(frozen=True)
class EvalRecord:
    user_id: str
    slate: CandidateSlate
    predicted: Ranking
    truth_index: int
    score: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "score", 1.0 if self.predicted.top == self.truth_index else 0.0)


def permutations_of(slate: CandidateSlate) -> list[CandidateSlate]:
    """All ``j!`` arrangements, in lexicographic order of position indices."""
    j = len(slate)
    if j > MAX_ENUMERABLE:
        raise SlateTooLarge(f"refusing to enumerate {math.factorial(j)} arrangements (j={j})")
    return [slate.arranged(p, rank) for rank, p in enumerate(itertools.permutations(range(j)))]


def truth_position_variants(slate: CandidateSlate) -> list[CandidateSlate]:
    """One slate per truth position; negatives keep their relative order."""
    if slate.truth_index is None:
        raise MissingTruth("truth_position_variants needs a slate with truth_index")
    g = slate.truth_index
    negatives = [i for i in range(len(slate)) if i != g]
    out = []
    for pos in range(len(slate)):
        order = negatives[:pos] + [g] + negatives[pos:]
        out.append(slate.arranged(order, pos))
    return out


def shuffle_order(j: int, seed: int) -> np.ndarray:
    """Seeded uniform permutation of ``range(j)``."""
    return np.random.default_rng(seed).permutation(j)


def shuffle_slate(slate: CandidateSlate, seed: int) -> CandidateSlate:
    return slate.arranged(shuffle_order(len(slate), seed).tolist())


def negative_pool(catalog: Sequence[ItemRef], history: UserHistory) -> list[ItemRef]:
    """Catalog items the user never interacted with positively, in catalog order."""
    liked = {it.id for it in history.positives}
    return [it for it in catalog if it.id not in liked]


@dataclass(frozen=True)
class Dataset:
    name: str
    users: dict[str, UserHistory]
    catalog: tuple[ItemRef, ...]

    @classmethod
    def from_histories(cls, name: str, users: dict[str, UserHistory]) -> "Dataset":
        seen: dict[str, ItemRef] = {}
        for uid in sorted(users):
            for x in users[uid].interactions:
                seen.setdefault(x.item.id, x.item)
        return cls(name, dict(users), tuple(seen.values()))
