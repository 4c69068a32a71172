from __future__ import annotations

from stella.domain import CandidateSlate, Interaction, ItemRef, UserHistory
from stella.prompting import LabelScheme, PromptContext


def make_slate(j: int, truth_index: int | None = 0, prefix: str = "t") -> CandidateSlate:
    return CandidateSlate(tuple(ItemRef(f"{prefix}{i}", f"Title {prefix}{i}") for i in range(j)), truth_index)


def make_ctx(j: int = 5, truth_index: int = 0, scheme=LabelScheme.UPPERCASE_LETTERS) -> PromptContext:
    return PromptContext(("Inferno", "Joyland"), make_slate(j, truth_index), scheme)


def make_history(uid: str, n_pos: int, n_neg: int = 0) -> UserHistory:
    xs = [Interaction(ItemRef(f"{uid}-p{k}", f"Pos {uid} {k}"), float(k), "positive", 5.0) for k in range(n_pos)]
    xs += [Interaction(ItemRef(f"{uid}-n{k}", f"Neg {uid} {k}"), float(n_pos + k), "negative", 1.0)
           for k in range(n_neg)]
    return UserHistory.from_unsorted(uid, xs)


def make_catalog(n: int) -> list[ItemRef]:
    return [ItemRef(f"c{k}", f"Catalog item {k}") for k in range(n)]
