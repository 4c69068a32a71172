"""Synthetic position-biased ranker used as a verification oracle.

The simulator only biases the top-1 slot: with the preferred item at
position ``i`` it draws the first position from row ``i`` of a planted
transition matrix and fills the rest by ``tail_rule``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping

import numpy as np

from ..domain import CandidateSlate, Ranking
from ..errors import DimensionMismatch, InvalidAnswer, MissingTruth
from ..probing import TransitionMatrix
from ..prompting import PromptContext


@dataclass(frozen=True, eq=False)
class BiasProfile:
    planted: TransitionMatrix
    tail_rule: Literal["uniform_random", "position_order"] = "uniform_random"
    preference: Callable[[CandidateSlate], int] | None = None
    invalid_rate: float = 0.0
    name: str = "custom"
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.tail_rule not in ("uniform_random", "position_order"):
            raise ValueError(f"unknown tail rule {self.tail_rule!r}")
        if not 0.0 <= self.invalid_rate < 1.0:
            raise ValueError("invalid_rate must lie in [0, 1)")
        object.__setattr__(self, "_cum", np.cumsum(self.planted.entries, axis=1))

    @property
    def dim(self) -> int:
        return self.planted.dim

    @property
    def digest(self) -> str:
        h = hashlib.sha256(self.planted.entries.tobytes())
        h.update(f"{self.tail_rule}|{self.invalid_rate}".encode())
        return h.hexdigest()[:12]


def simulated_rank(ctx: PromptContext, profile: BiasProfile, seed: int) -> Ranking:
    slate = ctx.slate
    j = len(slate)
    if profile.dim != j:
        raise DimensionMismatch(f"profile is {profile.dim}x{profile.dim} but slate has {j} items")
    if profile.preference is not None:
        i = profile.preference(slate)
    elif slate.truth_index is None:
        raise MissingTruth("simulator needs a truth item or a preference rule")
    else:
        i = slate.truth_index
    rng = np.random.default_rng(seed)
    if profile.invalid_rate and rng.random() < profile.invalid_rate:
        raise InvalidAnswer("simulated invalid answer", "<simulated>")
    top = min(int(np.searchsorted(profile._cum[i], rng.random(), side="right")), j - 1)
    rest = [q for q in range(j) if q != top]
    if profile.tail_rule == "uniform_random":
        rest = rng.permutation(rest).tolist()
    return Ranking((top, *rest))


# -- profile families ------------------------------------------------------

def canonical_matrix(j: int = 5, diag: float = 0.55, last_diag: float = 0.04) -> np.ndarray:
    """0.55 on the diagonal except a near-blind last row (0.04)."""
    T = np.full((j, j), (1.0 - diag) / (j - 1))
    np.fill_diagonal(T, diag)
    T[-1, :] = (1.0 - last_diag) / (j - 1)
    T[-1, -1] = last_diag
    return T


def degrading_diagonal(j: int) -> float:
    """Top-1 accuracy that decays toward chance as the slate grows."""
    return 1.0 / j + (1.0 - 1.0 / j) * 0.7 * 0.8 ** (j - 2)


def degrading_matrix(j: int) -> np.ndarray:
    d = degrading_diagonal(j)
    T = np.full((j, j), (1.0 - d) / (j - 1))
    np.fill_diagonal(T, d)
    return T


def _profile(T: np.ndarray, name: str, tail: str = "uniform_random") -> BiasProfile:
    return BiasProfile(TransitionMatrix(T, smoothing=False, backend=name), tail, name=name)


PROFILES: dict[str, Callable[[int], BiasProfile]] = {
    "canonical": lambda j: _profile(canonical_matrix(j), "canonical"),
    "identity": lambda j: _profile(np.eye(j), "identity", "position_order"),
    "uniform": lambda j: _profile(np.full((j, j), 1.0 / j), "uniform"),
    "degrading": lambda j: _profile(degrading_matrix(j), "degrading"),
}


def named_profile(name: str, j: int) -> BiasProfile:
    try:
        return PROFILES[name](j)
    except KeyError:
        raise ValueError(f"unknown bias profile {name!r}; choose from {sorted(PROFILES)}") from None


class SimulatedRanker:
    """Backend wrapping a profile, or a family of profiles keyed by slate size."""

    def __init__(self, profile: BiasProfile | str | Mapping[int, BiasProfile]):
        self._fixed: BiasProfile | None = None
        self._family: str | None = None
        self._by_size: dict[int, BiasProfile] = {}
        if isinstance(profile, BiasProfile):
            self._fixed = profile
        elif isinstance(profile, str):
            named_profile(profile, 2)  # validate the name early
            self._family = profile
        else:
            self._by_size = dict(profile)

    @property
    def identity(self) -> str:
        if self._fixed is not None:
            return f"simulated:{self._fixed.name}:{self._fixed.digest}"
        if self._family is not None:
            return f"simulated:{self._family}"
        return "simulated:" + ",".join(f"{j}={p.digest}" for j, p in sorted(self._by_size.items()))

    def profile_for(self, j: int) -> BiasProfile:
        if self._fixed is not None:
            return self._fixed
        if self._family is not None:
            if j not in self._by_size:
                self._by_size[j] = named_profile(self._family, j)
            return self._by_size[j]
        try:
            return self._by_size[j]
        except KeyError:
            raise DimensionMismatch(f"no profile for slate size {j}") from None

    def rank(self, ctx: PromptContext, seed: int) -> Ranking:
        return simulated_rank(ctx, self.profile_for(len(ctx.slate)), seed)
