"""Prompt rendering and structured-answer decoding.

Prompt grammar, format version 1::

    <instruction> Please list the ranked recommendations. The output should be
    in the format of json, e.g. {"rank_order":[<label>, ...]}.
    <blank>
    Input: Here is the <history word> history of a user: <title>, <title>.
    The <plural> on the candidate list are:
    <blank>
    (<label>) <title>,          one line per candidate, blank line between,
    ...                         the last one ends with "." instead of ","
    <blank>
    Output:

The first paragraph is a single line. With the ``none`` scheme candidate
lines carry no ``(<label>) `` prefix and answers are matched by title.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from typing import Sequence

from .domain import CandidateSlate, Ranking
from .errors import DuplicateLabel, MalformedOutput, SchemeOverflow, UnknownLabel, WrongLength

PROMPT_FORMAT_VERSION = 1
RANK_KEY = "rank_order"

GREEK = "αβγδεζηθικλμνξοπρστυφχψω"
_ROMAN = [
    (1000, "M"), (900, "CM"), (500, "D"), (400, "CD"), (100, "C"), (90, "XC"),
    (50, "L"), (40, "XL"), (10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I"),
]


class LabelScheme(str, enum.Enum):
    UPPERCASE_LETTERS = "uppercase_letters"
    ARABIC_NUMERALS = "arabic_numerals"
    LOWERCASE_LETTERS = "lowercase_letters"
    GREEK_LETTERS = "greek_letters"
    ROMAN_NUMERALS = "roman_numerals"
    PLAIN_LIST = "plain_list"
    NONE = "none"


def roman(n: int) -> str:
    out = []
    for value, sym in _ROMAN:
        count, n = divmod(n, value)
        out.append(sym * count)
    return "".join(out)


_CAPACITY = {
    LabelScheme.UPPERCASE_LETTERS: 26,
    LabelScheme.LOWERCASE_LETTERS: 26,
    LabelScheme.GREEK_LETTERS: len(GREEK),
    LabelScheme.ROMAN_NUMERALS: 3999,
}


def labels_for(scheme: LabelScheme | str, j: int) -> list[str]:
    scheme = LabelScheme(scheme)
    if j < 1:
        raise ValueError("need at least one label")
    cap = _CAPACITY.get(scheme)
    if cap is not None and j > cap:
        raise SchemeOverflow(f"{scheme.value} has only {cap} labels, {j} requested")
    if scheme is LabelScheme.UPPERCASE_LETTERS:
        return [chr(ord("A") + i) for i in range(j)]
    if scheme is LabelScheme.LOWERCASE_LETTERS:
        return [chr(ord("a") + i) for i in range(j)]
    if scheme is LabelScheme.GREEK_LETTERS:
        return list(GREEK[:j])
    if scheme is LabelScheme.ROMAN_NUMERALS:
        return [roman(i + 1) for i in range(j)]
    if scheme is LabelScheme.ARABIC_NUMERALS:
        return [str(i + 1) for i in range(j)]
    if scheme is LabelScheme.PLAIN_LIST:
        return [f"Candidate {i + 1}" for i in range(j)]
    return [""] * j


@dataclass(frozen=True)
class PromptDomain:
    noun: str = "book"
    plural: str = "books"
    history_word: str = "reading"


DOMAINS = {
    "book": PromptDomain(),
    "movie": PromptDomain("movie", "movies", "viewing"),
    "music": PromptDomain("music", "albums", "listening"),
    "news": PromptDomain("news", "news articles", "reading"),
}


@dataclass(frozen=True)
class PromptContext:
    history_titles: tuple[str, ...]
    slate: CandidateSlate
    scheme: LabelScheme = LabelScheme.UPPERCASE_LETTERS
    domain: PromptDomain = PromptDomain()
    task_description: str | None = None

    def __post_init__(self):
        if not isinstance(self.history_titles, tuple):
            object.__setattr__(self, "history_titles", tuple(self.history_titles))
        object.__setattr__(self, "scheme", LabelScheme(self.scheme))

    @property
    def instruction(self) -> str:
        return self.task_description or f"You are a {self.domain.noun} recommendation system now."

    def with_slate(self, slate: CandidateSlate) -> "PromptContext":
        return PromptContext(self.history_titles, slate, self.scheme, self.domain, self.task_description)


def render_prompt(ctx: PromptContext) -> str:
    items = ctx.slate.items
    labels = labels_for(ctx.scheme, len(items))
    unlabeled = ctx.scheme is LabelScheme.NONE
    example = [it.title for it in items] if unlabeled else labels
    example_json = "[" + ", ".join(json.dumps(x, ensure_ascii=False) for x in example) + "]"
    header = (
        f"{ctx.instruction} Please list the ranked recommendations. "
        f'The output should be in the format of json, e.g. {{"{RANK_KEY}":{example_json}}}.'
    )
    history = (
        f"Input: Here is the {ctx.domain.history_word} history of a user: "
        f"{', '.join(ctx.history_titles)}.\n"
        f"The {ctx.domain.plural} on the candidate list are:"
    )
    lines = []
    for pos, (label, item) in enumerate(zip(labels, items)):
        end = "." if pos == len(items) - 1 else ","
        prefix = "" if unlabeled else f"({label}) "
        lines.append(f"{prefix}{item.title}{end}")
    return "\n\n".join([header, history, *lines, "Output:"])


_WS = re.compile(r"\s+")


def _norm_title(text: str) -> str:
    return _WS.sub(" ", text).strip().casefold()


def _norm_label(entry: str) -> str:
    entry = entry.strip()
    if len(entry) >= 2 and entry[0] == "(" and entry[-1] == ")":
        entry = entry[1:-1].strip()
    return entry


def extract_rank_order(raw: str) -> list:
    """First JSON object in ``raw`` that has a ``rank_order`` key."""
    decoder = json.JSONDecoder()
    idx = raw.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(raw, idx)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict) and RANK_KEY in obj:
            value = obj[RANK_KEY]
            if not isinstance(value, list):
                raise MalformedOutput(f"{RANK_KEY} is not a list", raw)
            return value
        idx = raw.find("{", idx + 1)
    raise MalformedOutput(f"no object with key {RANK_KEY!r} found", raw)


def decode_output(raw: str, slate: CandidateSlate, scheme: LabelScheme | str) -> Ranking:
    """Map a model answer onto slate positions, enforcing legality.

    Raises a subclass of :class:`~stella.errors.InvalidAnswer` for anything
    that is not a full, duplicate-free ranking of the slate.
    """
    scheme = LabelScheme(scheme)
    entries = extract_rank_order(raw)
    j = len(slate)

    if scheme is LabelScheme.NONE:
        lookup: dict[str, int] = {}
        for pos, item in enumerate(slate.items):
            key = _norm_title(item.title)
            if key in lookup:
                raise MalformedOutput(f"ambiguous title {item.title!r} in slate", raw)
            lookup[key] = pos
        normalize = _norm_title
    else:
        lookup = {label: pos for pos, label in enumerate(labels_for(scheme, j))}
        normalize = _norm_label

    order: list[int] = []
    for entry in entries:
        if isinstance(entry, bool) or not isinstance(entry, (str, int)):
            raise MalformedOutput(f"unsupported entry {entry!r}", raw)
        key = normalize(str(entry))
        if key not in lookup:
            raise UnknownLabel(f"unknown label {entry!r}", raw)
        order.append(lookup[key])
    if len(set(order)) != len(order):
        raise DuplicateLabel("answer repeats a candidate", raw)
    if len(order) != j:
        raise WrongLength(f"answer ranks {len(order)} of {j} candidates", raw)
    return Ranking(tuple(order))


def render_answer(ranking: Ranking, slate: CandidateSlate, scheme: LabelScheme | str) -> str:
    """Serialize a ranking the way a well-behaved model would answer."""
    scheme = LabelScheme(scheme)
    if scheme is LabelScheme.NONE:
        names: Sequence[str] = [it.title for it in slate.items]
    else:
        names = labels_for(scheme, len(slate))
    return json.dumps({RANK_KEY: [names[p] for p in ranking.order]}, ensure_ascii=False)
