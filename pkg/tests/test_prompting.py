from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from helpers import make_slate
from stella.domain import CandidateSlate, ItemRef, Ranking
from stella.errors import DuplicateLabel, InvalidAnswer, MalformedOutput, SchemeOverflow, UnknownLabel, WrongLength
from stella.prompting import (
    DOMAINS,
    GREEK,
    LabelScheme,
    PromptContext,
    decode_output,
    labels_for,
    render_answer,
    render_prompt,
    roman,
)

GOLDEN = Path(__file__).parent / "golden" / "book_prompt.txt"

HISTORY = (
    "Inferno",
    "An Abundance of katherines",
    "The Son",
    "Joyland",
    "The Guns at Last Light: The War in Western Europe, 1944-1945 (Liberation Trilogy)",
)
CANDIDATES = (
    "No Easy Day: The Autobiography of a Navy Seal: The Firsthand Account of the Mission That Killed Osama Bin Laden",
    "The Execution of Noa P. Singleton: A Novel",
    "Allegiant",
    "The Geography of Bliss: One Grump's Search for the Happiest Places in the World",
    "Billy Lynn's Long HalTableime Walk: A Novel",
)


def golden_context() -> PromptContext:
    slate = CandidateSlate(tuple(ItemRef(f"b{i}", t) for i, t in enumerate(CANDIDATES)), truth_index=2)
    return PromptContext(HISTORY, slate, LabelScheme.UPPERCASE_LETTERS, DOMAINS["book"])


def test_golden_book_prompt_bytes():
    assert render_prompt(golden_context()) == GOLDEN.read_text(encoding="utf-8")


def test_render_is_deterministic():
    assert render_prompt(golden_context()) == render_prompt(golden_context())


def test_unlabeled_candidates():
    ctx = PromptContext(("A book",), make_slate(3), LabelScheme.NONE)
    text = render_prompt(ctx)
    assert "\n\nTitle t0,\n\nTitle t1,\n\nTitle t2.\n\n" in text
    assert "(" not in text.split("candidate list are:")[1]


def test_arabic_numerals_two_candidates():
    ctx = PromptContext(("Only",), make_slate(2), LabelScheme.ARABIC_NUMERALS)
    text = render_prompt(ctx)
    assert "(1) Title t0,\n\n(2) Title t1.\n\nOutput:" in text
    assert '{"rank_order":["1", "2"]}' in text


def test_domain_words():
    ctx = PromptContext(("Heat",), make_slate(2), domain=DOMAINS["movie"])
    text = render_prompt(ctx)
    assert text.startswith("You are a movie recommendation system now.")
    assert "viewing history" in text and "The movies on the candidate list are:" in text


def test_labels():
    assert labels_for(LabelScheme.UPPERCASE_LETTERS, 3) == ["A", "B", "C"]
    assert labels_for(LabelScheme.PLAIN_LIST, 2) == ["Candidate 1", "Candidate 2"]
    assert labels_for(LabelScheme.ROMAN_NUMERALS, 4) == ["I", "II", "III", "IV"]
    assert labels_for(LabelScheme.NONE, 2) == ["", ""]
    assert len(GREEK) == 24 and labels_for("greek_letters", 3) == ["α", "β", "γ"]
    assert roman(1994) == "MCMXCIV" and roman(3999) == "MMMCMXCIX"
    with pytest.raises(SchemeOverflow):
        labels_for(LabelScheme.UPPERCASE_LETTERS, 27)
    with pytest.raises(SchemeOverflow):
        labels_for(LabelScheme.GREEK_LETTERS, 25)
    assert len(set(labels_for(LabelScheme.ROMAN_NUMERALS, 3999))) == 3999


def test_decode_examples():
    s = make_slate(3)
    assert decode_output('{"rank_order":["B","A","C"]}', s, "uppercase_letters").order == (1, 0, 2)
    with pytest.raises(DuplicateLabel):
        decode_output('{"rank_order":["A","A","B"]}', s, "uppercase_letters")
    got = decode_output('noise before {"rank_order":["C","B","A"]} noise after', s, "uppercase_letters")
    assert got.order == (2, 1, 0)


def test_decode_errors_carry_raw_text():
    s = make_slate(3)
    for raw, exc in [
        ("no json here", MalformedOutput),
        ('{"rank_order": "A"}', MalformedOutput),
        ('{"rank_order":["A","B","Q"]}', UnknownLabel),
        ('{"rank_order":["A","B"]}', WrongLength),
        ('{"rank_order":["A","B","C","A"]}', DuplicateLabel),
    ]:
        with pytest.raises(exc) as info:
            decode_output(raw, s, LabelScheme.UPPERCASE_LETTERS)
        assert info.value.raw == raw


def test_decode_title_matching():
    s = make_slate(3)
    raw = json.dumps({"rank_order": ["title  T2", "Title t0", " TITLE T1 "]})
    assert decode_output(raw, s, LabelScheme.NONE).order == (2, 0, 1)
    twins = CandidateSlate((ItemRef("a", "Dune"), ItemRef("b", "dune")))
    with pytest.raises(MalformedOutput):
        decode_output('{"rank_order":["Dune","dune"]}', twins, LabelScheme.NONE)


def test_decode_accepts_parenthesized_and_integer_labels():
    s = make_slate(3)
    assert decode_output('{"rank_order":["(B)", " A ", "C"]}', s, "uppercase_letters").order == (1, 0, 2)
    assert decode_output('{"rank_order":[3, 1, 2]}', s, "arabic_numerals").order == (2, 0, 1)


# -- round-trip fuzz ------------------------------------------------------------------

_WRAPPERS = [
    lambda t: t,
    lambda t: "Sure! Here is the ranking:\n" + t,
    lambda t: t + "\nLet me know if you need more.",
    lambda t: "```json\n" + t + "\n```",
    lambda t: '{"note": 1} then ' + t,
    lambda t: "prefix { broken " + t,
]


def _fuzz_case(rnd: random.Random):
    """Returns (raw, slate, scheme, expected ranking or None for must-reject)."""
    scheme = rnd.choice(list(LabelScheme))
    j = rnd.randint(2, 12)
    slate = make_slate(j, None, prefix=rnd.choice("xyz"))
    order = list(range(j))
    rnd.shuffle(order)
    names = ([it.title for it in slate.items] if scheme is LabelScheme.NONE else labels_for(scheme, j))
    entries: list = [names[p] for p in order]
    expected: Ranking | None = Ranking(tuple(order))

    kind = rnd.random()
    if kind < 0.5:
        if scheme is LabelScheme.NONE:
            entries = [e.upper() if rnd.random() < 0.3 else e for e in entries]
        elif scheme is LabelScheme.ARABIC_NUMERALS and rnd.random() < 0.5:
            entries = [int(e) for e in entries]
        elif rnd.random() < 0.3:
            entries = [f"({e})" for e in entries]
    elif kind < 0.62:
        del entries[rnd.randrange(j)]
        expected = None
    elif kind < 0.74:
        a, b = rnd.sample(range(j), 2)
        entries[a] = entries[b]
        expected = None
    elif kind < 0.86:
        entries[rnd.randrange(j)] = "Zebra-9"
        expected = None
    elif kind < 0.93:
        entries.append(entries[0])
        expected = None
    else:
        raw = rnd.choice(["", "I cannot rank these.", '{"rank_order": null}', '{"order": ["A"]}', "[1, 2]"])
        return raw, slate, scheme, None
    raw = json.dumps({"rank_order": entries}, ensure_ascii=rnd.random() < 0.5)
    return rnd.choice(_WRAPPERS)(raw), slate, scheme, expected


def test_decode_round_trip_fuzz():
    rnd = random.Random(20240607)
    false_accepts = false_rejects = mismatches = 0
    for _ in range(10_000):
        raw, slate, scheme, expected = _fuzz_case(rnd)
        try:
            got = decode_output(raw, slate, scheme)
        except InvalidAnswer:
            false_rejects += expected is not None
            continue
        if expected is None:
            false_accepts += 1
        elif got != expected:
            mismatches += 1
    assert (false_accepts, false_rejects, mismatches) == (0, 0, 0)


def test_render_answer_round_trip():
    s = make_slate(5)
    for scheme in LabelScheme:
        r = Ranking((3, 1, 4, 0, 2))
        assert decode_output(render_answer(r, s, scheme), s, scheme) == r
