"""Dataset ingestion (JSON Lines) and the bundled synthetic toy dataset.

One interaction per line::

    {"user_id": "u1", "item_id": "b17", "title": "Joyland", "rating": 4, "timestamp": 3}

``label`` ("positive"/"negative", or a boolean) overrides the rating when
present. An optional first line ``{"format_version": 1}`` declares the
format.
"""

from __future__ import annotations

import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..domain import Dataset, Interaction, ItemRef, UserHistory, label_for_rating
from ..errors import SchemaError, TooManyMalformed

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAX_MALFORMED = 0.01
TOY_NAME = "toy"


@dataclass(frozen=True)
class IngestReport:
    lines: int
    malformed: int
    users: int
    items: int
    interactions: int
    positives: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _label(rec: dict, threshold: float) -> str:
    label = rec.get("label")
    if label is not None:
        if isinstance(label, bool):
            return "positive" if label else "negative"
        if isinstance(label, (int, float)):
            return "positive" if label > 0 else "negative"
        if label in ("positive", "negative"):
            return label
        raise ValueError(f"bad label {label!r}")
    rating = rec.get("rating")
    if rating is None:
        raise ValueError("line has neither rating nor label")
    return label_for_rating(float(rating), threshold)


def read_dataset(path: str | Path, rating_threshold: float = 3, name: str | None = None) -> tuple[Dataset, IngestReport]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    per_user: dict[str, list[Interaction]] = defaultdict(list)
    items: dict[str, ItemRef] = {}
    lines = malformed = 0
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("not an object")
                if "user_id" not in rec and "format_version" in rec:
                    if rec["format_version"] != FORMAT_VERSION:
                        raise SchemaError(f"{path}: unsupported format_version {rec['format_version']}")
                    continue
                uid, item_id = str(rec["user_id"]), str(rec["item_id"])
                fresh = ItemRef(item_id, str(rec["title"]))
                rating = rec.get("rating")
                rating = None if rating is None else float(rating)
                ts, label = float(rec["timestamp"]), _label(rec, rating_threshold)
            except SchemaError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                malformed += 1
                log.debug("%s:%d malformed: %s", path, n + 1, exc)
                continue
            # first title seen wins for a repeated item id
            item = items.setdefault(item_id, fresh)
            per_user[uid].append(Interaction(item, ts, label, rating))
            lines += 1
    if lines == 0 and malformed == 0:
        raise SchemaError(f"{path}: no interactions")
    if malformed / max(1, lines + malformed) > MAX_MALFORMED:
        raise TooManyMalformed(f"{path}: {malformed} of {lines + malformed} lines malformed")
    if malformed:
        log.warning("%s: skipped %d malformed lines", path, malformed)
    users = {uid: UserHistory.from_unsorted(uid, xs) for uid, xs in per_user.items()}
    dataset = Dataset.from_histories(name or path.stem, users)
    report = IngestReport(
        lines + malformed, malformed, len(users), len(items), lines,
        sum(len(h.positives) for h in users.values()),
    )
    return dataset, report


def ingest(path: str | Path, rating_threshold: float = 3) -> dict[str, UserHistory]:
    """Histories keyed by user id, each sorted by timestamp."""
    return read_dataset(path, rating_threshold)[0].users


# -- synthetic toy data ---------------------------------------------------------

_ADJ = ["Silent", "Hidden", "Last", "Broken", "Golden", "Distant", "Secret", "Burning", "Quiet",
        "Lost", "Crimson", "Winter", "Endless", "Wild", "Sunken", "Hollow"]
_NOUN = ["Harbor", "Garden", "Kingdom", "River", "Letter", "Mountain", "Orchard", "Lantern",
         "Empire", "Voyage", "Island", "Library", "Frontier", "Bridge", "Forest", "Mirror"]
_TAIL = ["", ": A Novel", " (Book One)", ": A Memoir", " Revisited", ": Stories"]


def toy_records(n_users: int = 50, seed: int = 7, n_items: int = 240,
                positives: int = 8, negatives: tuple[int, int] = (2, 5)) -> list[dict]:
    """Deterministic synthetic interaction log."""
    rnd = random.Random(seed)
    combos = [(a, b, t) for t in _TAIL for a in _ADJ for b in _NOUN]
    rnd.shuffle(combos)
    catalog = [(f"i{k:04d}", f"The {a} {b}{t}") for k, (a, b, t) in enumerate(combos[:n_items])]
    out = []
    for u in range(n_users):
        n_neg = rnd.randint(*negatives)
        picks = rnd.sample(catalog, positives + n_neg)
        ratings = [rnd.choice([4, 5]) for _ in range(positives)] + [rnd.choice([1, 2, 3]) for _ in range(n_neg)]
        rnd.shuffle(ratings)
        for ts, ((iid, title), rating) in enumerate(zip(picks, ratings)):
            out.append({"user_id": f"u{u:05d}", "item_id": iid, "title": title,
                        "rating": rating, "timestamp": ts})
    return out


def write_toy(path: str | Path, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"format_version": FORMAT_VERSION})]
    lines += [json.dumps(r, sort_keys=True) for r in toy_records(**kwargs)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def synthetic_dataset(n_users: int, seed: int = 7, name: str = "synthetic", **kwargs) -> Dataset:
    """In-memory equivalent of ingesting :func:`toy_records` output."""
    per_user: dict[str, list[Interaction]] = defaultdict(list)
    items: dict[str, ItemRef] = {}
    for r in toy_records(n_users=n_users, seed=seed, **kwargs):
        item = items.setdefault(r["item_id"], ItemRef(r["item_id"], r["title"]))
        per_user[r["user_id"]].append(Interaction(item, float(r["timestamp"]),
                                                  label_for_rating(r["rating"]), float(r["rating"])))
    users = {uid: UserHistory.from_unsorted(uid, xs) for uid, xs in per_user.items()}
    return Dataset.from_histories(name, users)


def toy_path() -> Path:
    return Path(str(resources.files("stella") / "data" / "toy_books.jsonl"))


def load_dataset(source: str, rating_threshold: float = 3, name: str | None = None) -> tuple[Dataset, IngestReport]:
    """``"toy"`` selects the bundled dataset; anything else is a file path."""
    if source == TOY_NAME:
        return read_dataset(toy_path(), rating_threshold, name or TOY_NAME)
    return read_dataset(source, rating_threshold, name)
