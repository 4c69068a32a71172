"""Append-only JSON Lines cache of request/response exchanges."""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


def exchange_key(identity: str, prompt: str, temperature: float, attempt: int) -> str:
    h = hashlib.sha256()
    for part in (identity, prompt, repr(float(temperature)), str(int(attempt))):
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


@dataclass(frozen=True)
class CachedExchange:
    key_digest: str
    request: dict
    response: dict
    created_at: str
    format_version: int = FORMAT_VERSION


class ResponseCache:
    """Thread-safe cache; writes are serialized, reads are lock-free."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, CachedExchange] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        data = self.path.read_bytes()
        keep = 0
        unterminated = False
        for raw in data.splitlines(keepends=True):
            nxt = keep + len(raw)
            if raw.strip():
                try:
                    ex = CachedExchange(**json.loads(raw))
                except (ValueError, TypeError) as exc:
                    if nxt >= len(data):
                        log.warning("%s: truncating corrupt trailing line (%s)", self.path, exc)
                        break
                    log.warning("%s: skipping corrupt line at byte %d (%s)", self.path, keep, exc)
                else:
                    self._entries[ex.key_digest] = ex
                    unterminated = not raw.endswith(b"\n")
            keep = nxt
        if keep < len(data):
            with open(self.path, "r+b") as fh:
                fh.truncate(keep)
        elif unterminated:
            with open(self.path, "ab") as fh:
                fh.write(b"\n")

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, key: str) -> CachedExchange | None:
        return self._entries.get(key)

    def put(self, key: str, request: dict, response: dict) -> CachedExchange:
        ex = CachedExchange(key, request, response, datetime.now(timezone.utc).isoformat())
        line = json.dumps(asdict(ex), sort_keys=True, ensure_ascii=False) + "\n"
        with self._lock:
            if key in self._entries:
                return self._entries[key]
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
            self._entries[key] = ex
        return ex
