"""Chat-completions backend with retry, rate limiting and a response cache."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import httpx

from ..domain import Ranking
from ..errors import ConfigError, InvalidAnswer, RateLimited, TransportError
from ..prompting import PromptContext, decode_output, render_prompt
from .cache import ResponseCache, exchange_key

log = logging.getLogger(__name__)

API_KEY_ENV = "STELLA_API_KEY"
BASE_URL_ENV = "STELLA_BASE_URL"
SYSTEM_PROMPT = "You are a helpful recommendation assistant."


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.7
    timeout: float = 60.0
    max_tries: int = 5
    backoff: float = 1.0
    answer_attempts: int = 3
    requests_per_minute: float | None = None
    max_in_flight: int = 4
    system_prompt: str = SYSTEM_PROMPT


class TokenBucket:
    """Blocking token bucket refilled at ``rate_per_minute``; burst of one minute's quota."""

    def __init__(self, rate_per_minute: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate_per_minute <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_per_minute / 60.0
        self.capacity = max(1.0, rate_per_minute)
        self.tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self._sleep(wait)


class RemoteRanker:
    def __init__(
        self,
        config: EndpointConfig = EndpointConfig(),
        cache: ResponseCache | str | Path | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        api_key: str | None = None,
    ):
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "").strip()
        if not key:
            raise ConfigError(f"remote backend needs an API key: export {API_KEY_ENV}=<key>")
        base_url = os.environ.get(BASE_URL_ENV, "").strip() or config.base_url
        self.config = config
        self.base_url = base_url.rstrip("/")
        if isinstance(cache, (str, Path)):
            cache = ResponseCache(cache)
        self.cache = cache
        self._sleep = sleep
        self._client = httpx.Client(
            base_url=self.base_url,
            timeout=config.timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {key}"},
        )
        self._gate = threading.BoundedSemaphore(config.max_in_flight)
        self._bucket = TokenBucket(config.requests_per_minute, sleep=sleep) if config.requests_per_minute else None
        self.requests_sent = 0

    @property
    def identity(self) -> str:
        return f"remote:{self.config.model}@{self.base_url}"

    def close(self) -> None:
        self._client.close()

    def _post(self, payload: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.config.max_tries):
            if attempt:
                self._sleep(self.config.backoff * 2 ** (attempt - 1))
            if self._bucket is not None:
                self._bucket.acquire()
            with self._gate:
                self.requests_sent += 1
                try:
                    resp = self._client.post("/chat/completions", json=payload)
                except httpx.TransportError as exc:
                    last = TransportError(f"network error: {exc}")
                    log.warning("request failed (try %d/%d): %s", attempt + 1, self.config.max_tries, exc)
                    continue
            if resp.status_code == 429:
                last = RateLimited(f"HTTP 429 from {self.base_url}")
                log.warning("rate limited (try %d/%d)", attempt + 1, self.config.max_tries)
                continue
            if resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code} from {self.base_url}")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise TransportError(f"response is not JSON: {exc}") from exc
        assert last is not None
        raise last

    def complete(self, prompt: str, attempt: int = 0) -> str:
        """Assistant text for ``prompt``; served from the cache when possible."""
        cfg = self.config
        key = exchange_key(self.identity, prompt, cfg.temperature, attempt)
        hit = self.cache.get(key) if self.cache is not None else None
        if hit is not None:
            response = hit.response
        else:
            payload = {
                "model": cfg.model,
                "messages": [
                    {"role": "system", "content": cfg.system_prompt},
                    {"role": "user", "content": prompt},
                ],
                "temperature": cfg.temperature,
            }
            response = self._post(payload)
            if self.cache is not None:
                self.cache.put(key, payload, response)
        try:
            return response["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response shape: {exc!r}") from exc

    def rank(self, ctx: PromptContext, seed: int | None = None) -> Ranking:
        # seed is unused: answers vary through the attempt index instead
        prompt = render_prompt(ctx)
        raws = []
        for attempt in range(self.config.answer_attempts):
            text = self.complete(prompt, attempt)
            try:
                return decode_output(text, ctx.slate, ctx.scheme)
            except InvalidAnswer as exc:
                log.info("invalid answer (attempt %d): %s", attempt, exc)
                raws.append(text)
        raise InvalidAnswer(f"{len(raws)} consecutive invalid answers", raws)
