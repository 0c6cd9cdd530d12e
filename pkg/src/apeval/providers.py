"""Text-generation providers, the response cache, and deterministic mocks."""

from __future__ import annotations

import json
import logging
import os
import random
import re
import tempfile
import threading
import time
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

from .errors import AuthMissing, EmptyCompletion, OfflineCacheMiss, ProviderUnavailable
from .prompts import PromptSpec, TaskKind
from .textutil import canonical_json, derive_seed, sha256_hex, tokenize

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BACKOFF_S = (1.0, 2.0, 4.0)


class Transport(Protocol):
    network: bool

    def complete(self, prompt: PromptSpec, model: str, temperature: float | None) -> str: ...


@dataclass(frozen=True)
class ProviderHandle:
    provider_id: str
    endpoint: str
    model_name: str
    max_in_flight: int = 4
    temperature: float | None = 0.0
    transport: Transport | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @property
    def is_mock(self) -> bool:
        return self.endpoint.startswith("mock://")


@dataclass(frozen=True)
class GenerationRecord:
    request_hash: str
    provider_id: str
    prompt: PromptSpec
    output_text: str
    latency_ms: float
    retrieved_from_cache: bool


def api_key_env(provider_id: str) -> str:
    return "APEVAL_" + re.sub(r"[^A-Za-z0-9]", "_", provider_id).upper() + "_API_KEY"


def canonical_request(provider: ProviderHandle, prompt: PromptSpec) -> dict:
    return {
        "provider_id": provider.provider_id,
        "model_name": provider.model_name,
        "temperature": provider.temperature,
        "prompt": prompt.to_dict(),
    }


def request_hash(provider: ProviderHandle, prompt: PromptSpec) -> str:
    return sha256_hex(canonical_json(canonical_request(provider, prompt)))


# --- cache ---------------------------------------------------------------

class GenerationCache:
    """Content-addressed, write-once response store (one JSON file per key)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self.path_for(key)
        try:
            with path.open(encoding="utf-8") as fh:
                rec = json.load(fh)
        except FileNotFoundError:
            with self._lock:
                self.misses += 1
            return None
        with self._lock:
            self.hits += 1
        return rec

    def put(self, key: str, record: dict) -> None:
        path = self.path_for(key)
        if path.exists():
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(record, fh, ensure_ascii=False, sort_keys=True)
        os.replace(tmp, path)

    def reset_stats(self) -> None:
        with self._lock:
            self.hits = self.misses = 0


# --- HTTP transport ------------------------------------------------------

class HttpChatTransport:
    """Chat-completion style JSON exchange: system + user message in, one text out."""

    network = True

    def __init__(self, endpoint: str, api_key: str, timeout: float = 120.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    def complete(self, prompt: PromptSpec, model: str, temperature: float | None) -> str:
        import httpx

        body: dict = {
            "model": model,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_message()},
            ],
        }
        if temperature is not None:
            body["temperature"] = temperature
        try:
            resp = httpx.post(
                self.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            payload = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise ProviderUnavailable(f"{self.endpoint}: {exc}") from exc
        try:
            return payload["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnavailable(f"unexpected response shape from {self.endpoint}") from exc


def resolve_transport(provider: ProviderHandle) -> Transport:
    if provider.transport is not None:
        return provider.transport
    key = os.environ.get(api_key_env(provider.provider_id), "").strip()
    if not key:
        raise AuthMissing(f"set {api_key_env(provider.provider_id)} for {provider.provider_id!r}")
    return HttpChatTransport(provider.endpoint, key)


_semaphores: dict[str, threading.BoundedSemaphore] = {}
_sem_lock = threading.Lock()


def _slot(provider: ProviderHandle) -> threading.BoundedSemaphore:
    with _sem_lock:
        sem = _semaphores.get(provider.provider_id)
        if sem is None:
            sem = _semaphores[provider.provider_id] = threading.BoundedSemaphore(
                provider.max_in_flight
            )
        return sem


def generate(
    provider: ProviderHandle,
    prompt: PromptSpec,
    cache: GenerationCache,
    offline: bool = False,
    sleep: Callable[[float], None] = time.sleep,
) -> GenerationRecord:
    """Return the provider's completion for ``prompt``, consulting the cache first."""
    key = request_hash(provider, prompt)
    hit = cache.get(key)
    if hit is not None:
        return GenerationRecord(
            key, provider.provider_id, prompt, hit["response"], hit.get("latency_ms", 0.0), True
        )
    if offline and getattr(provider.transport, "network", True):
        raise OfflineCacheMiss(f"{provider.provider_id}: request {key[:12]} not cached")
    transport = resolve_transport(provider)

    last_exc: Exception | None = None
    text = None
    start = time.perf_counter()
    for attempt in range(MAX_ATTEMPTS):
        try:
            with _slot(provider):
                start = time.perf_counter()
                text = transport.complete(prompt, provider.model_name, provider.temperature)
            break
        except ProviderUnavailable as exc:
            last_exc = exc
            log.warning("%s attempt %d/%d failed: %s", provider.provider_id, attempt + 1,
                        MAX_ATTEMPTS, exc)
            if attempt + 1 < MAX_ATTEMPTS:
                sleep(BACKOFF_S[attempt])
    if text is None:
        raise ProviderUnavailable(
            f"{provider.provider_id} failed after {MAX_ATTEMPTS} attempts: {last_exc}"
        )
    latency = (time.perf_counter() - start) * 1000.0
    if not text.strip():
        raise EmptyCompletion(f"{provider.provider_id} returned an empty completion")
    cache.put(key, {
        "request": canonical_request(provider, prompt),
        "response": text,
        "latency_ms": latency,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    })
    return GenerationRecord(key, provider.provider_id, prompt, text, latency, False)


# --- deterministic mocks -------------------------------------------------

_SYNONYMS = {
    "good": "fine", "great": "grand", "big": "large", "small": "little", "people": "folks",
    "country": "nation", "nation": "country", "help": "aid", "work": "labor", "jobs": "posts",
    "think": "believe", "believe": "think", "make": "build", "new": "fresh", "time": "moment",
    "want": "wish", "need": "require", "important": "vital", "world": "globe", "say": "state",
    "very": "quite", "many": "numerous", "happy": "glad", "fast": "quick", "begin": "start",
}


def _word_reverse(text: str) -> str:
    return " ".join(reversed(text.split()))


def _synonym_noise(text: str, seed: int, rate: float = 0.3) -> str:
    rng = random.Random(derive_seed("synonym_noise", seed, text))
    out = []
    for word in text.split():
        if rng.random() < rate:
            core = word.strip(".,;:!?\"'")
            swap = _SYNONYMS.get(core.lower(), core[::-1] if len(core) > 1 else core + "x")
            word = word.replace(core, swap, 1) if core else word
        out.append(word)
    return " ".join(out)


def _ngrams(text: str, n: int) -> set[tuple[str, ...]]:
    toks = tokenize(text)
    return set(zip(*(toks[i:] for i in range(n))))


def overlap_score(probe: str, samples: Iterable[str]) -> float:
    """Fraction of the probe's word bigrams that also occur in the samples.

    Single-word probes fall back to unigrams.
    """
    n = 2 if len(tokenize(probe)) >= 2 else 1
    probe_grams = _ngrams(probe, n)
    if not probe_grams:
        return 0.0
    pool: set[tuple[str, ...]] = set()
    for s in samples:
        pool |= _ngrams(s, n)
    return len(probe_grams & pool) / len(probe_grams)


def _parse_rule(rule: str) -> tuple[str, str]:
    name, _, arg = rule.partition(":")
    return name.strip(), arg


class MockTransport:
    """A provider whose answer is a pure function of the prompt.

    Transform rules (mimic/obfuscate): ``identity``, ``word_reverse``,
    ``synonym_noise:<seed>``, ``constant:<text>``, ``context_echo``.
    Verify rules: ``oracle`` (needs ``sidecar`` mapping text -> author_id),
    ``overlap:<threshold>``, ``always_yes``, ``always_no``, ``coin_flip:<seed>``,
    ``scripted`` (accepts exactly the texts in ``accepted_texts``).
    """

    network = False

    def __init__(
        self,
        rule: str = "identity",
        verify: str = "oracle",
        sidecar: Mapping[str, str] | None = None,
        accepted_texts: Iterable[str] = (),
    ):
        self.rule, self.rule_arg = _parse_rule(rule)
        self.verify_rule, self.verify_arg = _parse_rule(verify)
        self.sidecar = dict(sidecar or {})
        self.accepted_texts = frozenset(accepted_texts)
        self.calls = 0
        self._lock = threading.Lock()
        known = {"identity", "word_reverse", "synonym_noise", "constant", "context_echo"}
        if self.rule not in known:
            raise ValueError(f"unknown mock rule {rule!r}")
        if self.verify_rule not in {"oracle", "overlap", "always_yes", "always_no",
                                    "coin_flip", "scripted"}:
            raise ValueError(f"unknown mock verify rule {verify!r}")

    def complete(self, prompt: PromptSpec, model: str, temperature: float | None) -> str:
        with self._lock:
            self.calls += 1
        if prompt.task_kind is TaskKind.VERIFY:
            return "yes" if self._verify(prompt) else "no"
        return self.transform(prompt.input_text, prompt.sample_texts)

    def transform(self, text: str, samples: tuple[str, ...] = ()) -> str:
        if self.rule == "identity":
            return text
        if self.rule == "word_reverse":
            return _word_reverse(text)
        if self.rule == "synonym_noise":
            return _synonym_noise(text, int(self.rule_arg or 0))
        if self.rule == "constant":
            return self.rule_arg or "the the the"
        return " ".join(samples)

    def _verify(self, prompt: PromptSpec) -> bool:
        rule = self.verify_rule
        if rule == "oracle":
            return self.sidecar.get(prompt.input_text) == prompt.author_id
        if rule == "overlap":
            threshold = float(self.verify_arg or 0.5)
            return overlap_score(prompt.input_text, prompt.sample_texts) >= threshold
        if rule == "always_yes":
            return True
        if rule == "always_no":
            return False
        if rule == "coin_flip":
            return coin_flip(int(self.verify_arg or 0), prompt)
        return prompt.input_text in self.accepted_texts


def coin_flip(seed: int, prompt: PromptSpec) -> bool:
    rng = random.Random(derive_seed("coin_flip", seed, prompt.input_text, prompt.author_id))
    return rng.random() < 0.5


def make_mock_provider(
    rule: str = "identity",
    verify: str = "oracle",
    provider_id: str | None = None,
    sidecar: Mapping[str, str] | None = None,
    accepted_texts: Iterable[str] = (),
    max_in_flight: int = 8,
) -> ProviderHandle:
    transport = MockTransport(rule, verify, sidecar, accepted_texts)
    pid = provider_id or rule.partition(":")[0]
    return ProviderHandle(
        provider_id=pid,
        endpoint=f"mock://{rule}",
        model_name=f"mock/{rule}/{verify}",
        max_in_flight=max_in_flight,
        temperature=0.0,
        transport=transport,
    )
