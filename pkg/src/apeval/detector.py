"""Human-likeness detectors behind one small interface, with cached scores."""

from __future__ import annotations

import logging
import os
import re
from collections.abc import Iterable
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Protocol

from .errors import DetectorUnavailable, OfflineCacheMiss
from .providers import GenerationCache
from .textutil import canonical_json, sha256_hex, tokenize

log = logging.getLogger(__name__)


class DetectorDriver(Protocol):
    network: bool

    def fingerprint(self) -> str: ...

    def score(self, text: str) -> float: ...


class MockDetector:
    """Share of a text's tokens found in a reference vocabulary."""

    network = False

    def __init__(self, vocabulary: Iterable[str]):
        self.vocabulary = frozenset(vocabulary)
        self.calls = 0

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "MockDetector":
        return cls(w for t in texts for w in tokenize(t))

    def fingerprint(self) -> str:
        return sha256_hex("\n".join(sorted(self.vocabulary)))

    def score(self, text: str) -> float:
        self.calls += 1
        toks = tokenize(text)
        if not toks:
            return 0.0
        return sum(t in self.vocabulary for t in toks) / len(toks)


class HttpDetector:
    """POSTs ``{"document": text}`` and reads a human probability from the reply.

    Accepts either ``documents[0].class_probabilities.human`` or
    ``documents[0].completely_generated_prob`` (as ``1 - p``), or a flat
    ``human_probability`` field.
    """

    network = True

    def __init__(self, endpoint: str, api_key: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    def fingerprint(self) -> str:
        return self.endpoint

    def score(self, text: str) -> float:
        import httpx

        try:
            resp = httpx.post(self.endpoint, json={"document": text},
                              headers={"x-api-key": self.api_key}, timeout=self.timeout)
            resp.raise_for_status()
            return parse_detector_response(resp.json())
        except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise DetectorUnavailable(f"{self.endpoint}: {exc}") from exc


def parse_detector_response(payload: dict) -> float:
    if "human_probability" in payload:
        p = float(payload["human_probability"])
    else:
        doc = payload["documents"][0]
        probs = doc.get("class_probabilities") or {}
        p = float(probs["human"]) if "human" in probs else 1.0 - float(
            doc["completely_generated_prob"])
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return p


@dataclass(frozen=True)
class DetectorHandle:
    detector_id: str
    endpoint: str = ""
    driver: DetectorDriver | None = field(default=None, compare=False, repr=False)


def detector_key_env(detector_id: str) -> str:
    return "APEVAL_" + re.sub(r"[^A-Za-z0-9]", "_", detector_id).upper() + "_API_KEY"


def _driver(handle: DetectorHandle) -> DetectorDriver:
    if handle.driver is not None:
        return handle.driver
    key = os.environ.get(detector_key_env(handle.detector_id), "").strip()
    if not key or not handle.endpoint:
        raise DetectorUnavailable(f"detector {handle.detector_id!r} has no endpoint/credential")
    return HttpDetector(handle.endpoint, key)


def detect_human_likeness(handle: DetectorHandle, text: str, cache: GenerationCache,
                          offline: bool = False) -> float:
    """Human probability for ``text``; scores are cached like generations."""
    driver = _driver(handle) if handle.driver is not None or not offline else None
    fp = driver.fingerprint() if driver is not None else handle.endpoint
    request = {"detector_id": handle.detector_id, "fingerprint": fp, "text": text}
    key = sha256_hex(canonical_json(request))
    hit = cache.get(key)
    if hit is not None:
        return float(hit["response"])
    if driver is None or (offline and driver.network):
        raise OfflineCacheMiss(f"detector {handle.detector_id}: score not cached")
    value = driver.score(text)
    cache.put(key, {"request": request, "response": value,
                    "timestamp": datetime.now(timezone.utc).isoformat()})
    return value
