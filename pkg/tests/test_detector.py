import httpx
import pytest

from apeval.detector import (
    DetectorHandle,
    HttpDetector,
    MockDetector,
    detect_human_likeness,
    detector_key_env,
    parse_detector_response,
)
from apeval.errors import DetectorUnavailable, OfflineCacheMiss


def test_mock_scores():
    det = MockDetector(["alpha", "beta"])
    assert det.score("alpha beta") == 1.0
    assert det.score("gamma delta") == 0.0
    assert det.score("alpha gamma") == 0.5
    assert det.score("") == 0.0


def test_scores_are_cached(cache):
    det = MockDetector(["a"])
    h = DetectorHandle("vocab", "mock://", det)
    assert detect_human_likeness(h, "a b", cache) == 0.5
    assert detect_human_likeness(h, "a b", cache) == 0.5
    assert det.calls == 1
    # offline still serves the cache and still allows local drivers
    assert detect_human_likeness(h, "a b", cache, offline=True) == 0.5
    assert detect_human_likeness(h, "a", cache, offline=True) == 1.0
    assert det.calls == 2


def test_missing_credentials(cache, monkeypatch):
    monkeypatch.delenv(detector_key_env("gptzero"), raising=False)
    h = DetectorHandle("gptzero", "https://example.invalid/detect")
    with pytest.raises(DetectorUnavailable):
        detect_human_likeness(h, "text", cache)
    with pytest.raises(OfflineCacheMiss):
        detect_human_likeness(h, "text", cache, offline=True)
    assert detector_key_env("gpt-zero") == "APEVAL_GPT_ZERO_API_KEY"


@pytest.mark.parametrize("payload,expected", [
    ({"human_probability": 0.25}, 0.25),
    ({"documents": [{"class_probabilities": {"human": 0.9, "ai": 0.1}}]}, 0.9),
    ({"documents": [{"completely_generated_prob": 0.75}]}, 0.25),
])
def test_parse_response(payload, expected):
    assert parse_detector_response(payload) == pytest.approx(expected)


def test_parse_rejects_bad_payloads():
    with pytest.raises(ValueError):
        parse_detector_response({"human_probability": 1.5})
    with pytest.raises(KeyError):
        parse_detector_response({"documents": [{}]})


def test_http_detector(monkeypatch):
    seen = {}

    def fake_post(url, json, headers, timeout):
        seen.update(url=url, json=json, headers=headers)
        return httpx.Response(200, json={"human_probability": 0.4},
                              request=httpx.Request("POST", url))

    monkeypatch.setattr(httpx, "post", fake_post)
    det = HttpDetector("https://det.example/v1", "k")
    assert det.score("hello") == 0.4
    assert seen["json"] == {"document": "hello"} and seen["headers"]["x-api-key"] == "k"

    def failing(url, **kw):
        return httpx.Response(500, request=httpx.Request("POST", url))

    monkeypatch.setattr(httpx, "post", failing)
    with pytest.raises(DetectorUnavailable):
        det.score("hello")
