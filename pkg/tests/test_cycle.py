import pytest

from apeval.cycle import (
    CycleStep,
    Trajectory,
    read_rounds,
    round_name,
    run_cycles,
    summarize_trajectories,
    write_rounds,
)
from apeval.detector import DetectorHandle, MockDetector
from apeval.errors import MixedCycleCounts, OfflineCacheMiss, ProviderError
from apeval.providers import ProviderHandle, make_mock_provider
from apeval.tasks import TaskRunner
from apeval.textutil import sha256_hex


@pytest.fixture
def mocks(sidecar):
    return (make_mock_provider("constant:zzz qqq", "overlap:0.5", provider_id="const"),
            make_mock_provider("identity", "overlap:0.5", provider_id="ident"))


def _run(runner, engine, doc, ao, am, n=3, **kw):
    return run_cycles(runner, engine, doc, ao, am, am, n_cycles=n, k=4, seed=0, n_contrast=2,
                      **kw)


def test_zero_cycles_is_baseline_only(runner, engine, mocks):
    doc = runner.corpus.documents[0]
    t = _run(runner, engine, doc, *mocks, n=0)
    assert t.steps == [] and t.complete
    assert [s.step_kind for s in t.all_steps()] == ["original"]
    assert len(summarize_trajectories([t])) == 1


def test_step_layout_and_lineage(runner, engine, mocks):
    doc = runner.corpus.documents[1]
    t = _run(runner, engine, doc, *mocks)
    assert t.complete and len(t.steps) == 6
    assert [s.step_order for s in t.steps] == list(range(1, 7))
    assert [s.step_kind for s in t.steps] == ["AM", "AO"] * 3
    parent = doc.text
    for s in t.steps:
        assert s.text.parent_hash == sha256_hex(parent)
        assert s.text.step_index == s.step_order
        parent = s.output_text
    # mimic always rewrites the original
    assert all(s.text.input_text == doc.text for s in t.steps if s.step_kind == "AM")
    am2 = t.steps[2].text
    assert am2.context_doc_ids == (f"{doc.doc_id}~obfuscate~const",)


def test_identity_cycles_equal_baseline(runner, engine, sidecar):
    ident = make_mock_provider("identity", "oracle", sidecar=sidecar)
    doc = runner.corpus.documents[2]
    t = run_cycles(runner, engine, doc, ident, ident, ident, n_cycles=4, k=4)
    b = t.original_baseline
    for s in t.steps:
        assert (s.verification_acc, s.kl_vs_original, s.sim_vs_original) == \
            (b.verification_acc, b.kl_vs_original, b.sim_vs_original)


def test_av_probe_output_mode(runner, engine, mocks):
    doc = runner.corpus.documents[3]
    t = _run(runner, engine, doc, *mocks, av_probe="output")
    assert [s.verification_acc for s in t.steps if s.step_kind == "AO"] == [0.0] * 3
    with pytest.raises(ValueError):
        _run(runner, engine, doc, *mocks, av_probe="nope")


def test_detector_scores_each_step(runner, engine, mocks):
    det = MockDetector.from_texts(d.text for d in runner.corpus.documents)
    handle = DetectorHandle("vocab", "mock://", det)
    t = _run(runner, engine, runner.corpus.documents[0], *mocks, detector=handle)
    assert t.original_baseline.human_likeness == 1.0
    assert [s.human_likeness for s in t.steps] == [1.0, 0.0] * 3


class _FailingTransport:
    network = False

    def __init__(self, ok):
        self.ok = ok

    def complete(self, prompt, model, temperature):
        if self.ok <= 0:
            raise ProviderError("boom")
        self.ok -= 1
        return prompt.input_text


def test_provider_failure_aborts_with_partial_steps(runner, engine, mocks):
    bad = ProviderHandle("bad", "mock://bad", "m", transport=_FailingTransport(0))
    t = run_cycles(runner, engine, runner.corpus.documents[5], bad, mocks[1], mocks[1],
                   n_cycles=3, k=4)
    assert not t.complete and t.error and len(t.steps) == 1


def test_offline_miss_propagates(corpus, cache, mocks):
    live = ProviderHandle("live", "https://example.invalid", "m")
    offline = TaskRunner(corpus, cache, offline=True, sleep=lambda s: None)
    from apeval.stylometrics import MetricEngine
    with pytest.raises(OfflineCacheMiss):
        run_cycles(offline, MetricEngine.for_corpus(corpus), corpus.documents[0], live, live,
                   mocks[1], n_cycles=1, k=4)


def test_summaries(runner, engine, mocks):
    ts = [_run(runner, engine, d, *mocks) for d in runner.corpus.documents[:4]]
    pts = summarize_trajectories(ts)
    assert [p.step_order for p in pts] == list(range(7)) and all(p.n == 4 for p in pts)
    for p in pts:
        steps = [t.all_steps()[p.step_order] for t in ts]
        assert p.acc == pytest.approx(sum(s.verification_acc for s in steps) / 4)
        assert p.kl == pytest.approx(sum(s.kl_vs_original for s in steps) / 4)
    other = _run(runner, engine, runner.corpus.documents[9], *mocks, n=2)
    with pytest.raises(MixedCycleCounts):
        summarize_trajectories(ts + [other])
    assert summarize_trajectories([]) == []


def test_rounds_roundtrip(tmp_path, runner, engine, mocks):
    ts = [_run(runner, engine, d, *mocks, n=2) for d in runner.corpus.documents[:3]]
    write_rounds(tmp_path, ts)
    rounds = read_rounds(tmp_path)
    assert list(rounds) == ["0_original", "1_AM", "1_AO", "2_AM", "2_AO"]
    assert [r["text"] for r in rounds["0_original"]] == [d.text for d in
                                                         runner.corpus.documents[:3]]
    assert {r["text"] for r in rounds["2_AO"]} == {"zzz qqq"}
    assert round_name(ts[0].steps[3]) == "2_AO"


def test_step_validation():
    with pytest.raises(ValueError):
        CycleStep(1, "AO", 1, None, 0, 0, 0)
    with pytest.raises(ValueError):
        CycleStep(1, "XX", 1, None, 0, 0, 0)
    with pytest.raises(ValueError):
        CycleStep(1, "original", 0, None, 0, 0, 0)
    CycleStep(2, "AM", 3, None, 0, 0, 0)
    assert Trajectory("d", "a", True, "x", 0, CycleStep(0, "original", 0, None, 1, 0, 1)).complete
