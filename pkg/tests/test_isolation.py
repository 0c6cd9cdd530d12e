import pytest

from apeval.errors import IncompleteScores
from apeval.isolation import (
    IsolationCell,
    IsolationScore,
    JudgeAssignment,
    av_probe_set,
    doc_context,
    evaluate_provider,
    select_judges,
)
from apeval.providers import make_mock_provider


def _scores(table):
    out = []
    for pid, (ao_p, ao_s, am_p, am_s, av) in table.items():
        out += [IsolationScore(pid, "AO", ao_p, ao_s, n_evaluated=1),
                IsolationScore(pid, "AM", am_p, am_s, n_evaluated=1),
                IsolationScore(pid, "AV", accuracy=av, n_evaluated=1)]
    return out


def test_selection_rules():
    j = select_judges(_scores({"a": (2.0, 0.1, 1.5, 0.2, 0.5),
                               "b": (1.0, 0.1, 0.9, 0.1, 0.7)}))
    assert (j.ao_judge, j.am_judge, j.av_judge) == ("a", "b", "b")


def test_ties_break_on_secondary_metric_then_id():
    j = select_judges(_scores({"b": (2.0, 0.1, 1.0, 0.3, 0.5),
                               "a": (2.0, 0.2, 1.0, 0.3, 0.5),
                               "c": (2.0, 0.1, 1.0, 0.2, 0.5)}))
    assert j.ao_judge == "b"   # same ppl, b and c lower sim -> id
    assert j.am_judge == "a"   # same ppl, a and b higher sim -> id
    assert j.av_judge == "a"


def test_distance_ranking_for_mimicking():
    table = {"low": (1.0, 0.1, 0.4, 0.1, 0.5), "near": (1.0, 0.1, 1.05, 0.1, 0.5)}
    assert select_judges(_scores(table)).am_judge == "low"
    assert select_judges(_scores(table), am_rank="distance").am_judge == "near"
    with pytest.raises(ValueError):
        select_judges(_scores(table), am_rank="other")


def test_incomplete_scores():
    scores = _scores({"a": (1, 0, 1, 0, 1)})[:2]
    with pytest.raises(IncompleteScores):
        select_judges(scores)
    with pytest.raises(IncompleteScores):
        select_judges([])


def test_score_invariants_and_roundtrip():
    with pytest.raises(ValueError):
        IsolationScore("a", "AV")
    with pytest.raises(ValueError):
        IsolationScore("a", "AO", sim=0.1)
    j = select_judges(_scores({"a": (1, 0.1, 1, 0.1, 1)}))
    assert JudgeAssignment.from_dict(j.to_dict()) == j
    o = JudgeAssignment("x", "y", "z", "override")
    assert JudgeAssignment.from_dict(o.to_dict()) == o


def test_doc_context_never_contains_doc(corpus):
    for d in corpus.documents:
        ctx = doc_context(corpus, d, 5, True, seed=1, n_contrast=3)
        assert d.doc_id not in {x.doc_id for x in ctx.sample_docs + ctx.contrast_docs}
        assert ctx.metadata_text


def test_av_probes_are_balanced(corpus):
    probes = av_probe_set(corpus, corpus.documents, 5, False, 0)
    own = sum(ctx.author_id == d.author_id for d, ctx in probes)
    assert own == len(probes) // 2 == len(corpus.documents)


@pytest.mark.parametrize("rule,verify,expect_av", [
    ("identity", "oracle", 1.0), ("identity", "always_yes", 0.5), ("identity", "always_no", 0.5),
])
def test_evaluate_provider(runner, engine, sidecar, rule, verify, expect_av):
    prov = make_mock_provider(rule, verify, sidecar=sidecar)
    docs = runner.corpus.documents[::5]
    ao, am, av = evaluate_provider([IsolationCell(runner, engine, docs)], prov, k=3)
    base = engine.report([(d.author_id, d.text) for d in docs])
    assert ao.ppl_norm == pytest.approx(base.ppl_norm, abs=1e-12) == am.ppl_norm
    assert am.n_evaluated == len(docs)
    assert av.accuracy == expect_av and av.n_evaluated == 2 * len(docs)


def test_corruption_raises_obfuscation_perplexity(runner, engine, sidecar):
    docs = runner.corpus.documents[::3]
    cells = [IsolationCell(runner, engine, docs)]
    ident = evaluate_provider(cells, make_mock_provider("identity", sidecar=sidecar), k=3)
    rev = evaluate_provider(cells, make_mock_provider("word_reverse", sidecar=sidecar), k=3)
    assert rev[0].ppl_norm > ident[0].ppl_norm
