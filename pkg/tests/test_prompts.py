from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from apeval.corpus import build_context
from apeval.errors import MissingSamples, UnparseableVerdict
from apeval.prompts import (
    PromptSpec,
    TaskKind,
    fit_char_budget,
    parse_verdict,
    render_author_identification,
    render_prompt,
    verdict_or_reject,
)

SNAPSHOTS = Path(__file__).parent / "snapshots"

PERSONA = {"sex": "F", "academic_genre": "Humanities", "cefr": "B1_1", "country": "Singapore",
           "lang_env": "ESL"}


def test_persona_matches_reference_rendering():
    assert render_author_identification(PERSONA) == (
        "The author is female. Her academic background is in the Humanities. "
        "Her English proficiency level is CEFR B1 (lower). "
        "She is from Singapore, an ESL environment (English as a Second Language)."
    )


def test_persona_edge_cases():
    assert render_author_identification({}) == ""
    assert render_author_identification({"sex": "M"}) == "The author is male."
    assert render_author_identification({"cefr": "XX_0"}) == \
        "Their English proficiency level is native."
    assert render_author_identification({"country": "Japan", "lang_env": "EFL"}) == \
        "They are from Japan, an EFL environment (English as a Foreign Language)."
    assert "CEFR B1 (upper)" in render_author_identification({"cefr": "B1_2"})


def _ctx(corpus, meta=True, contrast=0):
    return build_context(corpus, "author1", 5, include_metadata=meta, exclude_doc="author1-d000",
                         seed=0, n_contrast=contrast)


@pytest.mark.parametrize("kind,meta,contrast", [
    ("verify", True, 5), ("verify", False, 5), ("mimic", True, 0), ("obfuscate", False, 0),
])
def test_prompt_snapshots(corpus, kind, meta, contrast):
    p = render_prompt(kind, _ctx(corpus, meta, contrast), corpus.doc("author1-d000").text, 58,
                      "Author 1")
    rendered = "\n\n".join([p.system_text, p.user_message()])
    snap = SNAPSHOTS / f"{kind}_{'meta' if meta else 'nometa'}.txt"
    if not snap.exists():  # first run records the snapshot
        snap.write_text(rendered, encoding="utf-8")
    assert rendered == snap.read_text(encoding="utf-8")


def test_anchor_phrases(corpus):
    text = corpus.doc("author1-d000").text
    v = render_prompt("verify", _ctx(corpus, False, 5), text, author_name="Author 1")
    m = render_prompt("mimic", _ctx(corpus), text, 58)
    o = render_prompt("obfuscate", _ctx(corpus), text, 58)
    assert "verify the attribution of" in v.system_text
    assert "phrasal verbs, modal verbs, punctuation" in v.instruction_text
    assert "exclusively return yes or no" in v.instruction_text
    assert "The 10 sample writings:" in v.context_text
    assert "information about the author" not in v.context_text
    assert "replicate the writing style" in m.system_text
    assert "58-word continuation that seamlessly blends" in m.instruction_text
    assert "hide the writing style" in o.system_text
    assert "writing style significantly different from" in o.instruction_text
    assert m.context_text.startswith("Here is some information about the author: The author")
    for p in (v, m, o):
        assert all([p.system_text, p.instruction_text, p.context_text, p.task_text])
        assert p.task_text == f"The input text is: {text}"


def test_render_is_deterministic_and_serialisable(corpus):
    a = render_prompt("mimic", _ctx(corpus), "input", 12)
    b = render_prompt("mimic", _ctx(corpus), "input", 12)
    assert a == b
    assert PromptSpec.from_dict(a.to_dict()) == a


def test_render_errors(corpus):
    ctx = _ctx(corpus)
    with pytest.raises(MissingSamples):
        render_prompt("verify", ctx.with_samples([]), "x")
    with pytest.raises(ValueError):
        render_prompt("mimic", ctx, "x", target_words=0)


def test_char_budget_truncates_longest_first():
    texts = ["a" * 10, "b" * 100, "c" * 50]
    out = fit_char_budget(texts, 90)
    assert out[0] == "a" * 10
    assert sum(map(len, out)) <= 90
    assert len(out[1]) == len(out[2]) == 40
    assert fit_char_budget(texts, 1000) == texts


@pytest.mark.parametrize("raw,accepted", [
    ("yes", True), ("No.", False), ("  YES!  ", True), ("no, it is not", False),
    ('"Yes"', True),
])
def test_parse_verdict(raw, accepted):
    assert parse_verdict(raw).accepted is accepted


@pytest.mark.parametrize("raw", ["It is likely the author", "", "yesno", "maybe"])
def test_unparseable(raw):
    with pytest.raises(UnparseableVerdict):
        parse_verdict(raw)
    v = verdict_or_reject(raw)
    assert v.accepted is False and v.parsed is False


@given(word=st.sampled_from(["yes", "no", "Yes", "NO"]),
       pre=st.text(" \t\n", max_size=3), post=st.text(" .!?,\n", max_size=3))
def test_parse_verdict_total_on_padded_answers(word, pre, post):
    assert parse_verdict(pre + word + post).accepted is (word.lower() == "yes")


def test_task_kind_enum():
    assert TaskKind("verify") is TaskKind.VERIFY
