import json

import pytest
from hypothesis import given, settings, strategies as st

from apeval.corpus import (
    Context,
    Document,
    Purity,
    build_context,
    build_noisy_context,
    corpus_stats,
    load_corpus,
    sample_candidate_pool,
    save_corpus,
)
from apeval.errors import (
    DuplicateId,
    EmptyCorpus,
    InsufficientDocuments,
    MalformedRecord,
    NoAcceptedDocuments,
)


def _write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_load_corpus_roundtrip(tmp_path, corpus):
    p = tmp_path / "c.jsonl"
    save_corpus(corpus, p)
    again = load_corpus(p, "synthetic")
    assert again.documents == corpus.documents
    assert [a.metadata for a in again.authors] == [a.metadata for a in corpus.authors]
    assert again.author("author1").display_name == "Author 1"


def test_load_corpus_default_name_and_display(tmp_path):
    p = _write(tmp_path / "mini.jsonl", [
        {"doc_id": "d1", "author_id": "a", "text": "Hello there."},
        {"doc_id": "d2", "author_id": "a", "text": "Again.", "metadata": {"sex": "F"}},
    ])
    c = load_corpus(p)
    assert c.name == "mini"
    assert c.author("a").display_name == "a"
    assert c.author("a").metadata == {"sex": "F"}


@pytest.mark.parametrize("line,reason", [
    ("{not json", "invalid JSON"),
    ('["list"]', "not an object"),
    ('{"doc_id": "x", "author_id": "a"}', "text"),
    ('{"doc_id": "x", "author_id": "a", "text": "   "}', "empty text"),
    ('{"doc_id": "x", "author_id": "a", "text": "t", "metadata": 3}', "metadata"),
])
def test_malformed_records_report_line(tmp_path, line, reason):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"doc_id": "ok", "author_id": "a", "text": "fine"}\n' + line + "\n")
    with pytest.raises(MalformedRecord) as ei:
        load_corpus(p)
    assert ei.value.line_no == 2
    assert reason in str(ei.value)


def test_duplicate_and_empty(tmp_path):
    dup = _write(tmp_path / "dup.jsonl", [{"doc_id": "x", "author_id": "a", "text": "t"}] * 2)
    with pytest.raises(DuplicateId):
        load_corpus(dup)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("\n\n")
    with pytest.raises(EmptyCorpus):
        load_corpus(empty)


def test_corpus_stats_hand_example(tmp_path):
    p = _write(tmp_path / "s.jsonl", [
        {"doc_id": "1", "author_id": "a", "text": "One two three. Four five."},
        {"doc_id": "2", "author_id": "b", "text": "six seven eight"},
    ])
    s = corpus_stats(load_corpus(p))
    assert (s.n_docs, s.n_authors) == (2, 2)
    assert s.avg_doc_words == 4.0
    assert s.avg_sentences_per_doc == 1.5
    assert s.avg_sentence_words == pytest.approx(8 / 3)


def test_build_context_excludes_and_is_seeded(corpus):
    ctx = build_context(corpus, "author1", 5, exclude_doc="author1-d000", seed=3)
    assert len(ctx.sample_docs) == 5
    assert ctx.excludes("author1-d000")
    assert all(d.author_id == "author1" for d in ctx.sample_docs)
    assert ctx.purity is Purity.PERFECT
    assert ctx.metadata_text is None
    assert ctx == build_context(corpus, "author1", 5, exclude_doc="author1-d000", seed=3)


def test_build_context_metadata_and_contrast(corpus):
    ctx = build_context(corpus, "author2", 3, include_metadata=True, n_contrast=4, seed=1)
    assert ctx.metadata_text.startswith("The author is male.")
    assert len(ctx.contrast_docs) == 4
    assert all(d.author_id != "author2" for d in ctx.contrast_docs)
    assert ctx.without_metadata().metadata_text is None


def test_build_context_insufficient(corpus):
    with pytest.raises(InsufficientDocuments) as ei:
        build_context(corpus, "author1", 10, exclude_doc="author1-d000")
    assert (ei.value.needed, ei.value.available) == (10, 9)


def test_perfect_context_rejects_foreign_docs():
    foreign = Document.make("x", "b", "text")
    with pytest.raises(ValueError):
        Context("a", (foreign,))
    noisy = Context("a", (foreign,), purity=Purity.NOISY)
    assert noisy.provenance == (("x", "b"),)


@settings(max_examples=40, deadline=None)
@given(n_author=st.integers(0, 10), n_imposter=st.integers(0, 20), seed=st.integers(0, 10**6))
def test_candidate_pool_composition(corpus, n_author, n_imposter, seed):
    pool = sample_candidate_pool(corpus, "author3", n_author, n_imposter, seed=seed)
    assert sum(lbl for _, lbl in pool) == n_author
    assert sum(not lbl for _, lbl in pool) == n_imposter
    assert all((d.author_id == "author3") == lbl for d, lbl in pool)
    assert len({d.doc_id for d, _ in pool}) == len(pool)


def test_noisy_context_keeps_accepted(corpus):
    pool = sample_candidate_pool(corpus, "author1", 3, 3, seed=0)
    outcomes = {d.doc_id: True for d, _ in pool}
    ctx = build_noisy_context(pool, outcomes, "author1")
    assert ctx.purity is Purity.NOISY and len(ctx.sample_docs) == 6
    genuine_only = {d.doc_id: lbl for d, lbl in pool}
    assert build_noisy_context(pool, genuine_only, "author1").purity is Purity.PERFECT
    with pytest.raises(NoAcceptedDocuments):
        build_noisy_context(pool, {d.doc_id: False for d, _ in pool}, "author1")
    with pytest.raises(KeyError):
        build_noisy_context(pool, {}, "author1")
