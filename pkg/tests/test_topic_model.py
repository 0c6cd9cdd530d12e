import numpy as np
import pytest

from apeval.errors import EmptyVocabulary, TooFewDocuments, TopicOutOfRange
from apeval.synthetic import disjoint_groups
from apeval.topic_model import fit_lda, fold_in, top_words, topic_drift, topic_purity


@pytest.fixture(scope="module")
def groups():
    return disjoint_groups(50, 20, 15, seed=3)


@pytest.fixture(scope="module")
def model(groups):
    ga, gb, _, _ = groups
    return fit_lda(ga + gb, K=2, iterations=200, seed=11)


def test_single_word_corpus_is_degenerate_but_valid():
    m = fit_lda(["x"] * 4, K=2, iterations=20, seed=0)
    assert m.vocabulary == ("x",)
    assert np.allclose(m.phi(), 1.0)
    assert top_words(m, 0, 10).top_words == (("x", 1.0),)


def test_disjoint_vocabularies_separate(groups, model):
    _, _, va, vb = groups
    assert topic_purity(model, [va, vb], n=5) >= 0.9


def test_refit_is_bit_identical(groups, model):
    ga, gb, _, _ = groups
    again = fit_lda(ga + gb, K=2, iterations=200, seed=11)
    assert np.array_equal(again.topic_word, model.topic_word)
    assert np.array_equal(again.doc_topic, model.doc_topic)


def test_distributions_are_normalized(model):
    assert np.allclose(model.phi().sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(model.theta().sum(axis=1), 1.0, atol=1e-12)
    assert model.topic_word.sum() == model.doc_topic.sum() == 100 * 20


def test_top_words_order_and_range(model):
    words = top_words(model, 1, 4).top_words
    probs = [p for _, p in words]
    assert probs == sorted(probs, reverse=True) and len(words) == 4
    with pytest.raises(TopicOutOfRange):
        top_words(model, 2)
    with pytest.raises(TopicOutOfRange):
        top_words(model, -1)


def test_errors():
    with pytest.raises(EmptyVocabulary):
        fit_lda(["", "the and"], K=1, stopwords=True)
    with pytest.raises(TooFewDocuments):
        fit_lda(["a b", "c d"], K=3)


def test_fold_in_recovers_group(groups, model):
    ga, gb, va, _ = groups
    topic_a = int(np.argmax([sum(model.phi()[k][i] for i, w in enumerate(model.vocabulary)
                                 if w in va) for k in range(2)]))
    theta = fold_in(model, ga[:5], iterations=30, seed=1)
    assert theta.shape == (5, 2)
    assert np.all(theta[:, topic_a] > 0.5)
    assert np.allclose(theta.sum(axis=1), 1.0)


def test_drift_grows_as_rounds_leave_the_original_mix(groups, model):
    ga, gb, _, _ = groups
    # rounds increasingly dominated by one group
    rounds = [ga[:25] + gb[:25], ga[:40] + gb[:10], ga[:48] + gb[:2]]
    drifts = [topic_drift(model, r, iterations=30, seed=2) for r in rounds]
    assert drifts[0] < drifts[1] < drifts[2]
    assert all(d >= 0 for d in drifts)
