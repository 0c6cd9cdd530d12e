"""LDA by collapsed Gibbs sampling, plus topic summaries and topic drift."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import EmptyVocabulary, TooFewDocuments, TopicOutOfRange
from .textutil import derive_seed, tokenize

STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been before being
below between both but by can could did do does doing down during each few for from further
had has have having he her here hers herself him himself his how i if in into is it its itself
just me more most my myself no nor not now of off on once only or other our ours ourselves out
over own same she should so some such than that the their theirs them themselves then there
these they this those through to too under until up very was we were what when where which
while who whom why will with would you your yours yourself yourselves s t don
""".split())


@dataclass(frozen=True)
class LdaModel:
    K: int
    alpha: float
    beta: float
    vocabulary: tuple[str, ...]
    topic_word: np.ndarray  # K x V counts
    doc_topic: np.ndarray   # D x K counts
    seed: int
    iterations: int
    stopwords: bool = False

    @property
    def V(self) -> int:
        return len(self.vocabulary)

    def index(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.vocabulary)}

    def phi(self) -> np.ndarray:
        tw = self.topic_word.astype(float) + self.beta
        return tw / tw.sum(axis=1, keepdims=True)

    def theta(self) -> np.ndarray:
        dt = self.doc_topic.astype(float) + self.alpha
        return dt / dt.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class TopicSummary:
    topic_id: int
    top_words: tuple[tuple[str, float], ...]


def prepare_docs(docs: Sequence[str], stopwords: bool = False,
                 vocabulary: Sequence[str] | None = None) -> list[list[str]]:
    allowed = set(vocabulary) if vocabulary is not None else None
    out = []
    for d in docs:
        toks = tokenize(d)
        if stopwords:
            toks = [t for t in toks if t not in STOPWORDS]
        if allowed is not None:
            toks = [t for t in toks if t in allowed]
        out.append(toks)
    return out


def _sample(weights: list[float], u: float) -> int:
    total = math.fsum(weights)
    target = u * total
    acc = 0.0
    for k, w in enumerate(weights):
        acc += w
        if target < acc:
            return k
    return len(weights) - 1


def fit_lda(docs: Sequence[str], K: int = 10, alpha: float | None = None, beta: float = 0.01,
            iterations: int = 500, seed: int = 0, stopwords: bool = False,
            vocabulary: Sequence[str] | None = None) -> LdaModel:
    """Collapsed Gibbs sampling with seeded initial assignments.

    ``vocabulary`` restricts tokens to a shared vocabulary (used when several
    round-wise models must be comparable). Documents left empty are dropped.
    """
    alpha = 50.0 / K if alpha is None else alpha
    tokenized = [t for t in prepare_docs(docs, stopwords, vocabulary) if t]
    if not tokenized or not any(tokenized):
        raise EmptyVocabulary("no tokens left after preprocessing")
    if len(tokenized) < K:
        raise TooFewDocuments(f"{len(tokenized)} non-empty documents for K={K}")
    vocab = tuple(sorted(vocabulary if vocabulary is not None else
                         {w for toks in tokenized for w in toks}))
    widx = {w: i for i, w in enumerate(vocab)}
    V = len(vocab)
    words = [[widx[w] for w in toks] for toks in tokenized]

    rng = np.random.default_rng(seed)
    n_dk = [[0] * K for _ in words]
    n_kw = [[0] * V for _ in range(K)]
    n_k = [0] * K
    z = []
    for d, ws in enumerate(words):
        zd = rng.integers(0, K, size=len(ws)).tolist()
        for w, k in zip(ws, zd):
            n_dk[d][k] += 1
            n_kw[k][w] += 1
            n_k[k] += 1
        z.append(zd)

    v_beta = V * beta
    n_tokens = sum(len(ws) for ws in words)
    topics = range(K)
    for _ in range(iterations):
        u = rng.random(n_tokens).tolist()
        pos = 0
        for d, ws in enumerate(words):
            zd, nd = z[d], n_dk[d]
            for i, w in enumerate(ws):
                k = zd[i]
                nd[k] -= 1
                n_kw[k][w] -= 1
                n_k[k] -= 1
                weights = [(nd[t] + alpha) * (n_kw[t][w] + beta) / (n_k[t] + v_beta)
                           for t in topics]
                k = _sample(weights, u[pos])
                pos += 1
                zd[i] = k
                nd[k] += 1
                n_kw[k][w] += 1
                n_k[k] += 1

    return LdaModel(K, alpha, beta, vocab, np.array(n_kw, dtype=np.int64),
                    np.array(n_dk, dtype=np.int64), seed, iterations, stopwords)


def top_words(model: LdaModel, topic_id: int, n: int = 10) -> TopicSummary:
    """The ``n`` most probable words of a topic, ties broken lexicographically."""
    if not 0 <= topic_id < model.K:
        raise TopicOutOfRange(f"topic {topic_id} not in 0..{model.K - 1}")
    row = model.phi()[topic_id]
    order = sorted(range(model.V), key=lambda i: (-row[i], model.vocabulary[i]))[:n]
    return TopicSummary(topic_id, tuple((model.vocabulary[i], float(row[i])) for i in order))


def fold_in(model: LdaModel, docs: Sequence[str], iterations: int = 50,
            seed: int = 0) -> np.ndarray:
    """Topic distributions for unseen docs, keeping topic-word counts frozen.

    Returns an ``(n_nonempty_docs, K)`` array; empty documents are skipped.
    """
    phi = model.phi()
    widx = model.index()
    tokenized = [t for t in prepare_docs(docs, model.stopwords, model.vocabulary) if t]
    if not tokenized:
        raise TooFewDocuments("no document has in-vocabulary words")
    K, alpha = model.K, model.alpha
    thetas = np.zeros((len(tokenized), K))
    for d, toks in enumerate(tokenized):
        ws = [widx[t] for t in toks]
        rng = np.random.default_rng(derive_seed(seed, d))
        zd = rng.integers(0, K, size=len(ws)).tolist()
        nd = [0] * K
        for k in zd:
            nd[k] += 1
        cols = [phi[:, w].tolist() for w in ws]
        for _ in range(iterations):
            u = rng.random(len(ws)).tolist()
            for i in range(len(ws)):
                nd[zd[i]] -= 1
                col = cols[i]
                k = _sample([(nd[t] + alpha) * col[t] for t in range(K)], u[i])
                zd[i] = k
                nd[k] += 1
        thetas[d] = (np.array(nd, dtype=float) + alpha) / (len(ws) + K * alpha)
    return thetas


def _kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.sum(p * np.log(p / q), axis=1)


def topic_drift(model: LdaModel, docs_round: Sequence[str], iterations: int = 50,
                seed: int = 0) -> float:
    """Mean KL of folded-in per-doc topic mixtures from the reference mean mixture."""
    reference = model.theta().mean(axis=0)
    thetas = fold_in(model, docs_round, iterations, seed)
    return float(np.mean(_kl_rows(thetas, reference[None, :])))


def topic_purity(model: LdaModel, groups: Sequence[set[str]], n: int = 5) -> float:
    """Mean over topics of the largest share of top-``n`` words from one group."""
    shares = []
    for k in range(model.K):
        words = [w for w, _ in top_words(model, k, n).top_words]
        shares.append(max(sum(w in g for w in words) for g in groups) / len(words))
    return float(np.mean(shares))
