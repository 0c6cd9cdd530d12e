"""Stylometric distances: TF-IDF similarity, n-gram perplexity, KL over PPL, and
classification metrics."""

from __future__ import annotations

import math
from fractions import Fraction
import threading
from collections import Counter, defaultdict
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusTooSmall, EmptyCorpus, EmptyText
from .textutil import tokenize

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

DEFAULT_BINS = 20
DEFAULT_ORDER = 3
DEFAULT_DISCOUNT = 0.75
KL_EPS = 1e-6


# --- TF-IDF --------------------------------------------------------------

@dataclass(frozen=True)
class TfidfModel:
    vocabulary: Mapping[str, int]
    idf: tuple[float, ...]
    tokenizer_config: Mapping[str, str] = field(
        default_factory=lambda: {"lowercase": "true", "token_pattern": r"[^\W_]+"}
    )

    def weights(self, text: str) -> dict[int, float]:
        """Raw tf-idf weights; out-of-vocabulary terms are dropped."""
        toks = tokenize(text)
        if not toks:
            return {}
        n = len(toks)
        out = {}
        for term, c in Counter(toks).items():
            idx = self.vocabulary.get(term)
            if idx is not None:
                out[idx] = (c / n) * self.idf[idx]
        return out


def fit_tfidf(docs: Sequence[str]) -> TfidfModel:
    tokenized = [tokenize(d) for d in docs]
    if not any(tokenized):
        raise EmptyCorpus("fit_tfidf needs at least one non-empty document")
    df: Counter[str] = Counter()
    for toks in tokenized:
        df.update(set(toks))
    n_docs = len(docs)
    terms = sorted(df)
    vocab = {t: i for i, t in enumerate(terms)}
    idf = tuple(math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in terms)
    return TfidfModel(vocab, idf)


def _dot(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    if len(a) > len(b):
        a, b = b, a
    return math.fsum(v * b[k] for k, v in a.items() if k in b)


def cosine(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    na, nb = _dot(a, a), _dot(b, b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return min(1.0, max(0.0, _dot(a, b) / math.sqrt(na * nb)))


def _unit(v: Mapping[int, float]) -> dict[int, float]:
    norm = math.sqrt(_dot(v, v))
    return {k: x / norm for k, x in v.items()} if norm > 0 else {}


def unit_centroid(model: TfidfModel, texts: Iterable[str]) -> tuple[dict[int, float], int]:
    """Mean of L2-normalised reference vectors (and how many were averaged)."""
    acc: defaultdict[int, float] = defaultdict(float)
    n = 0
    for t in texts:
        n += 1
        for k, x in _unit(model.weights(t)).items():
            acc[k] += x
    return ({k: x / n for k, x in acc.items()} if n else {}), n


def sim(model: TfidfModel, candidate: str, reference_docs: Sequence[str]) -> float:
    """Mean cosine similarity between ``candidate`` and each reference document.

    The mean of cosines equals the dot product of the unit candidate vector
    with the centroid of unit reference vectors, which is what is computed.
    """
    if not candidate.strip():
        raise EmptyText("sim candidate is empty")
    if not reference_docs:
        raise ValueError("sim needs at least one reference document")
    cand = model.weights(candidate)
    if len(reference_docs) == 1:
        return cosine(cand, model.weights(reference_docs[0]))
    centroid, _ = unit_centroid(model, reference_docs)
    return min(1.0, max(0.0, _dot(_unit(cand), centroid)))


# --- n-gram LM -----------------------------------------------------------

class NgramLm:
    """Interpolated absolute-discount n-gram model.

    ``P(w|h) = max(c(h,w) - d, 0)/c(h) + d * N1+(h.)/c(h) * P(w|h')``, recursing
    on the shortened history ``h'``; unseen histories fall through to the lower
    order, and the recursion bottoms out in a uniform ``1/(V+1)`` over the
    training vocabulary plus ``<unk>``. Instances are treated as immutable.
    """

    def __init__(self, order: int, discount: float, counts: Mapping[tuple, Mapping[str, int]],
                 vocab: frozenset[str]):
        self.order = order
        self.discount = discount
        self.counts = counts
        self.vocab = vocab
        self.vocab_size = len(vocab)
        self._totals = {h: (sum(c.values()), len(c)) for h, c in counts.items()}

    def _p(self, word: str, history: tuple[str, ...], exact: bool = False):
        if history:
            lower = self._p(word, history[1:], exact)
        else:
            lower = Fraction(1, self.vocab_size + 1) if exact else 1.0 / (self.vocab_size + 1)
        node = self.counts.get(history)
        if node is None:
            return lower
        c_h, n1 = self._totals[history]
        d = Fraction(self.discount) if exact else self.discount
        return max(node.get(word, 0) - d, 0) / c_h + d * n1 / c_h * lower

    def _history(self, history: Sequence[str]) -> tuple[str, ...]:
        n = self.order - 1
        if n == 0:
            return ()
        h = [w if (w in self.vocab or w == BOS) else UNK for w in history][-n:]
        return tuple([BOS] * (n - len(h)) + h)

    def prob(self, word: str, history: Sequence[str] = ()) -> float:
        w = word if word in self.vocab else UNK
        return self._p(w, self._history(history))

    def prob_exact(self, word: str, history: Sequence[str] = ()) -> Fraction:
        """``prob`` in rational arithmetic."""
        w = word if word in self.vocab else UNK
        return self._p(w, self._history(history), exact=True)

    def distribution(self, history: Sequence[str] = ()) -> dict[str, float]:
        h = self._history(history)
        out = {w: self._p(w, h) for w in self.vocab}
        out[UNK] = self._p(UNK, h)
        return out

    def perplexity(self, text: str) -> float:
        return perplexity(self, text)


def train_lm(docs: Sequence[str], order: int = DEFAULT_ORDER,
             discount: float = DEFAULT_DISCOUNT) -> NgramLm:
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must be in [0, 1)")
    counts: defaultdict[tuple, Counter] = defaultdict(Counter)
    vocab: set[str] = set()
    total = 0
    pad = [BOS] * (order - 1)
    for doc in docs:
        toks = tokenize(doc) + [EOS]
        vocab.update(toks)
        total += len(toks)
        padded = pad + toks
        for i, w in enumerate(toks):
            end = i + order - 1
            for m in range(order):
                counts[tuple(padded[end - m:end])][w] += 1
    if total < order:
        raise CorpusTooSmall(f"{total} tokens cannot train an order-{order} model")
    return NgramLm(order, discount, {h: dict(c) for h, c in counts.items()}, frozenset(vocab))


def perplexity(lm: NgramLm, text: str) -> float:
    """``exp(-mean log P)`` over the text's tokens plus the end marker."""
    if not text.strip():
        raise EmptyText("perplexity of empty text")
    toks = tokenize(text) + [EOS]
    n = lm.order - 1
    probs = [lm.prob(w, toks[max(0, i - n):i]) for i, w in enumerate(toks)]
    if min(probs) <= 0.0:
        return math.inf
    if max(probs) == min(probs):
        # geometric mean of equal terms: 1/p, taken exactly
        return float(1 / lm.prob_exact(toks[0], ()))
    return math.exp(-math.fsum(math.log(p) for p in probs) / len(toks))


def ppl_normalized(lm, candidate: str, originals: Sequence[str]) -> float:
    if not originals:
        raise ValueError("ppl_normalized needs at least one original")
    ppl = lm.perplexity if hasattr(lm, "perplexity") else lm
    base = math.fsum(ppl(t) for t in originals) / len(originals)
    return ppl(candidate) / base


class ExternalScorer:
    """Adapter for an external perplexity scorer (e.g. a fine-tuned neural LM).

    ``fn`` maps a text to its perplexity; it is expected to be deterministic.
    """

    def __init__(self, fn: Callable[[str], float]):
        self.fn = fn

    def perplexity(self, text: str) -> float:
        if not text.strip():
            raise EmptyText("perplexity of empty text")
        return float(self.fn(text))


# --- KL over PPL ---------------------------------------------------------

def kl_divergence(p_counts: Sequence[float], q_counts: Sequence[float],
                  eps: float = KL_EPS) -> float:
    """KL(P || Q) of two histograms: normalise, add ``eps`` per bin, renormalise."""
    p = np.asarray(p_counts, dtype=float)
    q = np.asarray(q_counts, dtype=float)
    if p.shape != q.shape or p.sum() <= 0 or q.sum() <= 0:
        raise ValueError("histograms need matching shapes and positive mass")
    p = p / p.sum() + eps
    q = q / q.sum() + eps
    p /= p.sum()
    q /= q.sum()
    return max(0.0, float(np.sum(p * np.log(p / q))))


def kl_over_ppl(p_scores: Sequence[float], q_scores: Sequence[float],
                n_bins: int = DEFAULT_BINS, eps: float = KL_EPS) -> float:
    """KL(P || Q) between log-PPL histograms on shared bins, with epsilon smoothing.

    P is the transformed-text scores, Q the original-text scores.
    """
    if len(p_scores) == 0 or len(q_scores) == 0:
        raise ValueError("kl_over_ppl needs non-empty score lists")
    p_log = np.log(np.asarray(p_scores, dtype=float))
    q_log = np.log(np.asarray(q_scores, dtype=float))
    if not (np.all(np.isfinite(p_log)) and np.all(np.isfinite(q_log))):
        raise ValueError("perplexity scores must be finite and positive")
    lo = min(p_log.min(), q_log.min())
    hi = max(p_log.max(), q_log.max())
    if hi <= lo:
        return 0.0
    edges = np.linspace(lo, hi, n_bins + 1)
    p = np.histogram(p_log, bins=edges)[0]
    q = np.histogram(q_log, bins=edges)[0]
    return kl_divergence(p, q, eps)


# --- classification ------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_outcomes(cls, outcomes: Iterable[tuple[bool, bool]]) -> "ConfusionCounts":
        """Build from ``(predicted, actual)`` pairs."""
        c = Counter((bool(p), bool(a)) for p, a in outcomes)
        return cls(c[(True, True)], c[(True, False)], c[(False, False)], c[(False, True)])

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    degenerate: tuple[str, ...] = ()


def classification_metrics(counts: ConfusionCounts) -> ClassificationMetrics:
    if counts.total < 1:
        raise ValueError("classification_metrics needs at least one item")
    degenerate = []
    accuracy = (counts.tp + counts.tn) / counts.total
    if counts.tp + counts.fp:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if counts.tp + counts.fn:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    return ClassificationMetrics(accuracy, precision, recall, tuple(degenerate))


# --- combined report -----------------------------------------------------

@dataclass(frozen=True)
class MetricReport:
    sim: float
    ppl: float
    ppl_norm: float
    kl: float
    n_texts: int

    def __post_init__(self):
        if self.kl < 0:
            raise ValueError("kl must be non-negative")
        if not -1e-12 <= self.sim <= 1 + 1e-12:
            raise ValueError("sim outside [0, 1]")

    def to_dict(self) -> dict:
        return {"sim": self.sim, "ppl": self.ppl, "ppl_norm": self.ppl_norm,
                "kl": self.kl, "n_texts": self.n_texts}


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


class MetricEngine:
    """Distance function d(.) bound to one corpus.

    TF-IDF and the LM (or an external scorer) are fitted on every document in
    the corpus. Reports are aggregated over lists of ``(author_id, text)``
    pairs in the order given, so callers control determinism by ordering.
    """

    def __init__(self, originals: Mapping[str, Sequence[str]], n_bins: int = DEFAULT_BINS,
                 order: int = DEFAULT_ORDER, discount: float = DEFAULT_DISCOUNT,
                 scorer=None):
        self.originals = {a: list(ts) for a, ts in originals.items()}
        all_texts = [t for ts in self.originals.values() for t in ts]
        self.tfidf = fit_tfidf(all_texts)
        self.scorer = scorer if scorer is not None else train_lm(all_texts, order, discount)
        self.n_bins = n_bins
        self._ppl: dict[str, float] = {}
        self._centroids: dict[str, dict[int, float]] = {}
        self._lock = threading.Lock()

    @classmethod
    def for_corpus(cls, corpus, **kwargs) -> "MetricEngine":
        by_author = {a: [d.text for d in corpus.docs_by(a)] for a in corpus.author_ids}
        return cls({a: ts for a, ts in by_author.items() if ts}, **kwargs)

    def ppl(self, text: str) -> float:
        with self._lock:
            cached = self._ppl.get(text)
        if cached is None:
            cached = self.scorer.perplexity(text)
            with self._lock:
                self._ppl[text] = cached
        return cached

    def author_ppls(self, author_id: str) -> list[float]:
        return [self.ppl(t) for t in self.originals[author_id]]

    def sim_to_author(self, text: str, author_id: str) -> float:
        refs = self.originals[author_id]
        if len(refs) == 1:
            return sim(self.tfidf, text, refs)
        with self._lock:
            centroid = self._centroids.get(author_id)
        if centroid is None:
            centroid, _ = unit_centroid(self.tfidf, refs)
            with self._lock:
                self._centroids[author_id] = centroid
        if not text.strip():
            raise EmptyText("sim candidate is empty")
        return min(1.0, max(0.0, _dot(_unit(self.tfidf.weights(text)), centroid)))

    def report(self, outputs: Sequence[tuple[str, str]]) -> MetricReport:
        """d(outputs, D_a): SIM and normalised PPL against each text's author.

        KL is computed per author (that author's outputs against their
        originals) and averaged with weights proportional to output counts.
        """
        if not outputs:
            raise ValueError("report needs at least one output")
        sims, ppls, norms = [], [], []
        by_author: dict[str, list[float]] = {}
        for author, text in outputs:
            p = self.ppl(text)
            sims.append(self.sim_to_author(text, author))
            ppls.append(p)
            norms.append(p / _mean(self.author_ppls(author)))
            by_author.setdefault(author, []).append(p)
        kl = math.fsum(
            len(ps) * kl_over_ppl(ps, self.author_ppls(a), self.n_bins)
            for a, ps in by_author.items()
        ) / len(outputs)
        return MetricReport(_mean(sims), _mean(ppls), _mean(norms), kl, len(outputs))

    def compare(self, pairs: Sequence[tuple[str, str]]) -> MetricReport:
        """Distance between two sets of texts, paired as ``(reference, candidate)``."""
        if not pairs:
            raise ValueError("compare needs at least one pair")
        sims = [sim(self.tfidf, cand, [ref]) for ref, cand in pairs]
        ref_p = [self.ppl(ref) for ref, _ in pairs]
        cand_p = [self.ppl(cand) for _, cand in pairs]
        norms = [c / r for c, r in zip(cand_p, ref_p)]
        kl = kl_over_ppl(cand_p, ref_p, self.n_bins)
        return MetricReport(_mean(sims), _mean(cand_p), _mean(norms), kl, len(pairs))
