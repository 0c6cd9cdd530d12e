"""Deterministic synthetic corpora for offline runs and tests."""

from __future__ import annotations

import random

from .corpus import AuthorRecord, Corpus, Document

SHARED_WORDS = ("the", "and", "of", "to", "we", "our", "is", "that", "will", "in")

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ou")

_PERSONAS = (
    {"sex": "F", "academic_genre": "Humanities", "cefr": "B1_1", "country": "Singapore",
     "lang_env": "ESL"},
    {"sex": "M", "academic_genre": "Social Sciences", "cefr": "B2_0", "country": "Japan",
     "lang_env": "EFL"},
    {"sex": "F", "academic_genre": "Sciences & Tech.", "cefr": "A2_0", "country": "Thailand",
     "lang_env": "EFL"},
    {"sex": "M", "academic_genre": "Life Sciences", "cefr": "XX_0", "country": "USA",
     "lang_env": "NS"},
)


def _pseudo_words(rng: random.Random, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(rng.randint(2, 3)))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def synthetic_corpus(n_authors: int = 3, docs_per_author: int = 10, seed: int = 0,
                     vocab_per_author: int = 30, successors: int = 3,
                     min_words: int = 16, max_words: int = 32,
                     name: str = "synthetic") -> Corpus:
    """Each author writes by walking a private sparse Markov chain.

    Chains run over the author's own pseudo-words plus a few shared function
    words, so word bigrams are strongly author-specific while unigrams overlap
    a little across authors.
    """
    rng = random.Random(seed)
    taken = set(SHARED_WORDS)
    authors, docs = [], []
    for a in range(n_authors):
        aid = f"author{a + 1}"
        meta = dict(_PERSONAS[a % len(_PERSONAS)], name=f"Author {a + 1}")
        authors.append(AuthorRecord(aid, meta["name"], meta))
        states = _pseudo_words(rng, vocab_per_author, taken) + list(SHARED_WORDS)
        chain = {w: rng.sample(states, successors) for w in states}
        for j in range(docs_per_author):
            n_words = rng.randint(min_words, max_words)
            w = rng.choice(states)
            words, since_stop = [], 0
            for i in range(n_words):
                since_stop += 1
                end = i == n_words - 1 or (since_stop >= 5 and rng.random() < 0.2)
                words.append(w + ("." if end else ""))
                if end:
                    since_stop = 0
                w = rng.choice(chain[w])
            docs.append(Document.make(f"{aid}-d{j:03d}", aid, " ".join(words)))
    return Corpus(name, tuple(authors), tuple(docs))


def disjoint_groups(n_docs: int = 50, words_per_doc: int = 20, vocab_size: int = 15,
                    seed: int = 0) -> tuple[list[str], list[str], set[str], set[str]]:
    """Two document groups drawn from disjoint vocabularies."""
    rng = random.Random(seed)
    taken: set[str] = set()
    va, vb = _pseudo_words(rng, vocab_size, taken), _pseudo_words(rng, vocab_size, taken)
    ga = [" ".join(rng.choice(va) for _ in range(words_per_doc)) for _ in range(n_docs)]
    gb = [" ".join(rng.choice(vb) for _ in range(words_per_doc)) for _ in range(n_docs)]
    return ga, gb, set(va), set(vb)


def text_sidecar(*corpora: Corpus) -> dict[str, str]:
    """text -> author_id lookup used by oracle mock verifiers."""
    return {d.text: d.author_id for c in corpora for d in c.documents}
