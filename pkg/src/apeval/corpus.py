"""Author-labelled corpora, corpus statistics and context construction."""

from __future__ import annotations

import json
import random
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    DuplicateId,
    EmptyCorpus,
    InsufficientDocuments,
    MalformedRecord,
    NoAcceptedDocuments,
)
from .prompts import render_author_identification
from .textutil import split_sentences, word_count


@dataclass(frozen=True)
class AuthorRecord:
    author_id: str
    display_name: str
    metadata: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Document:
    doc_id: str
    author_id: str
    text: str
    word_count: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"document {self.doc_id!r} has empty text")
        if self.word_count != word_count(self.text):
            raise ValueError(f"document {self.doc_id!r}: word_count mismatch")

    @classmethod
    def make(cls, doc_id: str, author_id: str, text: str) -> "Document":
        return cls(doc_id, author_id, text, word_count(text))


@dataclass(frozen=True)
class Corpus:
    name: str
    authors: tuple[AuthorRecord, ...]
    documents: tuple[Document, ...]

    def __post_init__(self):
        ids = [a.author_id for a in self.authors]
        if len(set(ids)) != len(ids):
            raise DuplicateId("duplicate author_id in corpus")
        known = set(ids)
        for doc in self.documents:
            if doc.author_id not in known:
                raise ValueError(f"document {doc.doc_id!r} references unknown author")

    def author(self, author_id: str) -> AuthorRecord:
        for a in self.authors:
            if a.author_id == author_id:
                return a
        raise KeyError(author_id)

    def docs_by(self, author_id: str) -> list[Document]:
        return [d for d in self.documents if d.author_id == author_id]

    def doc(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.doc_id == doc_id:
                return d
        raise KeyError(doc_id)

    @property
    def author_ids(self) -> list[str]:
        return [a.author_id for a in self.authors]


class Purity(str, Enum):
    PERFECT = "perfect"
    NOISY = "noisy"


@dataclass(frozen=True)
class Context:
    """Exemplar writings (and optional persona) handed to a provider.

    ``contrast_docs`` holds writings by other authors; only the verification
    prompt shows them, and they do not take part in the purity check.
    """

    author_id: str
    sample_docs: tuple[Document, ...]
    metadata_text: str | None = None
    purity: Purity = Purity.PERFECT
    provenance: tuple[tuple[str, str], ...] = ()
    contrast_docs: tuple[Document, ...] = ()

    def __post_init__(self):
        if not self.provenance:
            object.__setattr__(
                self, "provenance", tuple((d.doc_id, d.author_id) for d in self.sample_docs)
            )
        ids = [d.doc_id for d in self.sample_docs]
        if len(set(ids)) != len(ids):
            raise ValueError("context sample_docs must be distinct")
        if self.purity is Purity.PERFECT and any(a != self.author_id for _, a in self.provenance):
            raise ValueError("perfect context contains a foreign document")

    def excludes(self, doc_id: str) -> bool:
        return all(d.doc_id != doc_id for d in self.sample_docs)

    def with_samples(self, docs: Iterable[Document], provenance=None) -> "Context":
        """Copy with the exemplars replaced (e.g. by transformed texts)."""
        docs = tuple(docs)
        prov = tuple(provenance) if provenance is not None else tuple(
            (d.doc_id, self.author_id) for d in docs
        )
        purity = Purity.NOISY if any(a != self.author_id for _, a in prov) else Purity.PERFECT
        return Context(self.author_id, docs, self.metadata_text, purity, prov, self.contrast_docs)

    def without_metadata(self) -> "Context":
        return Context(
            self.author_id, self.sample_docs, None, self.purity, self.provenance, self.contrast_docs
        )


@dataclass(frozen=True)
class CorpusStats:
    n_docs: int
    n_authors: int
    avg_doc_words: float
    avg_sentence_words: float
    avg_sentences_per_doc: float


def load_corpus(path: str | Path, name: str | None = None) -> Corpus:
    """Read a JSONL corpus: one ``{doc_id, author_id, text, metadata}`` record per line."""
    path = Path(path)
    authors: dict[str, dict[str, str]] = {}
    docs: list[Document] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise MalformedRecord(line_no, "record is not an object")
            for key in ("doc_id", "author_id", "text"):
                if not isinstance(rec.get(key), str):
                    raise MalformedRecord(line_no, f"missing or non-string field {key!r}")
            if not rec["text"].strip():
                raise MalformedRecord(line_no, "empty text")
            meta = rec.get("metadata") or {}
            if not isinstance(meta, dict):
                raise MalformedRecord(line_no, "metadata must be an object")
            if rec["doc_id"] in seen:
                raise DuplicateId(f"duplicate doc_id {rec['doc_id']!r} at line {line_no}")
            seen.add(rec["doc_id"])
            slot = authors.setdefault(rec["author_id"], {})
            for k, v in meta.items():
                slot.setdefault(str(k), str(v))
            docs.append(Document.make(rec["doc_id"], rec["author_id"], rec["text"]))
    if not docs:
        raise EmptyCorpus(f"no records in {path}")
    records = tuple(
        AuthorRecord(aid, meta.get("name", aid), dict(meta)) for aid, meta in authors.items()
    )
    return Corpus(name or path.stem, records, tuple(docs))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            rec = {
                "doc_id": doc.doc_id,
                "author_id": doc.author_id,
                "text": doc.text,
                "metadata": dict(corpus.author(doc.author_id).metadata),
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def corpus_stats(corpus: Corpus) -> CorpusStats:
    if not corpus.documents:
        raise EmptyCorpus(corpus.name)
    n = len(corpus.documents)
    words = sum(d.word_count for d in corpus.documents)
    sentences = sum(max(1, len(split_sentences(d.text))) for d in corpus.documents)
    return CorpusStats(
        n_docs=n,
        n_authors=len({d.author_id for d in corpus.documents}),
        avg_doc_words=words / n,
        avg_sentence_words=words / sentences,
        avg_sentences_per_doc=sentences / n,
    )


def _exclusions(exclude) -> set[str]:
    if exclude is None:
        return set()
    if isinstance(exclude, str):
        return {exclude}
    return set(exclude)


def persona_for(corpus: Corpus, author_id: str) -> str | None:
    text = render_author_identification(corpus.author(author_id).metadata)
    return text or None


def build_context(
    corpus: Corpus,
    author_id: str,
    k: int,
    include_metadata: bool = False,
    exclude_doc=None,
    seed: int = 0,
    n_contrast: int = 0,
) -> Context:
    """Sample ``k`` genuine exemplars for ``author_id``.

    ``exclude_doc`` may be a single doc_id or a collection of them. With
    ``n_contrast > 0`` that many writings by other authors are drawn as well.
    """
    excluded = _exclusions(exclude_doc)
    pool = [d for d in corpus.docs_by(author_id) if d.doc_id not in excluded]
    if len(pool) < k:
        raise InsufficientDocuments(author_id, k, len(pool))
    rng = random.Random(seed)
    samples = tuple(rng.sample(pool, k))
    contrast: tuple[Document, ...] = ()
    if n_contrast:
        others = [
            d for d in corpus.documents if d.author_id != author_id and d.doc_id not in excluded
        ]
        if len(others) < n_contrast:
            raise InsufficientDocuments("<others>", n_contrast, len(others))
        contrast = tuple(rng.sample(others, n_contrast))
    meta = persona_for(corpus, author_id) if include_metadata else None
    return Context(author_id, samples, meta, Purity.PERFECT, contrast_docs=contrast)


def sample_candidate_pool(
    corpus: Corpus,
    author_id: str,
    n_author: int,
    n_imposter: int,
    seed: int = 0,
    exclude=None,
) -> list[tuple[Document, bool]]:
    """Labelled pool of ``n_author`` genuine and ``n_imposter`` foreign documents."""
    excluded = _exclusions(exclude)
    own = [d for d in corpus.docs_by(author_id) if d.doc_id not in excluded]
    others = [d for d in corpus.documents if d.author_id != author_id and d.doc_id not in excluded]
    if len(own) < n_author:
        raise InsufficientDocuments(author_id, n_author, len(own))
    if len(others) < n_imposter:
        raise InsufficientDocuments("<imposters>", n_imposter, len(others))
    rng = random.Random(seed)
    pool = [(d, True) for d in rng.sample(own, n_author)]
    pool += [(d, False) for d in rng.sample(others, n_imposter)]
    rng.shuffle(pool)
    return pool


def build_noisy_context(
    pool: list[tuple[Document, bool]],
    av_outcomes: Mapping[str, bool],
    author_id: str,
    metadata_text: str | None = None,
    contrast_docs: tuple[Document, ...] = (),
) -> Context:
    """Keep every pool document the verifier accepted as written by ``author_id``."""
    missing = [d.doc_id for d, _ in pool if d.doc_id not in av_outcomes]
    if missing:
        raise KeyError(f"no verification outcome for {missing[:3]}")
    accepted = tuple(d for d, _ in pool if av_outcomes[d.doc_id])
    if not accepted:
        raise NoAcceptedDocuments(author_id)
    prov = tuple((d.doc_id, d.author_id) for d in accepted)
    purity = Purity.NOISY if any(a != author_id for _, a in prov) else Purity.PERFECT
    return Context(author_id, accepted, metadata_text, purity, prov, contrast_docs)
