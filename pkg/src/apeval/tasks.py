"""Single-call task wrappers (obfuscate / mimic / verify) with lineage records."""

from __future__ import annotations

import threading
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import TypeVar

from .corpus import Context, Corpus, Document
from .prompts import DEFAULT_CHAR_BUDGET, TaskKind, Verdict, render_prompt, verdict_or_reject
from .providers import GenerationCache, ProviderHandle, generate
from .textutil import sha256_hex

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class TransformRecord:
    task_kind: str
    provider_id: str
    doc_id: str
    author_id: str
    input_text: str
    output_text: str
    request_hash: str
    step_index: int = 0
    parent_hash: str = ""
    context_doc_ids: tuple[str, ...] = ()
    from_cache: bool = False

    @property
    def output_hash(self) -> str:
        return sha256_hex(self.output_text)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["context_doc_ids"] = list(self.context_doc_ids)
        d.pop("from_cache")
        d["output_hash"] = self.output_hash
        return d


def parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """``map`` with up to ``workers`` threads; results keep input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def transformed_docs(records: Iterable[TransformRecord], author_id: str) -> tuple[Document, ...]:
    """Wrap transform outputs as pseudo-documents so they can serve as exemplars."""
    return tuple(
        Document.make(f"{r.doc_id}~{r.task_kind}~{r.provider_id}", author_id, r.output_text)
        for r in records
    )


class TaskRunner:
    """Binds a corpus to a cache and renders/executes task prompts."""

    def __init__(self, corpus: Corpus, cache: GenerationCache, offline: bool = False,
                 target_words: int | None = None, char_budget: int = DEFAULT_CHAR_BUDGET,
                 sleep: Callable[[float], None] = time.sleep):
        self.corpus = corpus
        self.cache = cache
        self.offline = offline
        self.target_words = target_words
        self.char_budget = char_budget
        self.sleep = sleep
        self.records: list[TransformRecord] = []
        self._lock = threading.Lock()
        self._targets: dict[str, int] = {}

    def target_for(self, author_id: str) -> int:
        if self.target_words:
            return self.target_words
        if author_id not in self._targets:
            docs = self.corpus.docs_by(author_id)
            self._targets[author_id] = max(1, round(sum(d.word_count for d in docs) / len(docs)))
        return self._targets[author_id]

    def _author_name(self, author_id: str) -> str:
        try:
            return self.corpus.author(author_id).display_name
        except KeyError:
            return author_id

    def transform(self, provider: ProviderHandle, kind: TaskKind | str, text: str,
                  context: Context, doc_id: str = "", step_index: int = 0,
                  parent_text: str | None = None) -> TransformRecord:
        kind = TaskKind(kind)
        prompt = render_prompt(kind, context, text, self.target_for(context.author_id),
                               self._author_name(context.author_id), self.char_budget)
        gen = generate(provider, prompt, self.cache, self.offline, self.sleep)
        rec = TransformRecord(
            task_kind=kind.value,
            provider_id=provider.provider_id,
            doc_id=doc_id,
            author_id=context.author_id,
            input_text=text,
            output_text=gen.output_text.strip(),
            request_hash=gen.request_hash,
            step_index=step_index,
            parent_hash=sha256_hex(parent_text if parent_text is not None else text),
            context_doc_ids=tuple(d.doc_id for d in context.sample_docs),
            from_cache=gen.retrieved_from_cache,
        )
        with self._lock:
            self.records.append(rec)
        return rec

    def obfuscate(self, provider, text, context, **kw) -> TransformRecord:
        return self.transform(provider, TaskKind.OBFUSCATE, text, context, **kw)

    def mimic(self, provider, text, context, **kw) -> TransformRecord:
        return self.transform(provider, TaskKind.MIMIC, text, context, **kw)

    def verify(self, provider: ProviderHandle, text: str, context: Context) -> Verdict:
        """Ask whether ``text`` was written by ``context.author_id``."""
        prompt = render_prompt(TaskKind.VERIFY, context, text, None,
                               self._author_name(context.author_id), self.char_budget)
        gen = generate(provider, prompt, self.cache, self.offline, self.sleep)
        return verdict_or_reject(gen.output_text)
