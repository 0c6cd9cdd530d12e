"""Single-provider scoring of obfuscation, mimicking and verification, and judge
selection from those scores."""

from __future__ import annotations

import math
import random
from collections.abc import Sequence
from dataclasses import asdict, dataclass

from .corpus import Context, Corpus, Document, build_context
from .errors import IncompleteScores
from .prompts import Verdict
from .providers import ProviderHandle
from .stylometrics import MetricEngine, MetricReport
from .tasks import TaskRunner, TransformRecord, parallel_map
from .textutil import derive_seed

TASKS = ("AO", "AM", "AV")


@dataclass(frozen=True)
class IsolationScore:
    provider_id: str
    task_kind: str
    ppl_norm: float | None = None
    sim: float | None = None
    accuracy: float | None = None
    n_evaluated: int = 0

    def __post_init__(self):
        if self.task_kind == "AV" and self.accuracy is None:
            raise ValueError("AV scores carry accuracy")
        if self.task_kind in ("AO", "AM") and (self.ppl_norm is None or self.sim is None):
            raise ValueError("AO/AM scores carry ppl_norm and sim")


@dataclass(frozen=True)
class JudgeAssignment:
    ao_judge: str
    am_judge: str
    av_judge: str
    basis: tuple[IsolationScore, ...] | str

    def to_dict(self) -> dict:
        basis = self.basis if isinstance(self.basis, str) else [asdict(s) for s in self.basis]
        return {"ao": self.ao_judge, "am": self.am_judge, "av": self.av_judge, "basis": basis}

    @classmethod
    def from_dict(cls, d: dict) -> "JudgeAssignment":
        basis = d.get("basis", "override")
        if not isinstance(basis, str):
            basis = tuple(IsolationScore(**s) for s in basis)
        return cls(d["ao"], d["am"], d["av"], basis)


@dataclass(frozen=True)
class AvOutcome:
    doc_id: str
    claimed_author: str
    true_author: str
    verdict: Verdict

    @property
    def correct(self) -> bool:
        return self.verdict.accepted == (self.true_author == self.claimed_author)


def run_ao(runner: TaskRunner, engine: MetricEngine, provider: ProviderHandle, doc: Document,
           context: Context) -> tuple[TransformRecord, MetricReport]:
    if context.author_id != doc.author_id or not context.excludes(doc.doc_id):
        raise ValueError("context must belong to the doc's author and exclude the doc")
    rec = runner.obfuscate(provider, doc.text, context, doc_id=doc.doc_id)
    return rec, engine.report([(doc.author_id, rec.output_text)])


def run_am(runner: TaskRunner, engine: MetricEngine, provider: ProviderHandle, doc: Document,
           context: Context) -> tuple[TransformRecord, MetricReport]:
    if context.author_id != doc.author_id or not context.excludes(doc.doc_id):
        raise ValueError("context must belong to the doc's author and exclude the doc")
    rec = runner.mimic(provider, doc.text, context, doc_id=doc.doc_id)
    return rec, engine.report([(doc.author_id, rec.output_text)])


def run_av(runner: TaskRunner, provider: ProviderHandle, doc: Document, context: Context,
           true_author: str) -> AvOutcome:
    verdict = runner.verify(provider, doc.text, context)
    return AvOutcome(doc.doc_id, context.author_id, true_author, verdict)


def doc_context(corpus: Corpus, doc: Document, k: int, include_metadata: bool, seed: int,
                n_contrast: int = 0, author_id: str | None = None) -> Context:
    """Context for ``author_id`` (default: the doc's author) that never contains ``doc``."""
    author = author_id or doc.author_id
    return build_context(corpus, author, k, include_metadata, exclude_doc=doc.doc_id,
                         seed=derive_seed(seed, "ctx", doc.doc_id, author), n_contrast=n_contrast)


def av_probe_set(corpus: Corpus, docs: Sequence[Document], k: int, include_metadata: bool,
                 seed: int, n_contrast: int = 5) -> list[tuple[Document, Context]]:
    """Balanced probes: each doc once under its own author, once under an imposter claim."""
    probes = []
    for doc in docs:
        probes.append((doc, doc_context(corpus, doc, k, include_metadata, seed, n_contrast)))
        others = sorted(a for a in corpus.author_ids if a != doc.author_id)
        claimed = random.Random(derive_seed(seed, "imposter", doc.doc_id)).choice(others)
        probes.append((doc, doc_context(corpus, doc, k, include_metadata, seed, n_contrast,
                                        author_id=claimed)))
    return probes


@dataclass
class IsolationCell:
    """One corpus worth of isolation work."""

    runner: TaskRunner
    engine: MetricEngine
    docs: Sequence[Document]


def evaluate_provider(cells: Sequence[IsolationCell], provider: ProviderHandle, k: int = 5,
                      include_metadata: bool = True, seed: int = 0,
                      n_contrast: int = 5) -> list[IsolationScore]:
    """AO, AM and AV rows for one provider, pooled over every cell's documents."""
    ao_reports: list[MetricReport] = []
    am_reports: list[MetricReport] = []
    outcomes: list[AvOutcome] = []
    workers = provider.max_in_flight
    for cell in cells:
        corpus = cell.runner.corpus

        def one(doc: Document):
            ctx = doc_context(corpus, doc, k, include_metadata, seed)
            return (run_ao(cell.runner, cell.engine, provider, doc, ctx)[1],
                    run_am(cell.runner, cell.engine, provider, doc, ctx)[1])

        for ao, am in parallel_map(one, list(cell.docs), workers):
            ao_reports.append(ao)
            am_reports.append(am)
        probes = av_probe_set(corpus, cell.docs, k, include_metadata, seed, n_contrast)
        outcomes += parallel_map(
            lambda p: run_av(cell.runner, provider, p[0], p[1], p[0].author_id), probes, workers
        )

    def mean(xs):
        return math.fsum(xs) / len(xs)

    pid = provider.provider_id
    return [
        IsolationScore(pid, "AO", mean([r.ppl_norm for r in ao_reports]),
                       mean([r.sim for r in ao_reports]), None, len(ao_reports)),
        IsolationScore(pid, "AM", mean([r.ppl_norm for r in am_reports]),
                       mean([r.sim for r in am_reports]), None, len(am_reports)),
        IsolationScore(pid, "AV", None, None, mean([o.correct for o in outcomes]),
                       len(outcomes)),
    ]


def select_judges(scores: Sequence[IsolationScore], am_rank: str = "plain") -> JudgeAssignment:
    """Pick the best provider per task.

    AO: highest ppl_norm, then lowest sim. AM: lowest ppl_norm (or, with
    ``am_rank="distance"``, smallest ``|ppl_norm - 1|``), then highest sim.
    AV: highest accuracy. Remaining ties go to the lexicographically first id.
    """
    by_task: dict[str, dict[str, IsolationScore]] = {t: {} for t in TASKS}
    for s in scores:
        by_task.setdefault(s.task_kind, {})[s.provider_id] = s
    providers = set().union(*(set(v) for v in by_task.values()))
    missing = [(p, t) for p in sorted(providers) for t in TASKS if p not in by_task[t]]
    if not providers or missing:
        raise IncompleteScores(f"missing isolation rows: {missing}")

    if am_rank == "distance":
        def am_key(s):
            return (abs(s.ppl_norm - 1.0), -s.sim, s.provider_id)
    elif am_rank == "plain":
        def am_key(s):
            return (s.ppl_norm, -s.sim, s.provider_id)
    else:
        raise ValueError(f"unknown am_rank {am_rank!r}")

    ao = min(by_task["AO"].values(), key=lambda s: (-s.ppl_norm, s.sim, s.provider_id))
    am = min(by_task["AM"].values(), key=am_key)
    av = min(by_task["AV"].values(), key=lambda s: (-s.accuracy, s.provider_id))
    basis = tuple(sorted(scores, key=lambda s: (s.provider_id, TASKS.index(s.task_kind))))
    return JudgeAssignment(ao.provider_id, am.provider_id, av.provider_id, basis)
