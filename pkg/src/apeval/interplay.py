"""Pairwise interdependency between obfuscation, mimicking and verification.

Direction names read "actor -> judge": OM is an obfuscating actor measured by
the mimicking judge, VO a verifying actor (filtering exemplars) measured by
the obfuscation judge, and so on.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .corpus import (
    Context,
    Corpus,
    Document,
    build_context,
    build_noisy_context,
    persona_for,
    sample_candidate_pool,
)
from .errors import NoAcceptedDocuments
from .isolation import JudgeAssignment, doc_context
from .prompts import TaskKind
from .providers import ProviderHandle
from .stylometrics import ConfusionCounts, MetricEngine, MetricReport, classification_metrics
from .tasks import TaskRunner, TransformRecord, parallel_map, transformed_docs
from .textutil import derive_seed

DIRECTIONS = ("OM", "OV", "MO", "MV", "VO", "VM")
ACCURACY_DIRECTIONS = ("OV", "MV")


@dataclass(frozen=True)
class PairwiseResult:
    direction: str
    actor_provider: str
    judge_provider: str
    with_metadata: bool
    dataset: str
    report: MetricReport | None = None
    accuracy: float | None = None
    n: int = 0

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.direction in ACCURACY_DIRECTIONS and self.accuracy is None:
            raise ValueError(f"{self.direction} rows carry accuracy")


@dataclass(frozen=True)
class VerifierFilter:
    """Outcome of letting a verifier pick an author's exemplars from a mixed pool."""

    author_id: str
    pool: tuple[tuple[Document, bool], ...]
    accepted: Mapping[str, bool]
    counts: ConfusionCounts
    context: Context | None


def transform_samples(runner: TaskRunner, actor: ProviderHandle, kind: TaskKind | str,
                      context: Context) -> list[TransformRecord]:
    """Transform each exemplar, using the remaining exemplars as its own context."""
    if len(context.sample_docs) < 2:
        raise ValueError("transforming exemplars needs a context of at least 2 samples")
    out = []
    for s in context.sample_docs:
        rest = context.with_samples([d for d in context.sample_docs if d.doc_id != s.doc_id])
        out.append(runner.transform(actor, kind, s.text, rest, doc_id=s.doc_id))
    return out


def _judge_context(context: Context, records: Sequence[TransformRecord]) -> Context:
    return context.with_samples(transformed_docs(records, context.author_id))


def om_influence(runner, engine, actor, judge_am, doc, context):
    """Mimic ``doc`` from the actor's obfuscated exemplars; d(mimic, D_a)."""
    obf = transform_samples(runner, actor, TaskKind.OBFUSCATE, context)
    rec = runner.mimic(judge_am, doc.text, _judge_context(context, obf), doc_id=doc.doc_id)
    return rec, engine.report([(doc.author_id, rec.output_text)])


def ov_influence(runner, actor, judge_av, doc, context) -> bool:
    """Does the verifier still attribute ``doc`` given only obfuscated exemplars?"""
    obf = transform_samples(runner, actor, TaskKind.OBFUSCATE, context)
    return runner.verify(judge_av, doc.text, _judge_context(context, obf)).accepted


def mo_influence(runner, engine, actor, judge_ao, doc, context):
    """Obfuscate ``doc`` against the actor's mimicked exemplars; d(obfuscation, D_a)."""
    mim = transform_samples(runner, actor, TaskKind.MIMIC, context)
    rec = runner.obfuscate(judge_ao, doc.text, _judge_context(context, mim), doc_id=doc.doc_id)
    return rec, engine.report([(doc.author_id, rec.output_text)])


def mv_influence(runner, actor, judge_av, doc, context) -> bool:
    mim = transform_samples(runner, actor, TaskKind.MIMIC, context)
    return runner.verify(judge_av, doc.text, _judge_context(context, mim)).accepted


def _contrast(runner, judge, kind, doc, perfect_ctx, noisy_ctx):
    rp = runner.transform(judge, kind, doc.text, perfect_ctx, doc_id=doc.doc_id)
    rn = runner.transform(judge, kind, doc.text, noisy_ctx, doc_id=doc.doc_id)
    return rp, rn


def vo_influence(runner, engine, judge_ao, doc, perfect_ctx, noisy_ctx):
    """d(judge obfuscation with clean exemplars, judge obfuscation with filtered ones)."""
    rp, rn = _contrast(runner, judge_ao, TaskKind.OBFUSCATE, doc, perfect_ctx, noisy_ctx)
    return (rp, rn), engine.compare([(rp.output_text, rn.output_text)])


def vm_influence(runner, engine, judge_am, doc, perfect_ctx, noisy_ctx):
    rp, rn = _contrast(runner, judge_am, TaskKind.MIMIC, doc, perfect_ctx, noisy_ctx)
    return (rp, rn), engine.compare([(rp.output_text, rn.output_text)])


def verifier_filter(runner: TaskRunner, actor: ProviderHandle, author_id: str, k: int,
                    n_author: int, n_imposter: int, include_metadata: bool, seed: int,
                    n_contrast: int = 5) -> VerifierFilter:
    """Sample a mixed pool, let ``actor`` verify each member, keep the accepted ones.

    Pool members are verified against a reference context drawn from the
    author's remaining documents, so no member is compared with itself.
    """
    corpus = runner.corpus
    pool = sample_candidate_pool(corpus, author_id, n_author, n_imposter,
                                 seed=derive_seed(seed, "pool", author_id))
    pool_ids = [d.doc_id for d, _ in pool]
    reference = build_context(corpus, author_id, k, include_metadata, exclude_doc=pool_ids,
                              seed=derive_seed(seed, "pool-ref", author_id),
                              n_contrast=n_contrast)
    verdicts = parallel_map(lambda item: runner.verify(actor, item[0].text, reference).accepted,
                            pool, actor.max_in_flight)
    accepted = {d.doc_id: v for (d, _), v in zip(pool, verdicts)}
    counts = ConfusionCounts.from_outcomes(
        (accepted[d.doc_id], label) for d, label in pool
    )
    meta = persona_for(corpus, author_id) if include_metadata else None
    try:
        ctx = build_noisy_context(pool, accepted, author_id, meta)
    except NoAcceptedDocuments:
        ctx = None
    return VerifierFilter(author_id, tuple(pool), accepted, counts, ctx)


@dataclass(frozen=True)
class PrecisionRecallRow:
    actor: str
    dataset: str
    with_metadata: bool
    counts: ConfusionCounts

    @property
    def metrics(self):
        return classification_metrics(self.counts)


@dataclass
class PairwiseCell:
    runner: TaskRunner
    engine: MetricEngine
    docs: Sequence[Document]
    dataset: str = field(default="")


def _mean(xs):
    return math.fsum(xs) / len(xs)


def run_pairwise(cells: Sequence[PairwiseCell], actors: Sequence[ProviderHandle],
                 providers: Mapping[str, ProviderHandle], judges: JudgeAssignment,
                 with_metadata: Sequence[bool] = (True, False), k: int = 5,
                 n_author: int = 10, n_imposter: int = 10, seed: int = 0,
                 n_contrast: int = 5) -> tuple[list[PairwiseResult], list[PrecisionRecallRow]]:
    """All six directions for every actor, dataset and metadata setting.

    Rows come out grouped by dataset, then flag, then direction, then actor.
    Per-document work runs concurrently; aggregation folds in doc_id order.
    """
    judge_ao, judge_am, judge_av = (providers[judges.ao_judge], providers[judges.am_judge],
                                    providers[judges.av_judge])
    results: list[PairwiseResult] = []
    pr_rows: list[PrecisionRecallRow] = []
    for cell in cells:
        runner, engine = cell.runner, cell.engine
        corpus: Corpus = runner.corpus
        dataset = cell.dataset or corpus.name
        docs = sorted(cell.docs, key=lambda d: d.doc_id)
        authors = sorted({d.author_id for d in docs})
        for flag in with_metadata:
            ctxs = {d.doc_id: doc_context(corpus, d, k, flag, seed) for d in docs}
            vctxs = {d.doc_id: doc_context(corpus, d, k, flag, seed, n_contrast) for d in docs}
            rows: dict[str, list[PairwiseResult]] = {name: [] for name in DIRECTIONS}
            for actor in actors:
                workers = max(actor.max_in_flight, 1)

                def judged(d: Document, actor_kind, judge, judge_kind):
                    trans = transform_samples(runner, actor, actor_kind, ctxs[d.doc_id])
                    rec = runner.transform(judge, judge_kind, d.text,
                                           _judge_context(ctxs[d.doc_id], trans),
                                           doc_id=d.doc_id)
                    ok = runner.verify(judge_av, d.text,
                                       _judge_context(vctxs[d.doc_id], trans)).accepted
                    return (d.author_id, rec.output_text), ok

                om = parallel_map(lambda d: judged(d, TaskKind.OBFUSCATE, judge_am,
                                                   TaskKind.MIMIC), docs, workers)
                mo = parallel_map(lambda d: judged(d, TaskKind.MIMIC, judge_ao,
                                                   TaskKind.OBFUSCATE), docs, workers)
                base = dict(actor_provider=actor.provider_id, with_metadata=flag,
                            dataset=dataset, n=len(docs))
                rows["OM"].append(PairwiseResult(
                    "OM", judge_provider=judge_am.provider_id,
                    report=engine.report([o for o, _ in om]), **base))
                rows["OV"].append(PairwiseResult(
                    "OV", judge_provider=judge_av.provider_id,
                    accuracy=_mean([ok for _, ok in om]), **base))
                rows["MO"].append(PairwiseResult(
                    "MO", judge_provider=judge_ao.provider_id,
                    report=engine.report([o for o, _ in mo]), **base))
                rows["MV"].append(PairwiseResult(
                    "MV", judge_provider=judge_av.provider_id,
                    accuracy=_mean([ok for _, ok in mo]), **base))

                filters = {a: verifier_filter(runner, actor, a, k, n_author, n_imposter, flag,
                                              seed, n_contrast) for a in authors}
                total = ConfusionCounts()
                for a in authors:
                    total = total + filters[a].counts
                pr_rows.append(PrecisionRecallRow(actor.provider_id, dataset, flag, total))

                def filtered(d: Document):
                    noisy = filters[d.author_id].context
                    keep = [x for x in noisy.sample_docs if x.doc_id != d.doc_id] if noisy else []
                    if not keep:
                        return None
                    prov = [p for p in noisy.provenance if p[0] != d.doc_id]
                    noisy = noisy.with_samples(keep, prov)
                    perfect = ctxs[d.doc_id]
                    (po, no), _ = vo_influence(runner, engine, judge_ao, d, perfect, noisy)
                    (pm, nm), _ = vm_influence(runner, engine, judge_am, d, perfect, noisy)
                    return (po.output_text, no.output_text), (pm.output_text, nm.output_text)

                ver = [v for v in parallel_map(filtered, docs, workers) if v is not None]
                for name, idx, judge in (("VO", 0, judge_ao), ("VM", 1, judge_am)):
                    pairs = [v[idx] for v in ver]
                    rows[name].append(PairwiseResult(
                        name, actor.provider_id, judge.provider_id, flag, dataset,
                        engine.compare(pairs) if pairs else None, None, len(pairs)))
            for name in DIRECTIONS:
                results.extend(rows[name])
    return results, pr_rows
