"""Stage entry points: isolate, pairwise, cycle, topics, report."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import random
import tempfile
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .config import ExperimentConfig
from .corpus import Corpus, Document, load_corpus
from .cycle import (
    Trajectory,
    read_rounds,
    run_cycles,
    summarize_trajectories,
    write_rounds,
)
from .detector import DetectorHandle, MockDetector
from .errors import (
    ApevalError,
    EmptyVocabulary,
    MissingJudges,
    MissingRounds,
    TooFewDocuments,
)
from .interplay import PairwiseCell, run_pairwise
from .isolation import IsolationCell, JudgeAssignment, evaluate_provider, select_judges
from .providers import GenerationCache, ProviderHandle, make_mock_provider
from .stylometrics import MetricEngine, classification_metrics
from .synthetic import synthetic_corpus, text_sidecar
from .tasks import TaskRunner, parallel_map
from .textutil import derive_seed
from .topic_model import fit_lda, prepare_docs, top_words, topic_drift

log = logging.getLogger(__name__)

STAGES = ("isolate", "pairwise", "cycle", "topics", "report")

ISOLATION_HEADER = ("provider", "task", "ppl_norm", "sim", "accuracy", "n")
PAIRWISE_HEADER = ("direction", "actor", "judge", "dataset", "with_metadata", "kl", "sim",
                   "acc", "n")
PR_HEADER = ("actor", "dataset", "with_metadata", "tp", "fp", "tn", "fn", "precision",
             "recall")
CYCLES_HEADER = ("doc_id", "dataset", "with_metadata", "cycle", "step_kind", "step_order",
                 "acc", "kl", "sim", "human_likeness")
TOPICS_HEADER = ("dataset", "with_metadata", "round", "step", "topic_id", "rank", "word",
                 "probability")
DRIFT_HEADER = ("dataset", "with_metadata", "round", "step", "drift", "n_docs")

KL_BASIS = ("KL compares histograms of per-text perplexities: transformed texts against "
            "the documents of the same author, weighted by output count across authors.")


# --- formatting ------------------------------------------------------------

def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    n = 0
    for row in rows:
        w.writerow([fmt(v) for v in row])
        n += 1
    _atomic_write(path, buf.getvalue())
    return n


def write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def read_csv(path: Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# --- workspace -------------------------------------------------------------

@dataclass
class Workspace:
    """Everything built from a config once per invocation."""

    config: ExperimentConfig
    offline: bool
    cache: GenerationCache
    corpora: dict[str, Corpus]
    providers: dict[str, ProviderHandle]
    runners: dict[str, TaskRunner] = field(default_factory=dict)
    engines: dict[str, MetricEngine] = field(default_factory=dict)
    eval_docs: dict[str, list[Document]] = field(default_factory=dict)

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self.config.seed, stage)

    def actors(self) -> list[ProviderHandle]:
        return [self.providers[p] for p in self.config.actor_ids]

    def engine(self, name: str) -> MetricEngine:
        if name not in self.engines:
            m = self.config.metrics
            self.engines[name] = MetricEngine.for_corpus(
                self.corpora[name], n_bins=m.n_bins, order=m.order, discount=m.discount)
        return self.engines[name]


def _load_corpus(spec) -> Corpus:
    if spec.path is not None:
        return load_corpus(spec.path, spec.name)
    return synthetic_corpus(name=spec.name, **dict(spec.synthetic))


def _eval_docs(corpus: Corpus, per_author: int | None, seed: int) -> list[Document]:
    out = []
    for a in corpus.author_ids:
        docs = sorted(corpus.docs_by(a), key=lambda d: d.doc_id)
        if per_author is not None and per_author < len(docs):
            rng = random.Random(derive_seed(seed, "eval-docs", corpus.name, a))
            docs = sorted(rng.sample(docs, per_author), key=lambda d: d.doc_id)
        out.extend(docs)
    return sorted(out, key=lambda d: d.doc_id)


def build_workspace(config: ExperimentConfig, offline: bool = False) -> Workspace:
    corpora = {c.name: _load_corpus(c) for c in config.corpora}
    sidecar = text_sidecar(*corpora.values())
    providers: dict[str, ProviderHandle] = {}
    for p in config.providers:
        if p.mock is not None:
            accepted = [d.text for c in corpora.values() for d in c.documents
                        if d.doc_id in set(p.accepted_doc_ids)]
            providers[p.id] = make_mock_provider(p.mock, p.verify, p.id, sidecar, accepted,
                                                 p.max_in_flight)
        else:
            providers[p.id] = ProviderHandle(p.id, p.endpoint, p.model, p.max_in_flight,
                                             p.temperature)
    cache = GenerationCache(config.cache_dir)
    ws = Workspace(config, offline, cache, corpora, providers)
    for name, corpus in corpora.items():
        ws.runners[name] = TaskRunner(corpus, cache, offline, config.target_words,
                                      config.char_budget)
        ws.eval_docs[name] = _eval_docs(corpus, config.eval_docs_per_author, config.seed)
    return ws


# --- run directories and manifest -----------------------------------------

def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def new_run_dir(output_dir: Path, stage: str) -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
    base = output_dir / f"run-{stamp}-{stage}"
    path, i = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}.{i}")
        i += 1
    path.mkdir()
    return path


def prior_runs(output_dir: Path, exclude: Path | None = None) -> list[Path]:
    if not output_dir.is_dir():
        return []
    runs = sorted((p for p in output_dir.iterdir() if p.is_dir() and p.name.startswith("run-")),
                  reverse=True)
    return [p for p in runs if exclude is None or p.resolve() != exclude.resolve()]


def _manifest_hash(run: Path) -> str | None:
    try:
        return json.loads((run / "manifest.json").read_text(encoding="utf-8"))["config_hash"]
    except (OSError, KeyError, ValueError):
        return None


def find_prior(output_dir: Path, relpath: str, config_hash: str | None = None,
               exclude: Path | None = None) -> Path | None:
    """Latest earlier run containing ``relpath``; same-config runs are preferred."""
    runs = [r for r in prior_runs(output_dir, exclude) if (r / relpath).exists()]
    if config_hash is not None:
        same = [r for r in runs if _manifest_hash(r) == config_hash]
        if same:
            return same[0]
    return runs[0] if runs else None


@dataclass
class Run:
    """One invocation's output directory plus its manifest under construction."""

    ws: Workspace
    stage: str
    path: Path
    started: str = field(default_factory=_now)
    stages: dict[str, bool] = field(default_factory=dict)
    outputs: dict[str, dict] = field(default_factory=dict)
    sources: dict[str, str] = field(default_factory=dict)
    judges: JudgeAssignment | None = None

    @classmethod
    def start(cls, ws: Workspace, stage: str) -> "Run":
        ws.cache.reset_stats()
        return cls(ws, stage, new_run_dir(ws.config.output_dir, stage))

    def emit_csv(self, name: str, header, rows, factors: dict[str, int]) -> int:
        rows = list(rows)
        n = write_csv(self.path / name, header, rows)
        expected = 1
        for v in factors.values():
            expected *= v
        self.outputs[name] = {"rows": n, "factors": factors, "expected_rows": expected}
        return n

    def finish(self) -> Path:
        lineage = sorted(
            {(r.doc_id, r.task_kind, r.provider_id, r.step_index, r.request_hash):
             r.to_dict() for runner in self.ws.runners.values() for r in runner.records}.items()
        )
        if lineage:
            _atomic_write(self.path / "lineage.jsonl", "".join(
                json.dumps(d, sort_keys=True, ensure_ascii=False) + "\n" for _, d in lineage))
        cfg = self.ws.config
        write_json(self.path / "manifest.json", {
            "config_hash": cfg.config_hash,
            "config": cfg.raw,
            "command": self.stage,
            "offline": self.ws.offline,
            "stages": self.stages,
            "cache": {"hits": self.ws.cache.hits, "misses": self.ws.cache.misses},
            "started": self.started,
            "finished": _now(),
            "outputs": self.outputs,
            "sources": self.sources,
            "metric_notes": {"kl": KL_BASIS},
        })
        return self.path


# --- stages ----------------------------------------------------------------

def _cells(ws: Workspace, cls):
    out = []
    for name in ws.corpora:
        kw = {"dataset": name} if cls is PairwiseCell else {}
        out.append(cls(ws.runners[name], ws.engine(name), ws.eval_docs[name], **kw))
    return out


def stage_isolate(run: Run) -> JudgeAssignment:
    ws, cfg = run.ws, run.ws.config
    seed = ws.stage_seed("isolate")
    cells = _cells(ws, IsolationCell)
    scores = []
    for actor in ws.actors():
        scores += evaluate_provider(cells, actor, cfg.k, cfg.isolation_with_metadata, seed,
                                    cfg.n_contrast)
    run.emit_csv("isolation.csv", ISOLATION_HEADER,
                 [(s.provider_id, s.task_kind, s.ppl_norm, s.sim, s.accuracy, s.n_evaluated)
                  for s in scores],
                 {"providers": len(ws.actors()), "tasks": 3})
    if cfg.judges:
        judges = JudgeAssignment(cfg.judges["ao"], cfg.judges["am"], cfg.judges["av"],
                                 "override")
    else:
        judges = select_judges(scores, cfg.am_rank)
    write_json(run.path / "judges.json", judges.to_dict())
    run.stages["isolate"] = True
    run.judges = judges
    return judges


def resolve_judges(run: Run) -> JudgeAssignment:
    """Config override, then this run, then the latest earlier run, else isolate inline."""
    ws, cfg = run.ws, run.ws.config
    if run.judges is not None:
        return run.judges
    if cfg.judges:
        run.judges = JudgeAssignment(cfg.judges["ao"], cfg.judges["am"], cfg.judges["av"],
                                     "override")
        write_json(run.path / "judges.json", run.judges.to_dict())
        return run.judges
    prior = find_prior(cfg.output_dir, "judges.json", cfg.config_hash, run.path)
    if prior is not None:
        j = JudgeAssignment.from_dict(
            json.loads((prior / "judges.json").read_text(encoding="utf-8")))
        if all(p in ws.providers for p in (j.ao_judge, j.am_judge, j.av_judge)):
            run.sources["judges.json"] = prior.name
            write_json(run.path / "judges.json", j.to_dict())
            run.judges = j
            return j
        log.warning("ignoring %s/judges.json: references undefined providers", prior.name)
    if not ws.actors():
        raise MissingJudges("no judges configured and no providers to select them from")
    return stage_isolate(run)


def stage_pairwise(run: Run) -> None:
    ws, cfg = run.ws, run.ws.config
    judges = resolve_judges(run)
    for pid in (judges.ao_judge, judges.am_judge, judges.av_judge):
        if pid not in ws.providers:
            raise MissingJudges(f"judge {pid!r} is not a configured provider")
    results, pr = run_pairwise(
        _cells(ws, PairwiseCell), ws.actors(), ws.providers, judges, cfg.with_metadata,
        cfg.k, cfg.n_author, cfg.n_imposter, ws.stage_seed("pairwise"), cfg.n_contrast)
    rows = []
    for r in results:
        rep = r.report
        rows.append((r.direction, r.actor_provider, r.judge_provider, r.dataset,
                     r.with_metadata, rep.kl if rep else None, rep.sim if rep else None,
                     r.accuracy, r.n))
    factors = {"directions": 6, "actors": len(ws.actors()), "datasets": len(ws.corpora),
               "with_metadata": len(cfg.with_metadata)}
    run.emit_csv("pairwise.csv", PAIRWISE_HEADER, rows, factors)
    pr_rows = []
    for p in pr:
        m = classification_metrics(p.counts)
        c = p.counts
        pr_rows.append((p.actor, p.dataset, p.with_metadata, c.tp, c.fp, c.tn, c.fn,
                        m.precision, m.recall))
    run.emit_csv("precision_recall.csv", PR_HEADER, pr_rows,
                 {k: v for k, v in factors.items() if k != "directions"})
    run.stages["pairwise"] = True


def _detector_for(ws: Workspace, corpus: Corpus) -> DetectorHandle | None:
    det = ws.config.detector
    if det is None:
        return None
    if det.mock:
        return DetectorHandle(det.id, "mock://vocabulary",
                              MockDetector.from_texts(d.text for d in corpus.documents))
    return DetectorHandle(det.id, det.endpoint)


def stage_cycle(run: Run) -> list[Trajectory]:
    ws, cfg = run.ws, run.ws.config
    judges = resolve_judges(run)
    ao, am, av = (ws.providers[judges.ao_judge], ws.providers[judges.am_judge],
                  ws.providers[judges.av_judge])
    workers = min(ao.max_in_flight, am.max_in_flight, av.max_in_flight)
    seed = ws.stage_seed("cycle")
    trajectories: list[Trajectory] = []
    for name, corpus in ws.corpora.items():
        detector = _detector_for(ws, corpus)
        for flag in cfg.with_metadata:
            trajectories += parallel_map(
                lambda d: run_cycles(ws.runners[name], ws.engine(name), d, ao, am, av,
                                     cfg.n_cycles, flag, cfg.k, seed, cfg.n_contrast,
                                     detector, cfg.av_probe, name),
                ws.eval_docs[name], workers)
    rows = []
    for t in trajectories:
        for s in t.all_steps():
            rows.append((t.doc_id, t.dataset, t.with_metadata, s.cycle_index, s.step_kind,
                         s.step_order, s.verification_acc, s.kl_vs_original,
                         s.sim_vs_original, s.human_likeness))
    n_docs = sum(len(v) for v in ws.eval_docs.values())
    run.emit_csv("cycles.csv", CYCLES_HEADER, rows,
                 {"docs": n_docs, "with_metadata": len(cfg.with_metadata),
                  "steps": 2 * cfg.n_cycles + 1})
    series = []
    for name in ws.corpora:
        for flag in cfg.with_metadata:
            group = [t for t in trajectories if t.dataset == name and t.with_metadata == flag]
            series.append({"dataset": name, "with_metadata": flag,
                           "points": [p.to_dict() for p in summarize_trajectories(group)]})
    write_json(run.path / "series.json", {
        "n_cycles": cfg.n_cycles,
        "judges": {"ao": judges.ao_judge, "am": judges.am_judge, "av": judges.av_judge},
        "series": series,
        "aborted": sorted(t.doc_id for t in trajectories if t.error),
    })
    write_rounds(run.path / "rounds", trajectories)
    run.stages["cycle"] = True
    return trajectories


def stage_topics(run: Run) -> None:
    ws, cfg = run.ws, run.ws.config
    rounds_dir = run.path / "rounds"
    if not rounds_dir.is_dir():
        prior = find_prior(cfg.output_dir, "rounds", cfg.config_hash, run.path)
        if prior is None:
            raise MissingRounds("no rounds dumps found; run the cycle stage first")
        rounds_dir = prior / "rounds"
        run.sources["rounds"] = prior.name
    rounds = read_rounds(rounds_dir)
    if "0_original" not in rounds:
        raise MissingRounds(f"{rounds_dir} has no 0_original dump")
    lda = cfg.lda
    groups = sorted({(r["dataset"], r["with_metadata"]) for r in rounds["0_original"]})
    topic_rows, drift_rows = [], []
    fitted, min_vocab = 0, lda.top_n
    for dataset, flag in groups:
        def texts(name):
            return [r["text"] for r in rounds.get(name, [])
                    if r["dataset"] == dataset and r["with_metadata"] == flag]

        originals = texts("0_original")
        vocab = sorted({w for toks in prepare_docs(originals, lda.stopwords) for w in toks})
        seed = derive_seed(ws.stage_seed("topics"), dataset, flag)
        reference = None
        for name in rounds:
            idx, _, step = name.partition("_")
            docs = texts(name)
            try:
                model = fit_lda(docs, lda.K, lda.alpha, lda.beta, lda.iterations,
                                derive_seed(seed, name), lda.stopwords, vocab)
            except (EmptyVocabulary, TooFewDocuments) as exc:
                log.warning("topics %s/%s/%s skipped: %s", dataset, flag, name, exc)
                model = None
            if name == "0_original":
                reference = model
            if model is not None:
                fitted += 1
                min_vocab = min(min_vocab, model.V)
                for k in range(model.K):
                    for rank, (w, p) in enumerate(top_words(model, k, lda.top_n).top_words):
                        topic_rows.append((dataset, flag, int(idx), step, k, rank, w, p))
            drift = None
            if reference is not None:
                try:
                    drift = topic_drift(reference, docs, lda.fold_in_iterations,
                                        derive_seed(seed, "fold", name))
                except TooFewDocuments:
                    drift = None
            drift_rows.append((dataset, flag, int(idx), step, drift, len(docs)))
    run.emit_csv("topics.csv", TOPICS_HEADER, topic_rows,
                 {"fitted_models": fitted, "K": lda.K, "top_n": min_vocab})
    run.emit_csv("drift.csv", DRIFT_HEADER, drift_rows,
                 {"groups": len(groups), "rounds": len(rounds)})
    run.stages["topics"] = True


def stage_report(run: Run) -> None:
    from .report import build_report, render_markdown

    cfg = run.ws.config
    wanted = ("isolation.csv", "judges.json", "pairwise.csv", "precision_recall.csv",
              "series.json", "cycles.csv", "drift.csv")
    found: dict[str, Path] = {}
    for name in wanted:
        if (run.path / name).exists():
            found[name] = run.path / name
            continue
        prior = find_prior(cfg.output_dir, name, cfg.config_hash, run.path)
        if prior is not None:
            found[name] = prior / name
            run.sources[name] = prior.name
    report = build_report(found)
    write_json(run.path / "report.json", report)
    _atomic_write(run.path / "report.md", render_markdown(report))
    run.stages["report"] = True


_STAGE_FNS = {"isolate": stage_isolate, "pairwise": stage_pairwise, "cycle": stage_cycle,
              "topics": stage_topics, "report": stage_report}


def run_stages(config: ExperimentConfig, stages: Sequence[str], offline: bool = False,
               label: str | None = None) -> Path:
    """Run ``stages`` in order inside one fresh run directory; returns its path."""
    ws = build_workspace(config, offline)
    run = Run.start(ws, label or "-".join(stages))
    for stage in stages:
        run.stages.setdefault(stage, False)
    try:
        for stage in stages:
            try:
                _STAGE_FNS[stage](run)
            except ApevalError as exc:
                exc.stage = stage
                raise
    finally:
        run.finish()
    return run.path


def cmd_isolate(config, offline=False) -> Path:
    return run_stages(config, ["isolate"], offline)


def cmd_pairwise(config, offline=False) -> Path:
    return run_stages(config, ["pairwise"], offline)


def cmd_cycle(config, offline=False) -> Path:
    return run_stages(config, ["cycle"], offline)


def cmd_topics(config, offline=False) -> Path:
    return run_stages(config, ["topics"], offline)


def cmd_report(config, offline=False) -> Path:
    return run_stages(config, ["report"], offline)


def cmd_all(config, offline=False) -> Path:
    return run_stages(config, list(STAGES), offline, "all")

