"""Iterative mimic/obfuscate loop with verification after every step."""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Document
from .detector import DetectorHandle, detect_human_likeness
from .errors import ApevalError, DetectorUnavailable, MixedCycleCounts, OfflineCacheMiss
from .isolation import doc_context
from .providers import ProviderHandle
from .stylometrics import MetricEngine
from .tasks import TaskRunner, TransformRecord, transformed_docs

log = logging.getLogger(__name__)

STEP_KINDS = ("AM", "AO")
BASELINE = "original"


@dataclass(frozen=True)
class CycleStep:
    cycle_index: int
    step_kind: str
    step_order: int
    text: TransformRecord | None
    verification_acc: float
    kl_vs_original: float
    sim_vs_original: float
    human_likeness: float | None = None

    def __post_init__(self):
        if self.step_kind == BASELINE:
            if self.step_order != 0 or self.cycle_index != 0:
                raise ValueError("baseline lives at step 0")
            return
        if self.step_kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.step_kind!r}")
        expected = 2 * (self.cycle_index - 1) + (1 if self.step_kind == "AM" else 2)
        if self.step_order != expected:
            raise ValueError(f"step_order {self.step_order} != {expected}")

    @property
    def output_text(self) -> str:
        return self.text.output_text if self.text is not None else ""


@dataclass
class Trajectory:
    doc_id: str
    author_id: str
    with_metadata: bool
    dataset: str
    n_cycles: int
    original_baseline: CycleStep
    original_text: str = ""
    steps: list[CycleStep] = field(default_factory=list)
    error: str | None = None

    @property
    def complete(self) -> bool:
        return len(self.steps) == 2 * self.n_cycles

    def all_steps(self) -> list[CycleStep]:
        return [self.original_baseline, *self.steps]


def _human(detector, text, cache, offline):
    if detector is None:
        return None
    try:
        return detect_human_likeness(detector, text, cache, offline)
    except DetectorUnavailable as exc:
        log.warning("detector unavailable: %s", exc)
        return None


def run_cycles(runner: TaskRunner, engine: MetricEngine, doc: Document,
               ao_judge: ProviderHandle, am_judge: ProviderHandle, av_judge: ProviderHandle,
               n_cycles: int = 5, with_metadata: bool = True, k: int = 5, seed: int = 0,
               n_contrast: int = 5, detector: DetectorHandle | None = None,
               av_probe: str = "original", dataset: str = "") -> Trajectory:
    """Alternate AM then AO for ``n_cycles`` rounds, measuring after each step.

    The mimic step always rewrites the original ``doc``; from the second cycle
    on its only exemplar is the previous obfuscation. The obfuscation step
    rewrites the mimic output against the author's genuine exemplars.
    Verification probes the original doc with the step output as exemplar
    (``av_probe="output"`` swaps the roles: the output is probed against the
    genuine exemplars). Lineage: every record's ``parent_hash`` is the hash of
    the previous step's output.
    """
    if n_cycles < 0:
        raise ValueError("n_cycles must be >= 0")
    if av_probe not in ("original", "output"):
        raise ValueError(f"unknown av_probe {av_probe!r}")
    corpus = runner.corpus
    author = doc.author_id
    ctx = doc_context(corpus, doc, k, with_metadata, seed)
    vctx = doc_context(corpus, doc, k, with_metadata, seed, n_contrast)

    def measure(text: str, baseline: bool = False) -> tuple[float, float, float, float | None]:
        if baseline or av_probe == "output":
            verdict = runner.verify(av_judge, text, vctx)
        else:
            step_ctx = vctx.with_samples([Document.make(f"{doc.doc_id}~step", author, text)])
            verdict = runner.verify(av_judge, doc.text, step_ctx)
        rep = engine.report([(author, text)])
        return (float(verdict.accepted), rep.kl, rep.sim,
                _human(detector, text, runner.cache, runner.offline))

    acc, kl, sm, hl = measure(doc.text, baseline=True)
    traj = Trajectory(doc.doc_id, author, with_metadata, dataset or corpus.name, n_cycles,
                      CycleStep(0, BASELINE, 0, None, acc, kl, sm, hl), doc.text)
    prev_text = doc.text
    prev_rec: TransformRecord | None = None
    try:
        for i in range(1, n_cycles + 1):
            am_ctx = ctx if prev_rec is None else ctx.with_samples(
                transformed_docs([prev_rec], author))
            am = runner.mimic(am_judge, doc.text, am_ctx, doc_id=doc.doc_id,
                              step_index=2 * i - 1, parent_text=prev_text)
            traj.steps.append(CycleStep(i, "AM", 2 * i - 1, am, *measure(am.output_text)))
            ao = runner.obfuscate(ao_judge, am.output_text, ctx, doc_id=doc.doc_id,
                                  step_index=2 * i, parent_text=am.output_text)
            traj.steps.append(CycleStep(i, "AO", 2 * i, ao, *measure(ao.output_text)))
            prev_text, prev_rec = ao.output_text, ao
    except OfflineCacheMiss:
        raise
    except ApevalError as exc:
        traj.error = f"{type(exc).__name__}: {exc}"
        log.error("trajectory %s aborted after %d steps: %s", doc.doc_id, len(traj.steps),
                  traj.error)
    return traj


@dataclass(frozen=True)
class SeriesPoint:
    step_order: int
    cycle_index: int
    step_kind: str
    acc: float
    kl: float
    sim: float
    human_likeness: float | None
    n: int

    def to_dict(self) -> dict:
        return {"step_order": self.step_order, "cycle": self.cycle_index,
                "step_kind": self.step_kind, "acc": self.acc, "kl": self.kl, "sim": self.sim,
                "human_likeness": self.human_likeness, "n": self.n}


def _mean(xs):
    return math.fsum(xs) / len(xs)


def summarize_trajectories(trajectories: Sequence[Trajectory]) -> list[SeriesPoint]:
    """Per step_order means over documents (baseline included as step 0).

    Aborted trajectories contribute the steps they completed.
    """
    if not trajectories:
        return []
    counts = {t.n_cycles for t in trajectories}
    if len(counts) > 1:
        raise MixedCycleCounts(f"trajectories disagree on n_cycles: {sorted(counts)}")
    ordered = sorted(trajectories, key=lambda t: (t.dataset, t.with_metadata, t.doc_id))
    by_order: dict[int, list[CycleStep]] = {}
    for t in ordered:
        for s in t.all_steps():
            by_order.setdefault(s.step_order, []).append(s)
    out = []
    for order in sorted(by_order):
        steps = by_order[order]
        hls = [s.human_likeness for s in steps if s.human_likeness is not None]
        first = steps[0]
        out.append(SeriesPoint(order, first.cycle_index, first.step_kind,
                               _mean([s.verification_acc for s in steps]),
                               _mean([s.kl_vs_original for s in steps]),
                               _mean([s.sim_vs_original for s in steps]),
                               _mean(hls) if hls else None, len(steps)))
    return out


def round_name(step: CycleStep) -> str:
    if step.step_kind == BASELINE:
        return "0_original"
    return f"{step.cycle_index}_{step.step_kind}"


def round_sort_key(name: str) -> tuple[int, int]:
    idx, _, kind = name.partition("_")
    return int(idx), {"original": 0, "AM": 1, "AO": 2}.get(kind, 3)


def round_dumps(trajectories: Sequence[Trajectory]) -> dict[str, list[dict]]:
    """Texts grouped by round, ready to be written as one JSONL file per round."""
    rounds: dict[str, list[dict]] = {}
    for t in sorted(trajectories, key=lambda t: (t.dataset, t.with_metadata, t.doc_id)):
        for s in t.all_steps():
            text = t.original_text if s.step_kind == BASELINE else s.output_text
            rounds.setdefault(round_name(s), []).append({
                "doc_id": t.doc_id, "author_id": t.author_id, "dataset": t.dataset,
                "with_metadata": t.with_metadata, "step_order": s.step_order, "text": text,
            })
    return dict(sorted(rounds.items(), key=lambda kv: round_sort_key(kv[0])))


def write_rounds(directory: str | Path, trajectories: Sequence[Trajectory]) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in round_dumps(trajectories).items():
        path = directory / f"{name}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
        paths.append(path)
    return paths


def read_rounds(directory: str | Path) -> dict[str, list[dict]]:
    directory = Path(directory)
    out = {}
    for path in directory.glob("*.jsonl"):
        with path.open(encoding="utf-8") as fh:
            out[path.stem] = [json.loads(line) for line in fh if line.strip()]
    return dict(sorted(out.items(), key=lambda kv: round_sort_key(kv[0])))
