"""Consolidated markdown/JSON report built from stage outputs on disk."""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Mapping, Sequence
from pathlib import Path

from .errors import MissingStageOutput

SECTIONS = ("isolation", "obfuscation", "mimicking", "verification", "cycles")
TITLES = {
    "isolation": "Isolation",
    "obfuscation": "Obfuscation influence (OM, OV)",
    "mimicking": "Mimicking influence (MO, MV)",
    "verification": "Verification influence (VO, VM)",
    "cycles": "Iterative cycles",
}
PRODUCER = {"isolation": "isolate", "obfuscation": "pairwise", "mimicking": "pairwise",
            "verification": "pairwise", "cycles": "cycle"}
AXIS_METRIC = {"OM": "kl", "OV": "acc", "MO": "kl", "MV": "acc", "VO": "kl", "VM": "kl"}


def _read_csv(path: Path) -> list[dict[str, str]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _num(s: str | None) -> float | None:
    if s is None or s == "":
        return None
    return float(s)


def mark_best(values: Sequence[float | None], higher_is_better: bool) -> list[str | None]:
    """'best' / 'second' per value, comparing at two decimals; ties share a mark."""
    rounded = [None if v is None or math.isnan(v) else round(v, 2) for v in values]
    distinct = sorted({r for r in rounded if r is not None}, reverse=higher_is_better)
    best = distinct[0] if distinct else None
    second = distinct[1] if len(distinct) > 1 else None
    out = []
    for r in rounded:
        if r is None:
            out.append(None)
        elif r == best:
            out.append("best")
        elif r == second:
            out.append("second")
        else:
            out.append(None)
    return out


def _table(columns: list[tuple[str, str, bool | None]], rows: list[tuple[str, dict]]) -> dict:
    marks: dict[str, dict[str, str]] = {label: {} for label, _ in rows}
    for key, _, hib in columns:
        if hib is None:
            continue
        flags = mark_best([cells.get(key) for _, cells in rows], hib)
        for (label, _), m in zip(rows, flags):
            if m:
                marks[label][key] = m
    return {
        "present": True,
        "columns": [{"key": k, "label": lbl, "higher_is_better": hib}
                    for k, lbl, hib in columns],
        "rows": [{"label": label, "cells": cells} for label, cells in rows],
        "marks": marks,
    }


def _isolation(path: Path) -> dict:
    by: dict[str, dict] = {}
    for r in _read_csv(path):
        cells = by.setdefault(r["provider"], {})
        if r["task"] == "AV":
            cells["AV_acc"] = _num(r["accuracy"])
        else:
            cells[f"{r['task']}_ppl_norm"] = _num(r["ppl_norm"])
            cells[f"{r['task']}_sim"] = _num(r["sim"])
    cols = [("AO_ppl_norm", "AO PPL", True), ("AO_sim", "AO SIM", False),
            ("AM_ppl_norm", "AM PPL", False), ("AM_sim", "AM SIM", True),
            ("AV_acc", "AV ACC", True)]
    return _table(cols, sorted(by.items()))


def _setting(r: Mapping[str, str]) -> str:
    meta = "w/ meta" if r["with_metadata"] == "true" else "w/o meta"
    return f"{r['dataset']} {meta}"


def _pairwise(rows: list[dict], spec: list[tuple[str, str, bool]],
              extra: Mapping[str, Mapping[str, dict]] | None = None) -> dict:
    """``spec`` items are (direction, metric, higher_is_better)."""
    directions = {d for d, _, _ in spec}
    settings = sorted({_setting(r) for r in rows if r["direction"] in directions})
    by: dict[str, dict] = {}
    for r in rows:
        if r["direction"] not in directions:
            continue
        cells = by.setdefault(r["actor"], {})
        for d, metric, _ in spec:
            if d == r["direction"]:
                cells[f"{_setting(r)}|{d}_{metric}"] = _num(r[metric])
    for actor, add in (extra or {}).items():
        by.setdefault(actor, {}).update(add)
    cols = []
    for s in settings:
        for d, metric, hib in spec:
            cols.append((f"{s}|{d}_{metric}", f"{s} {d} {metric.upper()}", hib))
    if extra:
        extra_keys = sorted({k for v in extra.values() for k in v})
        cols += [(k, k.replace("|", " "), True) for k in extra_keys]
    table = _table(cols, sorted(by.items()))
    judges = sorted({r["judge"] for r in rows if r["direction"] in directions})
    table["judges"] = judges
    return table


def _precision_recall(path: Path) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for r in _read_csv(path):
        s = _setting(r)
        out.setdefault(r["actor"], {})[f"{s}|precision"] = _num(r["precision"])
        out[r["actor"]][f"{s}|recall"] = _num(r["recall"])
    return out


def _cycles(path: Path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    tables = []
    for s in data["series"]:
        rows = []
        for p in s["points"]:
            label = "original" if p["step_order"] == 0 else \
                f"{p['step_order']} ({p['step_kind']}{p['cycle']})"
            rows.append((label, {"acc": p["acc"], "kl": p["kl"], "sim": p["sim"],
                                 "human_likeness": p["human_likeness"]}))
        t = _table([("acc", "ACC", None), ("kl", "KL", None), ("sim", "SIM", None),
                    ("human_likeness", "Human-likeness", None)], rows)
        t["setting"] = f"{s['dataset']} {'w/ meta' if s['with_metadata'] else 'w/o meta'}"
        tables.append(t)
    return {"present": True, "n_cycles": data["n_cycles"], "tables": tables}


def influence_axes(rows: list[dict]) -> dict[str, dict[str, float]]:
    """Per-actor averages of each direction's headline metric (one value per axis)."""
    acc: dict[str, dict[str, list[float]]] = {}
    for r in rows:
        v = _num(r[AXIS_METRIC[r["direction"]]])
        if v is not None:
            acc.setdefault(r["actor"], {}).setdefault(r["direction"], []).append(v)
    return {a: {d: math.fsum(v) / len(v) for d, v in sorted(ds.items())}
            for a, ds in sorted(acc.items())}


def build_report(found: Mapping[str, Path]) -> dict:
    """Assemble every section whose inputs exist; raises if none do."""
    if not any(k in found for k in ("isolation.csv", "pairwise.csv", "series.json")):
        raise MissingStageOutput("no stage outputs found; run isolate, pairwise or cycle")
    sections: dict[str, dict] = {s: {"present": False, "missing_stage": PRODUCER[s]}
                                 for s in SECTIONS}
    if "isolation.csv" in found:
        sections["isolation"] = _isolation(found["isolation.csv"])
    axes = None
    if "pairwise.csv" in found:
        rows = _read_csv(found["pairwise.csv"])
        sections["obfuscation"] = _pairwise(rows, [("OM", "kl", True), ("OM", "sim", False),
                                                   ("OV", "acc", False)])
        sections["mimicking"] = _pairwise(rows, [("MO", "kl", True), ("MO", "sim", False),
                                                 ("MV", "acc", True)])
        pr = _precision_recall(found["precision_recall.csv"]) \
            if "precision_recall.csv" in found else None
        sections["verification"] = _pairwise(rows, [("VO", "kl", False), ("VO", "sim", True),
                                                    ("VM", "kl", False), ("VM", "sim", True)],
                                             pr)
        axes = influence_axes(rows)
    if "series.json" in found:
        sections["cycles"] = _cycles(found["series.json"])
    judges = None
    if "judges.json" in found:
        j = json.loads(Path(found["judges.json"]).read_text(encoding="utf-8"))
        judges = {"ao": j["ao"], "am": j["am"], "av": j["av"],
                  "override": j.get("basis") == "override"}
    return {"sections": sections, "judges": judges, "influence_axes": axes}


def _cell(value, mark) -> str:
    if value is None:
        return "-"
    text = f"{value:.2f}"
    if mark == "best":
        return f"**{text}**"
    if mark == "second":
        return f"<u>{text}</u>"
    return text


def _md_table(t: dict, first: str) -> list[str]:
    cols = t["columns"]
    arrows = {True: " ↑", False: " ↓", None: ""}
    lines = ["| " + " | ".join([first] + [c["label"] + arrows[c["higher_is_better"]]
                                          for c in cols]) + " |",
             "|" + "---|" * (len(cols) + 1)]
    for row in t["rows"]:
        marks = t["marks"].get(row["label"], {})
        cells = [_cell(row["cells"].get(c["key"]), marks.get(c["key"])) for c in cols]
        lines.append("| " + " | ".join([row["label"]] + cells) + " |")
    return lines


def render_markdown(report: dict) -> str:
    lines = ["# Evaluation report", ""]
    j = report.get("judges")
    if j:
        src = "config override" if j["override"] else "isolation scores"
        lines += [f"Judges ({src}): AO `{j['ao']}`, AM `{j['am']}`, AV `{j['av']}`.", ""]
    for name in SECTIONS:
        sec = report["sections"][name]
        lines += [f"## {TITLES[name]}", ""]
        if not sec["present"]:
            lines += [f"_Absent: run the `{sec['missing_stage']}` stage._", ""]
            continue
        if name == "cycles":
            for t in sec["tables"]:
                lines += [f"### {t['setting']}", ""] + _md_table(t, "Step") + [""]
            continue
        if sec.get("judges"):
            lines += ["Judge: " + ", ".join(f"`{x}`" for x in sec["judges"]), ""]
        first = "Provider" if name == "isolation" else "Actor"
        lines += _md_table(sec, first) + [""]
    axes = report.get("influence_axes")
    if axes:
        dirs = sorted({d for v in axes.values() for d in v})
        lines += ["## Influence axes (per-actor averages)", "",
                  "| Actor | " + " | ".join(dirs) + " |", "|" + "---|" * (len(dirs) + 1)]
        for a, v in axes.items():
            lines.append("| " + " | ".join([a] + [_cell(v.get(d), None) for d in dirs]) + " |")
        lines.append("")
    lines += ["Bold marks the best value per column and underline the runner-up,",
              "compared at two decimals.", ""]
    return "\n".join(lines)
