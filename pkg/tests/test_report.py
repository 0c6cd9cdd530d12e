import pytest

from apeval.errors import MissingStageOutput
from apeval.pipeline import ISOLATION_HEADER, PAIRWISE_HEADER, write_csv
from apeval.report import build_report, influence_axes, mark_best, render_markdown


def test_mark_best_hand_case():
    assert mark_best([0.5, 0.9, 0.7, None], True) == [None, "best", "second", None]
    assert mark_best([0.5, 0.9, 0.7], False) == ["best", None, "second"]
    # ties at two decimals share the mark
    assert mark_best([0.901, 0.899, 0.5], True) == ["best", "best", "second"]
    assert mark_best([], True) == []
    assert mark_best([float("nan"), 1.0], True) == [None, "best"]


def test_report_with_isolation_only(tmp_path):
    iso = tmp_path / "isolation.csv"
    write_csv(iso, ISOLATION_HEADER, [
        ("p", "AO", 2.0, 0.1, None, 3), ("p", "AM", 1.0, 0.3, None, 3),
        ("p", "AV", None, None, 0.5, 6),
        ("q", "AO", 1.0, 0.2, None, 3), ("q", "AM", 0.5, 0.4, None, 3),
        ("q", "AV", None, None, 0.75, 6)])
    rep = build_report({"isolation.csv": iso})
    sec = rep["sections"]
    assert sec["isolation"]["present"]
    assert sec["isolation"]["marks"]["p"]["AO_ppl_norm"] == "best"
    assert sec["isolation"]["marks"]["q"]["AM_ppl_norm"] == "best"
    assert sec["isolation"]["marks"]["q"]["AV_acc"] == "best"
    assert sec["cycles"] == {"present": False, "missing_stage": "cycle"}
    assert sec["obfuscation"]["missing_stage"] == "pairwise"
    md = render_markdown(rep)
    assert "**2.00**" in md and "<u>1.00</u>" in md and "run the `cycle` stage" in md


def test_pairwise_axes(tmp_path):
    rows = [("OM", "a", "j", "d", True, 1.0, 0.5, None, 2),
            ("OM", "a", "j", "d", False, 3.0, 0.5, None, 2),
            ("OV", "a", "j", "d", True, None, None, 0.25, 2)]
    path = tmp_path / "pairwise.csv"
    write_csv(path, PAIRWISE_HEADER, rows)
    rep = build_report({"pairwise.csv": path})
    assert rep["influence_axes"] == {"a": {"OM": 2.0, "OV": 0.25}}
    assert rep["sections"]["obfuscation"]["judges"] == ["j"]
    assert rep["sections"]["verification"]["present"]


def test_no_outputs():
    with pytest.raises(MissingStageOutput):
        build_report({})
    assert influence_axes([]) == {}
