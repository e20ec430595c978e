import csv
import io

import pytest

from crashbench.manifest import ClipRecord, Manifest
from crashbench.metrics import evaluate
from crashbench.report import ReportError, compare_models, render_table
from crashbench.scorer import ScoreTrace, trace_times


def toy_report(peaks, name="toy"):
    clips, traces = [], {}
    times = trace_times(72)
    for i, (group, label, peak) in enumerate(peaks):
        cid = f"c{i}"
        clips.append(ClipRecord(cid, group, label, 9.0, 8.0, "longtail", 6.0 if label == "positive" else None))
        traces[cid] = ScoreTrace(cid, times, [peak] * len(times))
    return evaluate(Manifest(tuple(clips), name=name), traces)


A = [("animal", "positive", 0.9), ("animal", "negative", 0.2), ("rain", "positive", 0.8), ("rain", "negative", 0.1)]
B = [("animal", "positive", 0.7), ("animal", "negative", 0.8), ("rain", "positive", 0.95), ("rain", "negative", 0.05)]


def test_render_is_deterministic_and_csv_matches_text():
    reps = {"a": toy_report(A), "b": toy_report(B)}
    t1, t2 = render_table(reps, "longtail"), render_table(reps, "longtail")
    assert t1.text == t2.text and t1.csv == t2.csv
    parsed = list(csv.reader(io.StringIO(t1.csv)))
    assert parsed[1:] == t1.rows
    for row in t1.rows:
        for cell in row[1:]:
            assert cell in t1.text
    assert [r[0] for r in t1.rows] == ["Animal", "Rain", "Overall"]


def test_single_model_has_no_bold():
    t = render_table(toy_report(A), "longtail")
    assert "**" not in t.text
    assert t.rows[-1][0] == "Overall"


def test_ties_all_bolded():
    t = render_table({"a": toy_report(A), "b": toy_report(A)}, "kaggle")
    assert t.text.count("**1.000**") == 8  # 2 models x (three AP columns + mAP)
    assert t.text.count("**0.0%**") == 2


def test_missing_metric_is_named():
    obj = toy_report(A).to_json()
    del obj["kaggle"]["map"]
    with pytest.raises(ReportError, match="kaggle.map"):
        render_table({"m": obj}, "kaggle")
    with pytest.raises(ReportError, match="unknown table"):
        render_table({"m": obj}, "heat")


def test_pga_and_latency_tables():
    pga = {"v1": {"pga": 0.498, "delta_vs_random": 0.383}, "v2": {"pga": 0.721, "delta_vs_random": 0.606}}
    t = render_table(pga, "pga")
    assert "**72.1%**" in t.text and "+38.3 pp" in t.text
    lat = {"m": {k: {"mean": 1.0, "p99": 2.0} for k in ("preprocessing_ms", "inference_ms", "total_ms")}}
    assert render_table(lat, "latency").rows == [["m", "1.0", "2.0", "1.0", "2.0", "1.0", "2.0"]]


def test_compare_identical_is_zero():
    (d,) = compare_models({"x": toy_report(A), "y": toy_report(A)})
    assert all(v in (0, None) for row in d.deltas.values() for v in row.values())
    assert d.regressions == []


def test_compare_flags_regressions():
    (d,) = compare_models({"a": toy_report(A), "b": toy_report(B)})
    assert {"group": "animal", "metric": "fpr", "delta": 1.0} in d.regressions
    assert "!" in d.text


def test_compare_different_manifests():
    with pytest.raises(ReportError, match="different manifests"):
        compare_models({"a": toy_report(A, "one"), "b": toy_report(A, "two")})
    with pytest.raises(ReportError):
        compare_models({"a": toy_report(A)})
