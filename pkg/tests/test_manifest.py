import json
import logging

import pytest
from hypothesis import given, settings, strategies as st

from crashbench.manifest import (
    GROUPS,
    ClipRecord,
    Manifest,
    ManifestError,
    QueueError,
    ReviewQueueEntry,
    load_manifest,
    load_queue,
    mark_disposition,
    mine_review_queue,
    save_manifest,
    save_queue,
    validate_longtail_standard,
)
from crashbench.scorer import ScoreTrace


def clip(cid="c0", label="positive", event=6.0, source="longtail", duration=9.0, **kw):
    return ClipRecord(cid, kw.pop("group", "animal"), label, duration, 8.0, source,
                      event if label == "positive" else None, **kw)


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs))


def test_roundtrip(tmp_path):
    m = Manifest((clip("a"), clip("b", label="negative", group="rain"),
                  clip("c", source="kaggle", group="none", duration=6.0, gt_boxes=((71, 1, 2, 30, 40),))),
                 name="t", version="1")
    save_manifest(m, tmp_path / "m.jsonl")
    back = load_manifest(tmp_path / "m.jsonl")
    assert back == m
    save_manifest(m, tmp_path / "m.jsonl.gz")
    assert load_manifest(tmp_path / "m.jsonl.gz") == m


def test_unknown_keys_preserved_but_ignored(tmp_path):
    obj = clip("a").to_json()
    obj["camera"] = "front"
    write_lines(tmp_path / "m.jsonl", [obj])
    m = load_manifest(tmp_path / "m.jsonl")
    assert m.clips[0].extra == {"camera": "front"}
    assert m.clips[0] == clip("a")


def test_empty_manifest_warns(tmp_path, caplog):
    (tmp_path / "m.jsonl").write_text("")
    with caplog.at_level(logging.WARNING):
        m = load_manifest(tmp_path / "m.jsonl")
    assert len(m) == 0
    assert "no clips" in caplog.text


def test_positive_without_event_names_clip(tmp_path):
    obj = clip("crash-17").to_json()
    obj["event_time_s"] = None
    write_lines(tmp_path / "m.jsonl", [obj])
    with pytest.raises(ManifestError, match="crash-17.*event_time_s"):
        load_manifest(tmp_path / "m.jsonl")


def test_parse_error_has_line_number(tmp_path):
    (tmp_path / "m.jsonl").write_text(json.dumps(clip("a").to_json()) + "\n{oops\n")
    with pytest.raises(ManifestError, match=r"m\.jsonl:2"):
        load_manifest(tmp_path / "m.jsonl")


@pytest.mark.parametrize("bad, rule", [
    (dict(group="volcano"), "unknown group"),
    (dict(label="maybe"), "unknown label"),
    (dict(duration_s=-1), "duration_s"),
    (dict(event_time_s=12.0), "outside"),
    (dict(gt_boxes=[[0, 10, 10, 5, 20]]), "outside the 256x256"),
])
def test_invariant_violations(tmp_path, bad, rule):
    obj = clip("x", source="external").to_json()
    obj.update(bad)
    write_lines(tmp_path / "m.jsonl", [obj])
    with pytest.raises(ManifestError, match=rule):
        load_manifest(tmp_path / "m.jsonl")


def test_duplicate_ids_rejected():
    with pytest.raises(ManifestError, match="duplicate"):
        Manifest((clip("a"), clip("a")))


def test_group_enum_has_none_for_unstratified_sets():
    assert "none" in GROUPS and len(GROUPS) == 11


def test_longtail_standard():
    ok = Manifest((clip("ok"), clip("neg", label="negative")))
    assert validate_longtail_standard(ok) == []
    late = Manifest((clip("late", event=7.5, source="external"),))
    violations = validate_longtail_standard(late)
    assert any("post-event footage 1.5 s < 3 s" in v for v in violations)


def test_mine_queue_filters_and_sorts():
    traces = [("a", [0.1, 0.9]), ("b", [0.6]), ("c", ScoreTrace("c", [1.875, 2.0], [0.8, 0.2]))]
    q = mine_review_queue(traces, 0.75)
    assert [e.peak_score for e in q] == [0.9, 0.8]
    assert [e.clip_id for e in q] == ["a", "c"]
    assert all(e.disposition == "pending" for e in q)
    assert mine_review_queue([("a", [0.1]), ("b", [0.7])], 0.75) == []


def test_mine_skips_empty_traces(caplog):
    with caplog.at_level(logging.WARNING):
        assert mine_review_queue([("e", [])], 0.5) == []
    assert "empty trace" in caplog.text


@settings(max_examples=50, deadline=None)
@given(peaks=st.lists(st.floats(0, 1), max_size=20), t1=st.floats(0.01, 0.99), t2=st.floats(0.01, 0.99))
def test_queue_size_monotone_in_threshold(peaks, t1, t2):
    lo, hi = sorted((t1, t2))
    traces = [(str(i), [p]) for i, p in enumerate(peaks)]
    assert len(mine_review_queue(traces, hi)) <= len(mine_review_queue(traces, lo))


def test_mark_disposition():
    e = ReviewQueueEntry("a", 0.92)
    neg = mark_disposition(e, "confirmed_negative", 0.75)
    assert neg.hard_negative and neg.disposition == "confirmed_negative"
    assert not mark_disposition(e, "confirmed_positive", 0.75).hard_negative
    assert not mark_disposition(ReviewQueueEntry("b", 0.6), "confirmed_negative", 0.75).hard_negative
    with pytest.raises(QueueError, match="already marked"):
        mark_disposition(neg, "confirmed_positive")
    with pytest.raises(QueueError):
        mark_disposition(e, "pending")


def test_queue_roundtrip(tmp_path):
    entries = [ReviewQueueEntry("a", 0.9), mark_disposition(ReviewQueueEntry("b", 0.8), "confirmed_negative")]
    save_queue(entries, tmp_path / "q.jsonl")
    back = load_queue(tmp_path / "q.jsonl")
    assert back == entries
    assert all(e.disposition == "confirmed_negative" for e in back if e.hard_negative)
