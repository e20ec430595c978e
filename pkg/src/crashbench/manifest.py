"""Benchmark clip manifests and the active-mining review queue."""

from __future__ import annotations

import dataclasses
import gzip
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

logger = logging.getLogger(__name__)

GROUPS = (
    "animal",
    "pedestrian",
    "intersection",
    "pass_overtake",
    "cyclist",
    "motorcyclist",
    "infrastructure",
    "rain",
    "snow",
    "fog",
    "none",
)
LONGTAIL_GROUPS = GROUPS[:-1]
LABELS = ("positive", "negative")
SOURCES = ("longtail", "kaggle", "external", "synthetic")
DISPOSITIONS = ("pending", "confirmed_positive", "confirmed_negative")

FRAME_SIZE = 256
LONGTAIL_DURATION_S = 9.0
LONGTAIL_EVENT_S = 6.0
POST_EVENT_S = LONGTAIL_DURATION_S - LONGTAIL_EVENT_S
DEFAULT_MINING_THRESHOLD = 0.75

_CLIP_KEYS = (
    "clip_id",
    "group",
    "label",
    "duration_s",
    "event_time_s",
    "fps",
    "gt_boxes",
    "source",
)


class ManifestError(ValueError):
    """Raised for unparsable manifests or records that break an invariant."""


class QueueError(ValueError):
    pass


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    group: str
    label: str
    duration_s: float
    fps: float
    source: str
    event_time_s: Optional[float] = None
    # (frame_index, x0, y0, x1, y1) in 256x256 frame coordinates
    gt_boxes: Optional[tuple] = None
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def positive(self) -> bool:
        return self.label == "positive"

    def validate(self) -> None:
        """Raise :class:`ManifestError` naming the clip and the broken rule."""
        cid = self.clip_id

        def fail(rule):
            raise ManifestError(f"clip {cid!r}: {rule}")

        if not isinstance(cid, str) or not cid:
            raise ManifestError(f"clip id must be a non-empty string, got {cid!r}")
        if self.group not in GROUPS:
            fail(f"unknown group {self.group!r}")
        if self.label not in LABELS:
            fail(f"unknown label {self.label!r}")
        if self.source not in SOURCES:
            fail(f"unknown source {self.source!r}")
        if not self.duration_s > 0:
            fail("duration_s must be > 0")
        if not self.fps > 0:
            fail("fps must be > 0")
        if self.positive:
            if self.event_time_s is None:
                fail("positive clip requires event_time_s")
            if not 0 < self.event_time_s <= self.duration_s:
                fail(f"event_time_s {self.event_time_s} outside (0, duration_s={self.duration_s}]")
        elif self.event_time_s is not None:
            fail("negative clip must not carry event_time_s")
        if self.source == "longtail":
            if self.duration_s != LONGTAIL_DURATION_S:
                fail(f"longtail clip duration_s must be {LONGTAIL_DURATION_S}")
            if self.positive and self.event_time_s != LONGTAIL_EVENT_S:
                fail(f"longtail positive must have event_time_s {LONGTAIL_EVENT_S}")
        for box in self.gt_boxes or ():
            if len(box) != 5:
                fail(f"gt box {box!r} must be (frame_index, x0, y0, x1, y1)")
            _, x0, y0, x1, y1 = box
            if not (0 <= x0 < x1 <= FRAME_SIZE and 0 <= y0 < y1 <= FRAME_SIZE):
                fail(f"gt box {box!r} outside the {FRAME_SIZE}x{FRAME_SIZE} frame")

    def to_json(self) -> dict:
        out = dict(self.extra)
        out.update(
            clip_id=self.clip_id,
            group=self.group,
            label=self.label,
            duration_s=self.duration_s,
            event_time_s=self.event_time_s,
            fps=self.fps,
            gt_boxes=[list(b) for b in self.gt_boxes] if self.gt_boxes is not None else None,
            source=self.source,
        )
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ClipRecord":
        missing = [k for k in ("clip_id", "group", "label", "duration_s", "fps", "source") if k not in obj]
        if missing:
            raise ManifestError(f"clip {obj.get('clip_id')!r}: missing fields {missing}")
        boxes = obj.get("gt_boxes")
        if boxes is not None:
            boxes = tuple(tuple(b) for b in boxes)
        event = obj.get("event_time_s")
        return cls(
            clip_id=obj["clip_id"],
            group=obj["group"],
            label=obj["label"],
            duration_s=float(obj["duration_s"]),
            fps=float(obj["fps"]),
            source=obj["source"],
            event_time_s=float(event) if event is not None else None,
            gt_boxes=boxes,
            extra={k: v for k, v in obj.items() if k not in _CLIP_KEYS},
        )


@dataclass(frozen=True)
class Manifest:
    clips: tuple
    name: str = ""
    version: str = ""

    def __post_init__(self):
        seen = set()
        for clip in self.clips:
            if clip.clip_id in seen:
                raise ManifestError(f"duplicate clip_id {clip.clip_id!r}")
            seen.add(clip.clip_id)

    def __len__(self):
        return len(self.clips)

    def __iter__(self):
        return iter(self.clips)

    def by_id(self) -> dict:
        return {c.clip_id: c for c in self.clips}

    def group_counts(self) -> dict:
        counts: dict = {}
        for clip in self.clips:
            counts[clip.group] = counts.get(clip.group, 0) + 1
        return counts

    def groups(self) -> list:
        """Groups present, in canonical order."""
        present = {c.group for c in self.clips}
        return [g for g in GROUPS if g in present]


def open_text(path, mode="rt"):
    """Open a text file, transparently handling ``.gz``."""
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def iter_jsonl(path):
    """Yield ``(line_number, object)`` for each non-blank line."""
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: JSON parse error: {exc.msg}") from None


def load_manifest(path) -> Manifest:
    """Load and validate a JSONL manifest.

    An optional first line ``{"manifest": {"name": ..., "version": ...}}`` carries
    the manifest metadata; every other line is one clip record.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    name, version = path.name, ""
    clips = []
    for lineno, obj in iter_jsonl(path):
        if not isinstance(obj, dict):
            raise ManifestError(f"{path}:{lineno}: expected a JSON object")
        if "manifest" in obj and "clip_id" not in obj:
            meta = obj["manifest"]
            name, version = meta.get("name", name), meta.get("version", "")
            continue
        try:
            clip = ClipRecord.from_json(obj)
            clip.validate()
        except ManifestError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
        clips.append(clip)
    if not clips:
        logger.warning("manifest %s contains no clips", path)
    try:
        return Manifest(tuple(clips), name=name, version=version)
    except ManifestError as exc:
        raise ManifestError(f"{path}: {exc}") from None


def save_manifest(manifest: Manifest, path) -> None:
    with open_text(path, "wt") as fh:
        fh.write(json.dumps({"manifest": {"name": manifest.name, "version": manifest.version}}) + "\n")
        for clip in manifest.clips:
            fh.write(json.dumps(clip.to_json(), sort_keys=True) + "\n")


def validate_longtail_standard(manifest: Manifest) -> list:
    """Return human-readable violations of the 9 s / event-at-6 s clip standard.

    Only positive clips carry an event, so negatives are checked for duration
    alone.
    """
    violations = []
    for clip in manifest.clips:
        if clip.duration_s != LONGTAIL_DURATION_S:
            violations.append(
                f"{clip.clip_id}: duration {clip.duration_s:g} s != {LONGTAIL_DURATION_S:g} s"
            )
        if not clip.positive or clip.event_time_s is None:
            continue
        if clip.event_time_s != LONGTAIL_EVENT_S:
            violations.append(
                f"{clip.clip_id}: event at {clip.event_time_s:g} s != {LONGTAIL_EVENT_S:g} s"
            )
        post = clip.duration_s - clip.event_time_s
        if post < POST_EVENT_S:
            violations.append(f"{clip.clip_id}: post-event footage {post:g} s < {POST_EVENT_S:g} s")
    return violations


@dataclass(frozen=True)
class ReviewQueueEntry:
    clip_id: str
    peak_score: float
    disposition: str = "pending"
    hard_negative: bool = False

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def mine_review_queue(traces: Iterable, threshold: float = DEFAULT_MINING_THRESHOLD) -> list:
    """Surface clips whose peak risk reaches ``threshold`` for human review.

    ``traces`` yields ``(clip_id, trace)`` pairs where ``trace`` is a
    :class:`~crashbench.scorer.ScoreTrace` or any sequence of scores.
    The queue is ordered by descending peak; ties keep input order.
    """
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    queue = []
    for clip_id, trace in traces:
        scores = list(getattr(trace, "scores", trace))
        if not scores:
            logger.warning("skipping empty trace for clip %s", clip_id)
            continue
        peak = max(scores)
        if peak >= threshold:
            queue.append(ReviewQueueEntry(clip_id, float(peak)))
    queue.sort(key=lambda e: -e.peak_score)
    return queue


def mark_disposition(
    entry: ReviewQueueEntry, disposition: str, mining_threshold: float = DEFAULT_MINING_THRESHOLD
) -> ReviewQueueEntry:
    if entry.disposition != "pending":
        raise QueueError(f"clip {entry.clip_id!r} already marked {entry.disposition}")
    if disposition not in DISPOSITIONS[1:]:
        raise QueueError(f"invalid disposition {disposition!r}")
    hard = disposition == "confirmed_negative" and entry.peak_score >= mining_threshold
    return dataclasses.replace(entry, disposition=disposition, hard_negative=hard)


def save_queue(entries: Iterable, path) -> None:
    with open_text(path, "wt") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_json()) + "\n")


def load_queue(path) -> list:
    out = []
    for lineno, obj in iter_jsonl(path):
        try:
            entry = ReviewQueueEntry(
                clip_id=obj["clip_id"],
                peak_score=float(obj["peak_score"]),
                disposition=obj.get("disposition", "pending"),
                hard_negative=bool(obj.get("hard_negative", False)),
            )
        except KeyError as exc:
            raise QueueError(f"{path}:{lineno}: missing field {exc}") from None
        if entry.disposition not in DISPOSITIONS:
            raise QueueError(f"{path}:{lineno}: invalid disposition {entry.disposition!r}")
        if entry.hard_negative and entry.disposition != "confirmed_negative":
            raise QueueError(f"{path}:{lineno}: hard negative {entry.clip_id!r} is not confirmed_negative")
        out.append(entry)
    return out
