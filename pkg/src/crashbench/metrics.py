"""Clip-level evaluation metrics: AUC, F1, FPR, AP, AP@TTA, mAP, EWR and MTTA.

Conventions pinned here:

* A clip's peak score is the maximum over its trace; a clip is predicted
  positive iff its peak reaches the threshold.
* A positive is *detected* (early warning) iff its first alert, the first
  window scoring >= threshold, comes strictly before the event time.
* AP@TTA with lead ``tau`` uses, per positive, the best score among windows
  whose prediction time is <= event_time - tau ("sliding" mode), or the score
  of the last such window ("single_window" mode).  Negatives use their peak
  (sliding) or their last window (single_window).
* Overall rows pool all clips (micro).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from crashbench import kernels
from crashbench.manifest import Manifest

DEFAULT_THRESHOLD = 0.75
LEAD_TIMES = (0.5, 1.0, 1.5)
MODES = ("sliding", "single_window")
# window times are k / fps; absorb representation error when comparing to event - tau
_TIME_EPS = 1e-9


class MetricError(ValueError):
    """A metric is undefined for the given input (e.g. no positives)."""


class MissingTraceError(ValueError):
    def __init__(self, clip_ids):
        self.clip_ids = list(clip_ids)
        shown = ", ".join(self.clip_ids[:20])
        more = f" (+{len(self.clip_ids) - 20} more)" if len(self.clip_ids) > 20 else ""
        super().__init__(f"{len(self.clip_ids)} manifest clips have no trace: {shown}{more}")


def _split(scored):
    if len(scored) == 0:
        return np.empty(0), np.empty(0, dtype=bool)
    arr = np.asarray(scored, dtype=np.float64)
    return arr[:, 0], arr[:, 1] != 0


def average_precision(scored: Sequence) -> float:
    """AP of ``(score, label)`` pairs; equal scores enter as one threshold group."""
    scores, labels = _split(scored)
    if not labels.any():
        raise MetricError("AP undefined: no positives")
    return kernels.ranked_ap(scores, labels)


def roc_auc(scored: Sequence) -> float:
    """Mann-Whitney AUC: P(pos > neg) + 0.5 P(tie)."""
    scores, labels = _split(scored)
    if labels.all() or not labels.any():
        raise MetricError("AUC undefined: need at least one positive and one negative")
    return kernels.ranked_auc(scores, labels)


@dataclass(frozen=True)
class ClipOutcome:
    clip_id: str
    positive: bool
    group: str
    peak_score: float
    first_alert_time_s: Optional[float]
    event_time_s: Optional[float]
    eligible_peaks: dict = field(default_factory=dict)
    single_window_scores: dict = field(default_factory=dict)
    last_score: float = 0.0
    trace_times: tuple = field(default=(), repr=False, compare=False)
    trace_scores: tuple = field(default=(), repr=False, compare=False)

    @property
    def label(self) -> str:
        return "positive" if self.positive else "negative"

    def candidate(self, tau: float, mode: str = "sliding") -> float:
        if not self.positive:
            return self.peak_score if mode == "sliding" else self.last_score
        table = self.eligible_peaks if mode == "sliding" else self.single_window_scores
        return table[tau]

    def alert_time(self, threshold: Optional[float] = None) -> Optional[float]:
        """First alert at ``threshold``, or the recorded one when not given."""
        if threshold is None or not self.trace_scores:
            return self.first_alert_time_s
        for t, s in zip(self.trace_times, self.trace_scores):
            if s >= threshold:
                return t
        return None


def first_alert_time(trace, threshold: float) -> Optional[float]:
    for t, s in zip(trace.times, trace.scores):
        if s >= threshold:
            return t
    return None


def clip_outcome(clip, trace, threshold: float = DEFAULT_THRESHOLD, taus=LEAD_TIMES) -> ClipOutcome:
    times = np.asarray(trace.times, dtype=np.float64)
    scores = np.asarray(trace.scores, dtype=np.float64)
    peak = float(scores.max()) if scores.size else 0.0
    last = float(scores[-1]) if scores.size else 0.0
    eligible, single = {}, {}
    if clip.positive:
        for tau in taus:
            mask = times <= clip.event_time_s - tau + _TIME_EPS
            if mask.any():
                eligible[tau] = float(scores[mask].max())
                single[tau] = float(scores[np.flatnonzero(mask)[-1]])
            else:
                eligible[tau] = single[tau] = 0.0
    return ClipOutcome(
        clip_id=clip.clip_id,
        positive=clip.positive,
        group=clip.group,
        peak_score=peak,
        first_alert_time_s=first_alert_time(trace, threshold),
        event_time_s=clip.event_time_s,
        eligible_peaks=eligible,
        single_window_scores=single,
        last_score=last,
        trace_times=tuple(trace.times),
        trace_scores=tuple(trace.scores),
    )


def outcomes_for(manifest: Manifest, traces: dict, threshold: float = DEFAULT_THRESHOLD,
                 taus=LEAD_TIMES) -> list:
    missing = [c.clip_id for c in manifest.clips if c.clip_id not in traces]
    if missing:
        raise MissingTraceError(missing)
    return [clip_outcome(c, traces[c.clip_id], threshold, taus) for c in manifest.clips]


def confusion(outcomes, threshold: float = DEFAULT_THRESHOLD) -> tuple:
    tp = fp = fn = tn = 0
    for o in outcomes:
        hit = o.peak_score >= threshold
        if o.positive:
            tp += hit
            fn += not hit
        else:
            fp += hit
            tn += not hit
    return tp, fp, fn, tn


def f1_fpr_at_threshold(outcomes, threshold: float = DEFAULT_THRESHOLD) -> tuple:
    """``(f1, fpr)`` with clip-level peak-score decisions; ``None`` if undefined."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    tp, fp, fn, tn = confusion(outcomes, threshold)
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fn else None
    fpr = fp / (fp + tn) if fp + tn else None
    return f1, fpr


def ap_at_tta(outcomes, tau: float, mode: str = "sliding") -> float:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    return average_precision([(o.candidate(tau, mode), o.positive) for o in outcomes])


def ewr_mtta(outcomes, threshold: Optional[float] = None) -> tuple:
    """Early-warning recall and mean time to alert over positives.

    With ``threshold`` given, first alerts are recomputed from each outcome's
    trace; otherwise the alert time recorded on the outcome is used.
    Returns ``(None, None)`` without positives and ``mtta = None`` when nothing
    is detected.
    """
    if threshold is not None and not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    leads = []
    n_pos = 0
    for o in outcomes:
        if not o.positive:
            continue
        n_pos += 1
        alert = o.alert_time(threshold)
        if alert is not None and alert < o.event_time_s:
            leads.append(o.event_time_s - alert)
    if n_pos == 0:
        return None, None
    ewr = len(leads) / n_pos
    mtta = math.fsum(leads) / len(leads) if leads else None
    return ewr, mtta


@dataclass
class GroupMetrics:
    auc: Optional[float] = None
    f1: Optional[float] = None
    ewr: Optional[float] = None
    mtta_s: Optional[float] = None
    fpr: Optional[float] = None
    ap: Optional[float] = None
    n_pos: int = 0
    n_neg: int = 0
    detected: int = 0

    def to_json(self) -> dict:
        return {
            "auc": _r6(self.auc),
            "f1": _r6(self.f1),
            "ewr": _r6(self.ewr),
            "mtta_s": _r6(self.mtta_s),
            "fpr": _r6(self.fpr),
            "ap": _r6(self.ap),
            "counts": {"pos": self.n_pos, "neg": self.n_neg, "detected": self.detected},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroupMetrics":
        counts = obj.get("counts", {})
        return cls(
            auc=obj.get("auc"), f1=obj.get("f1"), ewr=obj.get("ewr"), mtta_s=obj.get("mtta_s"),
            fpr=obj.get("fpr"), ap=obj.get("ap"), n_pos=counts.get("pos", 0),
            n_neg=counts.get("neg", 0), detected=counts.get("detected", 0),
        )


@dataclass
class KaggleBlock:
    ap_at: dict = field(default_factory=dict)
    map: Optional[float] = None
    fpr: Optional[float] = None
    mode: str = "sliding"

    def to_json(self) -> dict:
        return {
            "ap@0.5": _r6(self.ap_at.get(0.5)),
            "ap@1.0": _r6(self.ap_at.get(1.0)),
            "ap@1.5": _r6(self.ap_at.get(1.5)),
            "map": _r6(self.map),
            "fpr": _r6(self.fpr),
            "mode": self.mode,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "KaggleBlock":
        return cls(
            ap_at={tau: obj.get(f"ap@{tau}") for tau in LEAD_TIMES},
            map=obj.get("map"),
            fpr=obj.get("fpr"),
            mode=obj.get("mode", "sliding"),
        )


@dataclass
class MetricsReport:
    groups: dict
    overall: GroupMetrics
    kaggle: KaggleBlock
    threshold: float
    manifest: str = ""
    clip_count: int = 0
    diagnostics: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "manifest": self.manifest,
            "clip_count": self.clip_count,
            "threshold": self.threshold,
            "groups": {g: m.to_json() for g, m in self.groups.items()},
            "overall": self.overall.to_json(),
            "kaggle": self.kaggle.to_json(),
            "diagnostics": list(self.diagnostics),
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsReport":
        return cls(
            groups={g: GroupMetrics.from_json(m) for g, m in obj["groups"].items()},
            overall=GroupMetrics.from_json(obj["overall"]),
            kaggle=KaggleBlock.from_json(obj.get("kaggle", {})),
            threshold=obj["threshold"],
            manifest=obj.get("manifest", ""),
            clip_count=obj.get("clip_count", 0),
            diagnostics=obj.get("diagnostics", []),
            provenance=obj.get("provenance", {}),
        )


def _r6(x):
    return None if x is None else round(float(x), 6)


def group_metrics(outcomes, threshold: float = DEFAULT_THRESHOLD, diagnostics=None, label="") -> GroupMetrics:
    m = GroupMetrics()
    m.n_pos = sum(o.positive for o in outcomes)
    m.n_neg = len(outcomes) - m.n_pos
    peaks = [(o.peak_score, o.positive) for o in outcomes]
    try:
        m.auc = roc_auc(peaks)
    except MetricError as exc:
        if diagnostics is not None:
            diagnostics.append(f"{label}: {exc}")
    try:
        m.ap = average_precision(peaks)
    except MetricError as exc:
        if diagnostics is not None:
            diagnostics.append(f"{label}: {exc}")
    m.f1, m.fpr = f1_fpr_at_threshold(outcomes, threshold)
    m.ewr, m.mtta_s = ewr_mtta(outcomes)
    if m.ewr is not None:
        m.detected = round(m.ewr * m.n_pos)
    return m


def kaggle_block(outcomes, mode: str = "sliding", threshold: float = DEFAULT_THRESHOLD,
                 taus=LEAD_TIMES, diagnostics=None) -> KaggleBlock:
    block = KaggleBlock(mode=mode)
    try:
        for tau in taus:
            block.ap_at[tau] = ap_at_tta(outcomes, tau, mode)
        block.map = math.fsum(block.ap_at.values()) / len(block.ap_at)
    except MetricError as exc:
        block.ap_at.clear()
        if diagnostics is not None:
            diagnostics.append(f"kaggle: {exc}")
    negs = [o.candidate(taus[0], mode) for o in outcomes if not o.positive]
    if negs:
        block.fpr = sum(s >= threshold for s in negs) / len(negs)
    return block


def evaluate(manifest: Manifest, traces: dict, threshold: float = DEFAULT_THRESHOLD,
             mode: str = "sliding", taus=LEAD_TIMES) -> MetricsReport:
    """Per-group and pooled metrics for every manifest clip."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    outcomes = outcomes_for(manifest, traces, threshold, taus)
    diagnostics: list = []
    by_group: dict = {}
    for o in outcomes:
        by_group.setdefault(o.group, []).append(o)
    groups = {
        g: group_metrics(by_group[g], threshold, diagnostics, g)
        for g in manifest.groups()
    }
    overall = group_metrics(outcomes, threshold, diagnostics, "overall")
    kaggle = kaggle_block(outcomes, mode, threshold, taus, diagnostics)
    return MetricsReport(
        groups=groups,
        overall=overall,
        kaggle=kaggle,
        threshold=threshold,
        manifest=manifest.name,
        clip_count=len(manifest),
        diagnostics=diagnostics,
        provenance={"mode": mode, "lead_times": list(taus)},
    )
