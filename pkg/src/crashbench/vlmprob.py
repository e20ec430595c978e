"""Collision probabilities from autoregressive VLM outputs.

Two extraction routes: a two-way softmax over the log-probabilities of the
answer tokens, and a mean over decimals sampled at three temperatures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from crashbench.manifest import ManifestError, iter_jsonl
from crashbench.scorer import ScoreTrace

TEMPERATURES = (0.0, 0.3, 0.7)
NEG_FLOOR = 0.003
POS_FLOOR = 0.6


@dataclass(frozen=True)
class AnswerLogits:
    ell_a: float
    ell_b: float


@dataclass(frozen=True)
class TemperatureTriple:
    p_00: float
    p_03: float
    p_07: float


def _two_sum(a: float, b: float) -> tuple:
    """``s + err == a + b`` exactly (Knuth)."""
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


_SPLIT = 134217729.0  # 2**27 + 1


def _two_prod(a: float, b: float) -> tuple:
    """``p + err == a * b`` exactly (Dekker); valid away from overflow."""
    p = a * b
    t = _SPLIT * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLIT * b
    bh = t - (t - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _sigmoid2(x: float, x_lo: float = 0.0) -> float:
    """Logistic of the double-double ``x + x_lo`` with compensated arithmetic.

    The difference of two log-probabilities is rounded before the logistic
    sees it, and the logistic amplifies that rounding by ``|x| (1 - p)``;
    carrying the residual ``x_lo`` and correcting ``1 + e`` and the final
    division keeps the result within about one ulp of the exact value.
    """
    neg = x < 0
    e = math.exp(x if neg else -x)
    if e == 0.0:
        return 0.0 if neg else 1.0
    e_lo = e * x_lo if neg else -e * x_lo  # exp(+-(x + x_lo)) ~= e * (1 +- x_lo)
    s, s_lo = _two_sum(1.0, e)
    s_lo += e_lo
    q = 1.0 / s
    ph, pl = _two_prod(q, s)
    r = (1.0 - ph) - pl  # exact: 1 - q*s
    q_lo = q * r - q * q * s_lo  # 1/(s + s_lo) ~= q + q_lo
    if not neg:
        return q + q_lo
    ph, pl = _two_prod(e, q)
    return ph + (pl + e * q_lo + e_lo * q)


def answer_token_probability(logits) -> float:
    """``exp(l_a) / (exp(l_a) + exp(l_b))`` evaluated as ``sigmoid(l_a - l_b)``.

    The logistic form never overflows; the rounding residual of ``l_a - l_b``
    is carried through so large log-probabilities lose no accuracy.
    """
    a, b = (logits.ell_a, logits.ell_b) if isinstance(logits, AnswerLogits) else logits
    a, b = float(a), float(b)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError(f"non-finite answer log-probabilities ({a}, {b})")
    d, d_lo = _two_sum(a, -b)
    if not math.isfinite(d):
        return 1.0 if d > 0 else 0.0
    return _sigmoid2(d, d_lo)


def temperature_ensemble(triple) -> float:
    values = (triple.p_00, triple.p_03, triple.p_07) if isinstance(triple, TemperatureTriple) else tuple(triple)
    if len(values) != 3:
        raise ValueError("expected one probability per temperature (0.0, 0.3, 0.7)")
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"probability {v} outside [0, 1]")
    # exact rational mean, rounded once
    return float(sum(map(Fraction, values)) / 3)


@dataclass(frozen=True)
class CompressionDiagnostic:
    positive_peak_mean: float
    negative_mean: float
    dynamic_range: float
    frac_negatives_below: float
    frac_positive_peaks_below: float

    def to_json(self) -> dict:
        return {
            "positive_peak_mean": self.positive_peak_mean,
            "negative_mean": self.negative_mean,
            "dynamic_range": self.dynamic_range,
            f"frac_negatives_below_{NEG_FLOOR}": self.frac_negatives_below,
            f"frac_positive_peaks_below_{POS_FLOOR}": self.frac_positive_peaks_below,
        }


def compression_diagnostic(pos_peaks: Sequence[float], neg_scores: Sequence[float],
                           neg_floor: float = NEG_FLOOR, pos_floor: float = POS_FLOOR) -> CompressionDiagnostic:
    """Summarize how squeezed a scorer's output range is.

    A compressed scorer has positive peaks far below 1 and negatives pinned
    near 0, so no single threshold separates them reliably.
    """
    pos = [float(p) for p in pos_peaks]
    neg = [float(n) for n in neg_scores]
    if not pos or not neg:
        raise ValueError("need at least one positive peak and one negative score")
    pos_mean = math.fsum(pos) / len(pos)
    neg_mean = math.fsum(neg) / len(neg)
    return CompressionDiagnostic(
        positive_peak_mean=pos_mean,
        negative_mean=neg_mean,
        dynamic_range=pos_mean - neg_mean,
        frac_negatives_below=sum(n < neg_floor for n in neg) / len(neg),
        frac_positive_peaks_below=sum(p < pos_floor for p in pos) / len(pos),
    )


def probability_from_record(obj: dict) -> float:
    if "ell_a" in obj and "ell_b" in obj:
        return answer_token_probability((obj["ell_a"], obj["ell_b"]))
    if "p" in obj:
        return temperature_ensemble(obj["p"])
    raise ValueError("record needs ell_a/ell_b or p")


def traces_from_logits_file(path) -> dict:
    """Convert ``logits.jsonl`` records to score traces.

    Records may carry ``t`` (prediction time); without it each clip gets a
    single window at ``t = 0``.  Several records per clip form one trace.
    """
    rows: dict = {}
    for lineno, obj in iter_jsonl(path):
        try:
            cid = obj["clip_id"]
            p = probability_from_record(obj)
        except (KeyError, ValueError, TypeError) as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
        rows.setdefault(cid, []).append((float(obj.get("t", 0.0)), p))
    traces = {}
    for cid, entries in rows.items():
        entries.sort()
        traces[cid] = ScoreTrace(cid, [t for t, _ in entries], [p for _, p in entries])
    return traces
