"""Pure-numpy implementations of the hot kernels.

These are the reference fallback for :mod:`crashbench._ckernels`.  The resize
kernel performs the same float64 operations in the same order as the compiled
version so both backends are bit-identical.
"""

import numpy as np


def resize_bilinear(src, out_h, out_w):
    """Bilinear resize of a float64 ``[H, W, C]`` array, half-pixel centers.

    Source coordinate for output index ``i`` is ``(i + 0.5) * (H / out_h) - 0.5``
    clamped to ``[0, H - 1]``.  Interpolation uses the lerp form
    ``a + f * (b - a)`` so constant regions stay exactly constant.
    """
    src = np.ascontiguousarray(src, dtype=np.float64)
    h, w, nc = src.shape
    ys, y0, y1 = _axis(h, out_h)
    xs, x0, x1 = _axis(w, out_w)
    # Work on [rows, width * channels] so the inner loops run over long
    # contiguous rows rather than the 3-wide channel axis.
    ch = np.arange(nc)
    c0 = (x0[:, None] * nc + ch).ravel()
    c1 = (x1[:, None] * nc + ch).ravel()
    fx = np.repeat(xs - x0, nc)
    fy = (ys - y0)[:, None]
    # Horizontal pass once per needed source row, then gather rows: each
    # output element sees exactly the operations of the four-corner form.
    rows, inv = np.unique(np.concatenate([y0, y1]), return_inverse=True)
    flat = src.reshape(h, w * nc)[rows]
    left = flat[:, c0]
    horiz = flat[:, c1]
    _lerp_into(horiz, left, fx)
    top = horiz[inv[:out_h]]
    out = horiz[inv[out_h:]]
    _lerp_into(out, top, fy)
    return out.reshape(out_h, out_w, nc)


def _lerp_into(b, a, f):
    """``b <- a + f * (b - a)`` in place (fresh temporaries dominate otherwise)."""
    np.subtract(b, a, out=b)
    np.multiply(b, f, out=b)
    np.add(b, a, out=b)


def _axis(n_in, n_out):
    scale = n_in / n_out
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    pos = np.minimum(np.maximum(pos, 0.0), float(n_in - 1))
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return pos, lo, hi


def ranked_ap(scores, labels):
    """Step-wise average precision; equal scores form one threshold group."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    n_pos = int(y.sum())
    tp = np.cumsum(y)
    # last index of each tie group
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp_end = tp[ends]
    precision = tp_end / (ends + 1.0)
    gained = np.diff(np.r_[0, tp_end])
    return float(np.sum(gained * precision) / n_pos)


def ranked_auc(scores, labels):
    """Mann-Whitney AUC with mid-ranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n = scores.size
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(n, dtype=np.float64)
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], n]
    # 1-based mid-rank of each tie group
    mid = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(mid, ends - starts)
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
