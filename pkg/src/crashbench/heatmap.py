"""Training-free attention heatmaps and Pointing Game Accuracy.

Pipeline per prediction window: exponential temporal weights over the 16
input frames, mapped onto temporal tokens; per-layer weighted sum of the
16x16 attention maps; mean over layers; bilinear upsample to 256x256 with
the streaming resampler; min-max normalization.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from crashbench import kernels

GRID = 16
HEATMAP_SIZE = 256
WINDOW_FRAMES = 16
DEFAULT_TEMPERATURE = 2.0
WEIGHT_CENTER = 7
ATTN_MAGIC = b"ATTN"
ATTN_VERSION = 1
# default late-layer selections per backbone size
DEFAULT_LAYERS = {"vit_l": tuple(range(12, 21)), "vit_b": tuple(range(8, 13))}


class HeatmapError(ValueError):
    pass


def temporal_weights(num_frames: int = WINDOW_FRAMES, T: float = DEFAULT_TEMPERATURE,
                     center: int = WEIGHT_CENTER) -> np.ndarray:
    """Softmax of ``(t - center) / T`` over frame indices ``t = 0..num_frames-1``."""
    if num_frames < 1:
        raise HeatmapError("num_frames must be >= 1")
    if not T > 0:
        raise HeatmapError("temperature T must be > 0")
    z = (np.arange(num_frames, dtype=np.float64) - center) / T
    e = np.exp(z - z.max())
    return e / e.sum()


def token_weights(frame_weights: np.ndarray, frames_per_token: int = 2) -> np.ndarray:
    """Collapse frame weights onto temporal tokens spanning ``frames_per_token`` frames.

    Weights of the frames covered by a token are summed, so token weights still
    sum to one.
    """
    n = frame_weights.size
    if n % frames_per_token:
        raise HeatmapError(f"{n} frames do not split into tokens of {frames_per_token}")
    return frame_weights.reshape(-1, frames_per_token).sum(axis=1)


@dataclass
class AttentionStack:
    """Per-layer attention received by each spatio-temporal patch.

    ``layers`` holds one ``[T_tok, 16, 16]`` array per entry of ``layer_ids``.
    """

    layers: list
    layer_ids: list
    frames_per_token: int = 2

    def __post_init__(self):
        self.layers = [np.asarray(l, dtype=np.float64) for l in self.layers]
        self.layer_ids = [int(i) for i in self.layer_ids]
        if len(self.layers) != len(self.layer_ids):
            raise HeatmapError("one layer id per layer required")
        if self.layer_ids != sorted(self.layer_ids):
            raise HeatmapError("layer_ids must be sorted ascending")
        for lid, arr in zip(self.layer_ids, self.layers):
            if arr.ndim != 3 or arr.shape[1:] != (GRID, GRID):
                raise HeatmapError(f"layer {lid}: expected [T_tok, {GRID}, {GRID}], got {arr.shape}")
            if (arr < 0).any():
                raise HeatmapError(f"layer {lid}: negative attention mass")

    @property
    def t_tok(self) -> int:
        return self.layers[0].shape[0] if self.layers else 0

    def select(self, layer_ids: Sequence[int]) -> "AttentionStack":
        wanted = set(layer_ids)
        keep = [(i, l) for i, l in zip(self.layer_ids, self.layers) if i in wanted]
        return AttentionStack([l for _, l in keep], [i for i, _ in keep], self.frames_per_token)


@dataclass
class RawAttention:
    """Full self-attention matrices ``[heads, N, N]`` for each layer.

    Keys are laid out as ``n_prefix`` non-spatial tokens followed by
    ``t_tok * 16 * 16`` patch tokens in (time, row, col) order.
    """

    matrices: list
    layer_ids: list
    t_tok: int
    n_prefix: int = 0
    frames_per_token: int = 2


def aggregate_raw(raw: RawAttention, row_tol: float = 1e-4) -> AttentionStack:
    """Mean over heads and query tokens of attention received by each patch key."""
    n_expected = raw.n_prefix + raw.t_tok * GRID * GRID
    layers = []
    for lid, mat in zip(raw.layer_ids, raw.matrices):
        mat = np.asarray(mat, dtype=np.float64)
        if mat.ndim != 3 or mat.shape[1] != mat.shape[2]:
            raise HeatmapError(f"layer {lid}: expected [heads, N, N], got {mat.shape}")
        if mat.shape[1] != n_expected:
            raise HeatmapError(
                f"layer {lid}: {mat.shape[1]} tokens but layout needs "
                f"{raw.n_prefix} + {raw.t_tok}x{GRID}x{GRID} = {n_expected}"
            )
        rows = mat.sum(axis=2)
        if np.abs(rows - 1.0).max() > row_tol:
            raise HeatmapError(f"layer {lid}: attention rows do not sum to 1")
        received = mat.mean(axis=0).mean(axis=0)[raw.n_prefix:]
        layers.append(received.reshape(raw.t_tok, GRID, GRID))
    return AttentionStack(layers, list(raw.layer_ids), raw.frames_per_token)


@dataclass
class Heatmap:
    values: np.ndarray
    peak: tuple
    clip_id: str = ""
    window_id: Optional[int] = None
    frame_index: Optional[int] = None

    @classmethod
    def from_values(cls, values: np.ndarray, **meta) -> "Heatmap":
        """Min-max normalize ``values``; a constant map becomes all zeros."""
        v = np.asarray(values, dtype=np.float64)
        lo, hi = v.min(), v.max()
        if hi > lo:
            norm = (v - lo) / (hi - lo)
        else:
            norm = np.zeros_like(v)
        return cls(norm, peak_of(norm), **meta)


def peak_of(values: np.ndarray) -> tuple:
    """First maximum in row-major order."""
    flat = int(np.argmax(values))
    return divmod(flat, values.shape[1])


def compose_heatmap(stack: AttentionStack, T: float = DEFAULT_TEMPERATURE, **meta) -> Heatmap:
    if not stack.layers:
        raise HeatmapError("attention stack has no layers")
    n_frames = stack.t_tok * stack.frames_per_token
    u = token_weights(temporal_weights(n_frames, T), stack.frames_per_token)
    per_layer = [np.tensordot(u, layer, axes=(0, 0)) for layer in stack.layers]
    grid = np.mean(per_layer, axis=0)
    up = kernels.resize_bilinear(grid[:, :, None], HEATMAP_SIZE, HEATMAP_SIZE)[:, :, 0]
    return Heatmap.from_values(up, **meta)


def _box_xyxy(box) -> tuple:
    return tuple(box[1:]) if len(box) == 5 else tuple(box)


def boxes_for_frame(boxes, frame_index: Optional[int]) -> list:
    """Boxes on ``frame_index``; all boxes when the frame is unknown or 4-tuples are given."""
    if frame_index is None:
        return [_box_xyxy(b) for b in boxes]
    return [_box_xyxy(b) for b in boxes if len(b) != 5 or b[0] == frame_index]


def pointing_game(heatmap, boxes) -> bool:
    """Whether the peak pixel falls inside any box (edges inclusive).

    ``heatmap`` may be a :class:`Heatmap` or a bare ``(row, col)`` peak.
    Boxes are ``(x0, y0, x1, y1)`` with x along columns.
    """
    boxes = list(boxes)
    if not boxes:
        raise HeatmapError("clip not PGA-annotated")
    row, col = heatmap.peak if isinstance(heatmap, Heatmap) else heatmap
    for box in boxes:
        x0, y0, x1, y1 = _box_xyxy(box)
        if x0 <= col <= x1 and y0 <= row <= y1:
            return True
    return False


def box_coverage(boxes, size: int = HEATMAP_SIZE) -> float:
    """Fraction of pixels whose (row, col) lies in the union of boxes.

    Uses the same inclusive-edge rule as :func:`pointing_game`, so it equals the
    hit rate of a uniformly random peak.
    """
    mask = np.zeros((size, size), dtype=bool)
    for box in boxes:
        x0, y0, x1, y1 = _box_xyxy(box)
        c0, r0 = max(0, math.ceil(x0)), max(0, math.ceil(y0))
        c1, r1 = min(size - 1, math.floor(x1)), min(size - 1, math.floor(y1))
        if c1 >= c0 and r1 >= r0:
            mask[r0:r1 + 1, c0:c1 + 1] = True
    return float(mask.mean())


@dataclass
class PGAResult:
    pga: float
    baseline: float
    hits: int
    clips: int
    per_clip: dict = field(default_factory=dict)

    @property
    def delta(self) -> float:
        return self.pga - self.baseline

    def to_json(self) -> dict:
        return {"pga": round(self.pga, 6), "random_baseline": round(self.baseline, 6),
                "delta_vs_random": round(self.delta, 6), "hits": self.hits, "clips": self.clips}


def pga_accuracy(clips, heatmaps: dict) -> PGAResult:
    """Pointing Game Accuracy over annotated clips and its random baseline.

    ``heatmaps`` maps clip_id to a :class:`Heatmap` or ``(row, col)`` peak.
    The baseline is the mean box coverage, i.e. the expected PGA of a peak
    drawn uniformly over the frame.
    """
    annotated = [c for c in clips if c.gt_boxes]
    if not annotated:
        raise HeatmapError("no PGA-annotated clips")
    missing = [c.clip_id for c in annotated if c.clip_id not in heatmaps]
    if missing:
        raise HeatmapError(f"no heatmap for clips: {', '.join(missing[:20])}")
    hits = 0
    cover = []
    per_clip = {}
    for clip in annotated:
        hm = heatmaps[clip.clip_id]
        frame = hm.frame_index if isinstance(hm, Heatmap) else None
        boxes = boxes_for_frame(clip.gt_boxes, frame)
        hit = pointing_game(hm, boxes)
        per_clip[clip.clip_id] = hit
        hits += hit
        cover.append(box_coverage(boxes))
    n = len(annotated)
    return PGAResult(hits / n, math.fsum(cover) / n, hits, n, per_clip)


def write_attention_file(stack: AttentionStack, path) -> None:
    with open(path, "wb") as fh:
        fh.write(ATTN_MAGIC)
        fh.write(struct.pack("<II", ATTN_VERSION, len(stack.layers)))
        for lid, layer in zip(stack.layer_ids, stack.layers):
            t, h, w = layer.shape
            fh.write(struct.pack("<IIII", lid, t, h, w))
            fh.write(np.ascontiguousarray(layer, dtype="<f4").tobytes())


def read_attention_file(path, frames_per_token: int = 2) -> AttentionStack:
    data = Path(path).read_bytes()
    if data[:4] != ATTN_MAGIC:
        raise HeatmapError(f"{path}: bad magic {data[:4]!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != ATTN_VERSION:
        raise HeatmapError(f"{path}: unsupported version {version}")
    off = 12
    layers, ids = [], []
    for _ in range(count):
        if off + 16 > len(data):
            raise HeatmapError(f"{path}: truncated layer header")
        lid, t, h, w = struct.unpack_from("<IIII", data, off)
        off += 16
        if (h, w) != (GRID, GRID):
            raise HeatmapError(f"{path}: layer {lid} spatial size {h}x{w}, expected {GRID}x{GRID}")
        n = t * h * w
        if off + 4 * n > len(data):
            raise HeatmapError(f"{path}: truncated data for layer {lid}")
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(t, h, w)
        off += 4 * n
        layers.append(arr.astype(np.float64))
        ids.append(lid)
    if off != len(data):
        raise HeatmapError(f"{path}: {len(data) - off} trailing bytes")
    return AttentionStack(layers, ids, frames_per_token)


def write_pgm(heatmap: Heatmap, path) -> None:
    """8-bit binary PGM (P5); pixel = round(value * 255)."""
    pix = np.rint(np.clip(heatmap.values, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise HeatmapError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise HeatmapError(f"{path}: only 8-bit PGM supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def write_sidecar(heatmap: Heatmap, path, hit: Optional[bool] = None) -> None:
    obj = {"clip_id": heatmap.clip_id, "peak": {"row": int(heatmap.peak[0]), "col": int(heatmap.peak[1])}}
    if heatmap.frame_index is not None:
        obj["frame_index"] = heatmap.frame_index
    if hit is not None:
        obj["pga_hit"] = bool(hit)
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")
