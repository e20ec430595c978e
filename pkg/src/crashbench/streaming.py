"""Streaming inference: frame sources, preprocessing, rolling window buffer,
threshold alerting and latency instrumentation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from crashbench import kernels
from crashbench.scorer import (
    DEFAULT_FPS,
    WINDOW_FRAMES,
    Scorer,
    ScorerError,
    ScoreTrace,
    Window,
    prediction_time,
)

logger = logging.getLogger(__name__)

MODEL_SIZE = 256


@dataclass(frozen=True)
class PreprocessConfig:
    """Resize target and per-channel normalization applied after scaling to [0, 1]."""

    size: int = MODEL_SIZE
    mean: tuple = (0.0, 0.0, 0.0)
    std: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ValueError("mean and std need one value per channel")
        if any(s <= 0 for s in self.std):
            raise ValueError("std must be positive")


DEFAULT_PREPROCESS = PreprocessConfig()


def preprocess_frame(raw: np.ndarray, config: PreprocessConfig = DEFAULT_PREPROCESS) -> np.ndarray:
    """Resize an ``H x W x 3`` uint8 frame to the model size and normalize.

    Returns float32 ``size x size x 3``.  Computation is float64 throughout and
    cast once at the end so every backend produces identical bits.
    """
    raw = np.asarray(raw)
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 frame, got shape {raw.shape}")
    if raw.shape[0] < 1 or raw.shape[1] < 1:
        raise ValueError("zero-sized frame")
    resized = kernels.resize_bilinear(raw.astype(np.float64), config.size, config.size)
    resized = np.asarray(resized)
    np.divide(resized, 255.0, out=resized)
    # subtracting 0 and dividing by 1 are exact, so identity steps are skipped
    if any(config.mean):
        np.subtract(resized, np.asarray(config.mean, dtype=np.float64), out=resized)
    if any(s != 1.0 for s in config.std):
        np.divide(resized, np.asarray(config.std, dtype=np.float64), out=resized)
    return resized.astype(np.float32)


class FrameSource:
    """An ordered stream of raw uint8 frames for one clip."""

    def __init__(self, clip_id: str, frames: Iterable, fps: float = DEFAULT_FPS):
        if not fps > 0:
            raise ValueError("fps must be > 0")
        self.clip_id = clip_id
        self.fps = float(fps)
        self._frames = frames

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self._frames)

    @classmethod
    def from_directory(cls, path, clip_id: Optional[str] = None, fps: float = DEFAULT_FPS) -> "FrameSource":
        """Frames named ``%06d.ppm`` / ``%06d.png``, read lazily in index order."""
        from PIL import Image

        path = Path(path)
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".ppm", ".png") and p.stem.isdigit())
        if not files:
            raise FileNotFoundError(f"no %06d.ppm/.png frames in {path}")

        def frames():
            for p in files:
                with Image.open(p) as img:
                    yield np.asarray(img.convert("RGB"), dtype=np.uint8)

        return cls(clip_id or path.name, frames(), fps)

    @classmethod
    def synthetic(cls, clip_id: str, n_frames: int, height: int = 64, width: int = 64, seed: int = 0,
                  fps: float = DEFAULT_FPS) -> "FrameSource":
        return cls(clip_id, synthetic_frames(n_frames, height, width, seed), fps)


def synthetic_frames(n_frames: int, height: int = 64, width: int = 64, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, (height, width, 3), dtype=np.uint8) for _ in range(n_frames)]


def write_frame_directory(frames, path) -> None:
    """Write frames as binary PPM files ``000000.ppm``, ``000001.ppm``, ..."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        h, w, _ = f.shape
        with open(path / f"{i:06d}.ppm", "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(np.ascontiguousarray(f, dtype=np.uint8).tobytes())


class RollingBuffer:
    """Fixed 16-frame window over preprocessed frames.

    Storage is a doubled ring (32 slots): frame ``k`` is written to slots
    ``k % 16`` and ``k % 16 + 16`` so the current window is always one
    contiguous slice and materializing it copies nothing.
    """

    def __init__(self, frame_shape=(MODEL_SIZE, MODEL_SIZE, 3), capacity: int = WINDOW_FRAMES):
        self.capacity = capacity
        self._buf = np.zeros((2 * capacity,) + tuple(frame_shape), dtype=np.float32)
        self.pushed = 0

    @property
    def fill(self) -> int:
        return min(self.pushed, self.capacity)

    @property
    def full(self) -> bool:
        return self.pushed >= self.capacity

    @property
    def start_frame_index(self) -> int:
        return max(0, self.pushed - self.capacity)

    def push(self, frame: np.ndarray) -> None:
        slot = self.pushed % self.capacity
        self._buf[slot] = frame
        self._buf[slot + self.capacity] = frame
        self.pushed += 1

    def window(self) -> np.ndarray:
        """Read-only view of the buffered frames, oldest first.

        The view aliases the ring; it is valid until the next :meth:`push`.
        """
        if not self.full:
            raise ValueError(f"buffer holds {self.pushed} of {self.capacity} frames")
        start = self.pushed % self.capacity
        view = self._buf[start:start + self.capacity]
        view.flags.writeable = False
        return view


@dataclass(frozen=True)
class AlertEvent:
    clip_id: str
    alert_time_s: float
    score: float
    threshold: float

    def to_json(self) -> dict:
        return {"clip_id": self.clip_id, "alert_time_s": self.alert_time_s, "score": self.score,
                "threshold": self.threshold}


def _summary(ms: np.ndarray) -> dict:
    if ms.size == 0:
        return {"mean": None, "p50": None, "p99": None}
    return {
        "mean": float(ms.mean()),
        "p50": float(np.percentile(ms, 50)),
        "p99": float(np.percentile(ms, 99)),
    }


@dataclass
class LatencyReport:
    """Per-window preprocessing/inference timings from a monotonic clock."""

    clip_id: str = ""
    preprocessing_ms: list = field(default_factory=list)
    inference_ms: list = field(default_factory=list)
    preprocess_calls: int = 0
    frames: int = 0

    @property
    def windows(self) -> int:
        return len(self.inference_ms)

    def total_ms(self) -> np.ndarray:
        return np.asarray(self.preprocessing_ms) + np.asarray(self.inference_ms)

    def summary(self) -> dict:
        pre = np.asarray(self.preprocessing_ms, dtype=np.float64)
        inf = np.asarray(self.inference_ms, dtype=np.float64)
        return {
            "clip_id": self.clip_id,
            "windows": self.windows,
            "frames": self.frames,
            "preprocess_calls": self.preprocess_calls,
            "preprocessing_ms": _summary(pre),
            "inference_ms": _summary(inf),
            "total_ms": _summary(pre + inf),
            "totals": {
                "preprocessing_ms": float(pre.sum()),
                "inference_ms": float(inf.sum()),
                "total_ms": float(pre.sum() + inf.sum()),
            },
        }

    @classmethod
    def merge(cls, reports) -> "LatencyReport":
        out = cls(clip_id="*")
        for r in reports:
            out.preprocessing_ms.extend(r.preprocessing_ms)
            out.inference_ms.extend(r.inference_ms)
            out.preprocess_calls += r.preprocess_calls
            out.frames += r.frames
        return out


@dataclass
class StreamResult:
    trace: ScoreTrace
    alerts: list
    latency: LatencyReport
    error: Optional[str] = None


class StreamAborted(RuntimeError):
    """Scorer failure mid-stream; ``result`` holds the partial outputs."""

    def __init__(self, message: str, result: StreamResult):
        super().__init__(message)
        self.result = result


def run_stream(
    source: FrameSource,
    scorer: Scorer,
    threshold: float = 0.75,
    stride: int = 1,
    config: PreprocessConfig = DEFAULT_PREPROCESS,
    rearm_after_s: Optional[float] = None,
    window_hook: Optional[Callable[[Window], None]] = None,
    clock: Callable[[], int] = time.perf_counter_ns,
) -> StreamResult:
    """Score a clip frame by frame through a rolling 16-frame buffer.

    Each incoming frame is preprocessed exactly once.  The first window is
    scored once 16 frames are buffered, then every ``stride`` frames.  The
    first score at or above ``threshold`` raises an alert; with
    ``rearm_after_s`` set, further alerts may fire once that much time has
    passed since the previous one.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    buf = RollingBuffer((config.size, config.size, 3))
    trace = ScoreTrace(source.clip_id, fps=source.fps, stride=stride)
    latency = LatencyReport(clip_id=source.clip_id)
    alerts: list = []
    result = StreamResult(trace, alerts, latency)
    pre_ns = 0
    last_alert = None

    for k, raw in enumerate(source):
        t0 = clock()
        frame = preprocess_frame(raw, config)
        latency.preprocess_calls += 1
        buf.push(frame)
        pre_ns += clock() - t0
        latency.frames += 1
        last = k
        if last < WINDOW_FRAMES - 1 or (last - (WINDOW_FRAMES - 1)) % stride:
            continue

        window = Window(buf.window(), buf.start_frame_index, source.fps, source.clip_id)
        if window_hook is not None:
            window_hook(window)
        t1 = clock()
        try:
            score = float(scorer.score(window))
        except ScorerError as exc:
            trace.complete = False
            result.error = str(exc)
            raise StreamAborted(f"clip {source.clip_id!r}: {exc}", result) from exc
        infer_ns = clock() - t1
        latency.preprocessing_ms.append(pre_ns / 1e6)
        latency.inference_ms.append(infer_ns / 1e6)
        pre_ns = 0

        t = prediction_time(last, source.fps)
        trace.append(t, score)
        if score >= threshold:
            armed = last_alert is None or (
                rearm_after_s is not None and t - last_alert >= rearm_after_s
            )
            if armed:
                alerts.append(AlertEvent(source.clip_id, t, score, threshold))
                last_alert = t
    return result


def preprocess_clip(frames, config: PreprocessConfig = DEFAULT_PREPROCESS) -> np.ndarray:
    frames = list(frames)
    out = np.empty((len(frames), config.size, config.size, 3), dtype=np.float32)
    for i, f in enumerate(frames):
        out[i] = preprocess_frame(f, config)
    return out


def batch_extract_windows(frames, stride: int = 1, config: PreprocessConfig = DEFAULT_PREPROCESS,
                          fps: float = DEFAULT_FPS, clip_id: str = "",
                          preprocessed: Optional[np.ndarray] = None) -> list:
    """Slice every window out of a fully decoded, fully preprocessed clip.

    This is the non-streaming reference for :func:`run_stream`.  Pass
    ``preprocessed`` to reuse an already preprocessed clip array.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    clip = preprocessed if preprocessed is not None else preprocess_clip(frames, config)
    n = clip.shape[0]
    if n < WINDOW_FRAMES:
        return []
    return [
        Window(clip[s:s + WINDOW_FRAMES], s, fps, clip_id)
        for s in range(0, n - WINDOW_FRAMES + 1, stride)
    ]
