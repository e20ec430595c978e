"""Pluggable risk scorers and the score-trace data model.

Every scorer maps a 16-frame :class:`Window` to a probability.  Built-ins:

* :class:`ConstantScorer` - fixed output.
* :class:`RampScorer` - linear ramp from 0 to 1 ending at the event.
* :class:`NoisyRampScorer` - ramp plus clipped Gaussian noise, seeded.
* :class:`ReplayScorer` - replays a stored :class:`ScoreTrace`.
* :class:`SubprocessScorer` - line-delimited JSON over a child process.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import os
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from crashbench.manifest import ManifestError, iter_jsonl, open_text

WINDOW_FRAMES = 16
DEFAULT_FPS = 8.0
FRAME_SHAPE = (256, 256, 3)
TIME_MATCH_TOL = 1e-9


class ScorerError(RuntimeError):
    """A scorer backend failed or replied with something unusable."""


def prediction_time(last_frame_index: int, fps: float) -> float:
    return last_frame_index / fps


@dataclass(frozen=True)
class Window:
    frames: np.ndarray
    start_frame_index: int
    fps: float = DEFAULT_FPS
    clip_id: str = ""

    def __post_init__(self):
        if self.frames.shape[0] != WINDOW_FRAMES:
            raise ValueError(f"window needs {WINDOW_FRAMES} frames, got {self.frames.shape[0]}")
        if self.start_frame_index < 0:
            raise ValueError("start_frame_index must be >= 0")

    @property
    def last_frame_index(self) -> int:
        return self.start_frame_index + WINDOW_FRAMES - 1

    @property
    def prediction_time_s(self) -> float:
        return prediction_time(self.last_frame_index, self.fps)


class ScoreTrace:
    """Time-ordered per-window risk probabilities for one clip."""

    __slots__ = ("clip_id", "times", "scores", "fps", "stride", "complete")

    def __init__(self, clip_id, times=(), scores=(), fps=DEFAULT_FPS, stride=1, complete=True):
        self.clip_id = clip_id
        self.times = [float(t) for t in times]
        self.scores = [float(s) for s in scores]
        self.fps = float(fps)
        self.stride = int(stride)
        self.complete = complete
        if len(self.times) != len(self.scores):
            raise ValueError("times and scores differ in length")
        for i, s in enumerate(self.scores):
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"trace {clip_id!r}: score {s} at t={self.times[i]} outside [0, 1]")
        for a, b in zip(self.times, self.times[1:]):
            if not b > a:
                raise ValueError(f"trace {clip_id!r}: times not strictly increasing at {b}")

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, ScoreTrace):
            return NotImplemented
        return (
            self.clip_id == other.clip_id
            and self.times == other.times
            and self.scores == other.scores
        )

    def __repr__(self):
        return f"ScoreTrace({self.clip_id!r}, n={len(self)}, fps={self.fps:g}, stride={self.stride})"

    def append(self, t: float, score: float) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"trace {self.clip_id!r}: time {t} not after {self.times[-1]}")
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score {score} outside [0, 1]")
        self.times.append(float(t))
        self.scores.append(float(score))

    @property
    def entries(self):
        return list(zip(self.times, self.scores))

    def peak(self) -> float:
        return max(self.scores) if self.scores else 0.0

    def header(self) -> dict:
        return {"clip_id": self.clip_id, "fps": self.fps, "stride": self.stride, "complete": self.complete}


def write_trace(trace: ScoreTrace, path) -> None:
    """Write ``trace.jsonl``: header line, then one ``{"t", "score"}`` per line."""
    with open_text(path, "wt") as fh:
        fh.write(json.dumps(trace.header()) + "\n")
        for t, s in zip(trace.times, trace.scores):
            fh.write(json.dumps({"t": t, "score": s}) + "\n")


def read_trace(path) -> ScoreTrace:
    header = None
    times, scores = [], []
    for lineno, obj in iter_jsonl(path):
        if header is None:
            if "clip_id" not in obj:
                raise ManifestError(f"{path}:{lineno}: trace header needs clip_id")
            header = obj
            continue
        times.append(obj["t"])
        scores.append(obj["score"])
    if header is None:
        raise ManifestError(f"{path}: empty trace file")
    return ScoreTrace(
        header["clip_id"],
        times,
        scores,
        fps=header.get("fps", DEFAULT_FPS),
        stride=header.get("stride", 1),
        complete=header.get("complete", True),
    )


def write_trace_bundle(traces, path, meta: Optional[dict] = None) -> None:
    """Write many traces to one JSONL file, one clip per line.

    An optional leading ``{"bundle": meta}`` line records provenance such as
    the scoring mode a fixture encodes.
    """
    with open_text(path, "wt") as fh:
        if meta is not None:
            fh.write(json.dumps({"bundle": meta}) + "\n")
        for tr in traces:
            row = tr.header()
            row["entries"] = [[t, s] for t, s in zip(tr.times, tr.scores)]
            fh.write(json.dumps(row) + "\n")


def read_trace_bundle(path) -> tuple:
    """Return ``(traces_by_clip_id, meta)``."""
    traces, meta = {}, {}
    for lineno, obj in iter_jsonl(path):
        if "bundle" in obj:
            meta = obj["bundle"]
            continue
        try:
            entries = obj["entries"]
            tr = ScoreTrace(
                obj["clip_id"],
                [e[0] for e in entries],
                [e[1] for e in entries],
                fps=obj.get("fps", DEFAULT_FPS),
                stride=obj.get("stride", 1),
                complete=obj.get("complete", True),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ManifestError(f"{path}:{lineno}: bad trace record: {exc}") from None
        if tr.clip_id in traces:
            raise ManifestError(f"{path}:{lineno}: duplicate trace for {tr.clip_id!r}")
        traces[tr.clip_id] = tr
    return traces, meta


def load_traces(path) -> tuple:
    """Load traces from a bundle file or a directory of ``*.jsonl`` trace files."""
    path = Path(path)
    if path.is_dir():
        traces = {}
        for p in sorted(path.glob("*.jsonl")) + sorted(path.glob("*.jsonl.gz")):
            tr = read_trace(p)
            traces[tr.clip_id] = tr
        return traces, {}
    return read_trace_bundle(path)


class Scorer:
    """Base class.  Subclasses implement :meth:`score`."""

    name = "scorer"

    def score(self, window: Window) -> float:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ConstantScorer(Scorer):
    name = "constant"

    def __init__(self, value: float):
        if not 0.0 <= value <= 1.0:
            raise ValueError("constant score must be in [0, 1]")
        self.value = float(value)

    def score(self, window):
        return self.value


class RampScorer(Scorer):
    """0 until ``event_time - rise``, linear to 1 at ``event_time``, then 1."""

    name = "ramp"

    def __init__(self, event_time: float = 6.0, rise_duration: float = 2.0):
        if rise_duration <= 0:
            raise ValueError("rise_duration must be > 0")
        self.event_time = float(event_time)
        self.rise_duration = float(rise_duration)

    def value_at(self, t: float) -> float:
        start = self.event_time - self.rise_duration
        if t <= start:
            return 0.0
        if t >= self.event_time:
            return 1.0
        return (t - start) / self.rise_duration

    def score(self, window):
        return self.value_at(window.prediction_time_s)


class NoisyRampScorer(RampScorer):
    """Ramp plus Gaussian noise clipped to [0, 1].

    The noise for a window depends only on ``(seed, clip_id, start_frame_index)``
    so repeated calls, and separate instances with the same seed, agree bitwise.
    """

    name = "noisy_ramp"

    def __init__(self, seed: int = 0, sigma: float = 0.1, event_time: float = 6.0, rise_duration: float = 2.0):
        super().__init__(event_time, rise_duration)
        self.seed = int(seed)
        self.sigma = float(sigma)

    def _rng(self, clip_id: str, start: int) -> np.random.Generator:
        digest = hashlib.blake2b(clip_id.encode(), digest_size=8).digest()
        key = int.from_bytes(digest, "little")
        return np.random.default_rng([self.seed, key, start])

    def score(self, window):
        base = self.value_at(window.prediction_time_s)
        noise = self._rng(window.clip_id, window.start_frame_index).normal(0.0, self.sigma)
        return float(min(1.0, max(0.0, base + noise)))


class ReplayScorer(Scorer):
    """Replays stored scores keyed by prediction time (exact match within 1e-9 s)."""

    name = "replay"

    def __init__(self, trace: ScoreTrace):
        self.trace = trace
        self._times = np.asarray(trace.times, dtype=np.float64)

    @classmethod
    def from_file(cls, path) -> "ReplayScorer":
        return cls(read_trace(path))

    def score(self, window):
        return self.score_at(window.prediction_time_s)

    def score_at(self, t: float) -> float:
        if self._times.size == 0:
            raise ScorerError(f"replay trace {self.trace.clip_id!r} is empty")
        i = int(np.argmin(np.abs(self._times - t)))
        if abs(self._times[i] - t) > TIME_MATCH_TOL:
            raise ScorerError(
                f"replay trace {self.trace.clip_id!r} has no score at t={t:.9f} s; "
                f"nearest available time is {self._times[i]:.9f} s"
            )
        return self.trace.scores[i]


class SubprocessScorer(Scorer):
    """Scores windows through a child process speaking line-delimited JSON.

    Request: ``{"id", "start_frame", "shape", "data"}`` where ``data`` is the
    base64 of the window as little-endian float32.  With ``send_frames=False``
    the pixel payload is omitted and ``clip_id`` is sent instead, for replaying
    backends.  Reply: ``{"id", "score"}``.
    """

    name = "subprocess"

    def __init__(self, command, send_frames: bool = True, env: Optional[dict] = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.send_frames = send_frames
        self._next_id = 0
        self._pending: dict = {}
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
                env={**os.environ, **(env or {})},
            )
        except OSError as exc:
            raise ScorerError(f"cannot start scorer backend {self.command!r}: {exc}") from exc

    def request(self, window: Window) -> dict:
        req = {"id": self._next_id, "start_frame": window.start_frame_index, "shape": list(window.frames.shape)}
        if self.send_frames:
            raw = np.ascontiguousarray(window.frames, dtype="<f4").tobytes()
            req["data"] = base64.b64encode(raw).decode("ascii")
        else:
            req["clip_id"] = window.clip_id
        self._next_id += 1
        return req

    def score(self, window):
        req = self.request(window)
        self._send(req)
        return self._await(req["id"])

    def _send(self, req: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(req) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise ScorerError(f"scorer backend exited: {self._diagnostic()}") from None

    def _await(self, rid: int) -> float:
        while rid not in self._pending:
            line = self._proc.stdout.readline()
            if not line:
                raise ScorerError(f"scorer backend exited: {self._diagnostic()}")
            try:
                reply = json.loads(line)
                got, score = int(reply["id"]), float(reply["score"])
            except (ValueError, KeyError, TypeError):
                raise ScorerError(f"malformed reply from scorer backend: {line.strip()[:200]!r}") from None
            if not (math.isfinite(score) and 0.0 <= score <= 1.0):
                raise ScorerError(f"scorer backend returned out-of-range score {score!r}")
            self._pending[got] = score
        return self._pending.pop(rid)

    def _diagnostic(self) -> str:
        try:
            # stdout EOF can arrive before the child is reaped
            code = self._proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            code = None
        err = ""
        if code is not None and self._proc.stderr is not None:
            err = self._proc.stderr.read().strip()[-500:]
        return f"exit code {code}" + (f", stderr: {err}" if err else "")

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        for stream in (self._proc.stdout, self._proc.stderr):
            if stream is not None:
                stream.close()


def decode_request_frames(req: dict) -> np.ndarray:
    """Backend-side helper: recover the float32 window from a request."""
    raw = base64.b64decode(req["data"])
    return np.frombuffer(raw, dtype="<f4").reshape(req["shape"])


def parse_scorer_spec(spec: str, clip=None) -> Scorer:
    """Build a scorer from a CLI spec.

    Forms: ``constant:0.3``, ``ramp:event=6,rise=2``,
    ``noisy_ramp:seed=7,sigma=0.1``, ``replay:<trace file>``,
    ``subprocess:<command line>``.  For ramps, ``event`` defaults to the clip's
    event time when a positive clip is given, else to never firing.
    """
    kind, _, arg = spec.partition(":")
    kind = kind.strip().replace("-", "_")
    if kind == "constant":
        return ConstantScorer(float(arg or 0.0))
    if kind in ("ramp", "noisy_ramp"):
        params = _kv(arg)
        event = params.pop("event", None)
        if event is None:
            if clip is not None and clip.event_time_s is not None:
                event = clip.event_time_s
            else:
                event = 1e9
        rise = params.pop("rise", 2.0)
        if kind == "ramp":
            _no_extra(params, spec)
            return RampScorer(float(event), float(rise))
        seed = int(params.pop("seed", 0))
        sigma = float(params.pop("sigma", 0.1))
        _no_extra(params, spec)
        return NoisyRampScorer(seed, sigma, float(event), float(rise))
    if kind == "replay":
        return ReplayScorer.from_file(arg)
    if kind == "subprocess":
        return SubprocessScorer(arg)
    raise ValueError(f"unknown scorer spec {spec!r}")


def _kv(arg: str) -> dict:
    out = {}
    for part in filter(None, (p.strip() for p in arg.split(","))):
        k, sep, v = part.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {part!r}")
        out[k.strip()] = float(v)
    return out


def _no_extra(params: dict, spec: str) -> None:
    if params:
        raise ValueError(f"unknown scorer parameters {sorted(params)} in {spec!r}")


def trace_times(n_frames: int, fps: float = DEFAULT_FPS, stride: int = 1) -> Sequence[float]:
    """Prediction times of every window a stream over ``n_frames`` produces."""
    return [prediction_time(last, fps) for last in range(WINDOW_FRAMES - 1, n_frames, stride)]
