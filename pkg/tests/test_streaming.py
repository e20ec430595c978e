import numpy as np
import pytest

from crashbench.scorer import ConstantScorer, RampScorer, ScorerError, SubprocessScorer
from crashbench.streaming import (
    FrameSource,
    LatencyReport,
    PreprocessConfig,
    RollingBuffer,
    StreamAborted,
    batch_extract_windows,
    preprocess_frame,
    run_stream,
    synthetic_frames,
    write_frame_directory,
)
from conftest import echo_command


def test_preprocess_identity_size():
    raw = np.random.default_rng(0).integers(0, 256, (256, 256, 3), dtype=np.uint8)
    out = preprocess_frame(raw)
    assert out.dtype == np.float32 and out.shape == (256, 256, 3)
    assert np.array_equal(out, (raw / 255.0).astype(np.float32))


def test_preprocess_constant_frame_with_normalization():
    cfg = PreprocessConfig(mean=(0.5, 0.25, 0.0), std=(0.5, 0.25, 2.0))
    out = preprocess_frame(np.full((512, 512, 3), 255, np.uint8), cfg)
    expect = ((1.0 - np.array(cfg.mean)) / np.array(cfg.std)).astype(np.float32)
    assert np.all(out == expect)


def test_preprocess_checkerboard_center():
    raw = np.zeros((2, 2, 3), np.uint8)
    raw[0, 1] = raw[1, 0] = 255
    out = preprocess_frame(raw)
    assert out[128, 128, 0] == pytest.approx(0.5, abs=1e-4)


def test_preprocess_rejects_bad_frames():
    with pytest.raises(ValueError, match="zero-sized"):
        preprocess_frame(np.zeros((0, 4, 3), np.uint8))
    with pytest.raises(ValueError):
        preprocess_frame(np.zeros((4, 4), np.uint8))
    with pytest.raises(ValueError):
        PreprocessConfig(std=(1.0, 0.0, 1.0))


def test_rolling_buffer_evicts_and_views():
    buf = RollingBuffer((1,), capacity=16)
    for k in range(40):
        buf.push(np.array([k], np.float32))
        if k < 15:
            assert not buf.full
            with pytest.raises(ValueError):
                buf.window()
            continue
        w = buf.window()
        assert np.array_equal(w[:, 0], np.arange(k - 15, k + 1))
        assert buf.start_frame_index == k - 15
        assert not w.flags.writeable


def test_72_frame_trace():
    res = run_stream(FrameSource.synthetic("c", 72, 8, 8), ConstantScorer(0.1))
    assert len(res.trace) == 57
    assert res.trace.times[0] == 1.875 and res.trace.times[-1] == 8.875
    assert np.allclose(np.diff(res.trace.times), 0.125)
    assert res.alerts == []
    assert res.latency.preprocess_calls == res.latency.frames == 72


def test_ramp_alert_time():
    res = run_stream(FrameSource.synthetic("c", 72, 8, 8), RampScorer(6.0, 2.0), threshold=0.75)
    assert len(res.alerts) == 1
    alert = res.alerts[0]
    assert alert.alert_time_s == 5.5 and 6.0 - alert.alert_time_s == 0.5
    assert alert.score >= 0.75
    # alert minimality
    assert all(s < 0.75 for t, s in res.trace.entries if t < alert.alert_time_s)


def test_rearm():
    src = lambda: FrameSource.synthetic("c", 72, 8, 8)  # noqa: E731
    assert len(run_stream(src(), ConstantScorer(0.9)).alerts) == 1
    alerts = run_stream(src(), ConstantScorer(0.9), rearm_after_s=2.0).alerts
    assert [a.alert_time_s for a in alerts] == [1.875, 3.875, 5.875, 7.875]


def test_short_clip_has_no_windows():
    res = run_stream(FrameSource.synthetic("c", 15, 8, 8), ConstantScorer(1.0))
    assert len(res.trace) == 0 and res.alerts == []
    assert batch_extract_windows(synthetic_frames(15, 8, 8)) == []


@pytest.mark.parametrize("n, stride, starts", [
    (16, 1, [0]),
    (72, 1, list(range(57))),
    (72, 8, list(range(0, 57, 8))),
])
def test_batch_window_counts(n, stride, starts):
    ws = batch_extract_windows(synthetic_frames(n, 8, 8), stride=stride)
    assert [w.start_frame_index for w in ws] == starts


@pytest.mark.parametrize("stride", [1, 3, 8])
def test_stream_batch_equivalence(stride):
    frames = synthetic_frames(50, 37, 23, seed=stride)
    seen = []
    res = run_stream(FrameSource("c", frames), ConstantScorer(0.0), stride=stride,
                     window_hook=lambda w: seen.append((w.start_frame_index, w.frames.copy())))
    batch = batch_extract_windows(frames, stride=stride)
    assert [s for s, _ in seen] == [w.start_frame_index for w in batch]
    for (_, a), w in zip(seen, batch):
        assert np.array_equal(a, w.frames)
    assert np.allclose(np.diff(res.trace.times), stride / 8)


def test_invalid_arguments():
    src = FrameSource.synthetic("c", 20, 4, 4)
    with pytest.raises(ValueError):
        run_stream(src, ConstantScorer(0), stride=0)
    with pytest.raises(ValueError):
        run_stream(src, ConstantScorer(0), threshold=1.0)
    with pytest.raises(ValueError):
        FrameSource("c", [], fps=0)


def test_latency_report():
    ticks = iter(range(0, 10**9, 1_000_000))  # each clock read advances 1 ms
    res = run_stream(FrameSource.synthetic("c", 20, 4, 4), ConstantScorer(0.1), clock=lambda: next(ticks))
    lat = res.latency
    assert lat.windows == 5
    assert all(v >= 0 for v in lat.preprocessing_ms + lat.inference_ms)
    assert np.allclose(lat.total_ms(), np.add(lat.preprocessing_ms, lat.inference_ms))
    s = lat.summary()
    assert s["inference_ms"]["mean"] == 1.0
    assert s["preprocessing_ms"]["p50"] == 1.0  # one frame per step after warm-up
    assert s["totals"]["preprocessing_ms"] == 20.0
    merged = LatencyReport.merge([lat, lat])
    assert merged.windows == 10 and merged.frames == 40


def test_scorer_failure_gives_partial_trace():
    scorer = SubprocessScorer(echo_command("--die-after", "3"))
    try:
        with pytest.raises(StreamAborted) as info:
            run_stream(FrameSource.synthetic("c", 30, 4, 4), scorer)
    finally:
        scorer.close()
    part = info.value.result
    assert len(part.trace) == 3 and not part.trace.complete
    assert isinstance(info.value.__cause__, ScorerError)
    assert "exit code 7" in part.error


def test_frame_directory_roundtrip(tmp_path):
    frames = synthetic_frames(18, 9, 7, seed=3)
    write_frame_directory(frames, tmp_path / "clipA")
    src = FrameSource.from_directory(tmp_path / "clipA")
    assert src.clip_id == "clipA"
    back = list(src)
    assert len(back) == 18 and all(np.array_equal(a, b) for a, b in zip(frames, back))
    with pytest.raises(FileNotFoundError):
        FrameSource.from_directory(tmp_path)
