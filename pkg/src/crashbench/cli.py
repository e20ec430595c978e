"""``crashbench`` command-line entry point.

Subcommands: ``evaluate``, ``stream``, ``heatmap``, ``distill-demo``,
``vlm-prob``, ``mine`` and ``report``.

Exit codes are a stable contract: 0 success, 2 input or validation error,
3 backend or runtime error (scorer failure, training divergence).
"""

from __future__ import annotations

import argparse
import atexit
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from crashbench import __version__
from crashbench.distill import DistillConfig, DivergenceError, ToyTask, train_toy
from crashbench.heatmap import (
    DEFAULT_TEMPERATURE,
    HeatmapError,
    Heatmap,
    boxes_for_frame,
    compose_heatmap,
    pga_accuracy,
    pointing_game,
    read_attention_file,
    write_pgm,
    write_sidecar,
)
from crashbench.manifest import (
    DEFAULT_MINING_THRESHOLD,
    ManifestError,
    QueueError,
    load_manifest,
    load_queue,
    mark_disposition,
    mine_review_queue,
    save_queue,
)
from crashbench.metrics import DEFAULT_THRESHOLD, MODES, MetricError, MissingTraceError, evaluate
from crashbench.report import TABLE_IDS, ReportError, compare_models, load_report, render_table
from crashbench.scorer import (
    DEFAULT_FPS,
    ScorerError,
    load_traces,
    parse_scorer_spec,
    write_trace,
    write_trace_bundle,
)
from crashbench.streaming import FrameSource, LatencyReport, StreamAborted, run_stream, synthetic_frames
from crashbench.vlmprob import compression_diagnostic, traces_from_logits_file

logger = logging.getLogger("crashbench")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
SCORER_ENV = "CRASHBENCH_SCORER"
DEFAULT_STRIDE = 1
SYNTHETIC_SIZE = 64

INPUT_ERRORS = (ManifestError, QueueError, MissingTraceError, MetricError, ReportError, HeatmapError,
                FileNotFoundError, NotADirectoryError, ValueError, KeyError)
RUNTIME_ERRORS = (ScorerError, StreamAborted, DivergenceError)


class UsageError(ValueError):
    """Bad combination of command-line arguments."""


# --------------------------------------------------------------------------
# shared helpers


def _resolve_scorer_spec(spec):
    """CLI flag wins; otherwise ``CRASHBENCH_SCORER`` names a subprocess command."""
    if spec:
        return spec
    env = os.environ.get(SCORER_ENV, "").strip()
    return f"subprocess:{env}" if env else None


_SHARED_SCORERS: dict = {}


def _scorer_for(spec, clip=None):
    """Builtin scorers are cheap and per clip; subprocess backends are reused per process."""
    if spec.startswith("subprocess:"):
        scorer = _SHARED_SCORERS.get(spec)
        if scorer is None:
            scorer = parse_scorer_spec(spec, clip)
            _SHARED_SCORERS[spec] = scorer
            atexit.register(scorer.close)
        return scorer, False
    return parse_scorer_spec(spec, clip), True


def _clip_seed(seed: int, clip_id: str) -> int:
    digest = hashlib.blake2b(clip_id.encode("utf-8"), digest_size=8).digest()
    return (int.from_bytes(digest, "little") ^ seed) & 0x7FFFFFFF


def _frame_source(clip, fps, frames_root, seed):
    if frames_root is not None:
        return FrameSource.from_directory(Path(frames_root) / clip.clip_id, clip.clip_id, fps)
    n = int(round(clip.duration_s * fps))
    return FrameSource(clip.clip_id, synthetic_frames(n, SYNTHETIC_SIZE, SYNTHETIC_SIZE, _clip_seed(seed, clip.clip_id)), fps)


def _stream_task(args):
    """Worker: stream one clip.  Returns ``(trace, alerts, latency, error)``."""
    clip, spec, threshold, stride, fps, frames_root, seed = args
    scorer, owned = _scorer_for(spec, clip)
    try:
        source = _frame_source(clip, fps, frames_root, seed)
        res = run_stream(source, scorer, threshold=threshold, stride=stride)
        return res.trace, res.alerts, res.latency, None
    except StreamAborted as exc:
        r = exc.result
        return r.trace, r.alerts, r.latency, str(exc)
    finally:
        if owned:
            scorer.close()


def _stream_clips(clips, spec, threshold, stride, fps, frames_root, seed, jobs):
    """Stream clips, possibly in parallel; results come back in manifest order."""
    tasks = [(c, spec, threshold, stride, fps, frames_root, seed) for c in clips]
    if jobs <= 1 or len(tasks) <= 1:
        return [_stream_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_stream_task, tasks))


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _overrides(args, defaults: dict) -> dict:
    return {k: getattr(args, k) for k, v in defaults.items() if getattr(args, k) != v}


def _print_latency(summary: dict, out=sys.stdout):
    pre, inf = summary["preprocessing_ms"], summary["inference_ms"]
    if pre["mean"] is None:
        print("latency: no windows scored", file=out)
        return
    print(
        f"latency per window: preprocessing mean {pre['mean']:.3f} ms / p99 {pre['p99']:.3f} ms; "
        f"inference mean {inf['mean']:.3f} ms / p99 {inf['p99']:.3f} ms",
        file=out,
    )


# --------------------------------------------------------------------------
# evaluate

EVAL_DEFAULTS = {"threshold": DEFAULT_THRESHOLD, "stride": DEFAULT_STRIDE, "fps": DEFAULT_FPS, "mode": "sliding"}


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    if len(manifest) == 0:
        raise ManifestError(f"{args.manifest}: manifest has no clips")
    if args.traces and args.scorer:
        raise UsageError("pass either --traces or --scorer, not both")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    provenance = {
        "threshold": args.threshold,
        "stride": args.stride,
        "fps": args.fps,
        "mode": args.mode,
        "seed": args.seed,
        "overrides": _overrides(args, EVAL_DEFAULTS),
        "version": __version__,
    }
    if args.name:
        provenance["model"] = args.name

    if args.traces:
        traces, meta = load_traces(args.traces)
        provenance["traces"] = str(args.traces)
        if meta.get("mode") and meta["mode"] != args.mode:
            logger.warning("trace bundle was built for mode %r; evaluating with %r", meta["mode"], args.mode)
        failed = []
    else:
        spec = _resolve_scorer_spec(args.scorer)
        if spec is None:
            raise UsageError(f"no scores: pass --traces, --scorer, or set {SCORER_ENV}")
        if not spec.startswith("subprocess:"):
            parse_scorer_spec(spec)  # fail on a bad spec before any work starts
        provenance["scorer"] = spec
        results = _stream_clips(manifest.clips, spec, args.threshold, args.stride, args.fps,
                                args.frames_root, args.seed, args.jobs)
        traces = {tr.clip_id: tr for tr, _, _, _ in results}
        failed = [(tr.clip_id, err) for tr, _, _, err in results if err]
        write_trace_bundle([tr for tr, _, _, _ in results], out / "traces.jsonl",
                           meta={"scorer": spec, "stride": args.stride, "fps": args.fps})
        if failed:
            for cid, err in failed:
                print(f"error: {err}", file=sys.stderr)
            _write_json(out / "report.json", {"partial": True, "failed_clips": [c for c, _ in failed],
                                               "provenance": provenance})
            return EXIT_RUNTIME

    report = evaluate(manifest, traces, threshold=args.threshold, mode=args.mode)
    report.provenance.update(provenance)
    _write_json(out / "report.json", report.to_json())
    table = "longtail" if any(g != "none" for g in manifest.groups()) else "kaggle"
    name = args.name or "model"
    print(render_table({name: report}, table).text, end="")
    for d in report.diagnostics:
        print(f"note: {d}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# stream


def cmd_stream(args) -> int:
    spec = _resolve_scorer_spec(args.scorer)
    if spec is None:
        raise UsageError(f"pass --scorer or set {SCORER_ENV}")
    sources = [x for x in (args.frames, args.synthetic, args.manifest) if x is not None]
    if len(sources) != 1:
        raise UsageError("pass exactly one of --frames, --synthetic, --manifest")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
        results = _stream_clips(manifest.clips, spec, args.threshold, args.stride, args.fps,
                                args.frames_root, args.seed, args.jobs)
    else:
        if args.frames is not None:
            frames_dir = Path(args.frames)
            if not frames_dir.is_dir():
                raise FileNotFoundError(f"frame directory not found: {frames_dir}")
            source = FrameSource.from_directory(frames_dir, args.clip_id, args.fps)
        else:
            if args.synthetic < 0:
                raise UsageError("--synthetic needs a non-negative frame count")
            cid = args.clip_id or "synthetic"
            source = FrameSource(cid, synthetic_frames(args.synthetic, SYNTHETIC_SIZE, SYNTHETIC_SIZE, args.seed), args.fps)
        scorer, _ = _scorer_for(spec, None) if spec.startswith("subprocess:") else (parse_scorer_spec(spec), True)
        with scorer:
            try:
                res = run_stream(source, scorer, threshold=args.threshold, stride=args.stride)
                results = [(res.trace, res.alerts, res.latency, None)]
            except StreamAborted as exc:
                r = exc.result
                results = [(r.trace, r.alerts, r.latency, str(exc))]

    traces = [r[0] for r in results]
    if len(traces) == 1:
        write_trace(traces[0], out / "trace.jsonl")
    else:
        write_trace_bundle(traces, out / "trace.jsonl", meta={"scorer": spec, "stride": args.stride})
    with open(out / "alerts.jsonl", "w", encoding="utf-8") as fh:
        for _, alerts, _, _ in results:
            for a in alerts:
                fh.write(json.dumps(a.to_json()) + "\n")
    latency = LatencyReport.merge([r[2] for r in results])
    summary = latency.summary()
    errors = [(r[0].clip_id, r[3]) for r in results if r[3]]
    summary["partial"] = bool(errors)
    if errors:
        summary["failed_clips"] = [c for c, _ in errors]
    summary["per_clip"] = [r[2].summary() for r in results] if len(results) > 1 else []
    _write_json(out / "latency.json", summary)
    n_alerts = sum(len(r[1]) for r in results)
    print(f"streamed {len(results)} clip(s), {latency.windows} windows, {n_alerts} alert(s)")
    _print_latency(summary)
    if errors:
        for _, err in errors:
            print(f"error: {err}", file=sys.stderr)
        print("outputs are partial (trace marked incomplete)", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# --------------------------------------------------------------------------
# heatmap


def _parse_layers(text):
    if text is None:
        return None
    ids = []
    for part in text.split(","):
        lo, sep, hi = part.partition("-")
        ids.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
    return sorted(set(ids))


def _load_boxes(path):
    obj = json.loads(Path(path).read_text())
    if isinstance(obj, dict):
        obj = obj.get("gt_boxes", obj.get("boxes"))
    if not isinstance(obj, list) or not all(isinstance(b, list) and len(b) in (4, 5) for b in obj):
        raise HeatmapError(f"{path}: expected a list of [x0,y0,x1,y1] or [frame,x0,y0,x1,y1] boxes")
    return [tuple(b) for b in obj]


def cmd_heatmap(args) -> int:
    if args.peaks is not None:
        return _heatmap_pga(args)
    if args.attn is None:
        raise UsageError("pass --attn (single heatmap) or --peaks with --manifest (PGA over a set)")
    stack = read_attention_file(args.attn)
    layers = _parse_layers(args.layers)
    if layers is not None:
        stack = stack.select(layers)
        if not stack.layers:
            raise HeatmapError(f"none of layers {args.layers} present in {args.attn}")
    hm = compose_heatmap(stack, args.temperature, clip_id=args.clip_id or Path(args.attn).stem,
                         frame_index=args.frame_index)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.clip_id or Path(args.attn).stem
    write_pgm(hm, out / f"{stem}.pgm")
    hit = None
    if args.boxes is not None:
        hit = pointing_game(hm, boxes_for_frame(_load_boxes(args.boxes), args.frame_index))
    write_sidecar(hm, out / f"{stem}.json", hit)
    print(f"peak (row, col) = {hm.peak}")
    if hit is not None:
        print(f"PGA: {'hit' if hit else 'miss'}")
    return EXIT_OK


def _heatmap_pga(args) -> int:
    if args.manifest is None:
        raise UsageError("--peaks needs --manifest")
    manifest = load_manifest(args.manifest)
    obj = json.loads(Path(args.peaks).read_text())
    peaks = obj.get("peaks", obj)
    if args.model is not None:
        if args.model not in peaks:
            raise KeyError(f"model {args.model!r} not in {args.peaks}")
        peaks = peaks[args.model]
    frame = obj.get("frame_index")
    maps = {cid: Heatmap(None, tuple(rc), cid, frame_index=frame) for cid, rc in peaks.items()}
    result = pga_accuracy(manifest.clips, maps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = result.to_json()
    payload["model"] = args.model
    _write_json(out / "pga.json", payload)
    print(f"PGA {100 * result.pga:.1f}%  random baseline {100 * result.baseline:.1f}%  "
          f"delta {100 * result.delta:+.1f} pp  ({result.hits}/{result.clips})")
    return EXIT_OK


# --------------------------------------------------------------------------
# distill-demo


def cmd_distill_demo(args) -> int:
    config = DistillConfig(
        alpha_hard=args.alpha_hard,
        alpha_logit=args.alpha_logit,
        alpha_feat=args.alpha_feat,
        tau=args.tau,
        phase1_steps=args.phase1_steps,
        total_steps=args.total_steps,
    )
    task = ToyTask.make(args.seed)
    res = train_toy(task, config, seed=args.seed, lr=args.lr, log_every=args.log_every)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "distill_log.jsonl", "w", encoding="utf-8") as fh:
        for row in res.log:
            fh.write(json.dumps(row) + "\n")
    summary = {"config": asdict(config), "seed": args.seed, "lr": args.lr, "kd_brier": res.brier, "kd_ece": res.ece,
               "mean_abs_gap_to_teacher": res.mean_abs_gap_to_teacher}
    if args.compare_hard:
        hard = train_toy(task, config, seed=args.seed, lr=args.lr, hard_only=True, log_every=config.total_steps)
        summary.update(hard_brier=hard.brier, hard_ece=hard.ece)
    _write_json(out / "distill_summary.json", summary)
    print(f"student Brier {res.brier:.4f}  ECE {res.ece:.4f}  |p - p_teacher| {res.mean_abs_gap_to_teacher:.4f}")
    if args.compare_hard:
        print(f"hard-label baseline Brier {summary['hard_brier']:.4f}  ECE {summary['hard_ece']:.4f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# vlm-prob


def cmd_vlm_prob(args) -> int:
    traces = traces_from_logits_file(args.input)
    if not traces:
        raise ManifestError(f"{args.input}: no records")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace_bundle(traces.values(), out, meta={"source": "vlm-prob", "input": str(args.input)})
    print(f"wrote {len(traces)} trace(s) to {out}")
    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
        pos = [traces[c.clip_id].peak() for c in manifest if c.positive and c.clip_id in traces]
        neg = [s for c in manifest if not c.positive and c.clip_id in traces for s in traces[c.clip_id].scores]
        diag = compression_diagnostic(pos, neg)
        for k, v in diag.to_json().items():
            print(f"{k}: {v:.4f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# mine


def _parse_marks(marks):
    out = {}
    for m in marks:
        cid, sep, disp = m.rpartition("=")
        if not sep or not cid:
            raise UsageError(f"--mark expects clip_id=disposition, got {m!r}")
        out[cid] = disp
    return out


def cmd_mine(args) -> int:
    if (args.traces is None) == (args.queue is None):
        raise UsageError("pass exactly one of --traces (build a queue) or --queue (update one)")
    if args.traces is not None:
        traces, _ = load_traces(args.traces)
        queue = mine_review_queue(traces.items(), args.threshold)
    else:
        queue = load_queue(args.queue)
    marks = _parse_marks(args.mark)
    if marks:
        known = {e.clip_id for e in queue}
        missing = sorted(set(marks) - known)
        if missing:
            raise QueueError(f"clips not in queue: {', '.join(missing)}")
        queue = [mark_disposition(e, marks[e.clip_id], args.threshold) if e.clip_id in marks else e for e in queue]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_queue(queue, out)
    hard = sum(e.hard_negative for e in queue)
    print(f"{len(queue)} clip(s) in review queue ({hard} hard negative(s)) -> {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# report


def _named_reports(paths) -> dict:
    reports = {}
    for item in paths:
        name, sep, path = item.partition("=")
        if not sep:
            path = item
            rep = load_report(path)
            name = rep.get("provenance", {}).get("model") or rep.get("model") or Path(path).stem
        else:
            rep = load_report(path)
        if name in reports:
            raise UsageError(f"duplicate report name {name!r}; use name=path")
        reports[name] = rep
    return reports


def cmd_report(args) -> int:
    reports = _named_reports(args.reports)
    if args.compare is not None:
        others = _named_reports([args.compare])
        both = dict(reports)
        for k, v in others.items():
            both[k if k not in both else f"{k} (compare)"] = v
        tables = compare_models(both)
        if args.format == "json":
            print(json.dumps([t.to_json() for t in tables], indent=2))
        else:
            print("\n".join(t.text for t in tables), end="")
        return EXIT_OK
    table = render_table(reports, args.table)
    if args.format == "text":
        print(table.text, end="")
    elif args.format == "csv":
        print(table.csv, end="")
    else:
        header, *rows = [r for r in table.csv.splitlines()]
        print(json.dumps({"table": args.table, "header": header.split(","), "rows": table.rows}, indent=2))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _probability(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"threshold must be in (0, 1), got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a value > 0, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crashbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"crashbench {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def scoring_flags(sp):
        sp.add_argument("--scorer", help="constant:V | ramp:event=6,rise=2 | noisy_ramp:seed=S,sigma=X | "
                                         f"replay:FILE | subprocess:CMD (default: ${SCORER_ENV})")
        sp.add_argument("--threshold", type=_probability, default=DEFAULT_THRESHOLD)
        sp.add_argument("--stride", type=_positive_int, default=DEFAULT_STRIDE)
        sp.add_argument("--fps", type=_positive_float, default=DEFAULT_FPS)
        sp.add_argument("--frames-root", help="directory holding one frame directory per clip id")
        sp.add_argument("--seed", type=int, default=0, help="seed for synthetic frames")
        sp.add_argument("--jobs", type=_positive_int, default=1, help="clip-level worker processes")

    ev = sub.add_parser("evaluate", help="metrics for a manifest from stored traces or a scorer")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--traces", help="trace bundle file or directory of trace files")
    ev.add_argument("--mode", choices=MODES, default="sliding", help="AP@TTA window rule")
    ev.add_argument("--name", help="model name recorded in the report")
    ev.add_argument("--out", default="out")
    scoring_flags(ev)
    ev.set_defaults(func=cmd_evaluate)

    st = sub.add_parser("stream", help="stream clips through the rolling buffer")
    st.add_argument("--frames", help="directory of %%06d.ppm/png frames")
    st.add_argument("--synthetic", type=int, help="stream N synthetic frames")
    st.add_argument("--manifest", help="stream every clip of a manifest")
    st.add_argument("--clip-id")
    st.add_argument("--out", default="out")
    scoring_flags(st)
    st.set_defaults(func=cmd_stream)

    hm = sub.add_parser("heatmap", help="attention heatmap and pointing-game verdict")
    hm.add_argument("--attn", help="ATTN binary attention file")
    hm.add_argument("--boxes", help="JSON list of boxes")
    hm.add_argument("--layers", help="layer ids, e.g. 12-20")
    hm.add_argument("--temperature", type=_positive_float, default=DEFAULT_TEMPERATURE)
    hm.add_argument("--clip-id")
    hm.add_argument("--frame-index", type=int)
    hm.add_argument("--peaks", help="stored peaks JSON for PGA over a manifest")
    hm.add_argument("--manifest")
    hm.add_argument("--model", help="model key inside --peaks")
    hm.add_argument("--out", default="out")
    hm.set_defaults(func=cmd_heatmap)

    dd = sub.add_parser("distill-demo", help="toy two-phase distillation run")
    defaults = DistillConfig()
    dd.add_argument("--tau", type=_positive_float, default=defaults.tau)
    dd.add_argument("--alpha-hard", type=float, default=defaults.alpha_hard)
    dd.add_argument("--alpha-logit", type=float, default=defaults.alpha_logit)
    dd.add_argument("--alpha-feat", type=float, default=defaults.alpha_feat)
    dd.add_argument("--phase1-steps", type=int, default=defaults.phase1_steps)
    dd.add_argument("--total-steps", type=int, default=defaults.total_steps)
    dd.add_argument("--lr", type=_positive_float, default=0.05)
    dd.add_argument("--log-every", type=_positive_int, default=1)
    dd.add_argument("--seed", type=int, default=0)
    dd.add_argument("--compare-hard", action="store_true", help="also train the hard-label-only student")
    dd.add_argument("--out", default="out")
    dd.set_defaults(func=cmd_distill_demo)

    vp = sub.add_parser("vlm-prob", help="answer-token / temperature-ensemble probabilities to traces")
    vp.add_argument("--in", dest="input", required=True, help="logits.jsonl")
    vp.add_argument("--out", default="out/vlm_traces.jsonl")
    vp.add_argument("--manifest", help="print the compression diagnostic against this manifest")
    vp.set_defaults(func=cmd_vlm_prob)

    mn = sub.add_parser("mine", help="build or update the active-mining review queue")
    mn.add_argument("--traces")
    mn.add_argument("--queue")
    mn.add_argument("--threshold", type=_probability, default=DEFAULT_MINING_THRESHOLD)
    mn.add_argument("--mark", action="append", default=[], metavar="CLIP=DISPOSITION")
    mn.add_argument("--out", default="out/queue.jsonl")
    mn.set_defaults(func=cmd_mine)

    rp = sub.add_parser("report", help="render report JSON as tables")
    rp.add_argument("reports", nargs="+", metavar="[NAME=]REPORT.json")
    rp.add_argument("--table", choices=TABLE_IDS, default="longtail")
    rp.add_argument("--format", choices=("text", "csv", "json"), default="text")
    rp.add_argument("--compare", metavar="OTHER.json")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except INPUT_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
