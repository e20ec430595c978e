#!/usr/bin/env python3
"""Compare the compiled kernels against the numpy fallback.

Checks that both backends agree (bit-identical resize, AP/AUC within 1e-12),
then times each kernel on representative inputs:

* ``resize_bilinear``: one raw frame to 256x256 (the per-frame streaming cost)
  and one 16x16 attention grid to 256x256 (the heatmap upsample).
* ``ranked_ap`` / ``ranked_auc``: a long-tail sized set (888 clips) and a
  larger pooled set with many tied scores.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from crashbench import _kernels_py

try:
    from crashbench import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    frame = rng.integers(0, 256, (360, 640, 3)).astype(np.float64)
    grid = rng.random((16, 16, 1))
    s888 = rng.random(888)
    y888 = (rng.random(888) < 0.49).astype(np.int64)
    s_big = np.round(rng.random(20000), 2)  # heavy ties
    y_big = (rng.random(20000) < 0.3).astype(np.int64)
    return [
        ("resize 360x640x3 -> 256x256", "resize_bilinear", (frame, 256, 256)),
        ("resize 16x16x1 -> 256x256", "resize_bilinear", (grid, 256, 256)),
        ("ranked_ap n=888", "ranked_ap", (s888, y888)),
        ("ranked_auc n=888", "ranked_auc", (s888, y888)),
        ("ranked_ap n=20000 ties", "ranked_ap", (s_big, y_big)),
        ("ranked_auc n=20000 ties", "ranked_auc", (s_big, y_big)),
    ]


def check_agreement(name, fn, args):
    a = getattr(_kernels_py, fn)(*args)
    b = getattr(_ckernels, fn)(*args)
    if fn == "resize_bilinear":
        ok = np.array_equal(np.asarray(a), np.asarray(b))
    else:
        ok = abs(a - b) <= 1e-12
    if not ok:
        raise SystemExit(f"backends disagree on {name}")


def best_ms(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number * 1e3


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write results as JSON")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; build with `pip install --no-build-isolation -e .`",
              file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'kernel':32s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn, fargs in cases(rng):
        check_agreement(name, fn, fargs)
        t_py = best_ms(getattr(_kernels_py, fn), fargs, args.repeat)
        t_c = best_ms(getattr(_ckernels, fn), fargs, args.repeat)
        rows.append({"case": name, "numpy_ms": t_py, "cython_ms": t_c, "speedup": t_py / t_c})
        print(f"{name:32s} {t_py:10.3f} {t_c:10.3f} {t_py / t_c:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
