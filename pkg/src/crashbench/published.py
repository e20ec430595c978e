"""Bundled regression fixtures that reproduce published result tables.

Each fixture pairs a manifest with per-model score traces (or stored heatmap
peaks) constructed so that the metric code reproduces the published numbers
at rendered precision.  They exercise metric, formatting and plumbing code;
they say nothing about the models themselves.

``tools/build_fixtures.py`` regenerates the files deterministically.
"""

from __future__ import annotations

import json
from pathlib import Path

from crashbench.manifest import Manifest, load_manifest
from crashbench.scorer import read_trace_bundle

FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures"
MODELS = ("badas-1.0", "badas-2.0", "badas-2.0-flash", "badas-2.0-flash-lite")
BENCHMARKS = ("longtail", "kaggle")


def fixture_path(name: str) -> Path:
    path = FIXTURE_DIR / name
    if not path.exists():
        raise FileNotFoundError(f"no bundled fixture {name!r} in {FIXTURE_DIR}")
    return path


def manifest(benchmark: str) -> Manifest:
    """Manifest of ``longtail``, ``kaggle`` or ``pga``."""
    return load_manifest(fixture_path(f"{benchmark}_manifest.jsonl"))


def traces(benchmark: str, model: str) -> tuple:
    """``(traces_by_clip_id, meta)`` for one model; ``meta["mode"]`` is the AP@TTA mode."""
    if benchmark not in BENCHMARKS:
        raise ValueError(f"benchmark must be one of {BENCHMARKS}")
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    return read_trace_bundle(fixture_path(f"{benchmark}_{model}.traces.jsonl.gz"))


def pga_peaks(model: str) -> dict:
    """Stored heatmap peaks ``{clip_id: (row, col)}`` for one model."""
    obj = json.loads(fixture_path("pga_peaks.json").read_text())
    try:
        peaks = obj["peaks"][model]
    except KeyError:
        raise ValueError(f"no stored peaks for model {model!r}") from None
    return {cid: tuple(rc) for cid, rc in peaks.items()}
