"""Render metric, localization and latency results as aligned text tables and CSV."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from crashbench.manifest import GROUPS
from crashbench.metrics import MetricsReport

TABLE_IDS = ("kaggle", "longtail", "pga", "latency", "ssl_ablation")

GROUP_TITLES = {
    "animal": "Animal",
    "pedestrian": "Pedestrian",
    "intersection": "Intersection",
    "pass_overtake": "Pass/Overtake",
    "cyclist": "Cyclist",
    "motorcyclist": "Motorcyclist",
    "infrastructure": "Infrastructure",
    "rain": "Rain",
    "snow": "Snow",
    "fog": "Fog",
    "none": "Ungrouped",
    "overall": "Overall",
}


class ReportError(ValueError):
    pass


def fmt_decimal(x, places=3):
    return "—" if x is None else f"{x:.{places}f}"


def fmt_percent(x, places=1):
    return "—" if x is None else f"{100.0 * x:.{places}f}%"


def fmt_pp(x, places=1):
    return "—" if x is None else f"{100.0 * x:+.{places}f} pp"


def fmt_ms(x, places=1):
    return "—" if x is None else f"{x:.{places}f}"


@dataclass(frozen=True)
class Column:
    key: str
    header: str
    fmt: Callable
    best: Optional[str] = None  # "max", "min" or None


@dataclass(frozen=True)
class TableSpec:
    table_id: str
    title: str
    columns: tuple


DEC3 = fmt_decimal
DEC2 = lambda x: fmt_decimal(x, 2)  # noqa: E731

SPECS = {
    "kaggle": TableSpec("kaggle", "Kaggle (AP@TTA)", (
        Column("ap@0.5", "@0.5s", DEC3, "max"),
        Column("ap@1.0", "@1.0s", DEC3, "max"),
        Column("ap@1.5", "@1.5s", DEC3, "max"),
        Column("map", "mAP", DEC3, "max"),
        Column("fpr", "FPR", fmt_percent, "min"),
    )),
    "longtail": TableSpec("longtail", "Long-tail benchmark", (
        Column("auc", "AUC", DEC3, "max"),
        Column("f1", "F1", DEC3, "max"),
        Column("ewr", "EWR", fmt_percent, "max"),
        Column("mtta_s", "TTA", DEC2, None),
    )),
    "pga": TableSpec("pga", "Heatmap localization (PGA)", (
        Column("pga", "PGA", fmt_percent, "max"),
        Column("delta_vs_random", "Δrand", fmt_pp, "max"),
    )),
    "latency": TableSpec("latency", "Latency per prediction window (ms)", (
        Column("pre_mean", "pre mean", fmt_ms, "min"),
        Column("pre_p99", "pre p99", fmt_ms, "min"),
        Column("inf_mean", "inf mean", fmt_ms, "min"),
        Column("inf_p99", "inf p99", fmt_ms, "min"),
        Column("total_mean", "total mean", fmt_ms, "min"),
        Column("total_p99", "total p99", fmt_ms, "min"),
    )),
    "ssl_ablation": TableSpec("ssl_ablation", "Ablation", (
        Column("ap", "AP", DEC3, "max"),
        Column("f1", "F1", DEC3, "max"),
        Column("fpr", "FPR", fmt_percent, "min"),
    )),
}


@dataclass
class RenderedTable:
    text: str
    csv: str
    rows: list = field(default_factory=list)


def _as_dict(report):
    if isinstance(report, MetricsReport):
        return report.to_json()
    return report


def _rows_for(table_id: str, reports: dict) -> list:
    """``[(row_label, {model: {column_key: value}})]`` for a table."""
    spec = SPECS[table_id]
    keys = [c.key for c in spec.columns]

    def need(model, where, obj, key):
        if key not in obj:
            raise ReportError(f"table {table_id!r}: model {model!r} lacks {where}.{key}")
        return obj[key]

    if table_id == "longtail":
        groups = []
        for rep in reports.values():
            for g in rep["groups"]:
                if g not in groups:
                    groups.append(g)
        groups.sort(key=lambda g: GROUPS.index(g) if g in GROUPS else len(GROUPS))
        rows = []
        for g in groups + ["overall"]:
            cells = {}
            for model, rep in reports.items():
                block = rep["overall"] if g == "overall" else rep["groups"].get(g)
                if block is None:
                    raise ReportError(f"table 'longtail': model {model!r} has no group {g!r}")
                cells[model] = {k: need(model, g, block, k) for k in keys}
            rows.append((GROUP_TITLES.get(g, g), cells))
        return rows

    rows = []
    for model, rep in reports.items():
        if table_id == "kaggle":
            src = rep.get("kaggle")
            if src is None:
                raise ReportError(f"table 'kaggle': model {model!r} has no kaggle block")
            cells = {k: need(model, "kaggle", src, k) for k in keys}
        elif table_id == "ssl_ablation":
            src = rep["overall"]
            cells = {k: need(model, "overall", src, k) for k in keys}
        elif table_id == "pga":
            cells = {k: need(model, "pga", rep, k) for k in keys}
        else:
            cells = {}
            for prefix, section in (("pre", "preprocessing_ms"), ("inf", "inference_ms"), ("total", "total_ms")):
                block = need(model, "latency", rep, section)
                cells[f"{prefix}_mean"] = need(model, section, block, "mean")
                cells[f"{prefix}_p99"] = need(model, section, block, "p99")
        rows.append((model, {model: cells}))
    return rows


def _best_models(spec: TableSpec, cells_by_model: dict, col: Column) -> set:
    """Models holding the best rendered value in a column; ties share it."""
    if col.best is None or len(cells_by_model) < 2:
        return set()
    rendered = {m: c[col.key] for m, c in cells_by_model.items() if c[col.key] is not None}
    if not rendered:
        return set()
    # compare at rendered precision so visible ties are all marked
    shown = {m: col.fmt(v) for m, v in rendered.items()}
    pick = max if col.best == "max" else min
    target = pick(rendered.values())
    best_text = col.fmt(target)
    return {m for m, s in shown.items() if s == best_text}


def render_table(reports, table_id: str, bold: bool = True) -> RenderedTable:
    """Render one or more named reports as the requested table.

    ``reports`` maps a model name to a :class:`MetricsReport` or to the parsed
    JSON of a report (metrics, PGA or latency, depending on the table).  Best
    values per column are wrapped in ``**`` in the text output.
    """
    if table_id not in SPECS:
        raise ReportError(f"unknown table {table_id!r}; choose from {TABLE_IDS}")
    if not isinstance(reports, dict):
        reports = {"model": reports}
    if not reports:
        raise ReportError("no reports to render")
    reports = {name: _as_dict(r) for name, r in reports.items()}
    spec = SPECS[table_id]
    rows = _rows_for(table_id, reports)
    models = list(reports)
    per_row = table_id == "longtail"

    if not per_row:
        # best per column across all model rows
        merged = {}
        for _, cells in rows:
            merged.update(cells)
        best_cols = {c.key: _best_models(spec, merged, c) for c in spec.columns}

    header = ["Group" if per_row else "Model"]
    if per_row:
        for m in models:
            header += [f"{m} {c.header}" if len(models) > 1 else c.header for c in spec.columns]
    else:
        header += [c.header for c in spec.columns]

    text_rows, csv_rows = [], []
    for label, cells in rows:
        if per_row:
            best_cols = {c.key: _best_models(spec, cells, c) for c in spec.columns}
        trow, crow = [label], [label]
        for m in (models if per_row else [label]):
            for c in spec.columns:
                v = cells[m][c.key]
                s = c.fmt(v)
                crow.append(s)
                trow.append(f"**{s}**" if bold and m in best_cols[c.key] else s)
        text_rows.append(trow)
        csv_rows.append(crow)

    widths = [max(len(r[i]) for r in [header] + text_rows) for i in range(len(header))]

    def line(cells):
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths))).rstrip()

    out = [spec.title, line(header), "  ".join("-" * w for w in widths)]
    for r in text_rows:
        if per_row and r[0] == GROUP_TITLES["overall"]:
            out.append("  ".join("-" * w for w in widths))
        out.append(line(r))
    text = "\n".join(out) + "\n"

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(csv_rows)
    return RenderedTable(text=text, csv=buf.getvalue(), rows=csv_rows)


COMPARE_KEYS = (
    ("auc", "AUC", fmt_decimal),
    ("f1", "F1", fmt_decimal),
    ("ewr", "EWR", fmt_percent),
    ("mtta_s", "TTA", lambda x: fmt_decimal(x, 2)),
    ("fpr", "FPR", fmt_percent),
)
# higher is better except FPR; MTTA is reported but never flagged
_DIRECTION = {"auc": 1, "f1": 1, "ewr": 1, "fpr": -1, "mtta_s": 0}


@dataclass
class DeltaTable:
    base: str
    other: str
    deltas: dict  # row -> metric -> delta
    regressions: list
    text: str

    def to_json(self) -> dict:
        return {"base": self.base, "other": self.other, "deltas": self.deltas, "regressions": self.regressions}


def _fmt_delta(key, d):
    if d is None:
        return "—"
    if key in ("ewr", "fpr"):
        return f"{100.0 * d:+.1f} pp"
    if key == "mtta_s":
        return f"{d:+.2f} s"
    return f"{d:+.3f}"


def compare_models(reports: dict) -> list:
    """Delta tables of every report against the first one.

    Deltas are ``other - base`` per group and overall; a regression is any
    change in the worse direction for AUC, F1, EWR or FPR.
    """
    if len(reports) < 2:
        raise ReportError("need at least two reports to compare")
    reports = {k: _as_dict(v) for k, v in reports.items()}
    names = list(reports)
    base_name = names[0]
    base = reports[base_name]
    tables = []
    for other_name in names[1:]:
        other = reports[other_name]
        if (base.get("manifest"), base.get("clip_count"), sorted(base["groups"])) != (
            other.get("manifest"), other.get("clip_count"), sorted(other["groups"])
        ):
            raise ReportError(
                f"reports {base_name!r} and {other_name!r} were computed on different manifests"
            )
        deltas, regressions = {}, []
        lines = [f"{other_name} vs {base_name}"]
        header = ["Group"] + [h for _, h, _ in COMPARE_KEYS]
        body = []
        groups = sorted(base["groups"], key=lambda g: GROUPS.index(g) if g in GROUPS else 99) + ["overall"]
        for g in groups:
            a = base["overall"] if g == "overall" else base["groups"][g]
            b = other["overall"] if g == "overall" else other["groups"][g]
            row = {}
            cells = [GROUP_TITLES.get(g, g)]
            for key, _, _ in COMPARE_KEYS:
                va, vb = a.get(key), b.get(key)
                d = None if va is None or vb is None else round(vb - va, 6)
                row[key] = d
                mark = ""
                if d is not None and _DIRECTION[key] * d < 0:
                    regressions.append({"group": g, "metric": key, "delta": d})
                    mark = " !"
                cells.append(_fmt_delta(key, d) + mark)
            deltas[g] = row
            body.append(cells)
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        for r in [header] + body:
            lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip())
        if regressions:
            lines.append(f"{len(regressions)} regression(s) marked with !")
        tables.append(DeltaTable(base_name, other_name, deltas, regressions, "\n".join(lines) + "\n"))
    return tables


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
