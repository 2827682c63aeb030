"""Figure rendering over the checker's bench CSV schema.

One figure per suite, shaped after the comparisons the suites exist for:
grouped bars of wall time against model size, a line per engine across
consecutive queries, accuracy-target and density curves. Replicates are
aggregated as mean with one-population-standard-deviation error bars.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional

import matplotlib

matplotlib.use("Agg")  # file output only; no display server
import matplotlib.pyplot as plt

SUITE_X_COLUMN = {
    "size_sweep": "n",
    "repeat_query": "query_index",
    "accuracy_sweep": "epsilon",
    "density_sweep": "rho",
}

SERIES_COLUMNS = ("method", "annotation_mode")

Y_METRICS = ("wall_ms", "abs_error", "fetches")


@dataclass
class FigureSpec:
    """What to draw: the suite picks the x axis and chart shape, group_by
    the aggregation key, y_metric the measured column."""

    suite: str
    group_by: tuple[str, ...]
    y_metric: str
    out_path: str


def default_spec(suite: str, out_dir: str, y_metric: str = "wall_ms") -> FigureSpec:
    if suite not in SUITE_X_COLUMN:
        raise ValueError(f"no figure defined for suite {suite!r}; "
                         f"known: {', '.join(sorted(SUITE_X_COLUMN))}")
    if y_metric not in Y_METRICS:
        raise ValueError(f"y metric must be one of {', '.join(Y_METRICS)}, got {y_metric!r}")
    group_by = (SUITE_X_COLUMN[suite],) + SERIES_COLUMNS
    return FigureSpec(suite=suite, group_by=group_by, y_metric=y_metric,
                      out_path=os.path.join(out_dir, f"{suite}_{y_metric}.png"))


def read_rows(csv_path: str) -> tuple[list[dict], list[str]]:
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{csv_path} has no header row")
        return list(reader), list(reader.fieldnames)


def aggregate(rows: list[dict], group_by: tuple[str, ...], y_metric: str) -> dict:
    """Group rows and reduce the metric to (mean, population std, count).

    Rows with an empty metric cell or a non-empty error cell are skipped.
    """
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        if row.get("error"):
            continue
        cell = row.get(y_metric, "")
        if cell == "" or cell is None:
            continue
        key = tuple(row[col] for col in group_by)
        groups.setdefault(key, []).append(float(cell))
    out = {}
    for key, values in groups.items():
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        out[key] = (mean, math.sqrt(var), len(values))
    return out


def render(csv_path: str, spec: FigureSpec) -> str:
    """Render one figure; returns the written image path."""
    rows, header = read_rows(csv_path)
    missing = [c for c in (*spec.group_by, spec.y_metric) if c not in header]
    if missing:
        raise ValueError(f"CSV {csv_path} is missing column(s): {', '.join(missing)}")
    stats = aggregate(rows, spec.group_by, spec.y_metric)
    if not stats:
        raise ValueError(f"no usable rows in {csv_path} for metric {spec.y_metric!r}")

    x_col = spec.group_by[0]
    series: dict[str, dict[float, tuple[float, float]]] = {}
    for key, (mean, std, _) in sorted(stats.items()):
        x = float(key[0])
        label = "/".join(k for k in key[1:] if k) or spec.suite
        series.setdefault(label, {})[x] = (mean, std)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    if spec.suite == "size_sweep":
        _grouped_bars(ax, series)
    else:
        _lines(ax, series)
    ax.set_xlabel(_X_LABELS.get(x_col, x_col))
    ax.set_ylabel(_Y_LABELS.get(spec.y_metric, spec.y_metric))
    ax.set_title(_TITLES[spec.suite])
    ax.legend()
    ax.grid(axis="y", linestyle="--", alpha=0.4)
    fig.tight_layout()
    os.makedirs(os.path.dirname(spec.out_path) or ".", exist_ok=True)
    fig.savefig(spec.out_path, dpi=120)
    plt.close(fig)
    return spec.out_path


_TITLES = {
    "size_sweep": "Engines vs model size (mean over replicates, ±1 std)",
    "repeat_query": "Consecutive queries on one annotation store",
    "accuracy_sweep": "Cost vs accuracy target",
    "density_sweep": "Cost vs chain density",
}

_X_LABELS = {
    "n": "states",
    "query_index": "query index",
    "epsilon": "accuracy target epsilon",
    "rho": "density rho",
}

_Y_LABELS = {
    "wall_ms": "wall time (ms)",
    "abs_error": "absolute error",
    "fetches": "successor-row fetches",
}


def _grouped_bars(ax, series: dict) -> None:
    xs = sorted({x for pts in series.values() for x in pts})
    width = 0.8 / max(1, len(series))
    for i, (label, pts) in enumerate(sorted(series.items())):
        offsets = [j + i * width - 0.4 + width / 2 for j in range(len(xs))]
        means = [pts.get(x, (float("nan"), 0.0))[0] for x in xs]
        errs = [pts.get(x, (0.0, 0.0))[1] for x in xs]
        ax.bar(offsets, means, width, yerr=errs, capsize=3, label=label)
    ax.set_xticks(range(len(xs)))
    ax.set_xticklabels([f"{x:g}" for x in xs])


def _lines(ax, series: dict) -> None:
    for label, pts in sorted(series.items()):
        xs = sorted(pts)
        means = [pts[x][0] for x in xs]
        errs = [pts[x][1] for x in xs]
        ax.errorbar(xs, means, yerr=errs, marker="o", capsize=3, label=label)
