"""Figure builders for the study result CSVs.

Both figures read the harness CSV schema (header row with study, policy,
selection, stopping, c, h_c, fixed_N, reps, mean_kendall, se_kendall,
mean_T, se_T, mean_risk, se_risk, e_tc_hat, se_e_tc, ratio, truncated);
unknown columns are ignored, missing ones are a named error.  Rendering is
read-only and plots the CSV values as they are, no resampling.

Output is SVG with pinned style state (hash salt, fonts kept as text, no
date metadata) so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import matplotlib
from matplotlib.figure import Figure

KINDS = ("study1-ratio", "study2-frontier")

_STYLE = {
    "svg.hashsalt": "seqrank-plots",
    "svg.fonttype": "none",
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 100,
    "font.family": "DejaVu Sans",
    "axes.grid": True,
    "grid.alpha": 0.3,
}

_SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                  "#8c564b", "#e377c2", "#7f7f7f")
_MARKERS = ("o", "s", "^", "D", "v", "P", "X", "*")


class SchemaError(ValueError):
    """The input CSV does not carry the columns a figure needs."""


@dataclass(frozen=True)
class PlotJob:
    input_csv: str
    kind: str
    output_image: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"kind: must be one of {KINDS}, got {self.kind!r}")


def read_rows(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _require_columns(rows: list[dict], columns: tuple[str, ...], path: str) -> None:
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")


def _fnum(row: dict, key: str, default: float | None = None) -> float:
    text = (row.get(key) or "").strip()
    if not text:
        if default is None:
            raise SchemaError(f"row has empty {key!r} cell")
        return default
    return float(text)


def _save(fig: Figure, path: str) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_study1(job: PlotJob) -> Figure:
    """Ratio against |log c|, one series per stopping rule, reference at 1."""
    rows = read_rows(job.input_csv)
    _require_columns(rows, ("stopping", "c", "ratio", "mean_risk", "se_risk",
                            "e_tc_hat", "se_e_tc"), job.input_csv)
    points = [r for r in rows if (r.get("ratio") or "").strip()]
    if not points:
        raise SchemaError(f"{job.input_csv}: no rows with a ratio value")
    series: dict[str, list[tuple[float, float, float]]] = {}
    for row in points:
        x = abs(math.log(_fnum(row, "c")))
        ratio = _fnum(row, "ratio")
        # propagate both Monte Carlo errors entering the ratio
        rel_risk = _fnum(row, "se_risk", 0.0) / _fnum(row, "mean_risk")
        rel_etc = _fnum(row, "se_e_tc", 0.0) / _fnum(row, "e_tc_hat")
        err = ratio * math.sqrt(rel_risk ** 2 + rel_etc ** 2)
        series.setdefault(row["stopping"], []).append((x, ratio, err))
    with matplotlib.rc_context(_STYLE):
        fig = Figure()
        ax = fig.add_subplot()
        for k, name in enumerate(sorted(series)):
            pts = sorted(series[name])
            ax.errorbar([p[0] for p in pts], [p[1] for p in pts],
                        yerr=[p[2] for p in pts], label=name,
                        color=_SERIES_COLORS[k % len(_SERIES_COLORS)],
                        marker=_MARKERS[k % len(_MARKERS)], capsize=3)
        ax.axhline(1.0, color="black", linestyle="--", linewidth=1,
                   label="lower bound")
        ax.set_xlabel("|log c|")
        ax.set_ylabel("risk ratio")
        ax.legend()
        _save(fig, job.output_image)
    return fig


def plot_study2(job: PlotJob) -> Figure:
    """Mean Kendall loss against mean sample size, one series per policy."""
    rows = read_rows(job.input_csv)
    _require_columns(rows, ("policy", "mean_T", "se_T", "mean_kendall",
                            "se_kendall"), job.input_csv)
    series: dict[str, list[tuple[float, float, float, float]]] = {}
    for row in rows:
        x = _fnum(row, "mean_T")
        y = _fnum(row, "mean_kendall")
        xe = _fnum(row, "se_T", 0.0)
        ye = _fnum(row, "se_kendall", 0.0)
        series.setdefault(row["policy"], []).append((x, y, xe, ye))
    with matplotlib.rc_context(_STYLE):
        fig = Figure()
        ax = fig.add_subplot()
        for k, name in enumerate(sorted(series)):
            pts = sorted(series[name])
            ax.errorbar([p[0] for p in pts], [p[1] for p in pts],
                        xerr=[p[2] for p in pts], yerr=[p[3] for p in pts],
                        label=name,
                        color=_SERIES_COLORS[k % len(_SERIES_COLORS)],
                        marker=_MARKERS[k % len(_MARKERS)], capsize=3)
        ax.set_xlabel("mean sample size")
        ax.set_ylabel("mean Kendall tau distance")
        ax.legend()
        _save(fig, job.output_image)
    return fig


def render(job: PlotJob) -> Figure:
    if job.kind == "study1-ratio":
        return plot_study1(job)
    return plot_study2(job)
