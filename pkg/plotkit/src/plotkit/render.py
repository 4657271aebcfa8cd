"""Figure generation from benchmark CSVs.

Four kinds: convergence (validation error per iteration, log-log), time
(validation error against wall time), condition (per-layer Gram condition and
rank traces, median line plus interquartile band), and sketch (per-size
validation curves with bands).  A figure is a pure function of the CSV
content and the spec: fixed styles, no clock or RNG input, and volatile
metadata stripped from the output, so identical inputs give identical bytes.

Statistics are never recomputed here; the CSVs carry the medians and
quartiles and the plots just draw them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from cycler import cycler

KINDS = ("convergence", "time", "condition", "sketch")

REQUIRED = {
    "convergence": ("iteration", "val_rel_error"),
    "time": ("wall_time", "val_rel_error"),
    "condition": (
        "iteration",
        "layer",
        "kappa_median",
        "kappa_q1",
        "kappa_q3",
        "rank_median",
        "rank_q1",
        "rank_q3",
    ),
    "sketch": ("iteration", "val_median", "val_q1", "val_q3"),
}

# (xscale, yscale) used when the spec leaves them unset
DEFAULT_SCALES = {
    "convergence": ("log", "log"),
    "time": ("linear", "log"),
    "condition": ("linear", "log"),
    "sketch": ("linear", "log"),
}

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "svg.hashsalt": "plotkit",
    "font.family": "DejaVu Sans",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.prop_cycle": cycler(
        color=["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    ),
}

_BAND_ALPHA = 0.25


@dataclass
class PlotSpec:
    """One figure: input CSVs, kind, output path, optional axis scales."""

    kind: str
    inputs: list
    out: Path
    xscale: str | None = None
    yscale: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}; expected one of {KINDS}")
        self.inputs = [Path(p) for p in self.inputs]
        if not self.inputs:
            raise ValueError("need at least one input CSV")
        missing = [str(p) for p in self.inputs if not p.is_file()]
        if missing:
            raise ValueError(f"input CSV not found: {', '.join(missing)}")
        self.out = Path(self.out)
        for name, scale in (("xscale", self.xscale), ("yscale", self.yscale)):
            if scale is not None and scale not in ("linear", "log"):
                raise ValueError(f"{name} must be 'linear' or 'log', got {scale!r}")


def read_table(path, columns) -> dict:
    """Load the named columns as float lists; blank cells become NaN.

    Raises on a header missing any required column (all missing names are
    listed) and on a file with a header but no data rows.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns: {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return {
        c: [float(row[c]) if row[c] not in ("", None) else math.nan for row in rows]
        for c in columns
    }


def _scales(spec: PlotSpec):
    dx, dy = DEFAULT_SCALES[spec.kind]
    return spec.xscale or dx, spec.yscale or dy


def _band(ax, x, lo, hi, color):
    ax.fill_between(x, lo, hi, alpha=_BAND_ALPHA, color=color, linewidth=0)


def _fig_convergence(spec: PlotSpec):
    fig, ax = plt.subplots()
    xscale, _ = _scales(spec)
    for path in spec.inputs:
        t = read_table(path, REQUIRED["convergence"])
        # 0-based iteration counters shift by one so a log axis can show them
        x = [v + 1 for v in t["iteration"]] if xscale == "log" else t["iteration"]
        ax.plot(x, t["val_rel_error"], label=path.stem)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative validation error")
    ax.legend()
    return fig


def _fig_time(spec: PlotSpec):
    fig, ax = plt.subplots()
    for path in spec.inputs:
        t = read_table(path, REQUIRED["time"])
        ax.plot(t["wall_time"], t["val_rel_error"], label=path.stem)
    ax.set_xlabel("wall time (s)")
    ax.set_ylabel("relative validation error")
    ax.legend()
    return fig


def _fig_condition(spec: PlotSpec):
    fig, (ax_k, ax_r) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 6.0))
    for path in spec.inputs:
        t = read_table(path, REQUIRED["condition"])
        for layer in sorted(set(t["layer"])):
            idx = [i for i, v in enumerate(t["layer"]) if v == layer]
            it = [t["iteration"][i] for i in idx]
            label = f"layer {int(layer)}"
            for ax, stem in ((ax_k, "kappa"), (ax_r, "rank")):
                med = [t[f"{stem}_median"][i] for i in idx]
                q1 = [t[f"{stem}_q1"][i] for i in idx]
                q3 = [t[f"{stem}_q3"][i] for i in idx]
                (line,) = ax.plot(it, med, label=label)
                _band(ax, it, q1, q3, line.get_color())
    ax_k.set_ylabel("condition number")
    ax_r.set_ylabel("numerical rank")
    ax_r.set_xlabel("iteration")
    ax_k.legend()
    return fig


def _fig_sketch(spec: PlotSpec):
    fig, ax = plt.subplots()
    for path in spec.inputs:
        t = read_table(path, REQUIRED["sketch"])
        stem = path.stem
        label = f"s={stem.removeprefix('sketch_')}" if stem.startswith("sketch_") else stem
        (line,) = ax.plot(t["iteration"], t["val_median"], label=label)
        _band(ax, t["iteration"], t["val_q1"], t["val_q3"], line.get_color())
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative validation error")
    ax.legend()
    return fig


_FIGURES = {
    "convergence": _fig_convergence,
    "time": _fig_time,
    "condition": _fig_condition,
    "sketch": _fig_sketch,
}


def build_figure(spec: PlotSpec):
    """Assemble the figure without saving; the caller owns closing it."""
    with matplotlib.rc_context(_STYLE):
        fig = _FIGURES[spec.kind](spec)
        xscale, yscale = _scales(spec)
        for ax in fig.axes:
            ax.set_xscale(xscale)
            ax.set_yscale(yscale)
        if spec.kind == "condition":
            # rank panel stays linear; only the condition panel is log-like
            fig.axes[1].set_yscale("linear")
        fig.tight_layout()
        return fig


def render(spec: PlotSpec) -> Path:
    """Build and save the figure; returns the output path."""
    with matplotlib.rc_context(_STYLE):
        fig = build_figure(spec)
        try:
            _save(fig, spec.out)
        finally:
            plt.close(fig)
    return spec.out


def _save(fig, out: Path):
    out.parent.mkdir(parents=True, exist_ok=True)
    suffix = out.suffix.lower()
    if suffix == ".svg":
        fig.savefig(out, format="svg", metadata={"Date": None})
    elif suffix == ".png":
        fig.savefig(out, format="png", metadata={"Software": None})
    else:
        raise ValueError(f"unsupported image format {suffix!r}; use .svg or .png")
