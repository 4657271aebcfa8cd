"""Headline guarantees: every figure kind renders from the committed golden
CSVs, condition figures carry a median line with an interquartile band, and
rendering is byte-identical under identical inputs."""

import subprocess
import sys
from pathlib import Path

import matplotlib.collections
import matplotlib.pyplot as plt

from plotkit import PlotSpec, build_figure, render

GOLDEN = Path(__file__).parent / "golden"

SPECS = {
    "convergence": [GOLDEN / "history_ngd.csv", GOLDEN / "history_adam.csv"],
    "time": [GOLDEN / "history_ngd.csv"],
    "condition": [GOLDEN / "condition_trace.csv"],
    "sketch": [GOLDEN / "sketch_20.csv", GOLDEN / "sketch_full.csv"],
}


def test_all_four_kinds_render_from_golden_csvs(tmp_path):
    for kind, inputs in SPECS.items():
        for ext in ("svg", "png"):
            out = render(PlotSpec(kind, inputs, tmp_path / f"{kind}.{ext}"))
            assert out.stat().st_size > 1000


def test_condition_figure_has_median_line_and_iqr_band():
    fig = build_figure(PlotSpec("condition", SPECS["condition"], "x.svg"))
    for ax in fig.axes:
        lines = [ln for ln in ax.get_lines() if len(ln.get_xdata()) > 0]
        bands = [
            a
            for a in ax.get_children()
            if isinstance(a, matplotlib.collections.PolyCollection)
        ]
        assert lines, "median line missing"
        assert bands, "interquartile band missing"
    plt.close(fig)


def test_byte_identical_rendering(tmp_path):
    for kind, inputs in SPECS.items():
        a = render(PlotSpec(kind, inputs, tmp_path / f"a_{kind}.svg"))
        b = render(PlotSpec(kind, inputs, tmp_path / f"b_{kind}.svg"))
        assert a.read_bytes() == b.read_bytes(), kind


def test_byte_identical_across_processes(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.svg"
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "plotkit.cli",
                "sketch",
                "--in",
                str(GOLDEN / "sketch_20.csv"),
                str(GOLDEN / "sketch_full.csv"),
                "--out",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
