"""Offline figure generation for benchmark CSVs."""

from .render import KINDS, PlotSpec, build_figure, read_table, render

__all__ = ["KINDS", "PlotSpec", "build_figure", "read_table", "render"]
