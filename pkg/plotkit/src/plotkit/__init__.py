"""Render figure analogs from simulator result tables.

The only input is the CSV written by the simulator's experiment runner;
nothing is recomputed here.  One renderer per preset, all driven through
`render` with a `FigureSpec`.
"""

from .figures import (FigureSpec, MissingSeriesError, PRESETS, load_rows,
                      render, render_figure)

__all__ = ["FigureSpec", "MissingSeriesError", "PRESETS", "load_rows",
           "render", "render_figure"]
