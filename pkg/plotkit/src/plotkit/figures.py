"""CSV-driven figure rendering.

Every renderer is a pure function of the rows parsed from one result
table: the numbers are plotted exactly as reported, only axis scaling
and styling are decided here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

PRESETS = ("rmse-vs-power", "bias-map", "cost-curve", "detection-accuracy")

EXPECTED_COLUMNS = ["preset", "sweep_value", "method", "metric", "value",
                    "trials", "stderr", "excluded"]

RMSE_SERIES = ("p_U-SA", "p_U-Coarse", "p_S-Coarse", "p_U-Fine", "p_S-Fine",
               "p_U-CRB", "p_S-CRB")

BIAS_METRICS = ("x_true", "y_true", "x_pseudo", "y_pseudo")

MARKERS = ("o", "s", "d", "^", "v", "*", "P", "X")


class MissingSeriesError(ValueError):
    """The table lacks series the preset's figure cannot do without."""

    def __init__(self, missing):
        self.missing = tuple(missing)
        super().__init__("missing series: " + ", ".join(self.missing))


@dataclass
class FigureSpec:
    """What to render: a preset, its input table, and the image target."""

    preset: str
    input_path: str
    output_path: str
    styles: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; "
                             f"choose from {PRESETS}")


def load_rows(path) -> list[dict]:
    """Parse one result table; raises on malformed headers or cells."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != EXPECTED_COLUMNS:
            raise ValueError(f"unexpected header {header}; "
                             f"want {EXPECTED_COLUMNS}")
        rows = []
        for record in reader:
            if len(record) != len(EXPECTED_COLUMNS):
                raise ValueError(f"malformed row: {record}")
            preset, sweep, method, metric, value, trials, stderr, excl = record
            rows.append({
                "preset": preset,
                "sweep_value": float(sweep),
                "method": method,
                "metric": metric,
                "value": float(value),
                "trials": int(trials),
                "stderr": None if stderr == "" else float(stderr),
                "excluded": int(excl),
            })
    return rows


def _series(rows, method):
    picked = sorted((r for r in rows if r["method"] == method),
                    key=lambda r: r["sweep_value"])
    xs = [r["sweep_value"] for r in picked]
    ys = [r["value"] for r in picked]
    return xs, ys


def _style(spec, method, index):
    style = {"marker": MARKERS[index % len(MARKERS)], "markersize": 4}
    style.update(spec.styles.get(method, {}))
    return style


def _fig_rmse(spec, rows):
    methods = {r["method"] for r in rows}
    missing = [name for name in RMSE_SERIES if name not in methods]
    if missing:
        raise MissingSeriesError(missing)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    low, high = math.inf, -math.inf
    for index, name in enumerate(RMSE_SERIES):
        xs, ys = _series(rows, name)
        style = _style(spec, name, index)
        if name.endswith("-CRB"):
            style.setdefault("linestyle", "--")
            style.pop("marker", None)
        ax.plot(xs, ys, label=name, **style)
        low = min(low, min(ys))
        high = max(high, max(ys))
    ax.set_yscale("log")
    ax.set_ylim(min(1e-3, low / 2), max(10.0, high * 2))
    ax.set_xlabel("transmit power (dBm)")
    ax.set_ylabel("position RMSE (m)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(ncol=2, fontsize=8)
    return fig


def _fig_bias(spec, rows):
    cases = sorted({r["method"] for r in rows})
    if not cases:
        raise MissingSeriesError(["bias-map cases"])
    nodes = {}
    for r in rows:
        nodes.setdefault((r["method"], r["sweep_value"]), {})[r["metric"]] = r
    cols = 2
    count = len(cases)
    rows_grid = (count + cols - 1) // cols
    fig, axes = plt.subplots(rows_grid, cols,
                             figsize=(4.0 * cols, 3.2 * rows_grid),
                             squeeze=False)
    for index, case in enumerate(cases):
        ax = axes[index // cols][index % cols]
        per_case = {key[1]: metrics for key, metrics in nodes.items()
                    if key[0] == case}
        missing = [f"{case}:{name}" for name in BIAS_METRICS
                   if not any(name in m for m in per_case.values())]
        if missing:
            raise MissingSeriesError(missing)
        for metrics in per_case.values():
            if any(name not in metrics for name in BIAS_METRICS):
                continue
            if any(metrics[name]["excluded"] for name in BIAS_METRICS):
                continue
            x0, y0 = metrics["x_true"]["value"], metrics["y_true"]["value"]
            x1, y1 = metrics["x_pseudo"]["value"], metrics["y_pseudo"]["value"]
            if any(math.isnan(v) for v in (x0, y0, x1, y1)):
                continue
            ax.plot([x0, x1], [y0, y1], color="0.4", linewidth=0.8)
            ax.plot([x0], [y0], marker="o", color="tab:blue", markersize=3,
                    linestyle="none")
            ax.plot([x1], [y1], marker="x", color="tab:red", markersize=4,
                    linestyle="none")
        ax.set_title(case, fontsize=9)
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        ax.set_aspect("equal", adjustable="datalim")
    for index in range(count, rows_grid * cols):
        axes[index // cols][index % cols].axis("off")
    fig.tight_layout()
    return fig


def _fig_lines(spec, rows, xlabel, ylabel, ylim=None):
    methods = sorted({r["method"] for r in rows})
    if not methods:
        raise MissingSeriesError([f"{spec.preset} series"])
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for index, name in enumerate(methods):
        xs, ys = _series(rows, name)
        ax.plot(xs, ys, label=name, **_style(spec, name, index))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if ylim is not None:
        ax.set_ylim(*ylim)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    return fig


def render_figure(spec: FigureSpec, rows=None):
    """Build the matplotlib figure for a spec; no file output."""
    if rows is None:
        rows = load_rows(spec.input_path)
    rows = [r for r in rows if r["preset"] == spec.preset]
    if not rows:
        raise ValueError(f"no rows for preset {spec.preset!r} in "
                         f"{spec.input_path}")
    if spec.preset == "rmse-vs-power":
        return _fig_rmse(spec, rows)
    if spec.preset == "bias-map":
        return _fig_bias(spec, rows)
    if spec.preset == "cost-curve":
        return _fig_lines(spec, rows, "boundary antenna index",
                          "mean detection cost")
    return _fig_lines(spec, rows, "number of transmissions",
                      "mean detection accuracy", ylim=(0.0, 1.05))


def _metadata_for(path: Path):
    # strip per-run stamps so rendering the same table twice is bytewise
    # reproducible
    suffix = path.suffix.lower()
    if suffix == ".png":
        return {"Software": "plotkit"}
    if suffix == ".pdf":
        return {"CreationDate": None}
    if suffix == ".svg":
        return {"Date": None}
    return None


def render(spec: FigureSpec) -> Path:
    """Render a spec to its output path; nothing is written on error."""
    figure = render_figure(spec)
    target = Path(spec.output_path)
    try:
        figure.savefig(target, dpi=150, metadata=_metadata_for(target))
    finally:
        plt.close(figure)
    return target
