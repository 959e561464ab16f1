"""End-to-end check against real simulation output, when available.

The renderer's contract is the CSV schema alone, so these tests skip
cleanly when the simulation package is not installed.
"""

import pytest

nfloc_harness = pytest.importorskip("nfloc.harness")

from plotkit import FigureSpec, render, render_figure
from plotkit.figures import RMSE_SERIES


@pytest.fixture(scope="module")
def result_files(tmp_path_factory):
    out = tmp_path_factory.mktemp("results")
    files = {}
    trials = {"rmse-vs-power": 2, "bias-map": 1, "cost-curve": 1,
              "detection-accuracy": 2}
    for preset, n in trials.items():
        path = out / f"{preset}.csv"
        plan = nfloc_harness.plan_for(preset, trials=n, quick=True,
                                      output_path=str(path))
        nfloc_harness.run_monte_carlo(plan)
        files[preset] = str(path)
    return files


def test_renders_all_four_presets_from_simulation_output(result_files,
                                                         tmp_path):
    for preset, csv_path in result_files.items():
        target = tmp_path / f"{preset}.png"
        render(FigureSpec(preset, csv_path, str(target)))
        assert target.exists() and target.stat().st_size > 0


def test_power_sweep_figure_is_log_scaled_with_full_legend(result_files,
                                                           tmp_path):
    spec = FigureSpec("rmse-vs-power", result_files["rmse-vs-power"],
                      str(tmp_path / "fig.png"))
    fig = render_figure(spec)
    ax = fig.axes[0]
    assert ax.get_yscale() == "log"
    labels = [t.get_text() for t in ax.get_legend().get_texts()]
    assert labels == list(RMSE_SERIES)
    assert len(labels) == 7
