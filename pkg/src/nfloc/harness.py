"""Monte-Carlo experiment runner, presets, and the long-format result table."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from numbers import Real

import numpy as np

from .scenario import (ConfigError, PathSet, ScenarioConfig, build_array,
                       default_config, default_paths, field_boundaries,
                       noise_variance)
from .channel import Mask, nf_channel
from .signals import constant_pilots, make_combiners, synthesize
from .templates import ModelContext, StateVector, true_state
from .estimator import compute_crb, run_estimation_chain
from .mismatch import bias_map, pseudotrue_state
from .blockage import (BlockageCostEvaluator, detect_heuristic,
                       detect_thresholding, detection_accuracy,
                       hypothesis_vector, scan_cost_trace)

PRESETS = ("rmse-vs-power", "bias-map", "cost-curve", "detection-accuracy")

COLUMNS = ("preset", "sweep_value", "method", "metric", "value",
           "trials", "stderr", "excluded")


@dataclass
class ExperimentPlan:
    """One experiment: a preset, its sweep, and the scenario it runs on."""

    preset: str
    sweep_values: tuple
    trials: int
    config: ScenarioConfig
    paths: PathSet
    output_path: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; "
                              f"choose from {PRESETS}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        values = tuple(self.sweep_values)
        if not values:
            raise ConfigError("sweep must not be empty")
        if all(isinstance(v, Real) for v in values):
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ConfigError("sweep values must be strictly increasing")
        self.sweep_values = values


@dataclass
class ResultTable:
    """Long-format rows; `trials` counts included runs, `excluded` failures."""

    rows: list = field(default_factory=list)

    def add(self, preset, sweep_value, method, metric, value,
            trials, stderr=None, excluded=0):
        if trials > 1 and stderr is None:
            raise ValueError("stderr is required when trials > 1")
        self.rows.append((preset, sweep_value, method, metric, float(value),
                          int(trials), stderr, int(excluded)))

    def to_csv(self) -> str:
        lines = [",".join(COLUMNS)]
        for preset, sweep, method, metric, value, trials, stderr, excl in self.rows:
            lines.append(",".join([
                preset, _fmt(sweep), method, metric, _fmt(value),
                str(trials), "" if stderr is None else _fmt(stderr), str(excl)]))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())

    def methods(self) -> list:
        seen = dict.fromkeys(row[2] for row in self.rows)
        return list(seen)

    def failure_rate(self) -> float:
        """Excluded runs over requested runs, across all rows."""
        requested = sum(row[5] + row[7] for row in self.rows)
        excluded = sum(row[7] for row in self.rows)
        return excluded / requested if requested else 0.0


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _rmse_row(sq_errors: list) -> tuple:
    """(rmse, stderr, n); stderr of the RMSE by the delta method."""
    vals = np.asarray(sq_errors, dtype=float)
    n = vals.size
    rmse = float(np.sqrt(np.mean(vals)))
    if n < 2 or rmse == 0.0:
        return rmse, None, n
    se_mse = float(np.std(vals, ddof=1) / np.sqrt(n))
    return rmse, se_mse / (2.0 * rmse), n


def _mean_row(samples: list) -> tuple:
    vals = np.asarray(samples, dtype=float)
    n = vals.size
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else None
    return mean, stderr, n


# -- preset: rmse-vs-power ----------------------------------------------------

FIG2_SERIES = ("p_U-SA", "p_U-Coarse", "p_S-Coarse", "p_U-Fine", "p_S-Fine")


def _run_rmse_vs_power(plan: ExperimentPlan) -> ResultTable:
    """Chain RMSE per stage vs transmit power, with bound overlays.

    One combiner draw per power point (the bounds are conditional on the
    sounding schedule); noise redrawn per trial.  A position estimate
    beyond the far-field boundary carries no range information and counts
    as a non-converged trial for that series only, which at low SNR leaves
    the bounced-path series without reportable points.
    """
    table = ResultTable()
    paths = plan.paths
    for point, power in enumerate(plan.sweep_values):
        cfg = replace(plan.config, transmit_power_dbm=float(power))
        layout = build_array(cfg)
        comb = make_combiners(cfg, rng=np.random.default_rng(cfg.rng_seed))
        pilots = constant_pilots(cfg)
        ctx = ModelContext(cfg, layout, comb, pilots)
        channel = nf_channel(cfg, layout, paths)
        sigma2 = noise_variance(cfg)
        far_limit = field_boundaries(cfg)[1]
        squared = {name: [] for name in FIG2_SERIES}
        for trial in range(plan.trials):
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg.rng_seed, point, trial)))
            obs = synthesize(channel, comb, pilots, noise_variance_w=sigma2,
                             rng=rng)
            try:
                rep = run_estimation_chain(obs, ctx)
            except Exception:
                continue
            estimates = {"p_U-SA": rep.ue_sa, "p_U-Coarse": rep.ue_coarse,
                         "p_S-Coarse": rep.sps_coarse[0],
                         "p_U-Fine": rep.state.ue, "p_S-Fine": rep.state.sps[0]}
            for name, estimate in estimates.items():
                estimate = np.asarray(estimate, dtype=float)
                if (not np.all(np.isfinite(estimate))
                        or np.linalg.norm(estimate) > far_limit):
                    continue
                truth = (paths.sp_positions[0] if name.startswith("p_S")
                         else paths.ue_position)
                squared[name].append(float(np.sum((estimate - truth) ** 2)))
        for name in FIG2_SERIES:
            if not squared[name]:
                continue
            rmse, stderr, n = _rmse_row(squared[name])
            table.add(plan.preset, power, name, "rmse_m", rmse, n, stderr,
                      excluded=plan.trials - n)
        crb = compute_crb(ctx, true_state(cfg, paths))
        table.add(plan.preset, power, "p_U-CRB", "peb_m", crb.peb_ue, 1)
        table.add(plan.preset, power, "p_S-CRB", "peb_m",
                  float(crb.peb_sps[0]), 1)
    return table


# -- preset: bias-map ---------------------------------------------------------

# cell centers of the 5 m x 16 m coverage patch, 80 nodes; centering keeps
# every node off the scatter point at (2, -2)
BIAS_GRID_X = tuple(x + 0.5 for x in range(5))
BIAS_GRID_Y = tuple(y + 0.5 for y in range(-8, 8))
BIAS_CASES = {"blocked-100": (100, 100), "blocked-96-100": (96, 100),
              "blocked-76-80": (76, 80), "blocked-56-60": (56, 60)}
BIAS_METRICS = ("x_true", "y_true", "x_pseudo", "y_pseudo", "bias_norm")


def _run_bias_map(plan: ExperimentPlan) -> ResultTable:
    """Pseudotrue direct-path fit per grid node, per blocked run."""
    cfg = plan.config
    layout = build_array(cfg)
    comb = make_combiners(cfg, rng=np.random.default_rng(cfg.rng_seed))
    ctx = ModelContext(cfg, layout, comb, constant_pilots(cfg))
    xs = plan.options.get("grid_x", BIAS_GRID_X)
    ys = plan.options.get("grid_y", BIAS_GRID_Y)
    cases = plan.options.get("cases", BIAS_CASES)
    nodes = bias_map(ctx, xs, ys, cases)
    table = ResultTable()
    per_case = len(xs) * len(ys)
    for index, node in enumerate(nodes):
        node_id = index % per_case
        values = (node.true_xy[0], node.true_xy[1],
                  node.pseudo_xy[0], node.pseudo_xy[1], node.bias_norm)
        for metric, value in zip(BIAS_METRICS, values):
            table.add(plan.preset, node_id, node.case, metric, value,
                      trials=1 if node.ok else 0,
                      excluded=0 if node.ok else 1)
    return table


# -- preset: cost-curve -------------------------------------------------------

COST_SERIES = (("G5-P20-blocked6-10", 5, 20.0, (6, 10)),
               ("G20-P20-blocked6-10", 20, 20.0, (6, 10)),
               ("G20-P30-blocked6-10", 20, 30.0, (6, 10)),
               ("G20-P30-blocked11-15", 20, 30.0, (11, 15)))


def _run_cost_curve(plan: ExperimentPlan) -> ResultTable:
    """Mean detection-scan cost per boundary index, one row per index."""
    table = ResultTable()
    paths = plan.paths
    series = plan.options.get("series", COST_SERIES)
    for series_index, (label, g, power, run) in enumerate(series):
        cfg = replace(plan.config, num_transmissions=int(g),
                      transmit_power_dbm=float(power))
        layout = build_array(cfg)
        comb = make_combiners(cfg, rng=np.random.default_rng(cfg.rng_seed))
        pilots = constant_pilots(cfg)
        ctx = ModelContext(cfg, layout, comb, pilots)
        mask = Mask.blocked_run(cfg.num_antennas, run[0], run[1])
        channel = nf_channel(cfg, layout, paths,
                             masks=[mask] + [None] * paths.sp_positions.shape[0])
        sigma2 = noise_variance(cfg)
        state = true_state(cfg, paths)
        traces = []
        for trial in range(plan.trials):
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg.rng_seed, series_index, trial)))
            obs = synthesize(channel, comb, pilots, noise_variance_w=sigma2,
                             rng=rng)
            evaluator = BlockageCostEvaluator(ctx, state, obs, 0)
            trace, _ = scan_cost_trace(evaluator)
            traces.append(trace)
        traces = np.asarray(traces)
        for i, index in enumerate(plan.sweep_values):
            mean, stderr, n = _mean_row(traces[:, int(index) - 1])
            table.add(plan.preset, index, label, "mean_cost", mean, n, stderr)
    return table


# -- preset: detection-accuracy -----------------------------------------------

BENCHMARK_RUN = (5, 10)

DETECTION_METHODS = ("Thresholding", "Heuristic", "Low Power",
                     "More Blockage", "Non-zero Masks", "Biased p_U")


def _detection_trial(ctx, cfg, paths, state, run, stochastic, method, rng,
                     sigma2):
    n = cfg.num_antennas
    if stochastic:
        blocked = np.arange(run[0] - 1, run[1])
        mask = Mask.stochastic(n, blocked, rng)
    else:
        mask = Mask.blocked_run(n, run[0], run[1])
    channel = nf_channel(cfg, build_array(cfg), paths,
                         masks=[mask] + [None] * paths.sp_positions.shape[0])
    obs = synthesize(channel, ctx.combiners, ctx.pilots,
                     noise_variance_w=sigma2, rng=rng)
    if method == "thresholding":
        result = detect_thresholding(obs, ctx, state, 0)
    else:
        result = detect_heuristic(BlockageCostEvaluator(ctx, state, obs, 0))
    truth = hypothesis_vector(cfg.subarray_size, run)
    return detection_accuracy(result.mask, truth)


def _biased_state(plan: ExperimentPlan) -> StateVector:
    """Pseudotrue state of the benchmark blockage, under the base scenario."""
    cfg = plan.config
    layout = build_array(cfg)
    comb = make_combiners(cfg, rng=np.random.default_rng(cfg.rng_seed))
    ctx = ModelContext(cfg, layout, comb, constant_pilots(cfg))
    masks = ([Mask.blocked_run(cfg.num_antennas, *BENCHMARK_RUN)]
             + [None] * plan.paths.sp_positions.shape[0])
    report = pseudotrue_state(ctx, true_state(cfg, plan.paths), masks)
    return report.pseudotrue


def _run_detection_accuracy(plan: ExperimentPlan) -> ResultTable:
    """Mean mask accuracy vs number of transmissions, per method/variant.

    The heuristic family redraws the sounding phases every trial; the
    recovery baseline keeps its codebook.  The biased variant reuses the
    benchmark's pseudotrue state at every G: the wrong-but-consistent
    location a mismatched fit would actually supply.
    """
    table = ResultTable()
    paths = plan.paths
    methods = plan.options.get("methods", DETECTION_METHODS)
    biased = _biased_state(plan) if "Biased p_U" in methods else None
    sweep_len = len(plan.sweep_values)
    for method_index, method in enumerate(methods):
        power = 0.0 if method == "Low Power" else plan.config.transmit_power_dbm
        run = (5, 15) if method == "More Blockage" else BENCHMARK_RUN
        stochastic = method == "Non-zero Masks"
        kind = "dft-codebook" if method == "Thresholding" else "random-phase"
        algo = "thresholding" if method == "Thresholding" else "heuristic"
        for g_index, g in enumerate(plan.sweep_values):
            cfg = replace(plan.config, num_transmissions=int(g),
                          transmit_power_dbm=float(power))
            layout = build_array(cfg)
            pilots = constant_pilots(cfg)
            sigma2 = noise_variance(cfg)
            state = biased if method == "Biased p_U" else true_state(cfg, paths)
            point = method_index * sweep_len + g_index
            fixed = (make_combiners(cfg, kind=kind)
                     if kind == "dft-codebook" else None)
            samples = []
            for trial in range(plan.trials):
                rng = np.random.default_rng(
                    np.random.SeedSequence((cfg.rng_seed, point, trial)))
                comb = fixed if fixed is not None else make_combiners(
                    cfg, kind=kind, rng=rng)
                ctx = ModelContext(cfg, layout, comb, pilots)
                samples.append(_detection_trial(
                    ctx, cfg, paths, state, run, stochastic, algo, rng, sigma2))
            mean, stderr, n = _mean_row(samples)
            table.add(plan.preset, g, method, "mean_accuracy", mean, n, stderr)
    return table


# -- plan constructors and dispatch -------------------------------------------

def preset_fig2(config: ScenarioConfig | None = None,
                paths: PathSet | None = None, trials: int = 100,
                quick: bool = False, output_path=None) -> ExperimentPlan:
    """Transmit-power sweep of every chain stage plus position bounds."""
    sweep = tuple(float(p) for p in range(-20, 55, 5))
    if quick:
        sweep, trials = (0.0, 20.0, 40.0), min(trials, 10)
    return ExperimentPlan("rmse-vs-power", sweep, trials,
                          config or default_config(), paths or default_paths(),
                          output_path)


def preset_fig3(config: ScenarioConfig | None = None,
                paths: PathSet | None = None, trials: int = 1,
                quick: bool = False, output_path=None) -> ExperimentPlan:
    """Pseudotrue bias over the coverage grid, four blocked-run cases."""
    options = {}
    xs, ys = BIAS_GRID_X, BIAS_GRID_Y
    if quick:
        xs, ys = (0.5, 2.5, 4.5), (-7.5, 0.5, 7.5)
        options = {"grid_x": xs, "grid_y": ys}
    node_ids = tuple(range(len(xs) * len(ys)))
    return ExperimentPlan("bias-map", node_ids, max(trials, 1),
                          config or default_config(), paths or default_paths(),
                          output_path, options)


def preset_fig4(config: ScenarioConfig | None = None,
                paths: PathSet | None = None, trials: int = 100,
                quick: bool = False, output_path=None) -> ExperimentPlan:
    """Detection-scan cost traces for four (G, P, blocked-run) settings."""
    if quick:
        trials = min(trials, 10)
    cfg = config or default_config()
    return ExperimentPlan("cost-curve", tuple(range(1, cfg.subarray_size + 1)),
                          trials, cfg, paths or default_paths(), output_path)


def preset_fig5(config: ScenarioConfig | None = None,
                paths: PathSet | None = None, trials: int = 100,
                quick: bool = False, output_path=None) -> ExperimentPlan:
    """Detection accuracy vs number of transmissions, six methods."""
    sweep = tuple(range(1, 31))
    if quick:
        sweep, trials = (1, 5, 10, 25), min(trials, 10)
    return ExperimentPlan("detection-accuracy", sweep, trials,
                          config or default_config(), paths or default_paths(),
                          output_path)


_PLANNERS = {"rmse-vs-power": preset_fig2, "bias-map": preset_fig3,
             "cost-curve": preset_fig4, "detection-accuracy": preset_fig5}

_RUNNERS = {"rmse-vs-power": _run_rmse_vs_power, "bias-map": _run_bias_map,
            "cost-curve": _run_cost_curve,
            "detection-accuracy": _run_detection_accuracy}


def plan_for(preset: str, **kwargs) -> ExperimentPlan:
    if preset not in _PLANNERS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {PRESETS}")
    return _PLANNERS[preset](**kwargs)


def run_monte_carlo(plan: ExperimentPlan) -> ResultTable:
    """Run a plan; deterministic for a fixed (plan, config seed)."""
    table = _RUNNERS[plan.preset](plan)
    if plan.output_path is not None:
        table.write(plan.output_path)
    return table
