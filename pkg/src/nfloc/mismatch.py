"""Pseudotrue parameters and bias analysis under blockage model mismatch.

When part of the array is blocked but the estimator assumes an unblocked
model, the maximum-likelihood estimate converges (in the low-noise limit)
to the pseudotrue state: the minimizer of the Kullback-Leibler divergence
from the blocked observation distribution to the assumed model family.
With equal-covariance complex Gaussians this reduces to matching the
noise-free means, so the machinery is the joint-likelihood fit with the
blocked mean as the data vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .channel import Mask, path_gain
from .estimator import _quasi_newton
from .scenario import PathSet, noise_variance
from .templates import (ModelContext, StateVector, concentrated_fit,
                        observation_mean, state_templates)


@dataclass
class MismatchReport:
    """Pseudotrue fit of one blocked scenario."""

    true_state: StateVector
    pseudotrue: StateVector
    bias: np.ndarray            # flattened [ue, sps, clock] difference
    bias_ue: float
    bias_sps: np.ndarray
    bias_clock: float
    kld: float                  # divergence at the pseudotrue point
    mean_error: float           # residual ||mu_blocked - mu_model(s0)||


def pseudotrue_state(ctx: ModelContext, true_state: StateVector, masks,
                     restarts: int = 3, restart_extent_m: float = 0.5,
                     box_extent_m: float | None = 0.5,
                     rng: np.random.Generator | None = None,
                     maxiter: int = 200,
                     fix_clock: bool = False) -> MismatchReport:
    """Best unblocked-model state explaining the blocked noise-free mean.

    Minimizes ||mu_blocked(true) - T(s) g(s)|| over the joint state with
    gains concentrated out, starting from the true state plus `restarts`
    uniform perturbations within +-restart_extent_m per coordinate.

    The answer is a perturbation of the operating point, so the search is
    confined to +-box_extent_m per coordinate around the true state: the
    subarrayed response has remote near-ambiguities (metre-scale aliases
    with marginally lower residual) that a wandering start would otherwise
    latch onto.  Starts that leave the box are discarded; pass None to
    search unconstrained.

    With a free clock the range coordinate is held only by wavefront
    curvature (the clock absorbs any delay change), so at long range or
    extreme bearing the fit can wander far along a nearly flat valley.
    `fix_clock=True` pins the clock at its true value, isolating the pure
    localization bias; position-only sweeps use this mode.
    """
    if true_state.gains is None:
        raise ValueError("true_state needs explicit gains to synthesize the mean")
    if rng is None:
        rng = np.random.default_rng(ctx.config.rng_seed)
    target = observation_mean(ctx, true_state, masks).reshape(-1)
    num_sps = true_state.sps.shape[0]
    clock_bar = true_state.clock_offset_m

    def unpack(vec):
        if fix_clock:
            return StateVector.from_vector(np.append(vec, clock_bar), num_sps)
        return StateVector.from_vector(vec, num_sps)

    def cost(vec):
        _, residual, _ = concentrated_fit(state_templates(ctx, unpack(vec)),
                                          target)
        return residual

    x_bar = true_state.to_vector()
    if fix_clock:
        x_bar = x_bar[:-1]
    inits = [x_bar]
    for _ in range(restarts):
        inits.append(x_bar + rng.uniform(-restart_extent_m, restart_extent_m,
                                         size=x_bar.size))
    best_x, best_f = None, np.inf
    steps = np.full(x_bar.size, 1e-7)
    for x0 in inits:
        x_hat, f_hat, _ = _quasi_newton(cost, x0, steps, maxiter=maxiter)
        if (box_extent_m is not None
                and np.max(np.abs(x_hat - x_bar)) > box_extent_m + 1e-9):
            continue
        if f_hat < best_f:
            best_x, best_f = x_hat, f_hat
    if best_x is None:
        best_x = x_bar
    bounds = (None if box_extent_m is None else
              list(zip(x_bar - box_extent_m, x_bar + box_extent_m)))
    # the quasi-Newton step schedule can stall short of the bottom of this
    # narrow valley; a simplex polish is cheap and derivative-free
    polish = minimize(cost, best_x, method="Nelder-Mead", bounds=bounds,
                      options=dict(xatol=1e-9, fatol=1e-18,
                                   maxfev=400 * x_bar.size))
    if polish.fun < best_f:
        best_x, best_f = polish.x, float(polish.fun)

    pseudo = unpack(best_x)
    gains, mean_err, _ = concentrated_fit(state_templates(ctx, pseudo), target)
    pseudo.gains = gains
    bias = pseudo.to_vector() - true_state.to_vector()
    sigma2 = noise_variance(ctx.config)
    return MismatchReport(
        true_state=true_state, pseudotrue=pseudo, bias=bias,
        bias_ue=float(np.linalg.norm(bias[:2])),
        bias_sps=np.array([np.linalg.norm(bias[2 + 2 * l:4 + 2 * l])
                           for l in range(num_sps)]),
        bias_clock=float(abs(bias[-1])),
        kld=float(mean_err ** 2 / sigma2), mean_error=float(mean_err))


def mismatch_lower_bound(report: MismatchReport) -> tuple[np.ndarray, np.ndarray]:
    """High-mismatch error lower bound around the pseudotrue point.

    Returns (bias_term, covariance_term) over the geometric state.  The
    bias term, (s_bar - s_0)(s_bar - s_0)^T, dominates at high SNR; the
    covariance term would need the misspecified-bound curvature matrices
    and is reported as zeros here (out of scope).
    """
    bias = report.bias.reshape(-1, 1)
    return bias @ bias.T, np.zeros((bias.size, bias.size))


@dataclass
class BiasMapNode:
    """Pseudotrue fit of one grid node of a bias map."""

    case: str
    true_xy: np.ndarray
    pseudo_xy: np.ndarray
    bias_norm: float
    ok: bool = True


def los_only_state(config, ue_xy, clock_offset_m: float = 0.3,
                   phase_rad: float = 0.0) -> StateVector:
    """Direct-path-only state at a position, with the implied gain."""
    paths = PathSet(ue_position=np.asarray(ue_xy, dtype=float),
                    sp_positions=np.zeros((0, 2)), rcs_m2=np.zeros(0),
                    path_phases=np.array([phase_rad]),
                    clock_offset_m=clock_offset_m)
    gain = path_gain(config, paths, 0)
    return StateVector(ue=paths.ue_position.copy(), sps=paths.sp_positions,
                       clock_offset_m=clock_offset_m,
                       gains=np.array([gain]))


def bias_map(ctx: ModelContext, xs, ys, runs: dict,
             clock_offset_m: float = 0.3, restarts: int = 3,
             fix_clock: bool = True) -> list[BiasMapNode]:
    """Pseudotrue UE bias over a grid of true positions, per blocked run.

    `runs` maps a case label to a blocked antenna run (first, last),
    1-based inclusive, or None for no blockage.  Each node is a direct
    pseudotrue_state call on a direct-path-only state with its own
    deterministic restart stream, so results do not depend on evaluation
    order.  The clock is pinned by default: the map shows where blockage
    sends the position fit, not the clock trade-off.
    """
    n = ctx.config.num_antennas
    nodes = []
    for case_index, (case, run) in enumerate(runs.items()):
        if run is None:
            masks = [Mask.all_ones(n)]
        else:
            masks = [Mask.blocked_run(n, run[0], run[1])]
        for ix, x in enumerate(xs):
            for iy, y in enumerate(ys):
                state = los_only_state(ctx.config, (x, y), clock_offset_m)
                rng = np.random.default_rng(np.random.SeedSequence(
                    (ctx.config.rng_seed, case_index, ix, iy)))
                try:
                    report = pseudotrue_state(ctx, state, masks,
                                              restarts=restarts, rng=rng,
                                              fix_clock=fix_clock)
                    nodes.append(BiasMapNode(
                        case=case, true_xy=state.ue.copy(),
                        pseudo_xy=report.pseudotrue.ue.copy(),
                        bias_norm=report.bias_ue))
                except Exception:
                    nodes.append(BiasMapNode(
                        case=case, true_xy=state.ue.copy(),
                        pseudo_xy=np.full(2, np.nan), bias_norm=np.nan,
                        ok=False))
    return nodes
