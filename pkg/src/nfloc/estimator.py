"""Multi-stage position, sensing and clock estimation.

The chain mirrors how the information is layered in the observations:

1. Each subarray alone is small enough for a plane-wave model, so a matched
   projection over (angle, delay) gives per-subarray estimates of the
   strongest path.
2. Bearings from all subarrays triangulate the UE in closed form; delays
   minus predicted ranges average into a coarse clock offset.
3. A spherical-wavefront single-path likelihood refines UE position and
   clock jointly (still ignoring the bounced paths).
4. The direct path is projected out per subarray, the residual is fed back
   through stage 1, and the scatter point is fit to the residual angle and
   delay estimates.
5. A joint likelihood over the full state (UE, SPs, clock; gains
   concentrated out) polishes everything.

Stage 5's machinery (templates, concentrated gains) also yields the
Cramér-Rao benchmark via a numerically differentiated Fisher information
matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .channel import aoa_from, ff_steering
from .scenario import noise_variance
from .signals import ObservationTensor
from .templates import (ModelContext, StateVector, concentrated_fit,
                        path_template, state_templates)


@dataclass
class GridWindow:
    """Half-open search interval with validation."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("window needs lo < hi")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass
class SAEstimate:
    """Per-subarray estimates of one path: bearing, delay, peak objective."""

    theta_rad: np.ndarray      # (S,)
    tau_m: np.ndarray          # (S,)
    objective: np.ndarray      # (S,) matched projection peak values


def _sa_objective(y_s: np.ndarray, w_s: np.ndarray, pilots_s: np.ndarray,
                  wavelengths: np.ndarray, thetas: np.ndarray,
                  taus: np.ndarray) -> np.ndarray:
    """Matched-projection surface |u^H y|^2 / ||u||^2 over a (theta, tau) grid.

    The template factorizes: u_{g,k} = (w_g^T a(theta)) D_k(tau) x_{g,k},
    so the surface is a pair of small matrix products.
    """
    n_s = w_s.shape[1]
    steer = np.exp(-1j * np.pi
                   * ((n_s + 1) / 2.0 - np.arange(1, n_s + 1))[:, None]
                   * np.sin(thetas)[None, :])                    # (N_S, T_th)
    a_g = w_s @ steer                                            # (G, T_th)
    phase = np.exp(2j * np.pi * taus[None, :] / wavelengths[:, None])  # (K, T_tau)
    z = (np.conj(pilots_s) * y_s) @ phase                        # (G, T_tau)
    num = np.abs(a_g.conj().T @ z) ** 2                          # (T_th, T_tau)
    den = (np.abs(a_g) ** 2 * (np.abs(pilots_s) ** 2).sum(axis=1)[:, None]).sum(axis=0)
    return num / den[:, None]


def coarse_sa_estimate(y_s: np.ndarray, w_s: np.ndarray, pilots_s: np.ndarray,
                       wavelengths: np.ndarray,
                       angle_window: GridWindow | None = None,
                       delay_window: GridWindow | None = None,
                       angle_points: int = 181, delay_points: int = 256,
                       zoom_stages: int = 2, zoom_factor: float = 8.0,
                       polish: bool = True) -> tuple[float, float, float]:
    """Single-path (angle, delay) fit of one subarray's observations.

    Grid search over the full windows, then repeatedly zoomed grids, then a
    simplex polish of the continuous objective.  Returns
    (theta_rad, tau_m, peak_objective).  The delay window defaults to one
    unambiguous period of the subcarrier grid, in path-length meters.
    """
    wavelengths = np.asarray(wavelengths)
    freqs = 1.0 / wavelengths
    period = 1.0 / (freqs.max() - freqs.min()) * (len(freqs) - 1)
    if angle_window is None:
        angle_window = GridWindow(-np.pi / 2, np.pi / 2)
    if delay_window is None:
        delay_window = GridWindow(0.0, period)

    th_win, ta_win = angle_window, delay_window
    best = (0.5 * (th_win.lo + th_win.hi), 0.5 * (ta_win.lo + ta_win.hi), -np.inf)
    for _ in range(zoom_stages + 1):
        thetas = np.linspace(th_win.lo, th_win.hi, angle_points)
        taus = np.linspace(ta_win.lo, ta_win.hi, delay_points)
        surf = _sa_objective(y_s, w_s, pilots_s, wavelengths, thetas, taus)
        it, iu = np.unravel_index(np.argmax(surf), surf.shape)
        best = (float(thetas[it]), float(taus[iu]), float(surf[it, iu]))
        th_half = th_win.width / (2.0 * zoom_factor)
        ta_half = ta_win.width / (2.0 * zoom_factor)
        th_win = GridWindow(max(best[0] - th_half, angle_window.lo),
                            min(best[0] + th_half, angle_window.hi))
        ta_win = GridWindow(max(best[1] - ta_half, delay_window.lo),
                            min(best[1] + ta_half, delay_window.hi))

    if polish:
        def neg(x):
            val = _sa_objective(y_s, w_s, pilots_s, wavelengths,
                                np.array([x[0]]), np.array([x[1]]))
            return -float(val[0, 0])
        step_th = angle_window.width / (angle_points - 1) / zoom_factor ** zoom_stages
        step_ta = delay_window.width / (delay_points - 1) / zoom_factor ** zoom_stages
        res = minimize(neg, np.array(best[:2]), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 200,
                                "initial_simplex": np.array(best[:2])
                                + np.array([[0, 0], [step_th, 0], [0, step_ta]])})
        if -res.fun >= best[2]:
            best = (float(res.x[0]), float(res.x[1]), float(-res.fun))
    return best


def estimate_subarrays(obs: ObservationTensor, ctx: ModelContext,
                       delay_window: GridWindow | None = None) -> SAEstimate:
    """Run the single-path subarray fit on every subarray."""
    s_count = obs.values.shape[0]
    thetas, taus, peaks = np.empty(s_count), np.empty(s_count), np.empty(s_count)
    for s in range(s_count):
        thetas[s], taus[s], peaks[s] = coarse_sa_estimate(
            obs.values[s], ctx.combiners.subarray(s), ctx.pilots.symbols,
            ctx.wavelengths, delay_window=delay_window)
    return SAEstimate(theta_rad=thetas, tau_m=taus, objective=peaks)


def triangulate_ue(thetas: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Least-squares intersection of the subarray bearing lines.

    Minimizes sum_s ||(I - t_s t_s^T)(p - c_s)||^2 with t_s the unit bearing
    vector of subarray s; the normal equations are 2x2.  Raises if the
    bearings are (near) parallel, in which case no crossing is identifiable.
    """
    thetas = np.asarray(thetas, dtype=float)
    centers = np.asarray(centers, dtype=float)
    q_sum = np.zeros((2, 2))
    rhs = np.zeros(2)
    for theta, center in zip(thetas, centers):
        t = np.array([np.cos(theta), np.sin(theta)])
        q = np.eye(2) - np.outer(t, t)
        q_sum += q
        rhs += q @ center
    if np.linalg.cond(q_sum) > 1e10:
        raise ValueError("subarray bearings are parallel; no intersection")
    return np.linalg.solve(q_sum, rhs)


def coarse_clock(taus: np.ndarray, ue: np.ndarray, centers: np.ndarray) -> float:
    """Average excess of measured delays over predicted subarray ranges."""
    ranges = np.linalg.norm(np.asarray(centers) - np.asarray(ue)[None, :], axis=1)
    return float(np.mean(np.asarray(taus) - ranges))


# -- direct-path maximum likelihood over (p, beta) ---------------------------

def _los_surface(ctx: ModelContext, points: np.ndarray, betas: np.ndarray,
                 y_flat: np.ndarray) -> np.ndarray:
    """Projection objective |v0^H y|^2/||v0||^2 on a points x betas grid.

    The clock offset only rotates the per-subcarrier phases, so for each
    candidate position the beta axis is a K-point weighted sum; positions
    are evaluated vectorized.
    """
    w = ctx.combiners.weights                         # (G, S, N_S)
    g_count, s_count, n_s = w.shape
    lams = ctx.wavelengths
    k_count = lams.size
    pts = np.atleast_2d(points)
    dist = np.linalg.norm(ctx.layout.positions[None, :, :] - pts[:, None, :],
                          axis=2)                     # (P, N)
    r = np.linalg.norm(pts - ctx.layout.reference[None, :], axis=1)   # (P,)
    c = (lams[None, :, None] * r[:, None, None]) / (
        ctx.carrier_wavelength * dist[:, None, :])
    d = np.exp(-2j * np.pi * (dist[:, None, :] - r[:, None, None])
               / lams[None, :, None])
    b = (c * d).reshape(pts.shape[0], k_count, s_count, n_s)
    v0 = np.einsum("gsn,pksn->psgk", w, b)            # (P, S, G, K)
    x = ctx.pilots.symbols                            # (G, K)
    y = y_flat.reshape(s_count, g_count, k_count)
    q = np.einsum("psgk,gk,sgk->pk", v0.conj(), x.conj(), y)
    q *= np.exp(2j * np.pi * r[:, None] / lams[None, :])
    n2 = np.einsum("psgk,gk->p", np.abs(v0) ** 2, np.abs(x) ** 2)
    phase = np.exp(2j * np.pi * betas[None, :] / lams[:, None])   # (K, B)
    return np.abs(q @ phase) ** 2 / n2[:, None]


def _quasi_newton(fun, x0: np.ndarray, steps: np.ndarray, maxiter: int = 200,
                  polish: bool = True):
    """L-BFGS-B with central-difference gradients, then a simplex polish.

    The physical length scales of the objective (fractions of a wavelength)
    are far from the optimizer's default step heuristics, hence explicit
    steps.  Returns the best point seen and the scipy result of the last
    stage.
    """
    def grad(x):
        g = np.empty_like(x)
        for i in range(x.size):
            xp = x.copy(); xm = x.copy()
            xp[i] += steps[i]; xm[i] -= steps[i]
            g[i] = (fun(xp) - fun(xm)) / (2.0 * steps[i])
        return g

    res = minimize(fun, x0, jac=grad, method="L-BFGS-B",
                   options={"maxiter": maxiter, "ftol": 1e-10, "gtol": 1e-14})
    best_x, best_f = (res.x, res.fun) if res.fun <= fun(x0) else (x0, fun(x0))
    iterations = res.nit
    if polish:
        res2 = minimize(fun, best_x, method="Nelder-Mead",
                        options={"xatol": 1e-10, "fatol": 1e-16,
                                 "maxiter": 120 * x0.size})
        if res2.fun < best_f:
            best_x, best_f = res2.x, res2.fun
        iterations += res2.nit
    return np.asarray(best_x), float(best_f), iterations


@dataclass
class LosSearchConfig:
    """Local search plan of the direct-path likelihood refinement."""

    grid_extent_m: float = 1.0
    grid_points: int = 41
    beta_extent_m: float = 1.5
    beta_points: int = 121
    zoom_stages: int = 2
    zoom_factor: float = 6.0
    maxiter: int = 200


def los_mle(obs: ObservationTensor, ctx: ModelContext, ue_init: np.ndarray,
            beta_init: float, search: LosSearchConfig | None = None
            ) -> tuple[np.ndarray, float, dict]:
    """Joint (UE position, clock) fit of the direct path only.

    Maximizes the projection of the observations onto the spherical-wavefront
    direct-path template, gain concentrated out.  A zoomed local grid around
    the initialization avoids the sidelobe structure of the large-aperture
    likelihood; a quasi-Newton stage with numerical gradients finishes.
    Bounced paths are treated as part of the noise, which leaves a bias
    floor once the SNR is high enough for it to matter.
    """
    if search is None:
        search = LosSearchConfig()
    y_flat = obs.flatten()
    y2 = float(np.vdot(y_flat, y_flat).real)

    p_best = np.asarray(ue_init, dtype=float).copy()
    beta_best = float(beta_init)
    extent, b_extent = search.grid_extent_m, search.beta_extent_m
    val_best = -np.inf
    for _ in range(search.zoom_stages + 1):
        axis = np.linspace(-extent, extent, search.grid_points)
        px, py = np.meshgrid(p_best[0] + axis, p_best[1] + axis, indexing="ij")
        pts = np.column_stack([px.ravel(), py.ravel()])
        pts = pts[np.linalg.norm(pts, axis=1) > 1e-3]   # exclude the array itself
        betas = beta_best + np.linspace(-b_extent, b_extent, search.beta_points)
        surf = _los_surface(ctx, pts, betas, y_flat)
        ip, ib = np.unravel_index(np.argmax(surf), surf.shape)
        p_best, beta_best, val_best = pts[ip], float(betas[ib]), float(surf[ip, ib])
        extent /= search.zoom_factor
        b_extent /= search.zoom_factor

    def cost(x):
        v0 = path_template(ctx, x[:2], np.linalg.norm(x[:2] - ctx.layout.reference) + x[2])
        vf = v0.reshape(-1)
        n2 = np.vdot(vf, vf).real
        return -(abs(np.vdot(vf, y_flat)) ** 2) / n2

    x0 = np.array([p_best[0], p_best[1], beta_best])
    steps = np.full(3, 1e-7)
    x_hat, f_hat, iters = _quasi_newton(cost, x0, steps, maxiter=search.maxiter)
    residual = float(np.sqrt(max(y2 + f_hat, 0.0)))
    info = {"iterations": iters, "objective": -f_hat,
            "residual_norm": residual, "grid_objective": val_best}
    return x_hat[:2], float(x_hat[2]), info


def remove_los(obs: ObservationTensor, ctx: ModelContext, thetas: np.ndarray,
               taus: np.ndarray) -> ObservationTensor:
    """Project the direct path out of each subarray block.

    Uses the plane-wave per-subarray template at the given per-subarray
    bearing and delay, so the residual keeps the bounced paths plus the
    curvature mismatch of the removed one.
    """
    values = obs.values.copy()
    s_count = values.shape[0]
    n_s = ctx.combiners.weights.shape[2]
    for s in range(s_count):
        steer = ff_steering(thetas[s], n_s)
        a_g = ctx.combiners.subarray(s) @ steer                     # (G,)
        d_k = np.exp(-2j * np.pi * taus[s] / ctx.wavelengths)       # (K,)
        u = a_g[:, None] * d_k[None, :] * ctx.pilots.symbols        # (G, K)
        scale = np.vdot(u, values[s]) / np.vdot(u, u)
        values[s] = values[s] - scale * u
    return ObservationTensor(values=values)


def estimate_sp(thetas: np.ndarray, taus: np.ndarray, ue: np.ndarray,
                beta: float, centers: np.ndarray,
                weights: np.ndarray | None = None,
                init: np.ndarray | None = None) -> np.ndarray:
    """Scatter point position from residual per-subarray angle/delay fits.

    Minimizes the stacked residuals
    [theta_s - bearing_s(p); tau_s - (||ue - p|| + ||p - c_s|| + beta)]
    with an optional positive-definite weighting (identity by default,
    factored into the residuals as its Cholesky square root).
    """
    thetas = np.asarray(thetas, dtype=float)
    taus = np.asarray(taus, dtype=float)
    centers = np.asarray(centers, dtype=float)
    s_count = thetas.size
    if weights is None:
        half = np.eye(2 * s_count)
    else:
        weights = np.asarray(weights, dtype=float)
        half = np.linalg.cholesky(weights).T

    def residuals(p):
        bearings = np.arctan2(p[1] - centers[:, 1], p[0] - centers[:, 0])
        ang = np.arctan2(np.sin(thetas - bearings), np.cos(thetas - bearings))
        rng = np.linalg.norm(ue - p) + np.linalg.norm(centers - p[None, :], axis=1)
        return half @ np.concatenate([ang, taus - rng - beta])

    if init is None:
        try:
            init = triangulate_ue(thetas, centers)
        except ValueError:
            init = ue + np.array([0.0, -1.0])
    res = least_squares(residuals, np.asarray(init, dtype=float),
                        method="lm", xtol=1e-14, ftol=1e-14)
    return res.x


# -- joint maximum likelihood and its Fisher benchmark -----------------------

@dataclass
class FullMleResult:
    state: StateVector
    cost_initial: float
    cost_final: float
    iterations: int
    ill_conditioned: bool


def full_mle(obs: ObservationTensor, ctx: ModelContext, init: StateVector,
             masks=None, maxiter: int = 200) -> FullMleResult:
    """Joint fit of [UE, SPs, clock] with path gains concentrated out.

    Quasi-Newton descent of the concentrated residual norm from the coarse
    initialization; the returned cost never exceeds the initial cost.
    """
    y_flat = obs.flatten()
    num_sps = init.sps.shape[0]
    ill_flag = [False]

    def cost(vec):
        state = StateVector.from_vector(vec, num_sps)
        templates = state_templates(ctx, state, masks)
        _, residual, ill = concentrated_fit(templates, y_flat)
        ill_flag[0] = ill_flag[0] or ill
        return residual

    x0 = init.to_vector()
    c0 = cost(x0)
    steps = np.full(x0.size, 1e-7)
    x_hat, c_hat, iters = _quasi_newton(cost, x0, steps, maxiter=maxiter)
    state = StateVector.from_vector(x_hat, num_sps)
    gains, residual, ill = concentrated_fit(state_templates(ctx, state, masks), y_flat)
    state.gains = gains
    return FullMleResult(state=state, cost_initial=float(c0),
                         cost_final=float(residual), iterations=iters,
                         ill_conditioned=ill_flag[0] or ill)


@dataclass
class CRBReport:
    """Cramér-Rao position bounds with gains and clock as nuisances."""

    peb_ue: float
    peb_sps: np.ndarray
    clock_sd: float
    fim: np.ndarray
    covariance: np.ndarray


def compute_crb(ctx: ModelContext, state: StateVector,
                noise_variance_w: float | None = None,
                position_step: float = 1e-5,
                gain_step: float = 1e-6) -> CRBReport:
    """Fisher information of [positions, clock, Re/Im gains], numerically.

    Central differences of the noise-free observation mean around the true
    state; FIM = (2/sigma^2) Re(J^H J).  Position bounds are the square
    roots of the traces of the corresponding 2x2 covariance blocks.
    """
    if state.gains is None:
        raise ValueError("compute_crb needs the true path gains in the state")
    if noise_variance_w is None:
        noise_variance_w = noise_variance(ctx.config)
    num_sps = state.sps.shape[0]
    num_paths = state.num_paths
    geo = state.to_vector()
    gain_parts = np.column_stack([state.gains.real, state.gains.imag]).reshape(-1)
    x0 = np.concatenate([geo, gain_parts])
    steps = np.concatenate([np.full(geo.size, position_step),
                            np.full(gain_parts.size, gain_step)])

    def mu_of(vec):
        st = StateVector.from_vector(vec[:geo.size], num_sps)
        parts = vec[geo.size:].reshape(num_paths, 2)
        st.gains = parts[:, 0] + 1j * parts[:, 1]
        templates = state_templates(ctx, st)
        return np.tensordot(st.gains, templates, axes=(0, 0)).reshape(-1)

    cols = []
    for i in range(x0.size):
        xp = x0.copy(); xm = x0.copy()
        xp[i] += steps[i]; xm[i] -= steps[i]
        cols.append((mu_of(xp) - mu_of(xm)) / (2.0 * steps[i]))
    jac = np.column_stack(cols)
    fim = (2.0 / noise_variance_w) * np.real(jac.conj().T @ jac)
    cov = np.linalg.inv(fim)
    peb_ue = float(np.sqrt(cov[0, 0] + cov[1, 1]))
    peb_sps = np.array([np.sqrt(cov[2 + 2 * l, 2 + 2 * l]
                                + cov[3 + 2 * l, 3 + 2 * l])
                        for l in range(num_sps)])
    clock_idx = 2 + 2 * num_sps
    return CRBReport(peb_ue=peb_ue, peb_sps=peb_sps,
                     clock_sd=float(np.sqrt(cov[clock_idx, clock_idx])),
                     fim=fim, covariance=cov)


# -- full chain ---------------------------------------------------------------

@dataclass
class EstimationReport:
    """Stage-by-stage outputs of one estimation run."""

    sa_los: SAEstimate
    ue_sa: np.ndarray
    beta_sa: float
    ue_coarse: np.ndarray
    beta_coarse: float
    sa_residual: SAEstimate | None
    sps_coarse: np.ndarray
    state: StateVector
    cost_initial: float
    cost_final: float
    iterations: int
    ill_conditioned: bool

    def to_rows(self):
        """Long-format (stage, quantity, value) rows for CSV export."""
        rows = [("sa", "ue_x", self.ue_sa[0]), ("sa", "ue_y", self.ue_sa[1]),
                ("sa", "beta", self.beta_sa),
                ("coarse", "ue_x", self.ue_coarse[0]),
                ("coarse", "ue_y", self.ue_coarse[1]),
                ("coarse", "beta", self.beta_coarse)]
        for i, sp in enumerate(np.atleast_2d(self.sps_coarse)):
            if sp.size:
                rows += [("coarse", f"sp{i+1}_x", sp[0]),
                         ("coarse", f"sp{i+1}_y", sp[1])]
        rows += [("full", "ue_x", self.state.ue[0]),
                 ("full", "ue_y", self.state.ue[1]),
                 ("full", "beta", self.state.clock_offset_m)]
        for i, sp in enumerate(self.state.sps):
            rows += [("full", f"sp{i+1}_x", sp[0]), ("full", f"sp{i+1}_y", sp[1])]
        rows += [("full", "cost", self.cost_final)]
        return rows


def run_estimation_chain(obs: ObservationTensor, ctx: ModelContext,
                         num_sps: int = 1,
                         los_search: LosSearchConfig | None = None,
                         maxiter: int = 200) -> EstimationReport:
    """Run all stages on one observation tensor.

    `num_sps` is the number of bounced paths to extract; each is estimated
    from the residual after the previously found paths are projected out
    per subarray.
    """
    centers = ctx.layout.subarray_centers()
    sa_los = estimate_subarrays(obs, ctx)
    ue_sa = triangulate_ue(sa_los.theta_rad, centers)
    beta_sa = coarse_clock(sa_los.tau_m, ue_sa, centers)
    ue_coarse, beta_coarse, _ = los_mle(obs, ctx, ue_sa, beta_sa, los_search)

    sa_residual = None
    sps = np.zeros((0, 2))
    if num_sps > 0:
        thetas0 = np.arctan2(ue_coarse[1] - centers[:, 1],
                             ue_coarse[0] - centers[:, 0])
        taus0 = (np.linalg.norm(centers - ue_coarse[None, :], axis=1)
                 + beta_coarse)
        residual_obs = remove_los(obs, ctx, thetas0, taus0)
        found = []
        for _ in range(num_sps):
            sa_residual = estimate_subarrays(residual_obs, ctx)
            sp = estimate_sp(sa_residual.theta_rad, sa_residual.tau_m,
                             ue_coarse, beta_coarse, centers)
            found.append(sp)
            if len(found) < num_sps:
                residual_obs = remove_los(residual_obs, ctx,
                                          sa_residual.theta_rad,
                                          sa_residual.tau_m)
        sps = np.array(found)

    init = StateVector(ue=ue_coarse, sps=sps, clock_offset_m=beta_coarse)
    result = full_mle(obs, ctx, init, maxiter=maxiter)
    return EstimationReport(
        sa_los=sa_los, ue_sa=ue_sa, beta_sa=beta_sa, ue_coarse=ue_coarse,
        beta_coarse=beta_coarse, sa_residual=sa_residual, sps_coarse=sps,
        state=result.state, cost_initial=result.cost_initial,
        cost_final=result.cost_final, iterations=result.iterations,
        ill_conditioned=result.ill_conditioned)
