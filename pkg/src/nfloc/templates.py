"""Observation templates of the spherical-wavefront model.

A "template" is the noise-free combined observation tensor of one path with
unit gain: v_l(s) in the estimation objectives.  The joint state gathers the
UE position, the scatter point positions and the clock offset; path gains
are complex nuisance amplitudes that are concentrated out of every fit by
linear least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import delay_component, nf_element_terms, path_gain
from .scenario import ArrayLayout, PathSet, ScenarioConfig
from .signals import CombinerSchedule, PilotSchedule


@dataclass
class StateVector:
    """Joint geometric state: UE position, SP positions, clock offset.

    Optionally carries the complex path gains (direct path first); most
    estimators leave `gains` as None and concentrate them out.
    """

    ue: np.ndarray                     # (2,)
    sps: np.ndarray                    # (L, 2)
    clock_offset_m: float
    gains: np.ndarray | None = None    # (L + 1,) complex or None

    def __post_init__(self):
        self.ue = np.asarray(self.ue, dtype=float).reshape(2)
        self.sps = np.asarray(self.sps, dtype=float).reshape(-1, 2)
        if self.gains is not None:
            self.gains = np.asarray(self.gains, dtype=complex).reshape(-1)

    @property
    def num_paths(self) -> int:
        return 1 + self.sps.shape[0]

    def to_vector(self) -> np.ndarray:
        """Flatten the geometric block: [ue, sp_1.., clock]."""
        return np.concatenate([self.ue, self.sps.reshape(-1),
                               [self.clock_offset_m]])

    @classmethod
    def from_vector(cls, vec: np.ndarray, num_sps: int,
                    gains: np.ndarray | None = None) -> "StateVector":
        vec = np.asarray(vec, dtype=float)
        return cls(ue=vec[:2], sps=vec[2:2 + 2 * num_sps].reshape(num_sps, 2),
                   clock_offset_m=float(vec[2 + 2 * num_sps]), gains=gains)

    def copy(self) -> "StateVector":
        return StateVector(self.ue.copy(), self.sps.copy(),
                           self.clock_offset_m,
                           None if self.gains is None else self.gains.copy())


@dataclass
class ModelContext:
    """Everything fixed while a state is varied: grid, geometry, sounding."""

    config: ScenarioConfig
    layout: ArrayLayout
    combiners: CombinerSchedule
    pilots: PilotSchedule

    def __post_init__(self):
        self.wavelengths = self.config.subcarrier_wavelengths()
        self.carrier_wavelength = self.config.wavelength_m

    @property
    def observation_size(self) -> int:
        g, s, _ = self.combiners.weights.shape
        return s * g * self.config.num_subcarriers


def path_template(ctx: ModelContext, source: np.ndarray, total_length_m: float,
                  mask: np.ndarray | None = None) -> np.ndarray:
    """Unit-gain template (S, G, K) of a path.

    `source` is the last bounce whose spherical wavefront the array sees;
    `total_length_m` is the full propagation length plus the clock offset.
    An optional per-antenna mask multiplies the channel before combining.
    """
    c, d = nf_element_terms(ctx.wavelengths, source, ctx.layout,
                            ctx.carrier_wavelength)
    b = c * d                                             # (K, N)
    if mask is not None:
        mask = getattr(mask, "coefficients", mask)
        b = b * np.asarray(mask, dtype=complex)[None, :]
    g_count, s_count, n_s = ctx.combiners.weights.shape
    blocks = b.reshape(b.shape[0], s_count, n_s)          # (K, S, N_S)
    v = np.einsum("gsn,ksn->sgk", ctx.combiners.weights, blocks)
    delay = delay_component(ctx.wavelengths, total_length_m)
    return v * delay[None, None, :] * ctx.pilots.symbols[None, :, :]


def state_templates(ctx: ModelContext, state: StateVector,
                    masks=None) -> np.ndarray:
    """Templates of every path of a state, stacked as (L + 1, S, G, K)."""
    num_paths = state.num_paths
    if masks is None:
        masks = [None] * num_paths
    ref = ctx.layout.reference
    out = np.empty((num_paths,) + (ctx.combiners.weights.shape[1],
                                   ctx.combiners.weights.shape[0],
                                   ctx.config.num_subcarriers), dtype=complex)
    r0 = np.linalg.norm(state.ue - ref)
    out[0] = path_template(ctx, state.ue, r0 + state.clock_offset_m, masks[0])
    for ell in range(1, num_paths):
        sp = state.sps[ell - 1]
        length = (np.linalg.norm(state.ue - sp) + np.linalg.norm(sp - ref)
                  + state.clock_offset_m)
        out[ell] = path_template(ctx, sp, length, masks[ell])
    return out


def concentrated_fit(templates: np.ndarray, y_flat: np.ndarray
                     ) -> tuple[np.ndarray, float, bool]:
    """Least-squares path gains for fixed geometry.

    `templates` is (L + 1, S, G, K) or (L + 1, M); returns (gains,
    residual_norm, ill_conditioned).  A rank-deficient template matrix falls
    back to the pseudoinverse solution and sets the flag.
    """
    u = templates.reshape(templates.shape[0], -1).T       # (M, L + 1)
    gram = u.conj().T @ u
    rhs = u.conj().T @ y_flat
    ill = False
    try:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > 1e12:
            raise np.linalg.LinAlgError
        gains = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        gains = np.linalg.pinv(u, rcond=1e-12) @ y_flat
        ill = True
    residual = y_flat - u @ gains
    return gains, float(np.linalg.norm(residual)), ill


def concentrated_cost(ctx: ModelContext, state: StateVector,
                      y_flat: np.ndarray, masks=None) -> float:
    """Residual norm ||y - T g(s)|| with gains concentrated out."""
    templates = state_templates(ctx, state, masks)
    _, residual, _ = concentrated_fit(templates, y_flat)
    return residual


def observation_mean(ctx: ModelContext, state: StateVector,
                     masks=None) -> np.ndarray:
    """Noise-free combined observations of a state with explicit gains."""
    if state.gains is None:
        raise ValueError("observation_mean needs explicit path gains")
    templates = state_templates(ctx, state, masks)
    return np.tensordot(state.gains, templates, axes=(0, 0))


def true_state(config: ScenarioConfig, paths: PathSet,
               reference: np.ndarray | None = None) -> StateVector:
    """State vector of a path set with the physically implied gains."""
    gains = np.array([path_gain(config, paths, i, reference)
                      for i in range(paths.sp_positions.shape[0] + 1)])
    return StateVector(ue=paths.ue_position.copy(),
                       sps=paths.sp_positions.copy(),
                       clock_offset_m=paths.clock_offset_m, gains=gains)
