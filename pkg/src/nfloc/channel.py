"""Multipath uplink channel synthesis for an extremely large aperture array.

The geometry places sources close enough that the spherical wavefront is
resolved across the aperture (radiating near field), so per-antenna phase
and amplitude are computed from exact distances.  A plane-wave variant of
the same channel is included for comparison and for the per-subarray
estimators, which operate in the far field of each small subarray.

Conventions
-----------
Angles of arrival are measured at a reference point, from array broadside
(+x axis) toward +y, so a source at bearing theta sits along
(cos theta, sin theta) from the reference.  All delays are carried as path
lengths in meters; a clock offset simply adds to the geometric length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ArrayLayout, PathSet, ScenarioConfig

# Stochastic blockage coefficients: complex mean 0.2 split evenly between
# real and imaginary parts, total complex variance 0.2.
_STOCH_MEAN = 0.2 / np.sqrt(2.0)
_STOCH_COMPONENT_STD = np.sqrt(0.1)


@dataclass
class Mask:
    """Per-antenna complex transmission coefficients of one path.

    Binary masks model hard blockage (coefficient 0 on blocked antennas,
    1 elsewhere).  Stochastic masks model partial leakage through the
    obstruction: blocked entries get complex Gaussian coefficients instead
    of exact zeros.
    """

    coefficients: np.ndarray
    kind: str = "binary"

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex).reshape(-1)
        if self.kind == "binary":
            vals = self.coefficients
            if not np.all((vals == 0) | (vals == 1)):
                raise ValueError("binary mask entries must be 0 or 1")
        elif self.kind != "stochastic":
            raise ValueError(f"unknown mask kind {self.kind!r}")

    @classmethod
    def all_ones(cls, num_antennas: int) -> "Mask":
        return cls(np.ones(num_antennas), kind="binary")

    @classmethod
    def blocked_run(cls, num_antennas: int, first: int, last: int) -> "Mask":
        """Binary mask with antennas first..last (1-based, inclusive) blocked."""
        if not (1 <= first <= last <= num_antennas):
            raise ValueError("blocked run out of range")
        coeff = np.ones(num_antennas)
        coeff[first - 1:last] = 0.0
        return cls(coeff, kind="binary")

    @classmethod
    def stochastic(cls, num_antennas: int, blocked: np.ndarray,
                   rng: np.random.Generator) -> "Mask":
        """Mask whose blocked antennas leak with random complex coefficients."""
        blocked = np.asarray(blocked, dtype=int).reshape(-1)
        coeff = np.ones(num_antennas, dtype=complex)
        draws = (rng.normal(_STOCH_MEAN, _STOCH_COMPONENT_STD, size=blocked.size)
                 + 1j * rng.normal(_STOCH_MEAN, _STOCH_COMPONENT_STD, size=blocked.size))
        coeff[blocked] = draws
        return cls(coeff, kind="stochastic")

    @property
    def blocked_indices(self) -> np.ndarray:
        """0-based antenna indices whose coefficient differs from one."""
        return np.flatnonzero(self.coefficients != 1.0)


def aoa_from(reference: np.ndarray, target: np.ndarray) -> float:
    """Bearing of `target` seen from `reference`, zero at array broadside."""
    delta = np.asarray(target, dtype=float) - np.asarray(reference, dtype=float)
    return float(np.arctan2(delta[1], delta[0]))


def path_gain(config: ScenarioConfig, paths: PathSet, path_index: int,
              reference: np.ndarray | None = None) -> complex:
    """Complex gain alpha of one path.

    Direct path: lambda_c e^{-j xi} / (4 pi ||p_0 - p_B||).  Bounced path l:
    sqrt(rcs_l / (4 pi)) lambda_c e^{-j xi} / (4 pi ||p_0 - p_l|| ||p_l - p_B||).
    """
    if reference is None:
        reference = np.zeros(2)
    lam = config.wavelength_m
    xi = paths.path_phases[path_index]
    phase = np.exp(-1j * xi)
    if path_index == 0:
        dist = np.linalg.norm(paths.ue_position - reference)
        return lam * phase / (4.0 * np.pi * dist)
    sp = paths.sp_positions[path_index - 1]
    d_tx = np.linalg.norm(paths.ue_position - sp)
    d_rx = np.linalg.norm(sp - reference)
    rcs_factor = np.sqrt(paths.rcs_m2[path_index - 1] / (4.0 * np.pi))
    return rcs_factor * lam * phase / (4.0 * np.pi * d_tx * d_rx)


def path_lengths(paths: PathSet, reference: np.ndarray | None = None) -> np.ndarray:
    """Geometric propagation length of each path to the reference, (L + 1,)."""
    if reference is None:
        reference = np.zeros(2)
    lengths = [np.linalg.norm(paths.ue_position - reference)]
    for sp in paths.sp_positions:
        lengths.append(np.linalg.norm(paths.ue_position - sp)
                       + np.linalg.norm(sp - reference))
    return np.asarray(lengths)


def ff_steering(aoa_rad: float, num_antennas: int) -> np.ndarray:
    """Plane-wave steering vector, entry n = e^{-j pi ((N+1)/2 - n) sin(theta)}.

    Assumes half carrier-wavelength element spacing; the same vector serves
    every subcarrier (beam squint is a near-field-model refinement).
    """
    n = np.arange(1, num_antennas + 1)
    return np.exp(-1j * np.pi * ((num_antennas + 1) / 2.0 - n) * np.sin(aoa_rad))


def delay_component(wavelengths: np.ndarray, distance_m: float) -> np.ndarray:
    """Per-subcarrier phase of a path of total length distance_m, (K,)."""
    return np.exp(-2j * np.pi * distance_m / np.asarray(wavelengths))


def nf_element_terms(wavelengths: np.ndarray, source: np.ndarray,
                     layout: ArrayLayout,
                     carrier_wavelength_m: float | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Near-field amplitude and phase terms of a source across the array.

    Returns (c, d), both (K, N).  c_{k,n} = lambda_k r / (lambda_c ||p - b_n||)
    captures the per-antenna spread loss relative to the reference distance r;
    d_{k,n} = e^{-j 2 pi (||p - b_n|| - r) / lambda_k} is the curvature phase.
    Both reduce to the plane-wave model as the source recedes.  When the
    carrier wavelength is not given it is recovered from the mean frequency
    of the (symmetric) subcarrier grid.
    """
    wavelengths = np.asarray(wavelengths, dtype=float)
    source = np.asarray(source, dtype=float)
    dist_n = np.linalg.norm(layout.positions - source[None, :], axis=1)   # (N,)
    if np.any(dist_n == 0):
        raise ValueError("source coincides with an antenna position")
    r = np.linalg.norm(source - layout.reference)
    if carrier_wavelength_m is None:
        carrier_wavelength_m = 1.0 / (1.0 / wavelengths).mean()
    c = (wavelengths[:, None] * r) / (carrier_wavelength_m * dist_n[None, :])
    d = np.exp(-2j * np.pi * (dist_n[None, :] - r) / wavelengths[:, None])
    return c, d


@dataclass
class PathComponent:
    """One path's contribution to the channel, kept factorized."""

    gain: complex
    amplitude: np.ndarray      # (K, N) spread-loss terms, ones in the FF model
    wavefront: np.ndarray      # (K, N) curvature phases or steering phases
    delay: np.ndarray          # (K,) common phase of the path length + clock
    mask: np.ndarray           # (N,) complex blockage coefficients

    def contribution(self) -> np.ndarray:
        """(K, N) matrix this path adds to the channel."""
        return (self.gain * self.amplitude * self.wavefront
                * self.mask[None, :] * self.delay[:, None])


@dataclass
class ChannelTensor:
    """Frequency-domain channel h_k across the array, plus its per-path parts."""

    frequencies: np.ndarray        # (K,)
    h: np.ndarray                  # (K, N)
    components: list

    @property
    def num_subcarriers(self) -> int:
        return self.h.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.h.shape[1]


def _resolve_masks(masks, num_paths: int, num_antennas: int):
    if masks is None:
        return [np.ones(num_antennas, dtype=complex)] * num_paths
    out = []
    for m in masks:
        if m is None:
            out.append(np.ones(num_antennas, dtype=complex))
        elif isinstance(m, Mask):
            out.append(m.coefficients)
        else:
            out.append(np.asarray(m, dtype=complex).reshape(-1))
    if len(out) != num_paths:
        raise ValueError("need one mask per path")
    return out


def nf_channel(config: ScenarioConfig, layout: ArrayLayout, paths: PathSet,
               masks=None) -> ChannelTensor:
    """Exact spherical-wavefront channel of all paths.

    The wavefront seen by the array belongs to the last bounce of each path
    (the UE itself for the direct path, the scatter point otherwise); the
    total path length plus the clock offset sets the common delay phase.
    """
    lams = config.subcarrier_wavelengths()
    lengths = path_lengths(paths, layout.reference)
    mask_list = _resolve_masks(masks, paths.num_scatter_points + 1,
                               layout.num_antennas)
    components = []
    for ell in range(paths.num_scatter_points + 1):
        source = paths.ue_position if ell == 0 else paths.sp_positions[ell - 1]
        c, d = nf_element_terms(lams, source, layout)
        delay = delay_component(lams, lengths[ell] + paths.clock_offset_m)
        components.append(PathComponent(
            gain=path_gain(config, paths, ell, layout.reference),
            amplitude=c, wavefront=d, delay=delay, mask=mask_list[ell]))
    h = np.sum([comp.contribution() for comp in components], axis=0)
    return ChannelTensor(frequencies=config.subcarrier_frequencies(),
                         h=h, components=components)


def ff_channel(config: ScenarioConfig, layout: ArrayLayout, paths: PathSet,
               masks=None) -> ChannelTensor:
    """Plane-wave approximation of the same geometry.

    Steering uses the bearing of each path's last bounce seen from the array
    reference; amplitude taper and per-antenna curvature are dropped.
    """
    lams = config.subcarrier_wavelengths()
    lengths = path_lengths(paths, layout.reference)
    mask_list = _resolve_masks(masks, paths.num_scatter_points + 1,
                               layout.num_antennas)
    k_ones = np.ones((config.num_subcarriers, 1))
    components = []
    for ell in range(paths.num_scatter_points + 1):
        source = paths.ue_position if ell == 0 else paths.sp_positions[ell - 1]
        steer = ff_steering(aoa_from(layout.reference, source), layout.num_antennas)
        delay = delay_component(lams, lengths[ell] + paths.clock_offset_m)
        components.append(PathComponent(
            gain=path_gain(config, paths, ell, layout.reference),
            amplitude=np.ones((config.num_subcarriers, layout.num_antennas)),
            wavefront=k_ones * steer[None, :],
            delay=delay, mask=mask_list[ell]))
    h = np.sum([comp.contribution() for comp in components], axis=0)
    return ChannelTensor(frequencies=config.subcarrier_frequencies(),
                         h=h, components=components)
