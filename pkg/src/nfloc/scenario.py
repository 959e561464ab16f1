"""Scenario configuration: system parameters, array geometry, propagation paths.

Everything downstream (channel synthesis, estimation, bounds) reads its
parameters from the dataclasses defined here.  Units are SI unless a field
name says otherwise; clock offsets and delays are carried as path-length
equivalents in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import speed_of_light as C


class ConfigError(ValueError):
    """Raised for invalid scenario parameters before any computation runs."""


@dataclass(frozen=True)
class ScenarioConfig:
    """System-level parameters of one uplink sounding experiment.

    Attributes
    ----------
    carrier_frequency_hz : float
        Carrier frequency f_c.
    bandwidth_hz : float
        Total bandwidth W occupied by the subcarrier grid.
    num_subcarriers : int
        Number of pilot subcarriers K (>= 2).
    num_antennas : int
        Total antennas N of the receive array.
    num_subarrays : int
        Number of equal disjoint subarrays S; N must divide evenly.
    num_transmissions : int
        Number of pilot transmissions G (one combiner draw per transmission).
    transmit_power_dbm : float
        Average pilot transmit power.
    noise_psd_dbm_per_hz : float
        One-sided noise power spectral density at the receiver input.
    noise_figure_db : float
        Receiver noise figure, in dB.
    rng_seed : int
        Base seed for every random draw tied to this scenario.
    """

    carrier_frequency_hz: float = 28e9
    bandwidth_hz: float = 200e6
    num_subcarriers: int = 10
    num_antennas: int = 100
    num_subarrays: int = 4
    num_transmissions: int = 20
    transmit_power_dbm: float = 20.0
    noise_psd_dbm_per_hz: float = -173.855
    noise_figure_db: float = 13.0
    rng_seed: int = 7

    def __post_init__(self):
        if self.num_subcarriers < 2:
            raise ConfigError("num_subcarriers must be >= 2")
        if self.num_antennas < 2:
            raise ConfigError("num_antennas must be >= 2")
        if self.num_subarrays < 1:
            raise ConfigError("num_subarrays must be >= 1")
        if self.num_antennas % self.num_subarrays != 0:
            raise ConfigError("num_antennas must divide into equal subarrays")
        if self.num_transmissions < 1:
            raise ConfigError("num_transmissions must be >= 1")
        if not (0 < self.bandwidth_hz < self.carrier_frequency_hz):
            raise ConfigError("bandwidth must be positive and below the carrier")

    @property
    def subarray_size(self) -> int:
        return self.num_antennas // self.num_subarrays

    @property
    def wavelength_m(self) -> float:
        """Carrier wavelength lambda_c."""
        return C / self.carrier_frequency_hz

    @property
    def transmit_power_w(self) -> float:
        return 10.0 ** ((self.transmit_power_dbm - 30.0) / 10.0)

    def subcarrier_frequencies(self) -> np.ndarray:
        """Absolute subcarrier frequencies f_k, centered on the carrier.

        f_k = f_c + (k - 1 - (K - 1)/2) * W / K for k = 1..K, so the grid is
        symmetric about f_c and spans slightly less than W.
        """
        k = np.arange(1, self.num_subcarriers + 1)
        offset = (k - 1 - (self.num_subcarriers - 1) / 2.0)
        return self.carrier_frequency_hz + offset * self.bandwidth_hz / self.num_subcarriers

    def subcarrier_wavelengths(self) -> np.ndarray:
        return C / self.subcarrier_frequencies()

    @property
    def subcarrier_spacing_hz(self) -> float:
        return self.bandwidth_hz / self.num_subcarriers

    @property
    def delay_period_m(self) -> float:
        """Unambiguous path-length window of the subcarrier grid, c / delta_f."""
        return C / self.subcarrier_spacing_hz


def noise_variance(config: ScenarioConfig) -> float:
    """Post-amplifier noise power in watts over the full bandwidth.

    sigma^2 = 10^((N0_dBm/Hz + 10 log10 W + NF_dB - 30) / 10).
    """
    total_dbm = (config.noise_psd_dbm_per_hz
                 + 10.0 * math.log10(config.bandwidth_hz)
                 + config.noise_figure_db)
    return 10.0 ** ((total_dbm - 30.0) / 10.0)


@dataclass
class ArrayLayout:
    """Physical placement of the receive array and its subarray partition.

    Antennas sit on the y-axis at half carrier-wavelength spacing, centered
    on the reference point.  Antenna n (1-based) is at
    y_n = (n - (N + 1)/2) * lambda_c / 2, so antenna 1 has the most negative
    y coordinate.
    """

    positions: np.ndarray          # (N, 2)
    reference: np.ndarray          # (2,) array center p_B
    subarray_size: int

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.reference = np.asarray(self.reference, dtype=float)
        self.positions.setflags(write=False)
        self.reference.setflags(write=False)

    @property
    def num_antennas(self) -> int:
        return self.positions.shape[0]

    @property
    def num_subarrays(self) -> int:
        return self.num_antennas // self.subarray_size

    def subarray_slice(self, s: int) -> slice:
        """Index slice of subarray s (0-based) into the antenna axis."""
        lo = s * self.subarray_size
        return slice(lo, lo + self.subarray_size)

    def subarray_centers(self) -> np.ndarray:
        """Geometric centers of the subarrays, shape (S, 2)."""
        return self.positions.reshape(self.num_subarrays, self.subarray_size, 2).mean(axis=1)

    @property
    def aperture_m(self) -> float:
        return float(self.positions[:, 1].max() - self.positions[:, 1].min())


def build_array(config: ScenarioConfig) -> ArrayLayout:
    """Place the uniform linear array for a scenario."""
    n = np.arange(1, config.num_antennas + 1)
    y = (n - (config.num_antennas + 1) / 2.0) * config.wavelength_m / 2.0
    positions = np.column_stack([np.zeros_like(y), y])
    return ArrayLayout(positions=positions, reference=np.zeros(2),
                       subarray_size=config.subarray_size)


def field_boundaries(config: ScenarioConfig) -> tuple[float, float]:
    """(Fresnel, Fraunhofer) distances of the full aperture, in meters.

    Fresnel: 0.62 sqrt(D^3 / lambda); Fraunhofer: 2 D^2 / lambda.  Sources
    between the two see significant wavefront curvature across the array,
    which is the operating regime of interest here.
    """
    lam = config.wavelength_m
    d = (config.num_antennas - 1) * lam / 2.0
    fresnel = 0.62 * math.sqrt(d ** 3 / lam)
    fraunhofer = 2.0 * d ** 2 / lam
    return fresnel, fraunhofer


@dataclass
class PathSet:
    """Geometry of the propagation paths for one scenario.

    Path 0 is the direct path from the transmitting UE; paths 1..L bounce
    off scatter points (SPs).  `path_phases` holds the random phase of each
    path gain (length L + 1, direct path first).  `clock_offset_m` is the
    UE/receiver clock mismatch expressed as a path length.
    """

    ue_position: np.ndarray                 # (2,)
    sp_positions: np.ndarray                # (L, 2)
    rcs_m2: np.ndarray                      # (L,)
    path_phases: np.ndarray                 # (L + 1,)
    clock_offset_m: float = 0.0

    def __post_init__(self):
        self.ue_position = np.asarray(self.ue_position, dtype=float).reshape(2)
        self.sp_positions = np.asarray(self.sp_positions, dtype=float).reshape(-1, 2)
        self.rcs_m2 = np.asarray(self.rcs_m2, dtype=float).reshape(-1)
        self.path_phases = np.asarray(self.path_phases, dtype=float).reshape(-1)
        if self.rcs_m2.shape[0] != self.sp_positions.shape[0]:
            raise ConfigError("need one RCS value per scatter point")
        if np.any(self.rcs_m2 <= 0):
            raise ConfigError("RCS values must be positive")
        if self.path_phases.shape[0] != self.sp_positions.shape[0] + 1:
            raise ConfigError("need one phase per path (direct path included)")

    @property
    def num_scatter_points(self) -> int:
        return self.sp_positions.shape[0]


def default_config(**overrides) -> ScenarioConfig:
    """The benchmark configuration used by the bundled experiment presets."""
    return ScenarioConfig(**overrides)


def default_paths(ue=(2.0, 4.0), sps=((2.0, -2.0),), rcs=(0.5,),
                  phases=None, clock_offset_m=0.3) -> PathSet:
    """Benchmark geometry: UE in the radiating near field plus one SP."""
    sps = np.atleast_2d(np.asarray(sps, dtype=float))
    if phases is None:
        phases = np.zeros(sps.shape[0] + 1)
    return PathSet(ue_position=np.asarray(ue, dtype=float),
                   sp_positions=sps,
                   rcs_m2=np.asarray(rcs, dtype=float),
                   path_phases=np.asarray(phases, dtype=float),
                   clock_offset_m=clock_offset_m)


# Scenario files are flat "key = value" text, one key per line, '#' comments.
_CONFIG_KEYS = {
    "carrier_frequency_hz": float,
    "bandwidth_hz": float,
    "num_subcarriers": int,
    "num_antennas": int,
    "num_subarrays": int,
    "num_transmissions": int,
    "transmit_power_dbm": float,
    "noise_psd_dbm_per_hz": float,
    "noise_figure_db": float,
    "rng_seed": int,
}


def load_scenario(path) -> tuple[ScenarioConfig, PathSet]:
    """Parse a scenario file into (ScenarioConfig, PathSet).

    Recognized keys: every ScenarioConfig field, plus ue_x, ue_y,
    clock_offset_m, los_phase and per scatter point sp<i>_x, sp<i>_y,
    sp<i>_rcs, sp<i>_phase (i = 1, 2, ...).  Unknown keys raise ConfigError.
    """
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in raw:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            raw[key] = value

    cfg_kwargs = {}
    for key, cast in _CONFIG_KEYS.items():
        if key in raw:
            try:
                cfg_kwargs[key] = cast(float(raw.pop(key)))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
    config = ScenarioConfig(**cfg_kwargs)

    def pop_float(key, default=None):
        if key in raw:
            try:
                return float(raw.pop(key))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        if default is None:
            raise ConfigError(f"scenario file is missing {key}")
        return default

    ue = np.array([pop_float("ue_x"), pop_float("ue_y")])
    clock = pop_float("clock_offset_m", 0.0)
    los_phase = pop_float("los_phase", 0.0)

    sps, rcs, phases = [], [], [los_phase]
    i = 1
    while f"sp{i}_x" in raw:
        sps.append([pop_float(f"sp{i}_x"), pop_float(f"sp{i}_y")])
        rcs.append(pop_float(f"sp{i}_rcs", 0.5))
        phases.append(pop_float(f"sp{i}_phase", 0.0))
        i += 1
    if raw:
        raise ConfigError(f"unknown scenario keys: {sorted(raw)}")

    paths = PathSet(ue_position=ue,
                    sp_positions=np.array(sps).reshape(-1, 2),
                    rcs_m2=np.array(rcs),
                    path_phases=np.array(phases),
                    clock_offset_m=clock)
    return config, paths
