"""Pilot transmission and analog combining of the uplink observations.

The array is operated as an array of subarrays: during transmission g each
subarray s applies one phase-shifter vector w_{g,s} (per-element modulus
1/sqrt(N_S)) and outputs a single complex sample per subcarrier.  Stacking
the S outputs gives the block-diagonal combining of the full array.  Noise
enters per antenna, before combining; since each combiner row has unit norm
and rows touch disjoint antennas, the combined noise stays white with the
per-antenna variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelTensor
from .scenario import ScenarioConfig


@dataclass
class CombinerSchedule:
    """Analog combiner weights for every transmission, shape (G, S, N_S)."""

    weights: np.ndarray
    kind: str = "random-phase"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=complex)
        if self.weights.ndim != 3:
            raise ValueError("combiner weights must have shape (G, S, N_S)")

    @property
    def num_transmissions(self) -> int:
        return self.weights.shape[0]

    def subarray(self, s: int) -> np.ndarray:
        """(G, N_S) combiner rows of subarray s."""
        return self.weights[:, s, :]

    def stacked(self, s: int) -> np.ndarray:
        """All G combiner rows of subarray s stacked into a (G, N_S) matrix."""
        return self.weights[:, s, :]


def make_combiners(config: ScenarioConfig, kind: str = "random-phase",
                   rng: np.random.Generator | None = None) -> CombinerSchedule:
    """Draw a combiner schedule.

    "random-phase": i.i.d. uniform phases, the default sounding schedule.
    "dft-codebook": transmission g applies column (g mod N_S) of the
    N_S-point DFT matrix, so G >= N_S transmissions make the stacked
    per-subarray combiner invertible (unitary at G = N_S).
    """
    g_count, s_count, n_s = (config.num_transmissions, config.num_subarrays,
                             config.subarray_size)
    scale = 1.0 / np.sqrt(n_s)
    if kind == "random-phase":
        if rng is None:
            rng = np.random.default_rng(config.rng_seed)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(g_count, s_count, n_s))
        weights = scale * np.exp(1j * phases)
    elif kind == "dft-codebook":
        n = np.arange(n_s)
        cols = [(g + 1) % n_s for g in range(g_count)]   # g is 1-based
        atom = np.exp(-2j * np.pi * np.outer(n, np.arange(n_s)) / n_s)
        weights = np.empty((g_count, s_count, n_s), dtype=complex)
        for g, col in enumerate(cols):
            weights[g, :, :] = scale * atom[:, col][None, :]
    else:
        raise ValueError(f"unknown combiner kind {kind!r}")
    return CombinerSchedule(weights=weights, kind=kind)


@dataclass
class PilotSchedule:
    """Pilot symbols x_{g,k}, shape (G, K); constant sqrt(P) by default."""

    symbols: np.ndarray

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=complex)
        if self.symbols.ndim != 2:
            raise ValueError("pilot symbols must have shape (G, K)")


def constant_pilots(config: ScenarioConfig) -> PilotSchedule:
    """All pilots at amplitude sqrt(P), zero phase."""
    amp = np.sqrt(config.transmit_power_w)
    return PilotSchedule(symbols=np.full(
        (config.num_transmissions, config.num_subcarriers), amp, dtype=complex))


@dataclass
class ObservationTensor:
    """Combined receive samples, shape (S, G, K)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3:
            raise ValueError("observations must have shape (S, G, K)")

    def flatten(self) -> np.ndarray:
        """Stacked vector, subarray-major then transmission then subcarrier."""
        return self.values.reshape(-1)

    @property
    def shape(self):
        return self.values.shape


def combine_channel(channel_h: np.ndarray, combiners: CombinerSchedule,
                    pilots: PilotSchedule) -> np.ndarray:
    """Noise-free combined samples (S, G, K) of a (K, N) channel matrix."""
    g_count, s_count, n_s = combiners.weights.shape
    h_blocks = channel_h.reshape(channel_h.shape[0], s_count, n_s)   # (K, S, N_S)
    # y[s, g, k] = sum_n w[g, s, n] h[k, s, n] * x[g, k]
    noiseless = np.einsum("gsn,ksn->sgk", combiners.weights, h_blocks)
    return noiseless * pilots.symbols[None, :, :]


def synthesize(channel: ChannelTensor, combiners: CombinerSchedule,
               pilots: PilotSchedule, noise_variance_w: float,
               rng: np.random.Generator | None = None) -> ObservationTensor:
    """Generate one observation tensor y = W h x + W n.

    Noise is drawn per antenna and then combined, which for unit-norm
    disjoint combiner rows is equivalent to white noise of the same variance
    on the combined samples.
    """
    g_count, s_count, n_s = combiners.weights.shape
    k_count = channel.num_subcarriers
    values = combine_channel(channel.h, combiners, pilots)
    if noise_variance_w > 0:
        if rng is None:
            raise ValueError("rng is required when noise variance is nonzero")
        scale = np.sqrt(noise_variance_w / 2.0)
        noise = (rng.standard_normal((g_count, k_count, s_count * n_s))
                 + 1j * rng.standard_normal((g_count, k_count, s_count * n_s)))
        noise *= scale
        noise_blocks = noise.reshape(g_count, k_count, s_count, n_s)
        values = values + np.einsum("gsn,gksn->sgk", combiners.weights,
                                    noise_blocks)
    return ObservationTensor(values=values)
