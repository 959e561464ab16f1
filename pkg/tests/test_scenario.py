import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfloc import (ConfigError, build_array, default_config, default_paths,
                   field_boundaries, load_scenario, noise_variance)


def test_default_config_values():
    cfg = default_config()
    assert cfg.carrier_frequency_hz == 28e9
    assert cfg.bandwidth_hz == 200e6
    assert cfg.num_subcarriers == 10
    assert cfg.num_antennas == 100
    assert cfg.num_subarrays == 4
    assert cfg.subarray_size == 25
    assert cfg.transmit_power_dbm == 20.0
    assert cfg.wavelength_m == pytest.approx(0.0107068735, rel=1e-8)


def test_config_is_frozen():
    cfg = default_config()
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.num_antennas = 64


def test_default_config_overrides():
    cfg = default_config(num_transmissions=7, transmit_power_dbm=-3.0)
    assert cfg.num_transmissions == 7
    assert cfg.transmit_power_w == pytest.approx(10 ** (-3.3))


def test_config_validation():
    with pytest.raises(ConfigError):
        default_config(num_antennas=10, num_subarrays=4)  # not divisible
    with pytest.raises(ConfigError):
        default_config(num_subcarriers=0)


def test_transmit_power_watts():
    assert default_config(transmit_power_dbm=0.0).transmit_power_w == \
        pytest.approx(1e-3)
    assert default_config(transmit_power_dbm=30.0).transmit_power_w == \
        pytest.approx(1.0)


def test_noise_variance_value():
    # -173.855 dBm/Hz + 10 log10(200 MHz) + 13 dB NF = -77.8447 dBm
    sigma2 = noise_variance(default_config())
    assert sigma2 == pytest.approx(1.6426e-11, rel=1e-3)


def test_field_boundaries_values():
    near, far = field_boundaries(default_config())
    assert near == pytest.approx(2.3119, rel=1e-3)
    assert far == pytest.approx(52.469, rel=1e-3)


def test_array_geometry():
    cfg = default_config()
    layout = build_array(cfg)
    assert layout.positions.shape == (100, 2)
    assert np.all(layout.positions[:, 0] == 0.0)          # array on the y axis
    spacing = np.diff(layout.positions[:, 1])
    assert np.allclose(spacing, -cfg.wavelength_m / 2.0) or \
        np.allclose(spacing, cfg.wavelength_m / 2.0)
    assert layout.aperture_m == pytest.approx(99 * cfg.wavelength_m / 2)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([4, 8, 20, 64, 100]))
def test_array_antisymmetry(n):
    """Element n and element N+1-n mirror each other about the array center."""
    layout = build_array(default_config(num_antennas=n, num_subarrays=2))
    y = layout.positions[:, 1]
    assert np.allclose(y + y[::-1], 2 * np.mean(y))
    assert np.mean(y) == pytest.approx(0.0, abs=1e-12)


def test_subarray_centers():
    layout = build_array(default_config())
    centers = layout.subarray_centers()
    assert centers.shape == (4, 2)
    y = centers[:, 1]
    assert np.allclose(np.diff(y), y[1] - y[0])           # equally spaced
    assert np.mean(y) == pytest.approx(0.0, abs=1e-12)


def test_default_paths_geometry():
    paths = default_paths()
    assert np.allclose(paths.ue_position, [2.0, 4.0])
    assert np.allclose(paths.sp_positions, [[2.0, -2.0]])
    assert paths.rcs_m2[0] == pytest.approx(0.5)
    assert paths.clock_offset_m == pytest.approx(0.3)


def test_load_scenario_roundtrip(tmp_path):
    text = """
# comment line
carrier_frequency_hz = 28e9
num_antennas = 40
num_subarrays = 2
ue_x = 1.5
ue_y = 3.0
clock_offset_m = 0.25
sp1_x = 2.0
sp1_y = -1.0
sp1_rcs = 0.4
"""
    path = tmp_path / "scene.txt"
    path.write_text(text, encoding="utf-8")
    cfg, paths = load_scenario(path)
    assert cfg.num_antennas == 40
    assert cfg.num_subarrays == 2
    assert np.allclose(paths.ue_position, [1.5, 3.0])
    assert np.allclose(paths.sp_positions, [[2.0, -1.0]])
    assert paths.clock_offset_m == 0.25


def test_load_scenario_rejects_unknown_and_duplicates(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("frobnication = 3\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(bad)
    dup = tmp_path / "dup.txt"
    dup.write_text("num_antennas = 8\nnum_antennas = 16\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(dup)
