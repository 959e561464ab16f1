import numpy as np
import pytest

from nfloc import (Mask, ModelContext, bias_map, build_array, constant_pilots,
                   default_config, default_paths, los_only_state,
                   make_combiners, mismatch_lower_bound, pseudotrue_state,
                   true_state)
from nfloc.templates import concentrated_fit, observation_mean, state_templates


def make_ctx(cfg, seed=5):
    return ModelContext(cfg, build_array(cfg),
                        make_combiners(cfg, rng=np.random.default_rng(seed)),
                        constant_pilots(cfg))


@pytest.fixture(scope="module")
def small_ctx():
    # 20 antennas over 2 subarrays keeps the pseudotrue fits cheap
    cfg = default_config(num_antennas=20, num_subarrays=2,
                         num_subcarriers=4, num_transmissions=6)
    return make_ctx(cfg)


def test_no_blockage_pseudotrue_is_truth(small_ctx):
    state = los_only_state(small_ctx.config, (2.0, 4.0))
    masks = [Mask.all_ones(small_ctx.config.num_antennas)]
    report = pseudotrue_state(small_ctx, state, masks, restarts=1,
                              fix_clock=True)
    assert report.bias_ue < 1e-6
    assert report.mean_error < 1e-9
    assert report.kld < 1e-6


def test_blockage_moves_pseudotrue(small_ctx):
    state = los_only_state(small_ctx.config, (2.0, 4.0))
    masks = [Mask.blocked_run(small_ctx.config.num_antennas, 3, 9)]
    report = pseudotrue_state(small_ctx, state, masks, restarts=2,
                              fix_clock=True)
    assert report.bias_ue > 1e-4
    assert report.mean_error > 0
    assert report.kld > 0
    # definition check: kld is the squared mean discrepancy over the
    # noise variance
    from nfloc import noise_variance
    assert report.kld == pytest.approx(
        report.mean_error ** 2 / noise_variance(small_ctx.config), rel=1e-12)


def test_pseudotrue_beats_local_grid(small_ctx):
    """No nearby grid point may explain the blocked mean better."""
    ctx = small_ctx
    state = los_only_state(ctx.config, (2.0, 4.0))
    masks = [Mask.blocked_run(ctx.config.num_antennas, 3, 9)]
    report = pseudotrue_state(ctx, state, masks, restarts=2, fix_clock=True)
    target = observation_mean(ctx, state, masks).reshape(-1)

    def cost(xy):
        probe = los_only_state(ctx.config, xy)
        probe.gains = None
        _, residual, _ = concentrated_fit(state_templates(ctx, probe), target)
        return residual

    best = cost(report.pseudotrue.ue)
    assert best == pytest.approx(report.mean_error, rel=1e-9)
    offsets = np.linspace(-0.02, 0.02, 9)
    for dx in offsets:
        for dy in offsets:
            if dx == 0 and dy == 0:
                continue
            probe = report.pseudotrue.ue + np.array([dx, dy])
            assert cost(probe) >= best * (1 - 1e-9)


def test_pseudotrue_requires_gains(small_ctx):
    state = los_only_state(small_ctx.config, (2.0, 4.0))
    state.gains = None
    with pytest.raises(ValueError, match="gains"):
        pseudotrue_state(small_ctx, state,
                         [Mask.all_ones(small_ctx.config.num_antennas)])


def test_default_scene_bias_direction():
    """Blocking antennas 5-10 on the full array pulls the UE fit away
    from the truth by centimeters, not meters."""
    cfg = default_config()
    ctx = make_ctx(cfg, seed=7)
    state = true_state(cfg, default_paths())
    masks = [Mask.blocked_run(cfg.num_antennas, 5, 10)] * 2
    report = pseudotrue_state(ctx, state, masks, restarts=0, fix_clock=False)
    assert 0.005 < report.bias_ue < 0.5
    assert report.pseudotrue.ue[1] != pytest.approx(state.ue[1], abs=1e-4)


def test_lower_bound_terms(small_ctx):
    state = los_only_state(small_ctx.config, (2.0, 4.0))
    masks = [Mask.blocked_run(small_ctx.config.num_antennas, 3, 9)]
    report = pseudotrue_state(small_ctx, state, masks, restarts=1,
                              fix_clock=True)
    bias_term, cov_term = mismatch_lower_bound(report)
    outer = np.outer(report.bias, report.bias)
    assert np.allclose(bias_term, outer)
    assert not cov_term.any()
    # rank-one and PSD by construction
    assert np.linalg.matrix_rank(bias_term) <= 1


def test_los_only_state_shape(small_ctx):
    state = los_only_state(small_ctx.config, (1.5, -2.0), clock_offset_m=0.4)
    assert state.sps.shape == (0, 2)
    assert state.gains.shape == (1,)
    assert state.clock_offset_m == 0.4


def test_bias_map_nodes_and_determinism(small_ctx):
    runs = {"clear": None, "blocked-3-9": (3, 9)}
    first = bias_map(small_ctx, xs=(2.0,), ys=(4.0,), runs=runs, restarts=1)
    again = bias_map(small_ctx, xs=(2.0,), ys=(4.0,), runs=runs, restarts=1)
    assert [n.case for n in first] == ["clear", "blocked-3-9"]
    for a, b in zip(first, again):
        assert a.ok and b.ok
        assert np.array_equal(a.pseudo_xy, b.pseudo_xy)
    clear, blocked = first
    assert clear.bias_norm < 1e-6
    assert blocked.bias_norm > clear.bias_norm
    assert blocked.bias_norm == pytest.approx(
        float(np.linalg.norm(blocked.pseudo_xy - blocked.true_xy)), rel=1e-12)
