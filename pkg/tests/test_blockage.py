import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfloc import (BlockageCostEvaluator, Mask, ModelContext, build_array,
                   constant_pilots, default_config, default_paths,
                   detect_exhaustive_oracle, detect_heuristic,
                   detect_thresholding, detection_accuracy, hypothesis_vector,
                   make_combiners, nf_channel, scan_cost_trace, synthesize,
                   true_state)


def test_hypothesis_vector_semantics():
    assert np.array_equal(hypothesis_vector(6, None), np.ones(6))
    mask = hypothesis_vector(6, (3, 5))
    assert np.array_equal(mask, [1, 1, 0, 0, 0, 1])
    assert np.array_equal(hypothesis_vector(6, (1, 6)), np.zeros(6))


@pytest.mark.parametrize("run", [(0, 2), (4, 3), (1, 7), (-1, -1)])
def test_hypothesis_vector_rejects_bad_runs(run):
    with pytest.raises(ValueError):
        hypothesis_vector(6, run)


def test_detection_accuracy_exact_values():
    truth = hypothesis_vector(25, (5, 10))
    assert detection_accuracy(truth, truth) == 1.0
    assert detection_accuracy(np.ones(25), truth) == 0.76   # 19/25, exactly
    assert detection_accuracy(1 - truth, truth) == 0.0
    with pytest.raises(ValueError, match="mismatch"):
        detection_accuracy(np.ones(4), np.ones(5))


class _StubEvaluator:
    """Cost table over hypotheses; exercises search logic in isolation."""

    def __init__(self, table, n):
        self._table = table
        self.n_under_test = n

    def cost(self, run):
        return self._table[run]

    def single_blocked_costs(self):
        costs = np.empty(self.n_under_test + 1)
        costs[0] = self.cost(None)
        for i in range(1, self.n_under_test + 1):
            costs[i] = self.cost((i, i))
        return costs


def _random_table(n, seed):
    rng = np.random.default_rng(seed)
    table = {None: float(rng.uniform(0, 1))}
    for first in range(1, n + 1):
        for last in range(first, n + 1):
            table[(first, last)] = float(rng.uniform(0, 1))
    return table


@settings(max_examples=60, deadline=None)
@given(n=st.integers(min_value=2, max_value=9), seed=st.integers(0, 10**6))
def test_heuristic_zeros_are_contiguous(n, seed):
    evaluator = _StubEvaluator(_random_table(n, seed), n)
    result = detect_heuristic(evaluator)
    zeros = np.flatnonzero(result.mask == 0)
    if zeros.size:
        assert np.array_equal(zeros, np.arange(zeros[0], zeros[-1] + 1))
        assert result.run == (zeros[0] + 1, zeros[-1] + 1)
    else:
        assert result.run is None


@settings(max_examples=60, deadline=None)
@given(n=st.integers(min_value=2, max_value=8), seed=st.integers(0, 10**6))
def test_oracle_never_worse_than_heuristic(n, seed):
    table = _random_table(n, seed)
    evaluator = _StubEvaluator(table, n)
    heuristic = detect_heuristic(evaluator)
    oracle = detect_exhaustive_oracle(evaluator)
    assert table[oracle.run] <= table[heuristic.run]
    assert table[oracle.run] == min(table.values())


@pytest.fixture(scope="module")
def blocked_scene():
    cfg = default_config(num_transmissions=25)
    layout = build_array(cfg)
    combiners = make_combiners(cfg, kind="dft-codebook")
    ctx = ModelContext(cfg, layout, combiners, constant_pilots(cfg))
    paths = default_paths()
    state = true_state(cfg, paths)
    los_mask = Mask.blocked_run(cfg.num_antennas, 5, 10)
    channel = nf_channel(cfg, layout, paths, masks=[los_mask, None])
    obs = synthesize(channel, combiners, ctx.pilots, noise_variance_w=0.0)
    return ctx, state, obs


def test_noise_free_run_recovered(blocked_scene):
    ctx, state, obs = blocked_scene
    evaluator = BlockageCostEvaluator(ctx, state, obs)
    heuristic = detect_heuristic(evaluator)
    oracle = detect_exhaustive_oracle(evaluator)
    assert heuristic.run == (5, 10)
    assert oracle.run == (5, 10)
    assert evaluator.cost((5, 10)) < 1e-9 * evaluator.cost(None)
    truth = hypothesis_vector(evaluator.n_under_test, (5, 10))
    assert heuristic.scored(truth).accuracy == 1.0


def test_scan_trace_dips_at_run_boundaries(blocked_scene):
    ctx, state, obs = blocked_scene
    evaluator = BlockageCostEvaluator(ctx, state, obs)
    trace, run = scan_cost_trace(evaluator)
    assert trace.shape == (evaluator.n_under_test,)
    assert np.isfinite(trace).all()
    assert run == (5, 10)
    # trace index i holds the cost with the moving boundary at antenna i+1,
    # so the exact fit must show up at one of the true boundaries
    assert int(np.argmin(trace)) in (4, 9)
    assert trace.min() < 1e-9 * trace.max()


def test_scan_trace_no_blockage(blocked_scene):
    ctx, state, _ = blocked_scene
    channel = nf_channel(ctx.config, ctx.layout, default_paths())
    obs = synthesize(channel, ctx.combiners, ctx.pilots, noise_variance_w=0.0)
    evaluator = BlockageCostEvaluator(ctx, state, obs)
    trace, run = scan_cost_trace(evaluator)
    assert run is None
    assert trace.shape == (evaluator.n_under_test,)
    # every single-blocked hypothesis fits worse than the (exact) clean fit
    assert trace.min() >= 0


def test_evaluator_validation(blocked_scene):
    ctx, state, obs = blocked_scene
    with pytest.raises(ValueError, match="subarray index"):
        BlockageCostEvaluator(ctx, state, obs, subarray_index=4)
    evaluator = BlockageCostEvaluator(ctx, state, obs)
    with pytest.raises(ValueError, match="run"):
        evaluator.cost((0, 3))


def test_thresholding_exact_recovery(blocked_scene):
    ctx, state, obs = blocked_scene
    result = detect_thresholding(obs, ctx, state)
    truth = hypothesis_vector(ctx.config.subarray_size, (5, 10))
    assert np.array_equal(result.mask, truth)
    assert result.scored(truth).accuracy == 1.0


def test_thresholding_single_snapshot_defaults_to_unblocked():
    """One transmission cannot separate antennas: the recovery ratios tie
    and the detector must fall back to declaring the subarray clean."""
    cfg = default_config(num_transmissions=1)
    layout = build_array(cfg)
    combiners = make_combiners(cfg, kind="dft-codebook")
    ctx = ModelContext(cfg, layout, combiners, constant_pilots(cfg))
    paths = default_paths()
    state = true_state(cfg, paths)
    los_mask = Mask.blocked_run(cfg.num_antennas, 5, 10)
    channel = nf_channel(cfg, layout, paths, masks=[los_mask, None])
    obs = synthesize(channel, combiners, ctx.pilots, noise_variance_w=0.0)
    result = detect_thresholding(obs, ctx, state)
    assert np.array_equal(result.mask, np.ones(cfg.subarray_size))
    truth = hypothesis_vector(cfg.subarray_size, (5, 10))
    assert result.scored(truth).accuracy == 0.76


def test_thresholding_requires_gains(blocked_scene):
    ctx, state, obs = blocked_scene
    bare = state.copy()
    bare.gains = None
    with pytest.raises(ValueError, match="gains"):
        detect_thresholding(obs, ctx, bare)
