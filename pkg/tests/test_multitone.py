"""Multitone lattice casting, sampling, and inference.

The load-bearing facts: casting preserves the mean exactly (the sampled
level is an unbiased estimate of the continuous value), L = 2 reproduces
the binary path bit for bit, and the local-expectation estimator stays
unbiased on the two-point support of a 3-level policy.
"""

import numpy as np
import pytest

import helpers
import oracles
from htlab import rl
from htlab.hvs import HvsConfig
from htlab.imagecore import Rng
from htlab.metrics import MetricConfig
from htlab.metrics import reward as build_reward
from htlab.multitone import (LevelSet, cast_probabilities, infer_multitone,
                             le_signal_multitone, make_multitone_sample,
                             quantize_multitone, sample_multitone)
from htlab.nn import PolicyNetwork
from htlab.rl import exact_gradient_oracle, infer_halftone, sample_actions

SMALL = MetricConfig(ssim_window=3,
                     hvs=HvsConfig(model="gaussian", size=3, sigma=1.0))


class TestLevelSet:
    def test_literals(self):
        five = LevelSet(5)
        assert five.delta == 0.25
        assert five.values.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
        two = LevelSet(2)
        assert two.delta == 1.0
        assert two.values.tolist() == [0.0, 1.0]

    def test_needs_two_levels(self):
        with pytest.raises(ValueError):
            LevelSet(1)


class TestCast:
    def test_expectation_preserved(self):
        v = helpers.random_contone(Rng(3), 8, 8)
        levels = LevelSet(5)
        floor_vals, ceil_vals, p_ceil = cast_probabilities(v, levels)
        mean = floor_vals * (1.0 - p_ceil) + ceil_vals * p_ceil
        assert np.max(np.abs(mean - v)) < 1e-12
        assert np.all(ceil_vals - floor_vals <= levels.delta + 1e-15)

    def test_on_lattice_collapse(self):
        levels = LevelSet(3)
        floor_vals, ceil_vals, p_ceil = cast_probabilities(
            np.array([[0.5, 1.0, 0.0]]), levels)
        assert floor_vals.tolist() == [[0.5, 1.0, 0.0]]
        assert ceil_vals.tolist() == [[0.5, 1.0, 0.0]]
        assert p_ceil.tolist() == [[0.0, 0.0, 0.0]]

    def test_binary_reduction_is_bitwise(self):
        v = helpers.random_contone(Rng(5), 6, 6)
        floor_vals, ceil_vals, p_ceil = cast_probabilities(v, LevelSet(2))
        assert np.array_equal(floor_vals, np.zeros((6, 6)))
        assert np.array_equal(ceil_vals, np.ones((6, 6)))
        assert np.array_equal(p_ceil, v)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            cast_probabilities(np.array([[1.2]]), LevelSet(3))


class TestSampling:
    def test_binary_sampling_matches_binary_path_bitwise(self):
        v = helpers.random_contone(Rng(7), 8, 8)
        r1, r2 = Rng(9), Rng(9)
        a = sample_multitone(v, LevelSet(2), r1)
        b = sample_actions(v, r2)
        assert np.array_equal(a, b)
        assert r1.state_words() == r2.state_words()

    def test_samples_live_on_adjacent_levels(self):
        levels = LevelSet(4)
        v = helpers.random_contone(Rng(11), 10, 10)
        m = sample_multitone(v, levels, Rng(13))
        floor_vals, ceil_vals, _ = cast_probabilities(v, levels)
        assert np.all((m == floor_vals) | (m == ceil_vals))

    def test_mean_converges_to_value(self):
        v = np.full((100, 200), 0.37)
        m = sample_multitone(v, LevelSet(5), Rng(17))
        assert abs(m.mean() - 0.37) < 0.005

    def test_on_lattice_is_deterministic(self):
        v = np.full((4, 4), 0.5)
        m = sample_multitone(v, LevelSet(3), Rng(19))
        assert np.array_equal(m, v)


class TestUnbiasedness:
    def test_le_signal_unbiased_on_three_levels(self):
        rng = Rng(23)
        levels = LevelSet(3)
        # strictly off-lattice values so every pixel has two support points
        v = 0.05 + 0.4 * helpers.random_contone(rng, 2, 2)
        c = helpers.random_contone(rng, 2, 2)
        floor_vals, ceil_vals, p_ceil = cast_probabilities(v, levels)

        total = np.zeros_like(v)
        for sel in oracles.enumerate_bit_maps((2, 2)):
            m = np.where(sel == 1.0, ceil_vals, floor_vals)
            weight = float(np.prod(np.where(sel == 1.0, p_ceil,
                                            1.0 - p_ceil)))
            ctx = build_reward(m, c, SMALL, region="full")
            sample = rl.EpisodeSample(c=c, z=np.zeros_like(v), p=v, m=m,
                                      floor_vals=floor_vals,
                                      ceil_vals=ceil_vals, p_ceil=p_ceil,
                                      level_count=3, ctx=ctx)
            total += weight * le_signal_multitone(sample)
        want = -exact_gradient_oracle(v, c, SMALL, level_count=3)
        assert np.max(np.abs(total - want)) < 1e-9


class TestQuantize:
    def test_literals(self):
        levels = LevelSet(5)
        got = quantize_multitone(np.array([[0.37, 0.125, 0.9, 1.0]]), levels)
        # 0.125 sits exactly half way between 0 and 0.25: rounds up
        assert got.tolist() == [[0.25, 0.25, 1.0, 1.0]]

    def test_binary_is_threshold_rule(self):
        got = quantize_multitone(np.array([[0.49, 0.5, 0.51, 0.0]]),
                                 LevelSet(2))
        assert got.tolist() == [[0.0, 1.0, 1.0, 0.0]]

    def test_idempotent_on_lattice(self):
        levels = LevelSet(4)
        v = helpers.random_contone(Rng(29), 5, 5)
        q = quantize_multitone(v, levels)
        assert np.array_equal(quantize_multitone(q, levels), q)


class TestInference:
    def _net(self):
        net = PolicyNetwork(channels=2, blocks=0, in_channels=2)
        net.init_params(Rng(31), std=0.5)
        return net

    def test_output_on_lattice_and_deterministic(self):
        net = self._net()
        c = helpers.natural_crop(size=10, seed=3)
        levels = LevelSet(4)
        m1, v1 = infer_multitone(net, c, levels, Rng(5))
        m2, v2 = infer_multitone(net, c, levels, Rng(5))
        assert np.array_equal(m1, m2)
        assert np.array_equal(v1, v2)
        assert np.all(np.isin(m1, levels.values))
        assert np.array_equal(m1, quantize_multitone(v1, levels))

    def test_binary_inference_matches_halftone_path(self):
        net = self._net()
        c = helpers.natural_crop(size=8, seed=9)
        m, v = infer_multitone(net, c, LevelSet(2), Rng(7))
        h, p = infer_halftone(net, c, Rng(7))
        assert np.array_equal(m, h)
        assert np.array_equal(v, p)


def test_make_multitone_sample_routes_through_shared_path():
    rng = Rng(37)
    c = helpers.random_contone(rng, 4, 4)
    v = helpers.random_contone(rng, 4, 4)
    levels = LevelSet(3)
    s1 = make_multitone_sample(v, c, np.zeros((4, 4)), levels, Rng(41), SMALL)
    s2 = rl.make_sample(v, c, np.zeros((4, 4)), Rng(41), SMALL,
                        level_count=3)
    assert np.array_equal(s1.m, s2.m)
    assert s1.level_count == 3
    assert s1.ctx.reward == s2.ctx.reward
