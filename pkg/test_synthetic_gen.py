#!/usr/bin/env python3
"""
Tests for the synthetic point-cloud generators and the stable sampler.
"""

import sys
import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from checks import run_checks
from dimension_est import estimate_dim_mag_cloud
from errors import InvalidAlpha, InvalidConfig
from synthetic_gen import (LevyConfig, cantor_endpoints, counter_rng, gen_cantor, gen_levy, gen_segment,
                           gen_square, levy_increments, symmetric_stable)


def test_segment_range_and_shape():
    cloud = gen_segment(4, 1)
    assert (cloud.n, cloud.d) == (4, 1)
    assert np.all((cloud.points >= 0) & (cloud.points <= 1))


def test_square_mean():
    n = 5000
    cloud = gen_square(n, 2)
    assert np.all(np.abs(cloud.points.mean(axis=0) - 0.5) <= 3 / math.sqrt(n))


def test_same_seed_same_cloud():
    assert np.array_equal(gen_square(100, 9).points, gen_square(100, 9).points)
    assert not np.array_equal(gen_square(100, 9).points, gen_square(100, 10).points)


def test_too_few_points():
    with pytest.raises(InvalidConfig):
        gen_segment(1, 0)


def test_cantor_first_levels():
    assert gen_cantor(1).points.ravel().tolist() == pytest.approx([0.0, 2 / 3])
    assert gen_cantor(2).points.ravel().tolist() == pytest.approx([0.0, 2 / 9, 2 / 3, 8 / 9])
    assert gen_cantor(11).n == 2048


def test_cantor_depth_limits():
    for depth in (0, 15):
        with pytest.raises(InvalidConfig):
            gen_cantor(depth)


def test_cantor_jitter_stays_inside_intervals():
    depth = 6
    endpoints = cantor_endpoints(depth)
    jittered = gen_cantor(depth, seed=3, jitter=1.0).points.ravel()
    offsets = jittered - endpoints
    assert np.all(offsets >= 0) and np.all(offsets <= 3.0 ** -depth)
    assert np.any(offsets > 0)


def test_levy_alpha_validation():
    for alpha in (0.0, -1.0, 2.5):
        with pytest.raises(InvalidAlpha):
            LevyConfig(alpha)
    with pytest.raises(InvalidConfig):
        LevyConfig(1.5, d=0)
    with pytest.raises(InvalidConfig):
        LevyConfig(1.5, n_steps=1)


def test_levy_is_deterministic():
    config = LevyConfig(1.5, d=4, n_steps=300, seed=12)
    assert np.array_equal(gen_levy(config).points, gen_levy(config).points)


def test_coordinate_streams_do_not_depend_on_dimension():
    narrow = levy_increments(LevyConfig(1.3, d=3, n_steps=200, seed=5))
    wide = levy_increments(LevyConfig(1.3, d=5, n_steps=200, seed=5))
    assert np.array_equal(narrow, wide[:, :3])


def test_path_is_cumulative_sum_of_increments():
    config = LevyConfig(1.7, d=2, n_steps=50, seed=1, step_scale=0.5)
    np.testing.assert_allclose(gen_levy(config).points, np.cumsum(levy_increments(config), axis=0))


def test_gaussian_case_variance():
    increments = levy_increments(LevyConfig(2.0, d=1, n_steps=100000, seed=0, step_scale=1.5))
    assert increments.var() == pytest.approx(2.0 * 1.5 ** 2, rel=0.1)


def test_gaussian_case_matches_normal_sampler():
    passed = 0
    for seed in range(20):
        stable = symmetric_stable(2.0, 10000, counter_rng(seed, 100))
        normal = counter_rng(seed, 101).normal(0.0, math.sqrt(2.0), size=10000)
        if ks_2samp(stable, normal).pvalue > 0.01:
            passed += 1
    assert passed >= 18


def test_cauchy_case_is_finite():
    draws = symmetric_stable(1.0, 1000, counter_rng(0, 1))
    assert np.all(np.isfinite(draws))
    assert abs(np.median(draws)) < 0.2


def test_tails_get_heavier_as_alpha_drops():
    fractions = []
    for alpha in (1.2, 1.6, 2.0):
        per_seed = [np.mean(np.abs(symmetric_stable(alpha, 10000, counter_rng(seed, 200))) > 10.0)
                    for seed in range(10)]
        fractions.append(np.mean(per_seed))
    assert fractions[0] > fractions[1] > fractions[2]


def test_levy_magnitude_dimension_tracks_alpha():
    estimate, _ = estimate_dim_mag_cloud(gen_levy(LevyConfig(1.5, d=10, n_steps=1000, seed=0)))
    assert 0.8 <= estimate.value <= 1.8


def main():
    return run_checks(globals())


if __name__ == "__main__":
    sys.exit(main())
