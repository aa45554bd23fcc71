#!/usr/bin/env python3
"""
Tests for the magnitude, PH0 and box-counting dimension estimators.
"""

import io
import sys
import math
import itertools

import numpy as np
import pytest

from checks import run_checks
from dimension_est import (REPORT_HEADER, CompareConfig, auto_interval, box_counts, compare_dims,
                           default_box_deltas, default_ph0_sizes, estimate_dim_box, estimate_dim_mag,
                           estimate_dim_mag_cloud, estimate_dim_ph0, fit_loglog, fit_loglog_corrected, growth_window,
                           minimum_spanning_edges, mst_alpha_lifetime, write_dimension_report)
from errors import DegenerateInput, DegenerateSlope, InsufficientPoints, InvalidAlpha
from magnitude_engine import CurveSample, MagnitudeCurve, default_grid, magnitude_function
from metric_core import PointCloud
from synthetic_gen import LevyConfig, gen_cantor, gen_levy, gen_segment, gen_square

CANTOR_DIM = math.log(2) / math.log(3)


def power_law_curve(exponent, ts):
    return MagnitudeCurve(tuple(CurveSample(float(t), float(t) ** exponent, 1.0) for t in ts), 0)


def brute_force_mst_weight(points):
    n = len(points)
    pairs = list(itertools.combinations(range(n), 2))
    best = math.inf
    for edges in itertools.combinations(pairs, n - 1):
        parent = list(range(n))

        def find(v):
            while parent[v] != v:
                v = parent[v]
            return v

        spanning = True
        for i, j in edges:
            ri, rj = find(i), find(j)
            if ri == rj:
                spanning = False
                break
            parent[ri] = rj
        if spanning:
            best = min(best, sum(float(np.linalg.norm(points[i] - points[j])) for i, j in edges))
    return best


def test_power_law_slope_is_exact():
    ts = np.geomspace(0.1, 10, 20)
    estimate = estimate_dim_mag(power_law_curve(2.0, ts))
    assert abs(estimate.value - 2.0) <= 1e-12
    assert estimate.fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert estimate.fit.interval == (ts[0], ts[-1])
    assert estimate.method == "magnitude"


def test_manual_interval_endpoints_are_grid_members():
    ts = np.geomspace(0.1, 10, 20)
    estimate = estimate_dim_mag(power_law_curve(1.5, ts), interval=(0.5, 5.0))
    lo, hi = estimate.fit.interval
    assert lo in ts and hi in ts and lo < hi
    assert estimate.value == pytest.approx(1.5, abs=1e-12)


def test_manual_interval_too_narrow():
    ts = np.geomspace(0.1, 10, 20)
    with pytest.raises(InsufficientPoints):
        estimate_dim_mag(power_law_curve(1.0, ts), interval=(1.0, 1.2))


def test_auto_interval_on_two_point_curve():
    curve = magnitude_function(PointCloud([[0.0], [1.0]]), grid=default_grid())
    lo, hi = auto_interval(curve)
    assert lo in curve.ts and hi in curve.ts and lo < hi
    assert estimate_dim_mag(curve).value < 0.5


def test_auto_interval_needs_enough_samples():
    with pytest.raises(InsufficientPoints):
        auto_interval(power_law_curve(1.0, np.geomspace(1, 2, 7)))


def test_auto_interval_is_deterministic():
    curve = magnitude_function(gen_square(200, 3), grid=np.geomspace(0.5, 100, 32))
    assert auto_interval(curve) == auto_interval(curve)


def test_mst_small_examples():
    assert mst_alpha_lifetime(PointCloud([[0.0], [3.0]]), 1.0) == 3.0
    assert mst_alpha_lifetime(PointCloud([[0.0], [1.0], [3.0]]), 1.0) == 3.0
    assert mst_alpha_lifetime(PointCloud([[0.0], [1.0], [3.0]]), 2.0) == 5.0


def test_mst_rejects_bad_input():
    with pytest.raises(DegenerateInput):
        mst_alpha_lifetime(PointCloud([[0.0, 0.0]]), 1.0)
    with pytest.raises(InvalidAlpha):
        mst_alpha_lifetime(PointCloud([[0.0], [1.0]]), 0.0)


def test_mst_matches_brute_force():
    rng = np.random.default_rng(17)
    for n in (3, 4, 5, 6, 7):
        points = rng.uniform(size=(n, 2))
        assert mst_alpha_lifetime(PointCloud(points), 1.0) == pytest.approx(brute_force_mst_weight(points),
                                                                            rel=1e-12)


def test_mst_has_n_minus_one_sorted_edges():
    edges = minimum_spanning_edges(np.random.default_rng(1).uniform(size=(300, 3)))
    assert len(edges) == 299
    assert np.all(np.diff(edges) >= 0)


def test_mst_scale_equivariance_and_permutation_invariance():
    rng = np.random.default_rng(21)
    points = rng.normal(size=(150, 3))
    base = mst_alpha_lifetime(PointCloud(points), 1.5)
    assert mst_alpha_lifetime(PointCloud(2.5 * points), 1.5) == pytest.approx(2.5 ** 1.5 * base, rel=1e-10)
    assert mst_alpha_lifetime(PointCloud(points[rng.permutation(150)]), 1.5) == pytest.approx(base, rel=1e-12)


def test_ph0_dimension_of_square():
    estimate = estimate_dim_ph0(gen_square(1500, 1), alpha=1.0, seed=0)
    assert abs(estimate.value - 2.0) <= 0.3
    assert estimate.method == "ph0"
    assert estimate.value == pytest.approx(1.0 / (1.0 - estimate.fit.slope))
    assert len(estimate.diagnostics["mean_log_lifetime"]) == len(default_ph0_sizes(1500))


def test_ph0_dimension_of_segment():
    estimate = estimate_dim_ph0(gen_segment(1500, 2), alpha=0.5, seed=0)
    assert abs(estimate.value - 1.0) <= 0.2


def test_ph0_degenerate_slope():
    # one far outlier: the lifetime sum jumps once the subsample includes it
    points = np.concatenate([1e-9 * np.arange(39.0), [1e6]]).reshape(-1, 1)
    with pytest.raises(DegenerateSlope):
        estimate_dim_ph0(PointCloud(points), alpha=1.0, sizes=[2, 4, 8, 16, 40], reps=5, seed=0)


def test_ph0_size_validation():
    cloud = gen_square(100, 0)
    with pytest.raises(InsufficientPoints):
        estimate_dim_ph0(cloud, sizes=[50, 40])
    with pytest.raises(InsufficientPoints):
        estimate_dim_ph0(cloud, sizes=[10, 200])
    with pytest.raises(InsufficientPoints):
        default_ph0_sizes(20)


def test_ph0_is_reproducible_across_workers():
    cloud = gen_square(400, 5)
    serial = estimate_dim_ph0(cloud, seed=3, workers=1)
    parallel = estimate_dim_ph0(cloud, seed=3, workers=4)
    assert serial.value == parallel.value


def test_box_counts_on_segment():
    cloud = gen_segment(10000, 0)
    count = box_counts(cloud, [1.0 / 64])[0]
    assert 63 <= count <= 64
    assert abs(estimate_dim_box(cloud).value - 1.0) <= 0.05


def test_box_single_point_has_dimension_zero():
    assert estimate_dim_box(PointCloud([[0.5, 0.5]])).value == 0.0


def test_box_dimension_of_cantor_set():
    estimate = estimate_dim_box(gen_cantor(11))
    assert abs(estimate.value - CANTOR_DIM) <= 0.1


def test_box_grid_validation():
    cloud = gen_square(100, 0)
    with pytest.raises(InsufficientPoints):
        estimate_dim_box(cloud, delta_grid=[0.5, 0.25, 0.125])
    with pytest.raises(InsufficientPoints):
        estimate_dim_box(cloud, delta_grid=[0.1, 0.2, 0.3, 0.4])


def test_box_ladder_on_high_dimensional_levy_paths():
    for alpha in (1.8, 2.0):
        cloud = gen_levy(LevyConfig(alpha, d=10, n_steps=1000, seed=0))
        estimate = estimate_dim_box(cloud)
        deltas = np.array(estimate.diagnostics["deltas"])
        assert len(deltas) >= 4 and np.all(np.diff(deltas) < 0)
        assert 0 < estimate.value < 10
    # low-dimensional clouds keep the half-octave ladder
    deltas, _ = default_box_deltas(gen_segment(2000, 0))
    assert np.allclose(2 * deltas[0] / deltas[:4], [2, 3, 4, 6])


def test_box_cell_sides_must_be_below_diameter():
    cloud = gen_segment(500, 3)
    assert cloud.diameter() < 1.0
    with pytest.raises(InsufficientPoints) as info:
        estimate_dim_box(cloud, delta_grid=[1.0, 0.1, 0.01, 0.001])
    assert "diameter" in str(info.value)
    estimate = estimate_dim_box(cloud, delta_grid=[0.1, 0.05, 0.02, 0.01])
    assert estimate.diagnostics["deltas"] == [0.1, 0.05, 0.02, 0.01]


def test_magnitude_dimension_of_segment_square_and_cantor():
    segment, _ = estimate_dim_mag_cloud(gen_segment(2000, 1))
    assert abs(segment.value - 1.0) <= 0.15
    square, curve = estimate_dim_mag_cloud(gen_square(2000, 1))
    assert abs(square.value - 2.0) <= 0.2
    assert square.diagnostics["window_rule"] == "growth"
    assert len(curve) == 64
    cantor, _ = estimate_dim_mag_cloud(gen_cantor(11))
    assert abs(cantor.value - CANTOR_DIM) <= 0.12


def test_magnitude_and_ph0_agree_on_square():
    cloud = gen_square(1500, 2)
    magnitude_dim, _ = estimate_dim_mag_cloud(cloud)
    assert abs(magnitude_dim.value - estimate_dim_ph0(cloud, seed=0).value) <= 0.25


def test_growth_window_bounds():
    ts = np.geomspace(0.1, 100, 40)
    curve = MagnitudeCurve(tuple(CurveSample(float(t), 1.0 + float(t) ** 2, 1.0) for t in ts), 5000)
    lo, hi = growth_window(curve)
    assert 1.0 + lo ** 2 >= 16.0 and 1.0 + hi ** 2 <= 500.0
    assert growth_window(power_law_curve(2.0, ts)) is None


def test_corrected_fit_removes_boundary_term():
    ts = np.geomspace(4, 20, 16)
    values = 3.0 * ts ** 2 * np.exp(0.5 * ts[0] / ts)
    fit, boundary = fit_loglog_corrected(ts, values)
    assert fit.slope == pytest.approx(2.0, abs=1e-9)
    assert boundary == pytest.approx(0.5, abs=1e-9)
    assert fit_loglog(ts, values).slope < 2.0


def test_growth_rule_falls_back_to_max_r2():
    curve = magnitude_function(PointCloud([[0.0], [1.0]]), grid=default_grid())
    estimate = estimate_dim_mag(curve)
    assert estimate.diagnostics["window_rule"] == "max-r2"
    assert estimate.value == estimate_dim_mag(curve, window_rule="max-r2").value
    with pytest.raises(DegenerateInput):
        estimate_dim_mag(curve, window_rule="widest")


def test_rigid_motion_invariance():
    cloud = gen_square(300, 4)
    angle = 0.7
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    moved = PointCloud(cloud.points @ rotation.T + np.array([5.0, -3.0]))
    assert estimate_dim_mag_cloud(moved)[0].value == pytest.approx(estimate_dim_mag_cloud(cloud)[0].value,
                                                                   abs=1e-6)
    assert estimate_dim_ph0(moved, seed=1).value == pytest.approx(estimate_dim_ph0(cloud, seed=1).value,
                                                                  abs=1e-6)


def test_compare_dims_on_square():
    report = compare_dims(gen_square(600, 2), CompareConfig(seed=0))
    assert set(report.estimates) == {"magnitude", "ph0", "box"}
    assert report.errors == {}
    assert report.differences[("magnitude", "ph0")] == pytest.approx(
        abs(report.estimates["magnitude"].value - report.estimates["ph0"].value))
    assert 1.5 <= report.estimates["ph0"].value <= 2.5


def test_compare_dims_on_two_points_keeps_errors():
    report = compare_dims(PointCloud([[0.0, 0.0], [1.0, 0.0]]))
    assert "magnitude" in report.estimates
    assert "ph0" in report.errors and "InsufficientPoints" in report.errors["ph0"]
    assert report.differences == {}


def test_dimension_report_format():
    ts = np.geomspace(0.1, 10, 20)
    out = io.StringIO()
    write_dimension_report([estimate_dim_mag(power_law_curve(2.0, ts))], out, comments=("seed=4",))
    lines = out.getvalue().splitlines()
    assert lines[0] == "# seed=4"
    assert lines[1] == REPORT_HEADER
    fields = lines[2].split(",")
    assert fields[0] == "magnitude" and len(fields) == 7
    assert float(fields[1]) == pytest.approx(2.0)


def main():
    return run_checks(globals())


if __name__ == "__main__":
    sys.exit(main())
