#!/usr/bin/env python3
"""
Tests for point clouds, distance matrices and the point-cloud file formats.
"""

import sys
import math

import numpy as np
import pytest

from checks import run_checks
from errors import DegenerateInput, InvalidScale, MalformedFile
from metric_core import (CLOUD_HEADER, DistanceMatrix, PointCloud, load_cloud, normalize_by_median,
                         pairwise_distances, read_cloud_binary, read_cloud_csv, save_cloud,
                         scale_distances, write_cloud_binary, write_cloud_csv)


def test_distance_on_a_line():
    dm = pairwise_distances(PointCloud([[0.0], [3.0]]))
    assert dm.entries[0, 1] == 3.0
    assert dm.entries[1, 0] == 3.0


def test_three_four_five_triangle():
    dm = pairwise_distances(PointCloud([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]))
    assert sorted(dm.off_diagonal().tolist()) == [3.0, 4.0, 5.0]


def test_duplicate_points_have_zero_distance():
    dm = pairwise_distances(PointCloud([[1.0, 1.0], [1.0, 1.0]]))
    assert dm.entries[0, 1] == 0.0


def test_non_finite_coordinates_rejected():
    with pytest.raises(DegenerateInput):
        pairwise_distances(PointCloud([[0.0, math.nan], [1.0, 2.0]]))
    with pytest.raises(DegenerateInput):
        PointCloud([[math.inf]])


def test_one_dimensional_input_becomes_column():
    cloud = PointCloud([0.0, 0.5, 1.0])
    assert (cloud.n, cloud.d) == (3, 1)


def test_distance_matrix_invariants_on_random_cloud():
    rng = np.random.default_rng(7)
    dm = pairwise_distances(PointCloud(rng.normal(size=(60, 5))))
    assert np.array_equal(dm.entries, dm.entries.T)
    assert np.all(np.diag(dm.entries) == 0)
    assert np.all(dm.entries >= 0)
    for i, j, k in rng.integers(0, 60, size=(500, 3)):
        assert dm.entries[i, k] <= dm.entries[i, j] + dm.entries[j, k] + 1e-12


def test_cloud_diameter_in_blocks():
    points = np.random.default_rng(3).normal(size=(130, 4))
    cloud = PointCloud(points)
    assert cloud.diameter(block=16) == pytest.approx(pairwise_distances(cloud).diameter(), rel=1e-12)
    assert PointCloud([[1.0, 2.0]]).diameter() == 0.0


def test_distance_matrix_validation():
    with pytest.raises(DegenerateInput):
        DistanceMatrix([[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(DegenerateInput):
        DistanceMatrix([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(DegenerateInput):
        DistanceMatrix([[0.0, -1.0], [-1.0, 0.0]])


def test_permutation_equivariance():
    rng = np.random.default_rng(3)
    points = rng.uniform(size=(25, 3))
    perm = rng.permutation(25)
    dm = pairwise_distances(PointCloud(points))
    permuted = pairwise_distances(PointCloud(points[perm]))
    assert np.array_equal(permuted.entries, dm.entries[np.ix_(perm, perm)])


def test_scale_identity_and_doubling():
    dm = pairwise_distances(PointCloud([[0.0], [3.0]]))
    assert np.array_equal(scale_distances(dm, 1).entries, dm.entries)
    assert scale_distances(dm, 2).entries[0, 1] == 6.0


def test_invalid_scales():
    dm = pairwise_distances(PointCloud([[0.0], [3.0]]))
    for t in (0, -1.0, math.inf, math.nan, "abc"):
        with pytest.raises(InvalidScale):
            scale_distances(dm, t)


def test_scale_composition():
    rng = np.random.default_rng(11)
    dm = pairwise_distances(PointCloud(rng.normal(size=(20, 4))))
    composed = scale_distances(scale_distances(dm, 0.37), 5.9)
    direct = scale_distances(dm, 0.37 * 5.9)
    np.testing.assert_allclose(composed.entries, direct.entries, rtol=1e-12, atol=0)


def test_normalize_by_median():
    dm = pairwise_distances(PointCloud([[0.0], [1.0], [3.0]]))
    normalized, median = normalize_by_median(dm)
    assert median == 2.0
    assert normalized.median() == 1.0
    same, zero = normalize_by_median(pairwise_distances(PointCloud([[1.0], [1.0], [1.0]])))
    assert zero == 0.0 and np.all(same.entries == 0)


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(5)
    cloud = PointCloud(rng.normal(size=(30, 3)) * 1e3)
    path = tmp_path / "cloud.csv"
    write_cloud_csv(cloud, path, comments=("seed=5",))
    assert path.read_text().startswith("# seed=5\n")
    assert np.array_equal(read_cloud_csv(path).points, cloud.points)


def test_binary_round_trip_and_sniffing(tmp_path):
    rng = np.random.default_rng(6)
    cloud = PointCloud(rng.normal(size=(17, 4)))
    path = tmp_path / "cloud.bin"
    save_cloud(cloud, path, fmt="bin")
    data = path.read_bytes()
    assert data[:6] == b"MAGPC1"
    assert len(data) == CLOUD_HEADER.size + 17 * 4 * 8
    assert np.array_equal(load_cloud(path).points, cloud.points)

    csv_path = tmp_path / "cloud.csv"
    save_cloud(cloud, csv_path)
    assert np.array_equal(load_cloud(csv_path).points, cloud.points)


def test_truncated_binary_reports_offset(tmp_path):
    path = tmp_path / "cloud.bin"
    write_cloud_binary(PointCloud(np.ones((4, 2))), path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(MalformedFile) as info:
        read_cloud_binary(path)
    assert info.value.offset is not None


def test_ragged_csv_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# comment\n1,2\n3\n")
    with pytest.raises(MalformedFile):
        read_cloud_csv(path)
    path.write_text("1,abc\n")
    with pytest.raises(MalformedFile):
        read_cloud_csv(path)


def main():
    return run_checks(globals())


if __name__ == "__main__":
    sys.exit(main())
