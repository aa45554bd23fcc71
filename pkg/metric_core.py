#!/usr/bin/env python3
"""
Point clouds, Euclidean distance matrices and metric scaling.

This module handles:
1. The PointCloud / DistanceMatrix value types (immutable, validated on construction)
2. Pairwise Euclidean distances and scaling a metric by t > 0
3. Point-cloud files: CSV (one point per line, '#' comments) and the MAGPC1 binary format
"""

import math
import struct
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from errors import DegenerateInput, InvalidScale, MalformedFile

CLOUD_MAGIC = b"MAGPC1"
CLOUD_HEADER = struct.Struct("<6sII")


def _frozen(array):
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PointCloud:
    """n points in R^d stored as an (n, d) float64 array."""
    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise DegenerateInput(f"point cloud must be a non-empty n x d array, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            bad = int(np.argwhere(~np.isfinite(points))[0][0])
            raise DegenerateInput(f"point {bad} has a non-finite coordinate")
        object.__setattr__(self, "points", _frozen(points))

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def subset(self, indices):
        return PointCloud(self.points[np.asarray(indices)])

    def diameter(self, block=1024):
        """Largest pairwise distance, computed in row blocks without the full matrix."""
        best = 0.0
        for start in range(0, self.n, block):
            best = max(best, float(cdist(self.points[start:start + block], self.points).max()))
        return best


@dataclass(frozen=True)
class DistanceMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DegenerateInput(f"distance matrix must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)) or np.any(entries < 0):
            raise DegenerateInput("distance matrix entries must be finite and non-negative")
        if np.any(np.diag(entries) != 0) or not np.array_equal(entries, entries.T):
            raise DegenerateInput("distance matrix must be symmetric with a zero diagonal")
        object.__setattr__(self, "entries", _frozen(entries))

    @property
    def n(self):
        return self.entries.shape[0]

    def off_diagonal(self):
        """Condensed upper-triangle distances (i < j)."""
        return squareform(self.entries, checks=False)

    def diameter(self):
        return float(self.entries.max()) if self.n > 1 else 0.0

    def median(self):
        return float(np.median(self.off_diagonal())) if self.n > 1 else 0.0


def pairwise_distances(cloud):
    """Euclidean distance matrix; each unordered pair is computed once and mirrored."""
    if not np.all(np.isfinite(cloud.points)):
        raise DegenerateInput("point cloud has non-finite coordinates")
    if cloud.n == 1:
        return DistanceMatrix(np.zeros((1, 1)))
    condensed = pdist(cloud.points, metric="euclidean")
    return DistanceMatrix(squareform(condensed, checks=False))


def scale_distances(dm, t):
    """The metric space tX: every distance multiplied by t."""
    try:
        t = float(t)
    except (TypeError, ValueError):
        raise InvalidScale(f"scale must be a real number, got {t!r}")
    if not math.isfinite(t) or t <= 0:
        raise InvalidScale(f"scale must lie in (0, inf), got {t}")
    return DistanceMatrix(dm.entries * t)


def normalize_by_median(dm):
    """Divide by the median pairwise distance. Returns (matrix, median); unchanged when the median is 0."""
    median = dm.median()
    if median <= 0:
        logging.warning("Median pairwise distance is 0, distances left unnormalized")
        return dm, median
    return DistanceMatrix(dm.entries / median), median


def read_cloud_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(value) for value in line.split(",")])
            except ValueError:
                raise MalformedFile(f"{path}:{line_no}: not a list of decimal floats: {line[:60]!r}")
            if len(rows[-1]) != len(rows[0]):
                raise MalformedFile(f"{path}:{line_no}: expected {len(rows[0])} coordinates, got {len(rows[-1])}")
    if not rows:
        raise MalformedFile(f"{path}: no points found")
    logging.info(f"Read {len(rows)} points of dimension {len(rows[0])} from {path}")
    return PointCloud(np.array(rows))


def write_cloud_csv(cloud, path, comments=()):
    with open(path, "w", encoding="utf-8") as f:
        for comment in comments:
            f.write(f"# {comment}\n")
        for point in cloud.points:
            f.write(",".join("%.17g" % value for value in point) + "\n")
    logging.info(f"Wrote {cloud.n} points to {path}")


def read_cloud_binary(path):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < CLOUD_HEADER.size:
        raise MalformedFile(f"{path}: truncated header", offset=len(data))
    magic, n, d = CLOUD_HEADER.unpack_from(data, 0)
    if magic != CLOUD_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}", offset=0)
    expected = CLOUD_HEADER.size + 8 * n * d
    if len(data) != expected:
        raise MalformedFile(f"{path}: expected {expected} bytes for {n}x{d} points, found {len(data)}",
                            offset=min(len(data), expected))
    points = np.frombuffer(data, dtype="<f8", count=n * d, offset=CLOUD_HEADER.size).reshape(n, d)
    logging.info(f"Read {n} points of dimension {d} from {path}")
    return PointCloud(points)


def write_cloud_binary(cloud, path):
    with open(path, "wb") as f:
        f.write(CLOUD_HEADER.pack(CLOUD_MAGIC, cloud.n, cloud.d))
        f.write(np.ascontiguousarray(cloud.points, dtype="<f8").tobytes())
    logging.info(f"Wrote {cloud.n} points to {path} (binary)")


def load_cloud(path):
    """Read a point cloud, choosing the format from the file's leading bytes."""
    with open(path, "rb") as f:
        head = f.read(len(CLOUD_MAGIC))
    if head == CLOUD_MAGIC:
        return read_cloud_binary(path)
    return read_cloud_csv(path)


def save_cloud(cloud, path, fmt="csv", comments=()):
    if fmt == "bin":
        write_cloud_binary(cloud, path)
    else:
        write_cloud_csv(cloud, path, comments)
