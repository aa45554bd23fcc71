#!/usr/bin/env python3
"""
Magnitude of finite metric spaces.

This module handles:
1. The similarity matrix Z_ij = exp(-d_ij)
2. Magnitude weights (the solution of Z w = 1) and magnitude = sum(w), via Cholesky
3. The sampled magnitude function t -> Mag(tX) over a grid of scales
4. Reading and writing magnitude curves as CSV
"""

import math
import logging
import warnings
import traceback
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.linalg import lapack

from config import resolve_workers
from errors import (EmptyCurve, IllConditionedWarning, InvalidScale, MalformedFile,
                    NonPositiveMagnitude, NumericallySingular, DegenerateInput)
from metric_core import pairwise_distances, scale_distances

ILL_CONDITIONED = 1e12
JITTER_FACTOR = 1e-12
RESIDUAL_FACTOR = 1e-8

DEFAULT_T_MIN = 0.01
DEFAULT_T_MAX = 40.0
DEFAULT_NUM_SCALES = 64

CURVE_HEADER = "t,magnitude,condition_estimate"


@dataclass(frozen=True)
class SimilarityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DegenerateInput(f"similarity matrix must be square, got shape {entries.shape}")
        if not np.array_equal(entries, entries.T) or np.any(np.diag(entries) != 1.0):
            raise DegenerateInput("similarity matrix must be symmetric with a unit diagonal")
        entries = entries.copy()
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class MagnitudeWeights:
    weights: np.ndarray
    residual_inf_norm: float
    condition_estimate: float
    jittered: bool = False


@dataclass(frozen=True)
class CurveSample:
    t: float
    magnitude: float
    condition_estimate: float
    jittered: bool = False


@dataclass(frozen=True)
class MagnitudeCurve:
    """Samples of t -> Mag(tX); scales whose solve failed are kept in `failures` as (t, reason)."""
    samples: tuple
    n_points: int
    failures: tuple = field(default=())

    def __post_init__(self):
        ts = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidScale("curve scales must be strictly increasing")
        if any(not s.magnitude > 0 for s in self.samples):
            raise NonPositiveMagnitude("curve contains a non-positive magnitude")

    @property
    def ts(self):
        return np.array([s.t for s in self.samples])

    @property
    def values(self):
        return np.array([s.magnitude for s in self.samples])

    def __len__(self):
        return len(self.samples)


def similarity(dm):
    """Entrywise exp(-d) with an exact unit diagonal."""
    entries = np.exp(-dm.entries)
    np.fill_diagonal(entries, 1.0)
    return SimilarityMatrix(entries)


def _condition_estimate(factor, matrix):
    anorm = float(np.abs(matrix).sum(axis=0).max())
    rcond, info = lapack.dpocon(factor, anorm, uplo="U")
    if info != 0 or rcond <= 0:
        return math.inf
    return 1.0 / rcond


def _factorize(matrix):
    """Upper Cholesky factor, retrying once with diagonal jitter. Returns (factor, jittered)."""
    try:
        factor, _ = cho_factor(matrix, lower=False, check_finite=False)
        jittered = False
    except LinAlgError:
        jitter = JITTER_FACTOR * matrix.shape[0]
        logging.warning(f"Cholesky failed, retrying with diagonal jitter {jitter:.3g}")
        try:
            factor, _ = cho_factor(matrix + jitter * np.eye(matrix.shape[0]), lower=False, check_finite=False)
            jittered = True
        except LinAlgError:
            raise NumericallySingular("similarity matrix is not numerically positive definite, even with jitter")

    pivots = np.diag(factor)
    if not np.all(pivots > 0):
        raise NumericallySingular(f"non-positive Cholesky pivot {pivots.min():.3g}")
    return factor, jittered


def magnitude(sim):
    """
    Magnitude weights and magnitude of a space given its similarity matrix.
    Solves Z w = 1 through a Cholesky factorization; the inverse is never formed.
    Returns (MagnitudeWeights, value) with value == sum(weights).
    """
    matrix = sim.entries
    n = matrix.shape[0]

    off_diagonal = matrix[~np.eye(n, dtype=bool)]
    if np.any(off_diagonal >= 1.0):
        i, j = [int(k) for k in np.argwhere((matrix >= 1.0) & ~np.eye(n, dtype=bool))[0]]
        raise NumericallySingular(
            f"points {i} and {j} coincide (identical similarity rows); deduplicate the point cloud first")

    factor, jittered = _factorize(matrix)
    ones = np.ones(n)
    weights = cho_solve((factor, False), ones, check_finite=False)

    if jittered:
        solved = matrix + JITTER_FACTOR * n * np.eye(n)
    else:
        solved = matrix
    residual = float(np.max(np.abs(solved @ weights - ones)))
    if residual > RESIDUAL_FACTOR * n:
        logging.warning(f"Magnitude solve residual {residual:.3g} exceeds {RESIDUAL_FACTOR * n:.3g}")

    condition = _condition_estimate(factor, solved)
    if condition > ILL_CONDITIONED:
        message = f"similarity matrix condition estimate {condition:.3g} exceeds {ILL_CONDITIONED:.0e}"
        logging.warning(message)
        warnings.warn(message, IllConditionedWarning, stacklevel=2)

    value = float(np.sum(weights))
    if not math.isfinite(value) or value <= 0:
        raise NumericallySingular(f"solve produced a non-positive magnitude {value}")

    return MagnitudeWeights(weights, residual, condition, jittered), value


def magnitude_at(dm, t):
    """Magnitude of the scaled space tX from an unscaled distance matrix."""
    return magnitude(similarity(scale_distances(dm, t)))


def default_grid(t_min=DEFAULT_T_MIN, t_max=DEFAULT_T_MAX, num=DEFAULT_NUM_SCALES, diameter=None):
    """
    Log-spaced scales. With a diameter, the lower end is raised to 0.01 / diameter so that
    t * diameter >= 0.01 (below that Z is numerically the all-ones matrix). A raised floor
    that would reach t_max is dropped and the requested bounds are kept.
    """
    if diameter and diameter > 0:
        floor = 0.01 / diameter
        if floor < t_max:
            t_min = max(t_min, floor)
        else:
            logging.info(f"Diameter {diameter:.3g} puts the scale floor {floor:.4g} above t_max={t_max}; "
                         f"keeping [{t_min}, {t_max}]")
    if not 0 < t_min < t_max:
        raise InvalidScale(f"grid bounds must satisfy 0 < t_min < t_max, got [{t_min}, {t_max}]")
    return np.geomspace(t_min, t_max, num)


def check_grid(grid):
    grid = np.asarray(grid, dtype=np.float64).ravel()
    if grid.size == 0:
        raise InvalidScale("scale grid is empty")
    if not np.all(np.isfinite(grid)) or np.any(grid <= 0):
        raise InvalidScale("scales must be finite and positive")
    if np.any(np.diff(grid) <= 0):
        raise InvalidScale("scales must be strictly increasing")
    return grid


def _solve_scale(dm, t):
    try:
        weights, value = magnitude_at(dm, t)
        logging.debug(f"t={t:.6g}: magnitude={value:.10g}, condition={weights.condition_estimate:.3g}")
        return CurveSample(float(t), value, weights.condition_estimate, weights.jittered), None
    except NumericallySingular as e:
        logging.debug(traceback.format_exc())
        return None, (float(t), f"NumericallySingular: {e}")


def magnitude_function(cloud=None, grid=None, workers=None, distances=None):
    """
    Sample t -> Mag(tX) on a strictly increasing grid. Pass a cloud, or precomputed
    distances. Scales whose solve fails are left out of the samples and listed in failures.
    """
    if distances is None:
        if cloud is None:
            raise DegenerateInput("magnitude_function needs a point cloud or a distance matrix")
        distances = pairwise_distances(cloud)
    if grid is None:
        grid = default_grid(diameter=distances.diameter())
    grid = check_grid(grid)

    workers = resolve_workers(workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(lambda t: _solve_scale(distances, t), grid))
    else:
        results = [_solve_scale(distances, t) for t in grid]

    samples = tuple(sample for sample, _ in results if sample is not None)
    failures = tuple(failure for _, failure in results if failure is not None)
    if failures:
        logging.warning(f"{len(failures)} of {len(grid)} scales failed to solve")
    if not samples:
        raise EmptyCurve(f"every scale failed; first failure: {failures[0][1]}")

    logging.info(f"Magnitude curve: {len(samples)} scales in [{samples[0].t:.4g}, {samples[-1].t:.4g}], "
                 f"n={distances.n}, Mag range [{samples[0].magnitude:.4g}, {samples[-1].magnitude:.4g}]")
    return MagnitudeCurve(samples, distances.n, failures)


def write_curve_csv(curve, f, comments=()):
    """Curve CSV to an open text file. Failed scales follow the rows as '#' comments."""
    for comment in comments:
        f.write(f"# {comment}\n")
    f.write(CURVE_HEADER + "\n")
    for s in curve.samples:
        f.write("%.17g,%.17g,%.17g\n" % (s.t, s.magnitude, s.condition_estimate))
    for t, reason in curve.failures:
        f.write("# failed t=%.17g: %s\n" % (t, reason))
    logging.info(f"Wrote {len(curve)} curve samples")


def read_curve_csv(path, n_points=None):
    """Curve CSV from a file. n_points defaults to the '# n_points=' comment magfun writes, else 0."""
    samples, noted = [], 0
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        while header.startswith("#"):
            key, _, value = header[1:].strip().partition("=")
            if key == "n_points" and value.isdigit():
                noted = int(value)
            header = f.readline().strip()
        if header != CURVE_HEADER:
            raise MalformedFile(f"{path}: expected header {CURVE_HEADER!r}, got {header!r}")
        for line_no, line in enumerate(f, 2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                t, value, condition = (float(v) for v in line.split(","))
            except ValueError:
                raise MalformedFile(f"{path}:{line_no}: expected three floats, got {line[:60]!r}")
            samples.append(CurveSample(t, value, condition))
    if not samples:
        raise EmptyCurve(f"{path}: no curve samples")
    return MagnitudeCurve(tuple(samples), noted if n_points is None else n_points)
