#!/usr/bin/env python3
"""
Intrinsic dimension estimators for point clouds.

This module handles:
1. Magnitude dimension: slope of log Mag(tX) against log t over an interval of scales,
   chosen by hand, by auto_interval, or as the growth window with a boundary correction
2. PH0 dimension: the alpha-weighted length of the Euclidean minimum spanning tree
   (degree-0 Vietoris-Rips lifetimes) regressed over random subsamples of growing size
3. Box-counting dimension: occupied grid cells against cell size
4. Running all three on one cloud and reporting how far apart they are
"""

import math
import logging
import traceback
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import linregress

from config import resolve_workers
from errors import (DegenerateInput, DegenerateSlope, InsufficientPoints, InvalidAlpha,
                    MagtrajError, NonPositiveMagnitude)
from magnitude_engine import DEFAULT_NUM_SCALES, magnitude_function
from metric_core import pairwise_distances
from synthetic_gen import counter_rng

MIN_FIT_POINTS = 4
AUTO_MIN_POINTS = 8
TIE_TOLERANCE = 1e-12
R2_THRESHOLD = 0.95
GROWTH_FLOOR = 16.0
GROWTH_CEILING = 0.1
WINDOW_RULES = ("growth", "max-r2")

PH0_ALPHA = 1.0
PH0_REPS = 5
PH0_NUM_SIZES = 9
PH0_MIN_SIZE = 32

BOX_SATURATION = 0.125
BOX_MAX_DELTAS = 40
BOX_FINE_DIM = 3

REPORT_HEADER = "method,value,slope,intercept,r_squared,t_lo,t_hi"


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r_squared: float
    interval: tuple


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    method: str
    fit: LogLogFit = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class DimensionReport:
    estimates: dict
    errors: dict
    differences: dict


def r_squared(lx, ly, slope, intercept):
    """Coefficient of determination; 0.0 when ly has no variance."""
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    if ss_tot == 0:
        return 0.0
    ss_res = float(np.sum((ly - (slope * lx + intercept)) ** 2))
    return min(1.0, max(0.0, 1.0 - ss_res / ss_tot))


def fit_loglog(x, y, interval=None):
    """OLS of log y on log x. x and y must be positive."""
    lx, ly = np.log(np.asarray(x, dtype=np.float64)), np.log(np.asarray(y, dtype=np.float64))
    result = linregress(lx, ly)
    slope, intercept = float(result.slope), float(result.intercept)
    if interval is None:
        interval = (float(np.min(x)), float(np.max(x)))
    return LogLogFit(slope, intercept, r_squared(lx, ly, slope, intercept), interval)


def auto_interval(curve, min_points=AUTO_MIN_POINTS):
    """
    The contiguous window of at least min_points samples whose log-log fit has the highest r^2.
    Ties (within TIE_TOLERANCE) go to the wider window, then to the smaller t_lo.
    """
    ts, values = curve.ts, curve.values
    if len(ts) < min_points:
        raise InsufficientPoints(f"curve has {len(ts)} samples, auto_interval needs {min_points}")
    if np.any(values <= 0):
        raise NonPositiveMagnitude("curve contains a non-positive magnitude")
    lx, ly = np.log(ts), np.log(values)

    best = None
    for i in range(len(ts) - min_points + 1):
        for j in range(i + min_points - 1, len(ts)):
            x, y = lx[i:j + 1], ly[i:j + 1]
            dx, dy = x - x.mean(), y - y.mean()
            sxx, syy, sxy = float(dx @ dx), float(dy @ dy), float(dx @ dy)
            r2 = 0.0 if syy == 0 else min(1.0, sxy * sxy / (sxx * syy))
            width = j - i + 1
            if best is None or r2 > best[0] + TIE_TOLERANCE:
                best = (r2, width, i, j)
            elif abs(r2 - best[0]) <= TIE_TOLERANCE and width > best[1]:
                best = (r2, width, i, j)

    r2, width, i, j = best
    logging.info(f"Auto interval: t in [{ts[i]:.4g}, {ts[j]:.4g}] ({width} scales, r^2={r2:.6f})")
    return float(ts[i]), float(ts[j])


def estimation_grid(distances, num=DEFAULT_NUM_SCALES):
    """64 log-spaced scales in [0.1 t*, 100 t*] with t* = 1 / median pairwise distance."""
    median = distances.median()
    if median <= 0:
        raise DegenerateInput("median pairwise distance is 0; cannot place the scale grid")
    t_star = 1.0 / median
    return np.geomspace(0.1 * t_star, 100.0 * t_star, num)


def growth_window(curve, floor=GROWTH_FLOOR, ceiling=GROWTH_CEILING):
    """
    Scales where Mag has left its small-t plateau (Mag >= floor) and has not yet saturated
    towards the point count (Mag <= ceiling * n_points). Returns (t_lo, t_hi), or None when
    the curve does not know its point count or no sample qualifies.
    """
    if curve.n_points < 1:
        return None
    ts, values = curve.ts, curve.values
    above = np.nonzero(values >= floor)[0]
    below = np.nonzero(values <= ceiling * curve.n_points)[0]
    if len(above) == 0 or len(below) == 0 or below[-1] < above[0]:
        return None
    return float(ts[above[0]]), float(ts[below[-1]])


def fit_loglog_corrected(x, y):
    """
    Least squares of log y on [1, log x, x_lo / x]. The last column absorbs the lower-order
    boundary term of Mag, so the log x coefficient is the growth exponent.
    Returns (LogLogFit, boundary coefficient).
    """
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    lx, ly = np.log(x), np.log(y)
    design = np.column_stack([np.ones_like(lx), lx, x.min() / x])
    (intercept, slope, boundary), *_ = np.linalg.lstsq(design, ly, rcond=None)
    fitted = design @ np.array([intercept, slope, boundary])
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 0.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - float(np.sum((ly - fitted) ** 2)) / ss_tot))
    return LogLogFit(float(slope), float(intercept), r2, (float(x.min()), float(x.max()))), float(boundary)


def estimate_dim_mag(curve, interval=None, min_points=AUTO_MIN_POINTS, window_rule="growth"):
    """
    Magnitude dimension of a sampled curve.

    With an interval, or with window_rule "max-r2", this is the OLS slope of log Mag against
    log t over that interval (inclusive), auto_interval picking it when none is given.
    The default "growth" rule fits over growth_window with the boundary-corrected model and
    falls back to the max-r2 rule when that window holds fewer than min_points samples.
    """
    if window_rule not in WINDOW_RULES:
        raise DegenerateInput(f"unknown window rule {window_rule!r}, expected one of {WINDOW_RULES}")
    ts, values = curve.ts, curve.values

    if interval is None and window_rule == "growth":
        window = growth_window(curve)
        if window is not None:
            mask = (ts >= window[0]) & (ts <= window[1])
            if mask.sum() >= max(min_points, MIN_FIT_POINTS):
                fit, boundary = fit_loglog_corrected(ts[mask], values[mask])
                logging.info(f"Growth window t in [{window[0]:.4g}, {window[1]:.4g}] ({int(mask.sum())} scales): "
                             f"slope {fit.slope:.4f}, boundary term {boundary:.4f}")
                diagnostics = {"auto_interval": True, "window_rule": "growth", "boundary_term": boundary,
                               "n_samples": int(mask.sum()), "n_points": curve.n_points, "grid_size": len(curve)}
                return DimensionEstimate(fit.slope, "magnitude", fit, diagnostics)
        logging.info("Growth window too short, using the max-r^2 window")

    auto = interval is None
    if auto:
        interval = auto_interval(curve, min_points)
    t_lo, t_hi = interval

    mask = (ts >= t_lo) & (ts <= t_hi)
    if mask.sum() < MIN_FIT_POINTS:
        raise InsufficientPoints(f"interval [{t_lo}, {t_hi}] holds {int(mask.sum())} samples, "
                                 f"need {MIN_FIT_POINTS}")
    if np.any(values[mask] <= 0):
        raise NonPositiveMagnitude(f"non-positive magnitude inside [{t_lo}, {t_hi}]")

    fit = fit_loglog(ts[mask], values[mask])
    if fit.r_squared < R2_THRESHOLD:
        logging.warning(f"Magnitude dimension fit has r^2={fit.r_squared:.4f} below {R2_THRESHOLD}")
    diagnostics = {"auto_interval": auto, "window_rule": "max-r2" if auto else "manual",
                   "n_samples": int(mask.sum()), "n_points": curve.n_points, "grid_size": len(curve)}
    return DimensionEstimate(fit.slope, "magnitude", fit, diagnostics)


def estimate_dim_mag_cloud(cloud, interval=None, grid=None, min_points=AUTO_MIN_POINTS, workers=None,
                           window_rule="growth"):
    """Algorithm for point clouds: magnitude curve on the estimation grid, then the slope fit."""
    distances = pairwise_distances(cloud)
    if grid is None:
        grid = estimation_grid(distances)
    curve = magnitude_function(grid=grid, workers=workers, distances=distances)
    return estimate_dim_mag(curve, interval, min_points, window_rule), curve


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n

    def root(self, v):
        parent = self.parent
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    def join(self, a, b):
        """Merge the sets of a and b; False when they were already joined."""
        ra, rb = self.root(a), self.root(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True


def minimum_spanning_edges(points):
    """Kruskal over all pairs: the n-1 edge lengths of the Euclidean minimum spanning tree, ascending."""
    n = points.shape[0]
    lengths = pdist(points, metric="euclidean")
    order = np.argsort(lengths, kind="stable")
    rows, cols = np.triu_indices(n, k=1)

    tree = UnionFind(n)
    edges = []
    start, chunk = 0, max(4 * n, 1024)
    while start < order.size and len(edges) < n - 1:
        block = order[start:start + chunk]
        start += chunk
        chunk *= 2
        # edges already inside one component cannot join the tree
        labels = np.array([tree.root(v) for v in range(n)])
        block = block[labels[rows[block]] != labels[cols[block]]]
        for k, i, j in zip(block.tolist(), rows[block].tolist(), cols[block].tolist()):
            if tree.join(i, j):
                edges.append(lengths[k])
                if len(edges) == n - 1:
                    break
    return np.array(edges)


def mst_alpha_lifetime(cloud, alpha):
    """
    E_alpha = sum of (death - birth)^alpha over the finite degree-0 persistence pairs.
    Births are 0 and deaths are the MST edge lengths, so this is the alpha-weight of the MST.
    """
    if cloud.n < 2:
        raise DegenerateInput(f"alpha-lifetime sum needs at least 2 points, got {cloud.n}")
    if not alpha > 0:
        raise InvalidAlpha(f"alpha must be positive, got {alpha}")
    return float(np.sum(minimum_spanning_edges(cloud.points) ** alpha))


def default_ph0_sizes(n, num=PH0_NUM_SIZES):
    lo = max(PH0_MIN_SIZE, n // 20)
    if lo >= n:
        raise InsufficientPoints(f"cloud of {n} points is too small for PH0 subsampling (smallest size {lo})")
    sizes = np.unique(np.round(np.geomspace(lo, n, num)).astype(int))
    return [int(s) for s in sizes]


def _subsample_log_lifetime(cloud, alpha, size, seed, size_index, rep):
    rng = counter_rng(seed, 5, size_index, rep)
    indices = np.sort(rng.choice(cloud.n, size=size, replace=False))
    lifetime = mst_alpha_lifetime(cloud.subset(indices), alpha)
    if lifetime <= 0:
        raise DegenerateInput(f"alpha-lifetime sum is 0 on a subsample of {size} points (duplicate points)")
    return math.log(lifetime)


def estimate_dim_ph0(cloud, alpha=PH0_ALPHA, sizes=None, reps=PH0_REPS, seed=0, workers=None):
    """
    PH0 dimension alpha / (1 - m), m being the slope of mean log E_alpha against log n
    over `reps` seeded uniform subsamples per size.
    """
    if not alpha > 0:
        raise InvalidAlpha(f"alpha must be positive, got {alpha}")
    if sizes is None:
        sizes = default_ph0_sizes(cloud.n)
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2:
        raise InsufficientPoints("PH0 regression needs at least 2 subsample sizes")
    if any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 2 or sizes[-1] > cloud.n:
        raise InsufficientPoints(f"subsample sizes must be strictly increasing within [2, {cloud.n}], got {sizes}")
    if reps < 1:
        raise InsufficientPoints(f"reps must be >= 1, got {reps}")

    tasks = [(k, size, rep) for k, size in enumerate(sizes) for rep in range(reps)]

    def run(task):
        k, size, rep = task
        return _subsample_log_lifetime(cloud, alpha, size, seed, k, rep)

    workers = resolve_workers(workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            logs = list(executor.map(run, tasks))
    else:
        logs = [run(task) for task in tasks]

    mean_logs = np.array(logs).reshape(len(sizes), reps).mean(axis=1)
    log_sizes = np.log(np.array(sizes, dtype=np.float64))
    result = linregress(log_sizes, mean_logs)
    slope, intercept = float(result.slope), float(result.intercept)
    fit = LogLogFit(slope, intercept, r_squared(log_sizes, mean_logs, slope, intercept),
                    (float(sizes[0]), float(sizes[-1])))
    if slope >= 1:
        raise DegenerateSlope(f"log E_alpha slope {slope:.4f} >= 1 (alpha={alpha} too large or too little data)")

    value = alpha / (1.0 - slope)
    logging.info(f"PH0 dimension {value:.4f} (alpha={alpha}, slope={slope:.4f}, r^2={fit.r_squared:.4f})")
    diagnostics = {"alpha": alpha, "reps": reps, "seed": seed,
                   "mean_log_lifetime": list(zip(sizes, mean_logs.tolist()))}
    return DimensionEstimate(value, "ph0", fit, diagnostics)


def box_counts(cloud, deltas):
    """Occupied axis-aligned cells of side delta, anchored at the coordinate-wise minimum."""
    shifted = cloud.points - cloud.points.min(axis=0)
    counts = []
    for delta in deltas:
        cells = np.floor(shifted / delta).astype(np.int64)
        counts.append(len(np.unique(cells, axis=0)))
    return np.array(counts)


def default_box_deltas(cloud, saturation=BOX_SATURATION):
    """
    Cell sides extent / m (extent = largest coordinate range), stopping before the count
    exceeds saturation * n. m climbs in half-octave steps, or quarter-octave steps above
    BOX_FINE_DIM coordinates where each step multiplies the count by up to m^d.
    If that leaves fewer than MIN_FIT_POINTS sides, the ladder continues past the saturation
    limit until it has them or every point sits in its own cell.
    """
    extent = float(np.max(cloud.points.max(axis=0) - cloud.points.min(axis=0)))
    base = extent * (1 + 1e-9) if extent > 0 else 1.0
    limit = max(1.0, saturation * cloud.n)
    steps_per_octave = 4 if cloud.d > BOX_FINE_DIM else 2
    deltas, counts = [], []
    seen = set()
    for k in range(steps_per_octave, 100 * steps_per_octave):
        m = int(round(2 ** (k / steps_per_octave)))
        if m in seen:
            continue
        seen.add(m)
        delta = base / m
        count = box_counts(cloud, [delta])[0]
        if len(deltas) >= BOX_MAX_DELTAS:
            break
        if count > limit:
            if len(deltas) >= MIN_FIT_POINTS or (deltas and counts[-1] >= cloud.n):
                break
            logging.warning(f"Box count {count} at side {delta:.4g} is past {limit:.0f}; "
                            f"extending the ladder to {MIN_FIT_POINTS} sides")
        deltas.append(delta)
        counts.append(count)
    return np.array(deltas), np.array(counts)


def estimate_dim_box(cloud, delta_grid=None, interval=None):
    """
    Box-counting dimension: slope of log N(delta) against log(1/delta).
    interval, when given, is (delta_min, delta_max); the default keeps every delta of the grid.
    """
    if delta_grid is None:
        deltas, counts = default_box_deltas(cloud)
    else:
        deltas = np.asarray(delta_grid, dtype=np.float64)
        if np.any(deltas <= 0) or np.any(np.diff(deltas) >= 0):
            raise InsufficientPoints("delta grid must be positive and strictly decreasing")
        # a single point (diameter 0) keeps N = 1 for every delta
        diameter = cloud.diameter()
        if diameter > 0 and deltas[0] >= diameter:
            raise InsufficientPoints(f"every cell side must be below the cloud diameter {diameter:.6g}, "
                                     f"got {deltas[0]:.6g}")
        counts = box_counts(cloud, deltas)

    if interval is not None:
        lo, hi = interval
        keep = (deltas >= lo) & (deltas <= hi)
        deltas, counts = deltas[keep], counts[keep]
    if len(deltas) < MIN_FIT_POINTS:
        raise InsufficientPoints(f"box counting needs {MIN_FIT_POINTS} cell sizes, got {len(deltas)}")

    fit = fit_loglog(1.0 / deltas, counts)
    diagnostics = {"deltas": deltas.tolist(), "counts": counts.tolist()}
    logging.info(f"Box-counting dimension {fit.slope:.4f} over {len(deltas)} cell sizes")
    return DimensionEstimate(fit.slope, "box", fit, diagnostics)


@dataclass(frozen=True)
class CompareConfig:
    alpha: float = PH0_ALPHA
    reps: int = PH0_REPS
    seed: int = 0
    min_points: int = AUTO_MIN_POINTS
    interval: tuple = None
    workers: int = None
    window_rule: str = "growth"


def compare_dims(cloud, config=CompareConfig()):
    """All three estimators on one cloud; failures are kept per method instead of aborting."""
    runs = {
        "magnitude": lambda: estimate_dim_mag_cloud(cloud, config.interval, min_points=config.min_points,
                                                    workers=config.workers, window_rule=config.window_rule)[0],
        "ph0": lambda: estimate_dim_ph0(cloud, config.alpha, reps=config.reps, seed=config.seed,
                                        workers=config.workers),
        "box": lambda: estimate_dim_box(cloud),
    }
    estimates, errors = {}, {}
    for method, run in runs.items():
        try:
            estimates[method] = run()
        except MagtrajError as e:
            logging.error(f"{method} dimension failed: {type(e).__name__}: {e}")
            logging.debug(traceback.format_exc())
            errors[method] = f"{type(e).__name__}: {e}"

    differences = {}
    methods = [m for m in runs if m in estimates]
    for a_index, a in enumerate(methods):
        for b in methods[a_index + 1:]:
            differences[(a, b)] = abs(estimates[a].value - estimates[b].value)
    return DimensionReport(estimates, errors, differences)


def format_estimate_row(estimate):
    fit = estimate.fit
    if fit is None:
        return "%s,%.17g,,,,," % (estimate.method, estimate.value)
    return "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g" % (
        estimate.method, estimate.value, fit.slope, fit.intercept, fit.r_squared,
        fit.interval[0], fit.interval[1])


def write_dimension_report(estimates, f, comments=()):
    """Dimension CSV to an open text file; for box rows t_lo/t_hi hold the 1/delta range."""
    for comment in comments:
        f.write(f"# {comment}\n")
    f.write(REPORT_HEADER + "\n")
    for estimate in estimates:
        f.write(format_estimate_row(estimate) + "\n")
