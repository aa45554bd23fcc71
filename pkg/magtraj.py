#!/usr/bin/env python3
"""
magtraj: magnitude, intrinsic dimension and generalisation bounds for point clouds
and neural-network weight trajectories.

Subcommands:
1. gen       synthetic point clouds (segment, square, Cantor set, Levy path)
2. mag       magnitude of a cloud at one scale
3. magfun    magnitude function over a grid of scales
4. dim       magnitude / PH0 / box-counting dimension, or all three compared
5. train     train a small MLP with SGD and record its weight trajectory
6. analyze   sliding-window magnitude analysis of a recorded trajectory
7. bound     the magnitude-dimension generalisation bound
8. ablation  dimension estimates on Levy paths over a range of alpha
9. sweep     train across learning rates (and batch sizes) and correlate the last window with accuracy
10. fetch    download the MNIST IDX files

Results go to stdout or --out files; logs go to stderr and the log file.
Exit codes: 0 success, 1 usage error, 2 data or numeric error.
"""

import os
import sys
import math
import logging
import argparse
import traceback
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import pearsonr, spearmanr

from config import resolve_workers, setup_logging
from errors import InvalidConfig, MagtrajError, NumericallySingular
from bound_calc import DEFAULT_SCALES, BoundInputs, effective_models, generalisation_bound
from dimension_est import (WINDOW_RULES, CompareConfig, compare_dims, estimate_dim_box, estimate_dim_mag,
                           estimate_dim_mag_cloud, estimate_dim_ph0, estimation_grid,
                           write_dimension_report)
from download_idx import fetch_mnist
from magnitude_engine import (default_grid, magnitude_at, magnitude_function, read_curve_csv,
                              write_curve_csv)
from metric_core import load_cloud, normalize_by_median, pairwise_distances, save_cloud
from synthetic_gen import RNG_NAME, LevyConfig, gen_cantor, gen_levy, gen_segment, gen_square
from trajectory_trainer import (TrainerConfig, gen_blobs, load_idx, read_trajectory, sliding_windows,
                                split_dataset, train_and_record, write_trajectory)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

ABLATION_ALPHAS = (1.2, 1.4, 1.6, 1.8, 2.0)
MIN_CORRELATION_ROWS = 3
# default training set: overlapping blobs, one class per output unit
BLOBS_PER_CLASS = 100
BLOBS_SEPARATION = 3.0


class UsageError(Exception):
    """A flag combination argparse cannot check by itself."""


class CliParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this CLI reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def float_pair(text):
    values = float_list(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected two numbers lo,hi, got {text!r}")
    return tuple(values)


@contextmanager
def open_output(path):
    if path in (None, "-"):
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8") as f:
            yield f
        logging.info(f"Wrote {path}")


def fmt(value):
    """17 significant digits; absent values become an empty field."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return "%.17g" % value


def scale_label(t):
    return "mag_at_%g" % t


# ---------------------------------------------------------------- gen / mag / magfun


def cmd_gen(args):
    if args.generator == "segment":
        cloud = gen_segment(args.n, args.seed)
        described = f"segment n={args.n}"
    elif args.generator == "square":
        cloud = gen_square(args.n, args.seed)
        described = f"square n={args.n}"
    elif args.generator == "cantor":
        cloud = gen_cantor(args.depth, args.seed, args.jitter)
        described = f"cantor depth={args.depth} jitter={args.jitter}"
    else:
        config = LevyConfig(args.alpha, args.d, args.steps, args.seed, args.step_scale)
        cloud = gen_levy(config)
        described = f"levy alpha={args.alpha} d={args.d} n_steps={args.steps} step_scale={args.step_scale}"

    comments = (f"seed={args.seed}", f"generator={described}", f"rng={RNG_NAME}")
    save_cloud(cloud, args.out, args.format, comments)
    logging.info(f"Generated {described}: {cloud.n} points in R^{cloud.d}")
    return EXIT_OK


def cmd_mag(args):
    cloud = load_cloud(args.input)
    weights, value = magnitude_at(pairwise_distances(cloud), args.t)
    logging.info(f"Magnitude at t={args.t}: {value:.12g} (residual {weights.residual_inf_norm:.3g}, "
                 f"condition {weights.condition_estimate:.3g}, jittered={weights.jittered})")
    with open_output(args.out) as f:
        f.write("t,magnitude,condition_estimate,residual_inf_norm\n")
        f.write(",".join(fmt(v) for v in (args.t, value, weights.condition_estimate,
                                          weights.residual_inf_norm)) + "\n")
    if args.weights_out:
        with open(args.weights_out, "w", encoding="utf-8") as f:
            f.write("weight\n")
            for w in weights.weights:
                f.write(fmt(float(w)) + "\n")
        logging.info(f"Wrote {cloud.n} magnitude weights to {args.weights_out}")
    return EXIT_OK


def cmd_magfun(args):
    cloud = load_cloud(args.input)
    distances = pairwise_distances(cloud)
    if args.scales:
        grid = args.scales
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise UsageError(f"--scales must be strictly increasing, got {args.scales}")
        if any(t <= 0 or not math.isfinite(t) for t in grid):
            raise UsageError(f"--scales must be finite and positive, got {args.scales}")
    else:
        grid = default_grid(args.t_min, args.t_max, args.num, diameter=distances.diameter())
    curve = magnitude_function(grid=grid, workers=args.workers, distances=distances)
    with open_output(args.out) as f:
        write_curve_csv(curve, f, comments=(f"n_points={curve.n_points}",))
    return EXIT_OK


# ---------------------------------------------------------------- dim


def cmd_dim(args):
    comments = []
    if getattr(args, "seed", None) is not None:
        comments.append(f"seed={args.seed}")

    if args.method == "mag":
        if args.curve:
            estimate = estimate_dim_mag(read_curve_csv(args.curve), args.interval, args.min_points,
                                        args.window_rule)
        elif args.input:
            estimate, _ = estimate_dim_mag_cloud(load_cloud(args.input), args.interval,
                                                 min_points=args.min_points, workers=args.workers,
                                                 window_rule=args.window_rule)
        else:
            raise UsageError("dim mag: one of --in or --curve is required")
        estimates = [estimate]
        trailer = []
    elif args.method == "ph":
        cloud = load_cloud(args.input)
        estimates = [estimate_dim_ph0(cloud, args.alpha, args.sizes, args.reps, args.seed, args.workers)]
        trailer = []
    elif args.method == "box":
        cloud = load_cloud(args.input)
        estimates = [estimate_dim_box(cloud, args.deltas, args.interval)]
        trailer = []
    else:
        cloud = load_cloud(args.input)
        config = CompareConfig(alpha=args.alpha, reps=args.reps, seed=args.seed, min_points=args.min_points,
                               interval=args.interval, workers=args.workers, window_rule=args.window_rule)
        report = compare_dims(cloud, config)
        estimates = [report.estimates[m] for m in ("magnitude", "ph0", "box") if m in report.estimates]
        trailer = [f"|{a}-{b}|={fmt(diff)}" for (a, b), diff in report.differences.items()]
        trailer += [f"{method} failed: {message}" for method, message in report.errors.items()]

    with open_output(args.out) as f:
        write_dimension_report(estimates, f, comments)
        for line in trailer:
            f.write(f"# {line}\n")
    return EXIT_OK


# ---------------------------------------------------------------- train


def load_training_data(args):
    """Blobs or IDX data for args.layers; labels may use fewer classes than the output layer has units."""
    if args.idx_images or args.idx_labels:
        if not (args.idx_images and args.idx_labels):
            raise UsageError("--idx-images and --idx-labels must be given together")
        x, y = load_idx(args.idx_images, args.idx_labels)
        data = split_dataset(x, y, int(y.max()) + 1 if y.size else 0)
    elif args.blobs is None:
        data = gen_blobs(BLOBS_PER_CLASS, args.layers[-1], args.layers[0], BLOBS_SEPARATION, args.seed)
    elif len(args.blobs) != 3:
        raise UsageError(f"--blobs expects n_per_class,n_classes,separation, got {args.blobs}")
    else:
        n_per_class, n_classes, separation = args.blobs
        data = gen_blobs(int(n_per_class), int(n_classes), args.layers[0], separation, args.seed)

    outputs = args.layers[-1]
    if data.n_classes > outputs:
        raise InvalidConfig(f"labels span {data.n_classes} classes but the output layer has {outputs} units")
    return replace(data, n_classes=outputs)


def cmd_train(args):
    config = TrainerConfig(tuple(args.layers), args.lr, args.batch, args.iters, args.seed,
                           args.eval_every, args.activation)
    data = load_training_data(args)
    log = train_and_record(config, data)
    write_trajectory(log, args.out)

    evaluated = np.flatnonzero(~np.isnan(log.test_accuracy))
    accuracy = float(log.test_accuracy[evaluated[-1]]) if evaluated.size else math.nan
    sys.stdout.write(f"# seed={args.seed}\n")
    sys.stdout.write("iterations,d,final_train_loss,last_test_accuracy\n")
    sys.stdout.write(f"{len(log)},{log.d},{fmt(float(log.train_loss[-1]))},{fmt(accuracy)}\n")
    return EXIT_OK


# ---------------------------------------------------------------- analyze


@dataclass
class WindowResult:
    window_id: int
    end_test_accuracy: float
    dim_mag: float = math.nan
    r_squared: float = math.nan
    dim_ph0: float = math.nan
    magnitudes: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def failed(self):
        return not self.magnitudes


@dataclass
class AnalysisReport:
    scales: tuple
    rows: list
    summary: list
    notes: list

    @property
    def columns(self):
        return ["window_id", "end_test_accuracy", "dim_mag", "r_squared", "dim_ph0"] + \
            [scale_label(t) for t in self.scales]


def analyze_window(window, scales, normalize, ph0=None):
    """Magnitude at each scale, dim_mag and optionally dim_ph0 for one window; failures are recorded."""
    result = WindowResult(window.window_id, window.end_test_accuracy)
    try:
        distances = pairwise_distances(window.cloud)
        if distances.n > 1 and float(np.min(distances.off_diagonal())) == 0.0:
            raise NumericallySingular("window contains duplicate weight vectors; magnitude is undefined")
        if normalize == "median":
            distances, median = normalize_by_median(distances)
            logging.debug(f"Window {window.window_id}: median pairwise distance {median:.6g}")
        grid = np.union1d(estimation_grid(distances), np.asarray(scales, dtype=np.float64))
        curve = magnitude_function(grid=grid, workers=1, distances=distances)
        magnitudes = [effective_models(curve, t) for t in scales]
        estimate = estimate_dim_mag(curve)
        result.magnitudes = magnitudes
        result.dim_mag, result.r_squared = estimate.value, estimate.fit.r_squared
    except MagtrajError as e:
        logging.error(f"Window {window.window_id} failed: {type(e).__name__}: {e}")
        logging.debug(traceback.format_exc())
        result.errors.append(f"{type(e).__name__}: {e}")
        return result

    if ph0 is not None:
        try:
            result.dim_ph0 = estimate_dim_ph0(window.cloud, ph0["alpha"], reps=ph0["reps"], seed=ph0["seed"],
                                              workers=1).value
        except MagtrajError as e:
            logging.error(f"Window {window.window_id} dim_ph0 failed: {type(e).__name__}: {e}")
            result.errors.append(f"{type(e).__name__}: dim_ph0: {e}")
    logging.info(f"Window {window.window_id}: dim_mag={result.dim_mag:.4f}, r^2={result.r_squared:.4f}, "
                 f"accuracy={result.end_test_accuracy:.4f}")
    return result


def correlate(x, y):
    """(pearson, spearman, reason); reason is set when the correlation is undefined."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if len(x) < MIN_CORRELATION_ROWS:
        return None, None, f"{len(x)} usable windows, need {MIN_CORRELATION_ROWS}"
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None, None, "constant column"
    return float(pearsonr(x, y)[0]), float(spearmanr(x, y)[0]), None


def summarize(rows, scales, with_ph0):
    """Correlation of every metric column with end_test_accuracy, plus dim_mag against dim_ph0."""
    usable = [r for r in rows if not r.failed and math.isfinite(r.end_test_accuracy)]
    if len(usable) < MIN_CORRELATION_ROWS:
        return [], [f"no correlations: {len(usable)} usable windows, need {MIN_CORRELATION_ROWS}"]
    accuracy = [r.end_test_accuracy for r in usable]
    if np.ptp(accuracy) == 0:
        return [], ["no correlations: end_test_accuracy is constant"]

    metrics = [(scale_label(t), [r.magnitudes[k] for r in usable]) for k, t in enumerate(scales)]
    metrics.append(("dim_mag", [r.dim_mag for r in usable]))
    if with_ph0:
        metrics.append(("dim_ph0", [r.dim_ph0 for r in usable]))

    summary, notes = [], []
    for name, values in metrics:
        pearson, spearman, reason = correlate(values, accuracy)
        if reason:
            notes.append(f"no correlation for {name}: {reason}")
        else:
            summary.append((name, pearson, spearman))
    if with_ph0:
        pearson, spearman, reason = correlate([r.dim_mag for r in usable], [r.dim_ph0 for r in usable])
        if reason:
            notes.append(f"no correlation for dim_mag~dim_ph0: {reason}")
        else:
            summary.append(("dim_mag~dim_ph0", pearson, spearman))
    if not summary:
        notes.insert(0, "no correlations: every metric column is constant or missing")
    return summary, notes


def analyze(trajectory_path, scales=DEFAULT_SCALES, window=1000, stride=None, normalize="median",
            thin=1, ph0=None, workers=None):
    """Sliding-window analysis of a trajectory file. Rows are ordered by window_id."""
    log = read_trajectory(trajectory_path)
    windows = sliding_windows(log, window, stride or window, thin)
    scales = tuple(sorted(scales))

    def run(w):
        return analyze_window(w, scales, normalize, ph0)

    workers = resolve_workers(workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(run, windows))
    else:
        rows = [run(w) for w in windows]

    summary, notes = summarize(rows, scales, ph0 is not None)
    return AnalysisReport(scales, rows, summary, notes)


def write_analysis(report, f, comments=()):
    for comment in comments:
        f.write(f"# {comment}\n")
    f.write(",".join(report.columns) + "\n")
    for row in report.rows:
        if row.failed:
            values = [str(row.window_id), fmt(row.end_test_accuracy), "", "", ""] + [""] * len(report.scales)
        else:
            values = [str(row.window_id), fmt(row.end_test_accuracy), fmt(row.dim_mag), fmt(row.r_squared),
                      fmt(row.dim_ph0)] + [fmt(m) for m in row.magnitudes]
        f.write(",".join(values) + "\n")
    f.write("# summary\n")
    f.write("metric,pearson,spearman\n")
    for name, pearson, spearman in report.summary:
        f.write(f"{name},{fmt(pearson)},{fmt(spearman)}\n")
    for note in report.notes:
        f.write(f"# {note}\n")
    for row in report.rows:
        for error in row.errors:
            f.write(f"# window {row.window_id} failed: {error}\n")


def cmd_analyze(args):
    if args.ph0 and args.seed is None:
        raise UsageError("analyze --ph0 draws random subsamples and requires --seed")
    ph0 = {"alpha": args.alpha, "reps": args.reps, "seed": args.seed} if args.ph0 else None
    report = analyze(args.traj, args.scales, args.window, args.stride, args.normalize, args.thin, ph0,
                     args.workers)

    comments = []
    if args.seed is not None:
        comments.append(f"seed={args.seed}")
    comments.append(f"normalize={args.normalize} window={args.window} stride={args.stride or args.window} "
                    f"thin={args.thin}")
    with open_output(args.out) as f:
        write_analysis(report, f, comments)
    return EXIT_OK


# ---------------------------------------------------------------- bound


def cmd_bound(args):
    inputs = BoundInputs(args.dim, args.n, args.C, args.K, args.M, args.gamma)
    value = generalisation_bound(inputs)
    logging.info("The bound is asymptotic: it holds for n sufficiently large")
    sys.stdout.write("%.12g\n" % value)
    if args.curve:
        curve = read_curve_csv(args.curve)
        sys.stdout.write("# effective number of models\n")
        sys.stdout.write("t,effective_models\n")
        for t in args.scales:
            sys.stdout.write(f"{fmt(t)},{fmt(effective_models(curve, t))}\n")
    return EXIT_OK


# ---------------------------------------------------------------- ablation


@dataclass
class AblationRun:
    alpha: float
    seed: int
    dim_mag: float = math.nan
    r_squared: float = math.nan
    dim_ph0: float = math.nan
    dim_box: float = math.nan
    curve: object = None
    errors: list = field(default_factory=list)


def ablation_run(alpha, seed, d, n_steps, ph0_alpha, reps):
    """One Levy path and its three dimension estimates; estimator failures leave the field empty."""
    run = AblationRun(alpha, seed)
    cloud = gen_levy(LevyConfig(alpha, d, n_steps, seed))
    try:
        estimate, run.curve = estimate_dim_mag_cloud(cloud, workers=1)
        run.dim_mag, run.r_squared = estimate.value, estimate.fit.r_squared
    except MagtrajError as e:
        run.errors.append(f"dim_mag {type(e).__name__}: {e}")
    try:
        run.dim_ph0 = estimate_dim_ph0(cloud, ph0_alpha, reps=reps, seed=seed, workers=1).value
    except MagtrajError as e:
        run.errors.append(f"dim_ph0 {type(e).__name__}: {e}")
    try:
        run.dim_box = estimate_dim_box(cloud).value
    except MagtrajError as e:
        run.errors.append(f"dim_box {type(e).__name__}: {e}")
    for error in run.errors:
        logging.error(f"alpha={alpha} seed={seed}: {error}")
    logging.info(f"alpha={alpha} seed={seed}: dim_mag={run.dim_mag:.4f} dim_ph0={run.dim_ph0:.4f} "
                 f"dim_box={run.dim_box:.4f}")
    return run


def ablation_summary(runs):
    """(statistic, value, p_value) rows: dim_mag against alpha and against dim_ph0."""
    alphas = np.array([r.alpha for r in runs])
    dim_mag = np.array([r.dim_mag for r in runs])
    dim_ph0 = np.array([r.dim_ph0 for r in runs])
    rows = []
    for name, other in (("pearson(dim_mag;alpha)", alphas), ("pearson(dim_mag;dim_ph0)", dim_ph0)):
        keep = np.isfinite(dim_mag) & np.isfinite(other)
        if keep.sum() >= MIN_CORRELATION_ROWS and np.ptp(dim_mag[keep]) > 0 and np.ptp(other[keep]) > 0:
            result = pearsonr(dim_mag[keep], other[keep])
            rows.append((name, float(result[0]), float(result[1])))
        else:
            rows.append((name, None, None))
    keep = np.isfinite(dim_mag)
    error = float(np.mean(dim_mag[keep] - alphas[keep])) if keep.any() else None
    rows.append(("mean_signed_error(dim_mag-alpha)", error, None))
    return rows


def cmd_ablation(args):
    tasks = [(alpha, args.seed + k) for alpha in args.alphas for k in range(args.runs)]

    def run(task):
        return ablation_run(task[0], task[1], args.d, args.steps, args.ph0_alpha, args.reps)

    workers = resolve_workers(args.workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            runs = list(executor.map(run, tasks))
    else:
        runs = [run(task) for task in tasks]

    with open_output(args.out) as f:
        f.write(f"# seed={args.seed}\n")
        f.write(f"# d={args.d} n_steps={args.steps} ph0_alpha={args.ph0_alpha} reps={args.reps}\n")
        f.write("alpha,seed,dim_mag,r_squared,dim_ph0,dim_box\n")
        for r in runs:
            f.write(",".join([fmt(r.alpha), str(r.seed), fmt(r.dim_mag), fmt(r.r_squared),
                              fmt(r.dim_ph0), fmt(r.dim_box)]) + "\n")
        f.write("# summary\n")
        f.write("statistic,value,p_value\n")
        for name, value, p_value in ablation_summary(runs):
            f.write(f"{name},{fmt(value)},{fmt(p_value)}\n")
        for r in runs:
            for error in r.errors:
                f.write(f"# run alpha={fmt(r.alpha)} seed={r.seed} failed: {error}\n")

    if args.curves_out:
        with open(args.curves_out, "w", encoding="utf-8") as f:
            f.write(f"# seed={args.seed}\n")
            f.write("alpha,seed,t,magnitude\n")
            for r in runs:
                if r.curve is None:
                    continue
                for s in r.curve.samples:
                    f.write(f"{fmt(r.alpha)},{r.seed},{fmt(s.t)},{fmt(s.magnitude)}\n")
        logging.info(f"Wrote magnitude curves to {args.curves_out}")
    return EXIT_OK


# ---------------------------------------------------------------- sweep


@dataclass
class SweepRun:
    learning_rate: float
    batch_size: int
    final_test_accuracy: float = math.nan
    result: WindowResult = None
    errors: list = field(default_factory=list)


def sweep_run(learning_rate, batch_size, args, data, scales):
    """Train once with these hyperparameters and analyse the last window of the trajectory."""
    run = SweepRun(learning_rate, batch_size)
    config = TrainerConfig(tuple(args.layers), learning_rate, batch_size, args.iters, args.seed,
                           args.eval_every, args.activation)
    try:
        log = train_and_record(config, data)
    except MagtrajError as e:
        logging.error(f"lr={learning_rate} batch={batch_size}: {type(e).__name__}: {e}")
        run.errors.append(f"{type(e).__name__}: {e}")
        return run

    if args.traj_dir:
        path = os.path.join(args.traj_dir, f"lr{learning_rate:g}_b{batch_size}.trj")
        write_trajectory(log, path)
        logging.info(f"Wrote trajectory to {path}")
    evaluated = np.flatnonzero(~np.isnan(log.test_accuracy))
    if evaluated.size:
        run.final_test_accuracy = float(log.test_accuracy[evaluated[-1]])
    window = sliding_windows(log, args.window, args.window)[-1]
    run.result = analyze_window(window, scales, args.normalize)
    run.errors.extend(run.result.errors)
    return run


def sweep_summary(runs, scales):
    """Correlation of each final-window metric with the final test accuracy, across runs."""
    usable = [r for r in runs if r.result is not None and not r.result.failed
              and math.isfinite(r.final_test_accuracy)]
    accuracy = [r.final_test_accuracy for r in usable]
    metrics = [(scale_label(t), [r.result.magnitudes[k] for r in usable]) for k, t in enumerate(scales)]
    metrics.append(("dim_mag", [r.result.dim_mag for r in usable]))
    summary, notes = [], []
    for name, values in metrics:
        pearson, spearman, reason = correlate(values, accuracy)
        if reason:
            notes.append(f"no correlation for {name}: {reason}")
        else:
            summary.append((name, pearson, spearman))
    return summary, notes


def cmd_sweep(args):
    if any(lr <= 0 for lr in args.lrs):
        raise UsageError(f"--lrs must be positive, got {args.lrs}")
    batches = args.batches or [args.batch]
    if any(b < 1 for b in batches):
        raise UsageError(f"--batches must be >= 1, got {batches}")
    if args.iters < args.window:
        raise UsageError(f"--iters {args.iters} is shorter than --window {args.window}")
    if args.traj_dir:
        os.makedirs(args.traj_dir, exist_ok=True)
    data = load_training_data(args)
    scales = tuple(sorted(args.scales))
    tasks = [(lr, batch) for lr in args.lrs for batch in batches]

    def run(task):
        return sweep_run(task[0], int(task[1]), args, data, scales)

    workers = resolve_workers(args.workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            runs = list(executor.map(run, tasks))
    else:
        runs = [run(task) for task in tasks]
    summary, notes = sweep_summary(runs, scales)

    with open_output(args.out) as f:
        f.write(f"# seed={args.seed}\n")
        f.write(f"# layers={','.join(map(str, args.layers))} iters={args.iters} window={args.window} "
                f"normalize={args.normalize}\n")
        f.write(",".join(["lr", "batch", "final_test_accuracy", "dim_mag", "r_squared"] +
                         [scale_label(t) for t in scales]) + "\n")
        for r in runs:
            result = r.result
            if result is None or result.failed:
                metrics = [""] * (2 + len(scales))
            else:
                metrics = [fmt(result.dim_mag), fmt(result.r_squared)] + [fmt(m) for m in result.magnitudes]
            row = [f"{r.learning_rate:g}", str(r.batch_size), fmt(r.final_test_accuracy)] + metrics
            f.write(",".join(row) + "\n")
        f.write("# summary\n")
        f.write("metric,pearson,spearman\n")
        for name, pearson, spearman in summary:
            f.write(f"{name},{fmt(pearson)},{fmt(spearman)}\n")
        for note in notes:
            f.write(f"# {note}\n")
        for r in runs:
            for error in r.errors:
                f.write(f"# run lr={r.learning_rate:g} batch={r.batch_size} failed: {error}\n")
    return EXIT_OK


# ---------------------------------------------------------------- fetch


def cmd_fetch(args):
    for path in fetch_mnist(args.data_dir, args.base_url, args.force):
        sys.stdout.write(path + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    common = CliParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    common.add_argument("--log-file", default=None, help="Log file path ('' disables the file log)")
    common.add_argument("--workers", type=int, default=None, help="Worker threads (default MAGTRAJ_WORKERS)")

    parser = CliParser(prog="magtraj", description="Magnitude and intrinsic dimension of point clouds "
                                                   "and weight trajectories.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="Generate a synthetic point cloud")
    p.add_argument("generator", choices=("segment", "square", "cantor", "levy"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.add_argument("--n", type=int, default=2000, help="Sample size (segment, square)")
    p.add_argument("--depth", type=int, default=11, help="Cantor depth")
    p.add_argument("--jitter", type=float, default=0.0, help="Cantor jitter, fraction of the interval length")
    p.add_argument("--alpha", type=float, default=1.5, help="Levy stability index")
    p.add_argument("--d", type=int, default=10, help="Levy ambient dimension")
    p.add_argument("--steps", type=int, default=1000, help="Levy path length")
    p.add_argument("--step-scale", type=float, default=1.0)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("mag", parents=[common], help="Magnitude at one scale")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.add_argument("--weights-out", default=None, help="Write the magnitude weights as CSV")
    p.set_defaults(handler=cmd_mag)

    p = sub.add_parser("magfun", parents=[common], help="Magnitude function over a grid of scales")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--scales", type=float_list, default=None, help="Explicit scales, comma-separated")
    p.add_argument("--t-min", type=float, default=0.01)
    p.add_argument("--t-max", type=float, default=40.0)
    p.add_argument("--num", type=int, default=64)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_magfun)

    p = sub.add_parser("dim", help="Intrinsic dimension estimates")
    dim = p.add_subparsers(dest="method", required=True)
    for method in ("mag", "ph", "box", "compare"):
        q = dim.add_parser(method, parents=[common])
        q.add_argument("--in", dest="input", required=(method != "mag"))
        q.add_argument("--out", default=None)
        if method in ("mag", "box", "compare"):
            q.add_argument("--interval", type=float_pair, default=None,
                           help="lo,hi: scales for mag, cell sides for box")
        if method in ("mag", "compare"):
            q.add_argument("--min-points", type=int, default=8)
            q.add_argument("--window-rule", choices=WINDOW_RULES, default="growth",
                           help="Scale window for the magnitude fit when --interval is not given")
        if method in ("ph", "compare"):
            q.add_argument("--seed", type=int, required=True)
            q.add_argument("--alpha", type=float, default=1.0)
            q.add_argument("--reps", type=int, default=5)
        if method == "mag":
            q.add_argument("--curve", default=None, help="Estimate from a saved curve CSV")
        if method == "ph":
            q.add_argument("--sizes", type=int_list, default=None)
        if method == "box":
            q.add_argument("--deltas", type=float_list, default=None)
        q.set_defaults(handler=cmd_dim)

    p = sub.add_parser("train", parents=[common], help="Train an MLP and record its weight trajectory")
    p.add_argument("--layers", type=int_list, required=True, help="e.g. 10,16,16,10")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--eval-every", type=int, default=1000)
    p.add_argument("--activation", choices=("relu", "tanh"), default="relu")
    p.add_argument("--blobs", type=float_list, default=None,
                   help="n_per_class,n_classes,separation (default 100,<output size>,3)")
    p.add_argument("--idx-images", default=None)
    p.add_argument("--idx-labels", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("analyze", parents=[common], help="Sliding-window analysis of a trajectory")
    p.add_argument("--traj", required=True)
    p.add_argument("--scales", type=float_list, default=list(DEFAULT_SCALES))
    p.add_argument("--window", type=int, default=1000)
    p.add_argument("--stride", type=int, default=None, help="Default: the window length")
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--normalize", choices=("median", "none"), default="median")
    p.add_argument("--ph0", action="store_true", help="Also estimate dim_ph0 per window")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("bound", parents=[common], help="Evaluate the generalisation bound")
    p.add_argument("--dim", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--C", type=float, required=True)
    p.add_argument("--K", type=float, required=True)
    p.add_argument("--M", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--curve", default=None, help="Curve CSV for the effective number of models")
    p.add_argument("--scales", type=float_list, default=list(DEFAULT_SCALES))
    p.set_defaults(handler=cmd_bound)

    p = sub.add_parser("ablation", parents=[common], help="Dimension estimates on Levy paths")
    p.add_argument("--alphas", type=float_list, default=list(ABLATION_ALPHAS))
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--ph0-alpha", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out", default=None)
    p.add_argument("--curves-out", default=None)
    p.set_defaults(handler=cmd_ablation)

    p = sub.add_parser("sweep", parents=[common], help="Train across learning rates and correlate with accuracy")
    p.add_argument("--layers", type=int_list, required=True, help="e.g. 10,16,16,10")
    p.add_argument("--lrs", type=float_list, required=True, help="e.g. 0.01,0.05,0.1,0.2")
    p.add_argument("--batches", type=int_list, default=None, help="Batch sizes to cross with --lrs")
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--eval-every", type=int, default=1000)
    p.add_argument("--activation", choices=("relu", "tanh"), default="relu")
    p.add_argument("--blobs", type=float_list, default=None,
                   help="n_per_class,n_classes,separation (default 100,<output size>,3)")
    p.add_argument("--idx-images", default=None)
    p.add_argument("--idx-labels", default=None)
    p.add_argument("--window", type=int, default=1000, help="Iterations in the analysed final window")
    p.add_argument("--normalize", choices=("median", "none"), default="median")
    p.add_argument("--scales", type=float_list, default=list(DEFAULT_SCALES))
    p.add_argument("--traj-dir", default=None, help="Also keep each run's trajectory here")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("fetch", parents=[common], help="Download the MNIST IDX files")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--base-url", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=cmd_fetch)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose, args.log_file)
    logging.debug(f"Arguments: {vars(args)}")

    try:
        return args.handler(args)
    except UsageError as e:
        logging.error(f"Usage error: {e}")
        return EXIT_USAGE
    except (MagtrajError, OSError, ValueError) as e:
        logging.error(f"{type(e).__name__}: {e}")
        logging.debug(traceback.format_exc())
        return EXIT_DATA


if __name__ == "__main__":
    try:
        sys.exit(main())
    except Exception as e:
        logging.error(f"Unhandled exception: {e}")
        traceback.print_exc()
        sys.exit(EXIT_DATA)
