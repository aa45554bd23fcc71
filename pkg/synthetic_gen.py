#!/usr/bin/env python3
"""
Point clouds with a known intrinsic dimension.

This script handles:
1. Uniform samples on the unit segment and the unit square (dimension 1 and 2)
2. Middle-thirds Cantor set endpoints (dimension ln2/ln3)
3. Paths of a d-dimensional symmetric alpha-stable Levy process (dimension alpha for d >= 2),
   with increments drawn by the Chambers-Mallows-Stuck transform

All randomness comes from counter_rng, so every output is a pure function of its arguments.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np

from errors import InvalidAlpha, InvalidConfig
from metric_core import PointCloud

# Philox-4x64 from numpy, keyed by a SeedSequence over (seed, *stream keys).
RNG_NAME = "numpy.Philox4x64/seedsequence-v1"

CANTOR_MAX_DEPTH = 14


def counter_rng(seed, *keys):
    """Independent generator for one stream; streams never depend on draw order elsewhere."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class LevyConfig:
    alpha: float
    d: int = 10
    n_steps: int = 1000
    seed: int = 0
    step_scale: float = 1.0

    def __post_init__(self):
        if not (0 < self.alpha <= 2):
            raise InvalidAlpha(f"alpha must lie in (0, 2], got {self.alpha}")
        if self.d < 1:
            raise InvalidConfig(f"ambient dimension must be >= 1, got {self.d}")
        if self.n_steps < 2:
            raise InvalidConfig(f"n_steps must be >= 2, got {self.n_steps}")
        if not self.step_scale > 0:
            raise InvalidConfig(f"step_scale must be positive, got {self.step_scale}")


def gen_segment(n, seed):
    """n uniform samples on [0, 1], as points in R^1."""
    if n < 2:
        raise InvalidConfig(f"need at least 2 points, got {n}")
    return PointCloud(counter_rng(seed, 1).uniform(0.0, 1.0, size=(n, 1)))


def gen_square(n, seed):
    """n uniform samples on the unit square."""
    if n < 2:
        raise InvalidConfig(f"need at least 2 points, got {n}")
    return PointCloud(counter_rng(seed, 2).uniform(0.0, 1.0, size=(n, 2)))


def cantor_endpoints(depth):
    """Sorted left endpoints of the 2**depth intervals at the given depth."""
    points = np.zeros(1)
    for level in range(1, depth + 1):
        points = np.concatenate([points, points + 2.0 / 3.0 ** level])
    return np.sort(points)


def gen_cantor(depth, seed=0, jitter=0.0):
    """
    Middle-thirds Cantor set sample. With jitter > 0 each endpoint is moved uniformly
    by up to jitter * 3**-depth to the right, staying inside its interval (jitter <= 1).
    """
    if not 1 <= depth <= CANTOR_MAX_DEPTH:
        raise InvalidConfig(f"depth must lie in [1, {CANTOR_MAX_DEPTH}], got {depth}")
    if not 0 <= jitter <= 1:
        raise InvalidConfig(f"jitter is a fraction of the interval length in [0, 1], got {jitter}")
    points = cantor_endpoints(depth)
    if jitter > 0:
        offsets = counter_rng(seed, 3).uniform(0.0, jitter, size=points.size)
        points = points + offsets * 3.0 ** -depth
    return PointCloud(points.reshape(-1, 1))


def symmetric_stable(alpha, size, rng):
    """
    Symmetric alpha-stable draws (beta = 0, unit scale) by Chambers-Mallows-Stuck.
    alpha = 2 gives a Gaussian with variance 2; alpha = 1 gives a standard Cauchy.
    """
    u = rng.uniform(-math.pi / 2, math.pi / 2, size=size)
    e = rng.standard_exponential(size=size)
    if alpha == 1:
        return np.tan(u)
    return (np.sin(alpha * u) / np.cos(u) ** (1.0 / alpha)
            * (np.cos(u - alpha * u) / e) ** ((1.0 - alpha) / alpha))


def levy_increments(config):
    """(n_steps, d) increments; coordinate j always comes from stream (seed, 4, j)."""
    columns = [symmetric_stable(config.alpha, config.n_steps, counter_rng(config.seed, 4, j))
               for j in range(config.d)]
    return config.step_scale * np.column_stack(columns)


def gen_levy(config):
    """Positions (cumulative sums of the increments) of a d-dimensional alpha-stable Levy walk."""
    positions = np.cumsum(levy_increments(config), axis=0)
    logging.info(f"Generated Levy path: alpha={config.alpha}, d={config.d}, steps={config.n_steps}, "
                 f"seed={config.seed}")
    return PointCloud(positions)


GENERATORS = ("segment", "square", "cantor", "levy")
