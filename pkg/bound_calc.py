#!/usr/bin/env python3
"""
Generalisation bound driven by the magnitude dimension, and the effective number of models.

    bound = 2C * sqrt( (dim + 1) * ln(n K^2)^2 / n + ln(7 M / gamma) / n )

All logarithms are natural. C, K and M are user-supplied; nothing here estimates them.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np

from errors import InvalidInputs, OutOfRange
from magnitude_engine import magnitude_at

# Cross-section scales used for the effective number of models.
DEFAULT_SCALES = (1.36, 6.78, 16.95, 30.51)


@dataclass(frozen=True)
class BoundInputs:
    dim: float
    n: int
    C: float
    K: float
    M: float = 1.0
    gamma: float = 0.05

    def __post_init__(self):
        for name in ("dim", "C", "K", "M", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputs(f"{name} must be finite, got {getattr(self, name)}")
        if self.dim < 0:
            raise InvalidInputs(f"dim must be >= 0, got {self.dim}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputs(f"n must be an integer >= 1, got {self.n}")
        if self.C <= 0 or self.K <= 0:
            raise InvalidInputs(f"C and K must be positive, got C={self.C}, K={self.K}")
        if self.M < 1:
            raise InvalidInputs(f"M must be >= 1, got {self.M}")
        if not 0 < self.gamma < 1:
            raise InvalidInputs(f"gamma must lie in (0, 1), got {self.gamma}")


def generalisation_bound(inputs):
    """Evaluate the bound for any n >= 1; the guarantee itself only holds for large n."""
    n = float(inputs.n)
    nk2 = n * inputs.K ** 2
    if nk2 <= 1:
        logging.warning(f"n*K^2 = {nk2:.6g} <= 1: the log^2 term is evaluated as written but is not meaningful")
    log_term = (inputs.dim + 1.0) * math.log(nk2) ** 2 / n
    confidence_term = math.log(7.0 * inputs.M / inputs.gamma) / n
    value = 2.0 * inputs.C * math.sqrt(log_term + confidence_term)
    logging.info(f"Bound for dim={inputs.dim}, n={inputs.n}: {value:.12g} (asymptotic guarantee, valid for large n)")
    return value


def effective_models(curve, t, exact=False, distances=None):
    """
    Magnitude at scale t read off a sampled curve: the sample nearest to t in log space.
    With exact=True and the space's distances, the magnitude is re-solved at t itself.
    """
    t = float(t)
    ts = curve.ts
    if len(ts) == 0:
        raise OutOfRange("curve has no samples")
    if not (math.isfinite(t) and ts[0] <= t <= ts[-1]):
        raise OutOfRange(f"scale {t} lies outside the sampled range [{ts[0]:.6g}, {ts[-1]:.6g}]")
    if exact:
        if distances is None:
            raise InvalidInputs("exact evaluation needs the distance matrix of the space")
        _, value = magnitude_at(distances, t)
        return value
    nearest = int(np.argmin(np.abs(np.log(ts) - math.log(t))))
    logging.debug(f"Effective models at t={t:.6g}: nearest sample t={ts[nearest]:.6g}")
    return float(curve.values[nearest])
