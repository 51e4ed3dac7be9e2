"""Rubin's-rule combination of per-imputation importance estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .importance import normal_interval


@dataclass(frozen=True)
class PooledEstimate:
    mean_point: float
    within_var: float
    between_var: float
    total_var: float
    R: int


def pool(points, variances) -> PooledEstimate:
    """Pool R (point, variance) pairs.

    total = mean(variances) + (1 + 1/R) * var(points, ddof=1)
    """
    points = np.asarray(points, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    if points.shape != variances.shape or points.ndim != 1:
        raise ValueError("points and variances must be 1-d arrays of equal length")
    R = len(points)
    if R < 2:
        raise ValueError("between-imputation variance undefined for R < 2")
    if np.any(variances < 0):
        raise ValueError("variances must be non-negative")
    mean = float(np.mean(points))
    within = float(np.mean(variances))
    between = float(np.sum((points - mean) ** 2) / (R - 1))
    return PooledEstimate(mean, within, between, within + (1 + 1 / R) * between, R)


def rubin_ci(est: PooledEstimate, alpha: float) -> tuple[float, float]:
    # z-quantile, no t degrees-of-freedom correction
    return normal_interval(est.mean_point, est.total_var, alpha)
