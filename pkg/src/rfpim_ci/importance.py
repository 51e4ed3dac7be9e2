"""OOB permutation importance, delete-d jackknife variance and normal CIs."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from statistics import NormalDist

import numpy as np

from ._rng import draw_seed
from .dataset import CompleteDataset
from .forest import Forest, ForestConfig, _importance_matrix, _tree_importance, fit_forest


class EmptyOOBError(ValueError):
    """A tree (or every tree of a forest) has no out-of-bag rows."""


@dataclass(frozen=True)
class ImportanceEstimate:
    feature: int
    point: float
    variance: float
    ci_lower: float
    ci_upper: float
    alpha: float
    K: int
    b: int


def _arrays(data: CompleteDataset):
    return (
        np.ascontiguousarray(data.features, dtype=np.float64),
        np.ascontiguousarray(data.response, dtype=np.float64),
    )


def tree_importance(
    forest: Forest, t: int, j: int, data: CompleteDataset, rng: np.random.Generator
) -> float:
    """Squared-error increase on tree ``t``'s OOB rows after permuting feature ``j``."""
    tree = forest.tree(t)
    if not 0 <= j < forest.p:
        raise IndexError(f"feature {j} out of range for p={forest.p}")
    X, y = _arrays(data)
    value = _tree_importance(
        tree.feature, tree.threshold, tree.left, tree.right, tree.value,
        tree.inbag_counts, X, y, j, rng,
    )
    if math.isnan(value):
        raise EmptyOOBError(f"tree {t} has an empty OOB set")
    return float(value)


def tree_importance_matrix(
    forest: Forest, data: CompleteDataset, rng: np.random.Generator
) -> np.ndarray:
    """(ntree, p) matrix of tree importances; NaN rows mark empty OOB sets."""
    X, y = _arrays(data)
    return _importance_matrix(
        forest.feature, forest.threshold, forest.left, forest.right, forest.value,
        forest.inbag, X, y, rng,
    )


def rfpim_all(forest: Forest, data: CompleteDataset, rng: np.random.Generator) -> np.ndarray:
    """Forest permutation importance of every feature.

    Trees with an empty OOB set are left out of the average.
    """
    per_tree = tree_importance_matrix(forest, data, rng)
    valid = ~np.isnan(per_tree[:, 0])
    if not valid.any():
        raise EmptyOOBError("every tree has an empty OOB set")
    return per_tree[valid].mean(axis=0)


def rfpim(forest: Forest, data: CompleteDataset, j: int, rng: np.random.Generator) -> float:
    values = []
    for t in range(forest.ntree):
        try:
            values.append(tree_importance(forest, t, j, data, rng))
        except EmptyOOBError:
            continue
    if not values:
        raise EmptyOOBError("every tree has an empty OOB set")
    return float(np.mean(values))


def default_subsample_size(n: int) -> int:
    return max(2, int(math.floor(math.sqrt(n) + 0.5)))


def _check_subsample(n: int, b: int, K: int) -> None:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if b < 2:
        raise ValueError(f"subsample size b must be >= 2, got {b}")
    if b >= n:
        raise ValueError(f"subsample size b={b} must be smaller than n={n}")


def jackknife_formula(full, subsample_values, n: int, b: int):
    """Delete-d jackknife variance ``b / ((n - b) K) * sum_k (I_k - I)^2``.

    ``subsample_values`` has the K replicates along its first axis; ``full``
    broadcasts against a single replicate.
    """
    subs = np.asarray(subsample_values, dtype=np.float64)
    K = subs.shape[0]
    _check_subsample(n, b, K)
    dev = subs - np.asarray(full, dtype=np.float64)
    return b / ((n - b) * K) * np.sum(dev * dev, axis=0)


def _subsample_rfpim(data, cfg, b, rng):
    rows = np.sort(rng.choice(data.n, size=b, replace=False))
    sub = data.subset(rows)
    forest = fit_forest(sub, replace(cfg, seed=draw_seed(rng)))
    return rfpim_all(forest, sub, rng)


def jackknife(
    data: CompleteDataset,
    cfg: ForestConfig,
    K: int,
    b: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Full-data importances and their delete-d jackknife variances, all features.

    The full-data forest uses ``cfg.seed``; every subsample refits a fresh
    forest with the same settings on its own derived stream.
    """
    _check_subsample(data.n, b, K)
    full = rfpim_all(fit_forest(data, cfg), data, rng)
    children = rng.spawn(K)
    subs = np.vstack([_subsample_rfpim(data, cfg, b, c) for c in children])
    return full, jackknife_formula(full, subs, data.n, b)


def jackknife_variance(
    data: CompleteDataset,
    cfg: ForestConfig,
    j: int,
    K: int,
    b: int,
    rng: np.random.Generator,
) -> float:
    _, variances = jackknife(data, cfg, K, b, rng)
    return float(variances[j])


def z_quantile(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return NormalDist().inv_cdf(1.0 - alpha / 2.0)


def normal_interval(center: float, variance: float, alpha: float) -> tuple[float, float]:
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    half = z_quantile(alpha) * math.sqrt(variance)
    return float(center - half), float(center + half)


def ishwaran_ci(point: float, variance: float, alpha: float) -> tuple[float, float]:
    return normal_interval(point, variance, alpha)


def estimate_importance(
    data: CompleteDataset,
    cfg: ForestConfig,
    rng: np.random.Generator,
    K: int = 100,
    b: int | None = None,
    alpha: float = 0.05,
) -> list[ImportanceEstimate]:
    """Point estimate, jackknife variance and normal CI for every feature."""
    b = default_subsample_size(data.n) if b is None else b
    points, variances = jackknife(data, cfg, K, b, rng)
    out = []
    for j in range(data.p):
        lo, hi = ishwaran_ci(points[j], variances[j], alpha)
        out.append(ImportanceEstimate(j, float(points[j]), float(variances[j]), lo, hi, alpha, K, b))
    return out
