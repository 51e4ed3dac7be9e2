"""The twelve regression generators, noise-feature padding and ground truth.

Feature indices are 0-based here (``x[:, 0]`` is x1).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._rng import draw_seed
from .dataset import CompleteDataset
from .forest import ForestConfig, fit_forest

GENERATORS = tuple(range(1, 13))

# 0-based indices of the features each regression function actually uses
SIGNAL_FEATURES: dict[int, tuple[int, ...]] = {
    1: (0, 1, 2, 3, 4),
    2: (0, 1, 2, 3),
    3: (0, 1, 2, 3),
    4: (0, 1, 2, 3, 5, 6, 7, 9),
    5: (0, 1, 3, 5, 7, 8, 9),
    6: (0, 1, 2, 3, 5, 7),
    7: (0, 1, 3, 7, 8),
    8: (0, 1, 2, 3, 4, 5),
    9: (0, 1, 2, 3, 4, 5),
    10: (0, 1, 2, 3, 4, 5),
    11: (0, 1, 2),
    12: (),
}

# standard deviation of the additive error
NOISE_SD = {1: 1.0, 2: 125.0, 12: 1.0}
_DEFAULT_SD = 0.1

# (low, high) of the uniform feature law; None means standard normal
_AMBIENT = {
    1: (0.0, 1.0),
    2: (0.0, 1.0),
    3: (0.0, 1.0),
    8: (0.5, 1.0),
    12: None,
}
_SIGNED = (-1.0, 1.0)
# per-feature overrides shared by Functions 2 and 3
_RADIAL = {0: (0.0, 100.0), 1: (40 * np.pi, 560 * np.pi), 2: (0.0, 1.0), 3: (1.0, 11.0)}


def _check_gen(gen: int) -> None:
    if gen not in SIGNAL_FEATURES:
        raise ValueError(f"generator id must be in 1..12, got {gen}")


def arity(gen: int) -> int:
    """Number of leading columns the regression function may read."""
    _check_gen(gen)
    used = SIGNAL_FEATURES[gen]
    return max(used) + 1 if used else 0


def noise_features(gen: int, p: int) -> list[int]:
    used = set(SIGNAL_FEATURES[gen])
    return [j for j in range(p) if j not in used]


def support(gen: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature (low, high) bounds; infinite for normal features."""
    _check_gen(gen)
    law = _AMBIENT.get(gen, _SIGNED)
    if law is None:
        return np.full(p, -np.inf), np.full(p, np.inf)
    low, high = np.full(p, law[0]), np.full(p, law[1])
    if gen in (2, 3):
        for j, (a, b) in _RADIAL.items():
            if j < p:
                low[j], high[j] = a, b
    return low, high


def _regression(gen: int, x: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4, x5, x6, x7, x8, x9, x10 = (
        x[:, j] if j < x.shape[1] else None for j in range(10)
    )
    if gen == 1:
        return 10 * np.sin(np.pi * x1 * x2) + 20 * (x3 - 0.5) ** 2 + 10 * x4 + 5 * x5
    if gen == 2:
        return np.sqrt(x1**2 + (x2 * x3 - 1 / (x2 * x4)) ** 2)
    if gen == 3:
        with np.errstate(divide="ignore"):
            return np.arctan((x2 * x3 - 1 / (x2 * x4)) / x1)
    if gen == 4:
        return x1 * x2 + x3**2 + x4 * x7 + x8 * x10 - x6**2
    if gen == 5:
        return (
            (x1 > 0).astype(float)
            + x2**3
            + (x4 + x6 - x8 - x9 > 1 + x10).astype(float)
            + np.exp(-(x2**2))
        )
    if gen == 6:
        return x1**2 + 3 * x2**2 * x3 * np.exp(-np.abs(x4)) + x6 - x8
    if gen == 7:
        return (x1 + x4**3 + x9 + np.sin(x2 * x8) > 0.38).astype(float)
    if gen == 8:
        return np.log(x1 + x2 * x3) - np.exp(x4 / x5 - x6)
    if gen == 9:
        return x1 * x2**2 * np.sqrt(np.abs(x3)) + np.floor(x4 - x5 * x6)
    if gen == 10:
        return x3 * (x1 + 1) ** np.abs(x2) - np.sqrt(x5**2 / (np.abs(x4) + np.abs(x5) + np.abs(x6)))
    if gen == 11:
        return np.cos(x1 - x2) + np.arcsin(x1 * x3) - np.arctan(x2 - x3**2)
    return np.zeros(x.shape[0])


def true_regression(gen: int, x) -> float:
    """Noiseless regression value at a single point.

    For Function 7 this is the indicator evaluated without the error term.
    """
    x = np.asarray(x, dtype=np.float64)
    low, high = support(gen, x.shape[0])
    if x.shape[0] < arity(gen):
        raise ValueError(f"Function {gen} needs at least {arity(gen)} features")
    if np.any(x < low) or np.any(x > high):
        raise ValueError(f"input outside the support of Function {gen}")
    return float(_regression(gen, x[None, :])[0])


def generate(gen: int, n: int, p: int, rng: np.random.Generator) -> CompleteDataset:
    _check_gen(gen)
    if p < arity(gen):
        raise ValueError(f"Function {gen} needs p >= {arity(gen)}, got p={p}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if _AMBIENT.get(gen, _SIGNED) is None:
        X = rng.standard_normal((n, p))
    else:
        low, high = support(gen, p)
        X = low + (high - low) * rng.random((n, p))
    eps = rng.normal(0.0, NOISE_SD.get(gen, _DEFAULT_SD), size=n)
    if gen == 7:
        x = X
        latent = x[:, 0] + x[:, 3] ** 3 + x[:, 8] + np.sin(x[:, 1] * x[:, 7]) + eps
        y = (latent > 0.38).astype(float)
    else:
        y = _regression(gen, X) + eps
    return CompleteDataset(X, y)


@dataclass(frozen=True)
class GroundTruth:
    scores: np.ndarray
    generator: int
    n_ref: int
    reps: int
    seed: int = 0

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


def _one_truth_rep(gen, n_ref, p, forest_cfg, rng):
    from .importance import rfpim_all

    data = generate(gen, n_ref, p, rng)
    forest = fit_forest(data, replace(forest_cfg, seed=draw_seed(rng)))
    return rfpim_all(forest, data, rng)


def ground_truth_importance(
    gen: int,
    n_ref: int,
    reps: int,
    forest_cfg: ForestConfig,
    rng: np.random.Generator,
    p: int = 20,
    n_jobs: int = 1,
) -> GroundTruth:
    """Average full-forest permutation importance over ``reps`` fresh datasets.

    Noise features are set to exactly zero rather than estimated.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    children = rng.spawn(reps)
    if n_jobs == 1:
        rows = [_one_truth_rep(gen, n_ref, p, forest_cfg, c) for c in children]
    else:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=n_jobs)(
            delayed(_one_truth_rep)(gen, n_ref, p, forest_cfg, c) for c in children
        )
    scores = np.mean(np.vstack(rows), axis=0)
    scores[noise_features(gen, p)] = 0.0
    return GroundTruth(scores, gen, n_ref, reps)
