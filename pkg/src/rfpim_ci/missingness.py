"""MCAR and MAR amputation of complete datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import CompleteDataset, IncompleteDataset


class Mechanism(str, Enum):
    MCAR = "MCAR"
    MAR = "MAR"


# x2 in the 1-based feature naming
DEFAULT_COND_FEATURE = 1


@dataclass(frozen=True)
class AmputationSpec:
    mechanism: Mechanism = Mechanism.MCAR
    rate: float = 0.1
    cond_feature: int = DEFAULT_COND_FEATURE

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        _check_rate(self.rate)

    def apply(self, data: CompleteDataset, rng: np.random.Generator) -> IncompleteDataset:
        if self.mechanism is Mechanism.MCAR:
            return ampute_mcar(data, self.rate, rng)
        return ampute_mar(data, self.rate, self.cond_feature, rng)


def _check_rate(rate: float) -> None:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"missing rate must lie in [0, 1), got {rate}")


def round_half_up(x: float) -> int:
    """Round half away from zero (for the non-negative counts used here)."""
    return int(math.floor(x + 0.5))


def _mask_columns(mask, columns, rows, count, rng):
    for k in columns:
        mask[rng.choice(rows, size=count, replace=False), k] = False


def ampute_mcar(data: CompleteDataset, rate: float, rng: np.random.Generator) -> IncompleteDataset:
    """Mask exactly ``round(rate * n)`` uniformly chosen cells in every column."""
    _check_rate(rate)
    mask = np.ones(data.features.shape, bool)
    count = round_half_up(rate * data.n)
    _mask_columns(mask, range(data.p), np.arange(data.n), count, rng)
    return IncompleteDataset(data.features, data.response, mask, data.columns, data.target)


def mar_candidates(data: CompleteDataset, cond_feature: int) -> np.ndarray:
    x = data.features[:, cond_feature]
    return np.flatnonzero(x < np.median(x))


def ampute_mar(
    data: CompleteDataset,
    rate: float,
    cond_feature: int,
    rng: np.random.Generator,
) -> IncompleteDataset:
    """Mask cells among rows whose ``cond_feature`` value is below its median.

    Each column other than ``cond_feature`` gets ``round(rate * |candidates|)``
    masked cells; with no candidate rows the columns fall back to MCAR.
    """
    _check_rate(rate)
    if not 0 <= cond_feature < data.p:
        raise IndexError(f"cond_feature {cond_feature} out of range for p={data.p}")
    mask = np.ones(data.features.shape, bool)
    others = [k for k in range(data.p) if k != cond_feature]
    candidates = mar_candidates(data, cond_feature)
    if len(candidates) == 0:
        candidates = np.arange(data.n)
    count = round_half_up(rate * len(candidates))
    _mask_columns(mask, others, candidates, count, rng)
    return IncompleteDataset(data.features, data.response, mask, data.columns, data.target)
