"""Chained-equation imputation with predictive mean matching.

Two imputers share the same skeleton: start every missing cell from a random
observed value of its column, then sweep the incomplete columns in index order,
model each on all other (currently completed) columns and fill its missing
cells by drawing a donor among the observed rows with the closest predictions.

``PMM_CHAINED`` uses a least-squares fit on a bootstrap resample of the
observed rows (this is what makes the R imputations differ in their model
parameters). ``RF_CHAINED`` uses a Random Forest and its OOB predictions for
the donors, and produces a single imputation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from ._rng import draw_seed, stream
from .dataset import CompleteDataset, IncompleteDataset
from .forest import ForestConfig, fit_arrays

log = logging.getLogger(__name__)


class ImputationError(ValueError):
    pass


class ImputeMethod(str, Enum):
    PMM_CHAINED = "PMM_CHAINED"
    RF_CHAINED = "RF_CHAINED"


_DEFAULT_MAXIT = {ImputeMethod.PMM_CHAINED: 5, ImputeMethod.RF_CHAINED: 10}


@dataclass(frozen=True)
class ImputerConfig:
    method: ImputeMethod = ImputeMethod.PMM_CHAINED
    R: int = 5
    maxit: int | None = None
    pmm_k: int = 5
    rf_trees: int = 200
    rf_nodesize: int = 5
    include_response: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", ImputeMethod(self.method))
        if self.R < 1:
            raise ValueError(f"R must be >= 1, got {self.R}")
        if self.pmm_k < 1:
            raise ValueError(f"pmm_k must be >= 1, got {self.pmm_k}")
        if self.maxit is not None and self.maxit < 1:
            raise ValueError(f"maxit must be >= 1, got {self.maxit}")
        if self.rf_trees < 1:
            raise ValueError(f"rf_trees must be >= 1, got {self.rf_trees}")

    @property
    def sweeps(self) -> int:
        return _DEFAULT_MAXIT[self.method] if self.maxit is None else self.maxit


@dataclass(frozen=True)
class ImputationSet:
    completed: list[CompleteDataset]
    source_mask: np.ndarray

    @property
    def R(self) -> int:
        return len(self.completed)


def pmm_match(pred_missing: float, preds_obs, values_obs, k: int, rng: np.random.Generator) -> float:
    """Draw one donor value among the ``k`` observed rows with the closest predictions.

    Ties in distance go to the lower row index.
    """
    return float(pmm_match_many(np.array([pred_missing]), preds_obs, values_obs, k, rng)[0])


def pmm_match_many(preds_missing, preds_obs, values_obs, k: int, rng: np.random.Generator):
    preds_missing = np.asarray(preds_missing, dtype=np.float64)
    preds_obs = np.asarray(preds_obs, dtype=np.float64)
    values_obs = np.asarray(values_obs, dtype=np.float64)
    if len(preds_obs) == 0:
        raise ImputationError("empty donor pool")
    if len(preds_obs) != len(values_obs):
        raise ValueError("preds_obs and values_obs differ in length")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    k = min(k, len(preds_obs))
    dist = np.abs(preds_obs[None, :] - preds_missing[:, None])
    # stable sort keeps lower row indices first among equal distances
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
    pick = rng.integers(0, k, size=len(preds_missing))
    return values_obs[nearest[np.arange(len(preds_missing)), pick]]


def _check_columns(ds: IncompleteDataset, cfg: ImputerConfig) -> None:
    needed = max(cfg.pmm_k + 1, 5)
    observed = ds.mask.sum(axis=0)
    for j in range(ds.p):
        if observed[j] == 0:
            raise ImputationError(f"column {ds.columns[j]!r} is entirely missing")
        if observed[j] < ds.n and observed[j] < needed:
            raise ImputationError(
                f"column {ds.columns[j]!r} has {observed[j]} observed values, need {needed}"
            )


def _initial_fill(ds: IncompleteDataset, rng: np.random.Generator) -> np.ndarray:
    X = np.array(ds.features)
    for j in range(ds.p):
        miss = ~ds.mask[:, j]
        if miss.any():
            X[miss, j] = rng.choice(ds.observed_values(j), size=int(miss.sum()))
    return X


def _predictors(X, j, ds, cfg):
    others = np.delete(X, j, axis=1)
    if cfg.include_response:
        others = np.column_stack([others, ds.response])
    return np.ascontiguousarray(others)


def _impute_pmm_once(ds: IncompleteDataset, cfg: ImputerConfig, rng: np.random.Generator):
    X = _initial_fill(ds, rng)
    n = ds.n
    incomplete = [j for j in range(ds.p) if not ds.mask[:, j].all()]
    for _ in range(cfg.sweeps):
        for j in incomplete:
            obs = ds.mask[:, j]
            design = np.column_stack([np.ones(n), _predictors(X, j, ds, cfg)])
            obs_rows = np.flatnonzero(obs)
            boot = rng.choice(obs_rows, size=len(obs_rows), replace=True)
            beta, *_ = np.linalg.lstsq(design[boot], X[boot, j], rcond=None)
            pred = design @ beta
            X[~obs, j] = pmm_match_many(pred[~obs], pred[obs], X[obs, j], cfg.pmm_k, rng)
    return X


def _rf_column_predictions(X, j, obs, ds, cfg, rng):
    predictors = _predictors(X, j, ds, cfg)
    fcfg = ForestConfig(
        ntree=cfg.rf_trees,
        mtry=max(1, int(math.floor(math.sqrt(predictors.shape[1])))),
        nodesize=cfg.rf_nodesize,
        seed=draw_seed(rng),
    )
    forest = fit_arrays(predictors[obs], X[obs, j], fcfg)
    donors = forest.predict_oob(predictors[obs])
    never_oob = np.isnan(donors)
    if never_oob.any():
        donors[never_oob] = forest.predict(predictors[obs][never_oob])
    return donors, forest.predict(predictors[~obs])


def _impute_rf(ds: IncompleteDataset, cfg: ImputerConfig, rng: np.random.Generator):
    X = _initial_fill(ds, rng)
    incomplete = [j for j in range(ds.p) if not ds.mask[:, j].all()]
    previous_change = math.inf
    for sweep in range(cfg.sweeps):
        before = X.copy()
        for j in incomplete:
            obs = ds.mask[:, j]
            donors, targets = _rf_column_predictions(X, j, obs, ds, cfg, rng)
            X[~obs, j] = pmm_match_many(targets, donors, X[obs, j], cfg.pmm_k, rng)
        change = float(np.abs(X - before)[~ds.mask].sum())
        if change > previous_change:
            log.debug("RF imputation stopped after %d sweeps", sweep + 1)
            return before
        previous_change = change
    return X


def _pmm_chained(ds: IncompleteDataset, cfg: ImputerConfig) -> list[np.ndarray]:
    return [_impute_pmm_once(ds, cfg, stream(cfg.seed, r)) for r in range(cfg.R)]


def _rf_chained(ds: IncompleteDataset, cfg: ImputerConfig) -> list[np.ndarray]:
    return [_impute_rf(ds, cfg, stream(cfg.seed, 0))]


# extension point: further imputers map a config to R completed feature matrices
IMPUTERS: dict[ImputeMethod, Callable[[IncompleteDataset, ImputerConfig], list[np.ndarray]]] = {
    ImputeMethod.PMM_CHAINED: _pmm_chained,
    ImputeMethod.RF_CHAINED: _rf_chained,
}


def impute(incomplete: IncompleteDataset, cfg: ImputerConfig) -> ImputationSet:
    if incomplete.is_complete():
        R = cfg.R if cfg.method is ImputeMethod.PMM_CHAINED else 1
        done = incomplete.to_complete()
        return ImputationSet([done] * R, incomplete.mask)
    _check_columns(incomplete, cfg)
    matrices = IMPUTERS[cfg.method](incomplete, cfg)
    # observed cells are copied back bit-exactly
    completed = [incomplete.fill(X) for X in matrices]
    return ImputationSet(completed, incomplete.mask)

