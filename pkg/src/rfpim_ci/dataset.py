"""Tabular data model with an explicit missingness mask, plus CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


MISSING = math.nan


class DataError(ValueError):
    """Input data violates a dataset contract (bad CSV, missing response, ...)."""


def _default_columns(p: int) -> tuple[str, ...]:
    return tuple(f"x{j + 1}" for j in range(p))


@dataclass(frozen=True)
class CompleteDataset:
    features: np.ndarray
    response: np.ndarray
    columns: tuple[str, ...] = ()
    target: str = "y"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.response, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"shape mismatch: features {X.shape}, response {y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("complete dataset contains non-finite values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        if not self.columns:
            object.__setattr__(self, "columns", _default_columns(X.shape[1]))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> CompleteDataset:
        rows = np.asarray(rows)
        return CompleteDataset(self.features[rows], self.response[rows], self.columns, self.target)

    def as_incomplete(self) -> IncompleteDataset:
        return IncompleteDataset(
            self.features, self.response, np.ones(self.features.shape, bool), self.columns, self.target
        )


@dataclass(frozen=True)
class IncompleteDataset:
    """Features with a boolean mask (``True`` = observed).

    Masked cells hold NaN. That value is a sentinel only: numeric code must go
    through :meth:`observed_values` or an imputer, never read it directly.
    """

    features: np.ndarray
    response: np.ndarray
    mask: np.ndarray
    columns: tuple[str, ...] = ()
    target: str = "y"

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.asarray(self.response, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if X.ndim != 2 or mask.shape != X.shape:
            raise ValueError(f"mask shape {mask.shape} does not match features {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"response shape {y.shape} does not match {X.shape[0]} rows")
        if not np.all(np.isfinite(y)):
            raise DataError("missing response: the response may not contain missing values")
        if not np.all(np.isfinite(X[mask])):
            raise ValueError("observed cells must be finite")
        X[~mask] = MISSING
        X.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "mask", mask)
        if not self.columns:
            object.__setattr__(self, "columns", _default_columns(X.shape[1]))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def observed_values(self, j: int) -> np.ndarray:
        return self.features[self.mask[:, j], j]

    def is_complete(self) -> bool:
        return bool(self.mask.all())

    def to_complete(self) -> CompleteDataset:
        if not self.is_complete():
            raise DataError(f"dataset has {int((~self.mask).sum())} missing cells")
        return CompleteDataset(self.features, self.response, self.columns, self.target)

    def fill(self, values: np.ndarray) -> CompleteDataset:
        """Complete the dataset with ``values`` in the masked cells only."""
        X = np.where(self.mask, self.features, values)
        return CompleteDataset(X, self.response, self.columns, self.target)


def missing_rate(ds: IncompleteDataset) -> float:
    return float((~ds.mask).sum()) / ds.mask.size


def complete_cases(ds: IncompleteDataset) -> list[int]:
    return [int(i) for i in np.flatnonzero(ds.mask.all(axis=1))]


def load_csv(path, target_column: str) -> IncompleteDataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [row for row in reader if row]
    if target_column not in header:
        raise DataError(f"target column {target_column!r} not in header {header}")
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    t = header.index(target_column)
    feature_cols = [j for j in range(len(header)) if j != t]
    if len(rows) < 2 or not feature_cols:
        raise DataError("need at least 2 rows and 1 feature column")

    n, p = len(rows), len(feature_cols)
    X = np.full((n, p), np.nan)
    mask = np.ones((n, p), bool)
    y = np.empty(n)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"line {i + 2}: expected {len(header)} fields, got {len(row)}")
        cell = row[t].strip()
        if cell == "":
            raise DataError(f"missing response in line {i + 2}")
        y[i] = _parse(cell, i, target_column)
        for k, j in enumerate(feature_cols):
            cell = row[j].strip()
            if cell == "":
                mask[i, k] = False
            else:
                X[i, k] = _parse(cell, i, header[j])
    columns = tuple(header[j] for j in feature_cols)
    return IncompleteDataset(X, y, mask, columns, target_column)


def _parse(cell: str, i: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} in column {column!r}, line {i + 2}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite cell {cell!r} in column {column!r}, line {i + 2}")
    return value


def save_csv(ds: IncompleteDataset | CompleteDataset, path) -> None:
    """Write the dataset with the response as the last column; masked cells are blank."""
    mask = getattr(ds, "mask", None)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*ds.columns, ds.target])
        for i in range(ds.n):
            cells = [
                repr(float(ds.features[i, j])) if mask is None or mask[i, j] else ""
                for j in range(ds.p)
            ]
            writer.writerow([*cells, repr(float(ds.response[i]))])
