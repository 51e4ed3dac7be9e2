"""CART regression trees and a bagged Random Forest with in-bag bookkeeping.

Trees are stored as flat node arrays (one row per tree in the forest) so the
growing, prediction and permutation-importance kernels can all run in numba.
A node with ``feature == -1`` is a leaf; internal nodes send ``x[f] <= thr``
to the left child.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .dataset import CompleteDataset

LEAF = -1


@dataclass(frozen=True)
class ForestConfig:
    ntree: int = 100
    mtry: int | None = None
    nodesize: int = 5
    sample_with_replacement: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.ntree < 1:
            raise ValueError(f"ntree must be >= 1, got {self.ntree}")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError(f"mtry must be >= 1, got {self.mtry}")
        if self.nodesize < 1:
            raise ValueError(f"nodesize must be >= 1, got {self.nodesize}")

    def resolve_mtry(self, p: int) -> int:
        mtry = max(1, p // 3) if self.mtry is None else self.mtry
        if mtry > p:
            raise ValueError(f"mtry={mtry} exceeds the number of features p={p}")
        return mtry


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _grow(X, y, idx, mtry, nodesize, rng, feat, thr, left, right, value):
    """Grow one tree on the bootstrap rows ``idx`` (with multiplicity).

    Returns the number of nodes written into the node arrays.
    """
    p = X.shape[1]
    m = idx.shape[0]
    features = np.arange(p)
    cand = np.empty(mtry, np.int64)
    xs = np.empty(m, np.float64)
    ys = np.empty(m, np.float64)
    buf = np.empty(m, np.int64)

    stack_node = np.empty(m + 1, np.int64)
    stack_start = np.empty(m + 1, np.int64)
    stack_end = np.empty(m + 1, np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        s = stack_start[top]
        e = stack_end[top]
        cnt = e - s

        total = 0.0
        for i in range(s, e):
            total += y[idx[i]]
        mean = total / cnt
        value[node] = mean
        feat[node] = -1
        left[node] = -1
        right[node] = -1

        if cnt < 2 * nodesize:
            continue
        y0 = y[idx[s]]
        constant = True
        for i in range(s + 1, e):
            if y[idx[i]] != y0:
                constant = False
                break
        if constant:
            continue

        # partial Fisher-Yates over a fresh feature order
        for i in range(p):
            features[i] = i
        for i in range(mtry):
            r = rng.integers(i, p)
            tmp = features[i]
            features[i] = features[r]
            features[r] = tmp
        for i in range(mtry):
            cand[i] = features[i]
        cand.sort()

        best_gain = -1.0
        best_f = -1
        best_thr = 0.0
        for ci in range(mtry):
            f = cand[ci]
            for i in range(cnt):
                xs[i] = X[idx[s + i], f]
            order = np.argsort(xs[:cnt], kind="mergesort")
            for i in range(cnt):
                ys[i] = y[idx[s + order[i]]] - mean
            cum = 0.0
            for i in range(1, cnt - nodesize + 1):
                cum += ys[i - 1]
                if i < nodesize:
                    continue
                lo = xs[order[i - 1]]
                hi = xs[order[i]]
                if lo == hi:
                    continue
                # centred sums: sl + sr == 0 up to rounding
                gain = cum * cum / i + cum * cum / (cnt - i)
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    mid = 0.5 * (lo + hi)
                    if mid >= hi:
                        mid = lo
                    best_thr = mid
        if best_f < 0:
            continue

        # stable partition of idx[s:e]
        nl = 0
        for i in range(s, e):
            if X[idx[i], best_f] <= best_thr:
                buf[nl] = idx[i]
                nl += 1
        k = nl
        for i in range(s, e):
            if X[idx[i], best_f] > best_thr:
                buf[k] = idx[i]
                k += 1
        for i in range(cnt):
            idx[s + i] = buf[i]

        feat[node] = best_f
        thr[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # right pushed first so the left subtree is expanded first
        stack_node[top] = rc
        stack_start[top] = s + nl
        stack_end[top] = e
        top += 1
        stack_node[top] = lc
        stack_start[top] = s
        stack_end[top] = s + nl
        top += 1

    return n_nodes


@numba.njit(cache=True)
def _fit(X, y, ntree, mtry, nodesize, replace, rng):
    n = X.shape[0]
    max_nodes = 2 * n - 1
    feat = np.full((ntree, max_nodes), -1, np.int64)
    thr = np.zeros((ntree, max_nodes), np.float64)
    left = np.full((ntree, max_nodes), -1, np.int64)
    right = np.full((ntree, max_nodes), -1, np.int64)
    value = np.zeros((ntree, max_nodes), np.float64)
    n_nodes = np.zeros(ntree, np.int64)
    inbag = np.zeros((ntree, n), np.int64)
    idx = np.empty(n, np.int64)
    for t in range(ntree):
        if replace:
            for i in range(n):
                r = rng.integers(0, n)
                inbag[t, r] += 1
        else:
            for i in range(n):
                inbag[t, i] = 1
        k = 0
        for i in range(n):
            for _ in range(inbag[t, i]):
                idx[k] = i
                k += 1
        n_nodes[t] = _grow(
            X, y, idx, mtry, nodesize, rng, feat[t], thr[t], left[t], right[t], value[t]
        )
    return feat, thr, left, right, value, n_nodes, inbag


@numba.njit(cache=True, inline="always")
def _route(feat, thr, left, right, value, x):
    node = 0
    while feat[node] >= 0:
        if x[feat[node]] <= thr[node]:
            node = left[node]
        else:
            node = right[node]
    return value[node]


@numba.njit(cache=True, inline="always")
def _route_swapped(feat, thr, left, right, value, x, j, xj):
    node = 0
    while feat[node] >= 0:
        f = feat[node]
        v = xj if f == j else x[f]
        if v <= thr[node]:
            node = left[node]
        else:
            node = right[node]
    return value[node]


@numba.njit(cache=True)
def _predict(feat, thr, left, right, value, X):
    ntree = feat.shape[0]
    n = X.shape[0]
    out = np.zeros(n, np.float64)
    for i in range(n):
        acc = 0.0
        for t in range(ntree):
            acc += _route(feat[t], thr[t], left[t], right[t], value[t], X[i])
        out[i] = acc / ntree
    return out


@numba.njit(cache=True)
def _predict_oob(feat, thr, left, right, value, inbag, X):
    """Average over trees for which the row is out-of-bag; NaN if never OOB."""
    ntree = feat.shape[0]
    n = X.shape[0]
    out = np.full(n, np.nan)
    for i in range(n):
        acc = 0.0
        cnt = 0
        for t in range(ntree):
            if inbag[t, i] == 0:
                acc += _route(feat[t], thr[t], left[t], right[t], value[t], X[i])
                cnt += 1
        if cnt > 0:
            out[i] = acc / cnt
    return out


@numba.njit(cache=True)
def _tree_importance(feat, thr, left, right, value, inbag, X, y, j, rng):
    """OOB squared-error increase of one tree after permuting feature ``j``.

    NaN signals an empty OOB set; the caller turns that into an error.
    """
    n = X.shape[0]
    g = 0
    for i in range(n):
        if inbag[i] == 0:
            g += 1
    if g == 0:
        return np.nan
    used = False
    for k in range(feat.shape[0]):
        if feat[k] == j:
            used = True
            break
    if not used:
        return 0.0
    oob = np.empty(g, np.int64)
    k = 0
    for i in range(n):
        if inbag[i] == 0:
            oob[k] = i
            k += 1
    vals = np.empty(g, np.float64)
    for k in range(g):
        vals[k] = X[oob[k], j]
    for k in range(g - 1, 0, -1):
        r = rng.integers(0, k + 1)
        tmp = vals[k]
        vals[k] = vals[r]
        vals[r] = tmp
    acc = 0.0
    for k in range(g):
        i = oob[k]
        base = y[i] - _route(feat, thr, left, right, value, X[i])
        perm = y[i] - _route_swapped(feat, thr, left, right, value, X[i], j, vals[k])
        acc += perm * perm - base * base
    return acc / g


@numba.njit(cache=True)
def _importance_matrix(feat, thr, left, right, value, inbag, X, y, rng):
    ntree = feat.shape[0]
    p = X.shape[1]
    out = np.empty((ntree, p), np.float64)
    for t in range(ntree):
        for j in range(p):
            out[t, j] = _tree_importance(
                feat[t], thr[t], left[t], right[t], value[t], inbag[t], X, y, j, rng
            )
    return out


# ---------------------------------------------------------------------------
# Python surface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    inbag_counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(_route(self.feature, self.threshold, self.left, self.right, self.value, x))

    def split_features(self) -> set[int]:
        return {int(f) for f in self.feature if f != LEAF}


@dataclass(frozen=True)
class Forest:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_nodes: np.ndarray
    inbag: np.ndarray
    config: ForestConfig
    p: int
    mtry: int = field(default=0)

    @property
    def ntree(self) -> int:
        return self.feature.shape[0]

    @property
    def trees(self) -> list[Tree]:
        return [self.tree(t) for t in range(self.ntree)]

    def tree(self, t: int) -> Tree:
        self._check_tree(t)
        k = int(self.n_nodes[t])
        return Tree(
            self.feature[t, :k],
            self.threshold[t, :k],
            self.left[t, :k],
            self.right[t, :k],
            self.value[t, :k],
            self.inbag[t],
        )

    def _check_tree(self, t: int) -> None:
        if not 0 <= t < self.ntree:
            raise IndexError(f"tree index {t} out of range for a forest of {self.ntree} trees")

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _predict(self.feature, self.threshold, self.left, self.right, self.value, X)

    def predict_oob(self, X) -> np.ndarray:
        """OOB predictions for the training rows; NaN where a row was never OOB."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _predict_oob(
            self.feature, self.threshold, self.left, self.right, self.value, self.inbag, X
        )

    def oob_indices(self, t: int) -> np.ndarray:
        self._check_tree(t)
        return np.flatnonzero(self.inbag[t] == 0)

    def leaf_sizes(self, t: int, X) -> np.ndarray:
        """In-bag row counts (with multiplicity) of every leaf of tree ``t``."""
        tree = self.tree(t)
        X = np.asarray(X, dtype=np.float64)
        counts = np.zeros(tree.n_nodes, np.int64)
        for i in np.flatnonzero(tree.inbag_counts):
            node = 0
            while tree.feature[node] != LEAF:
                f = tree.feature[node]
                node = tree.left[node] if X[i, f] <= tree.threshold[node] else tree.right[node]
            counts[node] += tree.inbag_counts[i]
        return counts[tree.feature == LEAF]


def fit_forest(data: CompleteDataset, cfg: ForestConfig) -> Forest:
    X = np.ascontiguousarray(data.features, dtype=np.float64)
    y = np.ascontiguousarray(data.response, dtype=np.float64)
    return fit_arrays(X, y, cfg)


def fit_arrays(X: np.ndarray, y: np.ndarray, cfg: ForestConfig) -> Forest:
    n, p = X.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows to grow a forest, got {n}")
    mtry = cfg.resolve_mtry(p)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    feat, thr, left, right, value, n_nodes, inbag = _fit(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        cfg.ntree,
        mtry,
        cfg.nodesize,
        cfg.sample_with_replacement,
        rng,
    )
    # trim the node arrays to the largest tree
    k = int(n_nodes.max())
    return Forest(
        feat[:, :k].copy(),
        thr[:, :k].copy(),
        left[:, :k].copy(),
        right[:, :k].copy(),
        value[:, :k].copy(),
        n_nodes,
        inbag,
        cfg,
        p,
        mtry,
    )


def predict_tree(tree: Tree, x) -> float:
    return tree.predict(x)


def oob_indices(forest: Forest, t: int) -> np.ndarray:
    return forest.oob_indices(t)
