"""CART regression trees and bagged random forests.

Trees are stored as flat node arrays (``feature``, ``threshold``, ``left``,
``right``, ``value``); a leaf has ``feature == -1``. Growing and prediction
run in numba kernels that release the GIL.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .seeding import derive_seed

LEAF = -1


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters.

    Attributes:
        n_trees: number of bagged trees ``B``.
        min_node_size: smallest number of rows either child of a split may hold.
        mtry: candidate split variables per node; ``None`` means
            ``max(1, d // 3)``, ``"all"`` means every feature.
        bootstrap: resample rows with replacement for every tree.
        seed: base seed; tree ``b`` draws from a stream derived from ``(seed, b)``.
    """

    n_trees: int = 100
    min_node_size: int = 5
    mtry: int | str | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_node_size < 1:
            raise ValueError(f"min_node_size must be >= 1, got {self.min_node_size}")
        if isinstance(self.mtry, str) and self.mtry != "all":
            raise ValueError(f"mtry must be an int, None or 'all', got {self.mtry!r}")
        if isinstance(self.mtry, int) and self.mtry < 1:
            raise ValueError(f"mtry must be >= 1, got {self.mtry}")

    def resolve_mtry(self, n_features):
        if self.mtry is None:
            return max(1, n_features // 3)
        if self.mtry == "all":
            return n_features
        if self.mtry > n_features:
            raise ValueError(f"mtry {self.mtry} exceeds feature count {n_features}")
        return int(self.mtry)

    def replace(self, **changes):
        fields = dict(self.__dict__)
        fields.update(changes)
        return ForestConfig(**fields)


# -- kernels ---------------------------------------------------------------

@numba.njit(cache=True)
def _next_u64(state):
    # xorshift64*
    x = state[0]
    x ^= x >> numba.uint64(12)
    x ^= x << numba.uint64(25)
    x ^= x >> numba.uint64(27)
    state[0] = x
    return x * numba.uint64(2685821657736338717)


@numba.njit(cache=True)
def _pick_features(d, mtry, state, out):
    perm = np.arange(d)
    for i in range(mtry):
        r = i + np.int64(_next_u64(state) % numba.uint64(d - i))
        tmp = perm[i]
        perm[i] = perm[r]
        perm[r] = tmp
    out[:mtry] = np.sort(perm[:mtry])


@numba.njit(cache=True, nogil=True)
def _grow(X, y, mtry, min_node_size, seed):
    n, d = X.shape
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, LEAF, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes)
    state = np.zeros(1, dtype=np.uint64)
    state[0] = numba.uint64(seed) | numba.uint64(1)

    order = np.empty((d, n), dtype=np.int64)
    for f in range(d):
        order[f] = np.argsort(X[:, f], kind="mergesort")
    go_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)
    feats = np.empty(d, dtype=np.int64)

    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_lo = np.empty(max_nodes, dtype=np.int64)
    stack_hi = np.empty(max_nodes, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        cnt = hi - lo

        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(lo, hi):
            v = y[order[0, i]]
            total += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = total / cnt
        if cnt < 2 * min_node_size or ymin == ymax:
            continue

        if mtry >= d:
            for f in range(d):
                feats[f] = f
            n_feats = d
        else:
            _pick_features(d, mtry, state, feats)
            n_feats = mtry

        # maximise sum_l^2/n_l + sum_r^2/n_r, i.e. minimise the children's SSE
        best_score = -np.inf
        best_f = -1
        best_pos = -1
        best_thr = 0.0
        for fi in range(n_feats):
            f = feats[fi]
            sl = 0.0
            for i in range(lo, hi - 1):
                r = order[f, i]
                sl += y[r]
                nl = i - lo + 1
                nr = cnt - nl
                if nl < min_node_size:
                    continue
                if nr < min_node_size:
                    break
                xa = X[r, f]
                xb = X[order[f, i + 1], f]
                if xa == xb:
                    continue
                sr = total - sl
                score = sl * sl / nl + sr * sr / nr
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_pos = i
                    mid = xa + (xb - xa) / 2.0
                    best_thr = mid if mid < xb else xa
        if best_f < 0:
            continue

        for i in range(lo, hi):
            go_left[order[best_f, i]] = i <= best_pos
        for f in range(d):
            a = 0
            b = 0
            for i in range(lo, hi):
                r = order[f, i]
                if go_left[r]:
                    order[f, lo + a] = r
                    a += 1
                else:
                    buf[b] = r
                    b += 1
            for i in range(b):
                order[f, lo + a + i] = buf[i]
        mid_pos = best_pos + 1

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # right pushed first so the left subtree is grown first
        stack_node[top] = n_nodes + 1
        stack_lo[top] = mid_pos
        stack_hi[top] = hi
        top += 1
        stack_node[top] = n_nodes
        stack_lo[top] = lo
        stack_hi[top] = mid_pos
        top += 1
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def _predict(thr, links, roots, X):
    # thr holds split points at inner nodes and leaf values at leaves;
    # links[node] = (feature, left child); the right child is left + 1
    n = X.shape[0]
    out = np.zeros(n)
    n_trees = roots.shape[0]
    for b in range(n_trees):
        root = roots[b]
        for i in range(n):
            node = root
            while True:
                f = links[node, 0]
                if f < 0:
                    break
                node = links[node, 1] if X[i, f] <= thr[node] else links[node, 1] + 1
            out[i] += thr[node]
    return out / n_trees


@numba.njit(cache=True, nogil=True)
def _predict_oob(thr, links, roots, inbag, X):
    n = X.shape[0]
    acc = np.zeros(n)
    cnt = np.zeros(n, dtype=np.int64)
    for b in range(roots.shape[0]):
        root = roots[b]
        for i in range(n):
            if inbag[b, i]:
                continue
            node = root
            while True:
                f = links[node, 0]
                if f < 0:
                    break
                node = links[node, 1] if X[i, f] <= thr[node] else links[node, 1] + 1
            acc[i] += thr[node]
            cnt[i] += 1
    return acc, cnt


def _pack(feature, threshold, left, value):
    thr = np.where(feature == LEAF, value, threshold)
    links = np.ascontiguousarray(np.stack([feature, left], axis=1), dtype=np.int32)
    return thr, links


@numba.njit(cache=True, nogil=True)
def _apply(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


# -- public API ------------------------------------------------------------

@dataclass(frozen=True)
class RegressionTree:
    """A fitted CART tree in flat-array form; node 0 is the root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    @property
    def n_nodes(self):
        return len(self.feature)

    def is_leaf(self, node):
        return self.feature[node] == LEAF

    def leaves(self, X):
        """Index of the leaf each row of ``X`` falls into."""
        X = _as_matrix(X, self.n_features)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X):
        X = _as_matrix(X, self.n_features)
        thr, links = _pack(self.feature, self.threshold, self.left, self.value)
        return _predict(thr, links, np.zeros(1, dtype=np.int64), X)


def _as_matrix(X, n_features=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return np.ascontiguousarray(X)


def _check_xy(X, y):
    X = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("cannot fit on empty data")
    if y.shape != (X.shape[0],):
        raise ValueError(f"X has {X.shape[0]} rows but y has shape {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite and complete")
    return X, y


def fit_tree(X, y, cfg=ForestConfig(), seed=None):
    """Grow one CART tree on all rows of ``X``.

    Splits are chosen greedily over midpoints between consecutive distinct
    values, minimising the summed squared error of the two children. Ties
    go to the lower feature index, then the smaller split point. A node is
    left unsplit when no split leaves ``cfg.min_node_size`` rows on each side.
    """
    X, y = _check_xy(X, y)
    mtry = cfg.resolve_mtry(X.shape[1])
    if seed is None:
        # same stream as tree 0 of an unbootstrapped forest
        seed = np.random.default_rng(derive_seed(cfg.seed, 0)).integers(1, 2**63, dtype=np.uint64)
    arrays = _grow(X, y, mtry, cfg.min_node_size, np.uint64(seed))
    return RegressionTree(*arrays, n_features=X.shape[1])


def predict_tree(tree, x):
    """Leaf value of the region containing ``x`` (a single row or a matrix)."""
    out = tree.predict(x)
    return float(out[0]) if np.ndim(x) == 1 else out


@dataclass(frozen=True)
class RandomForestModel:
    """Bagged ensemble; trees are concatenated into one set of node arrays."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    roots: np.ndarray
    n_features: int
    config: ForestConfig
    inbag: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "_packed",
                           _pack(self.feature, self.threshold, self.left, self.value))

    @property
    def n_trees(self):
        return len(self.roots)

    @property
    def trees(self):
        bounds = list(self.roots) + [len(self.feature)]
        out = []
        for b in range(self.n_trees):
            lo, hi = bounds[b], bounds[b + 1]
            inner = self.feature[lo:hi] != LEAF
            out.append(RegressionTree(
                self.feature[lo:hi].copy(), self.threshold[lo:hi].copy(),
                np.where(inner, self.left[lo:hi] - lo, -1).astype(np.int32),
                np.where(inner, self.right[lo:hi] - lo, -1).astype(np.int32),
                self.value[lo:hi].copy(), self.n_features))
        return out

    def predict(self, X):
        X = _as_matrix(X, self.n_features)
        thr, links = self._packed
        return _predict(thr, links, self.roots, X)

    def predict_oob(self, X):
        """Out-of-bag predictions for the training rows ``X`` (in training order).

        Each row averages only the trees whose bootstrap sample left it out;
        rows that were in every bag fall back to the full-forest prediction.
        """
        if self.inbag is None:
            raise ValueError("forest was fitted without bootstrap; no out-of-bag rows")
        X = _as_matrix(X, self.n_features)
        if X.shape[0] != self.inbag.shape[1]:
            raise ValueError(f"expected the {self.inbag.shape[1]} training rows, got {X.shape[0]}")
        thr, links = self._packed
        acc, cnt = _predict_oob(thr, links, self.roots, self.inbag, X)
        out = self.predict(X)
        has = cnt > 0
        out[has] = acc[has] / cnt[has]
        return out

    def to_arrays(self):
        return {k: getattr(self, k) for k in
                ("feature", "threshold", "left", "right", "value", "roots")}

    @classmethod
    def from_arrays(cls, arrays, n_features, config):
        return cls(**{k: np.asarray(arrays[k]) for k in
                      ("feature", "threshold", "left", "right", "value", "roots")},
                   n_features=n_features, config=config)


def fit_forest(X, y, cfg=ForestConfig()):
    """Fit ``cfg.n_trees`` trees, each on a bootstrap resample of the rows.

    Tree ``b`` takes its bootstrap rows and split-variable draws from a
    stream seeded by ``(cfg.seed, b)``, so results do not depend on the order
    in which trees are built.
    """
    X, y = _check_xy(X, y)
    n, d = X.shape
    mtry = cfg.resolve_mtry(d)
    parts = []
    inbag = np.zeros((cfg.n_trees, n), dtype=np.bool_) if cfg.bootstrap else None
    for b in range(cfg.n_trees):
        rng = np.random.default_rng(derive_seed(cfg.seed, b))
        if cfg.bootstrap:
            rows = rng.integers(0, n, size=n)
            inbag[b, rows] = True
            Xb, yb = X[rows], y[rows]
        else:
            Xb, yb = X, y
        tree_seed = rng.integers(1, 2**63, dtype=np.uint64)
        parts.append(_grow(Xb, yb, mtry, cfg.min_node_size, tree_seed))

    sizes = [len(p[0]) for p in parts]
    roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    feature = np.concatenate([p[0] for p in parts])
    threshold = np.concatenate([p[1] for p in parts])
    value = np.concatenate([p[4] for p in parts])
    left = np.concatenate([np.where(p[2] >= 0, p[2] + r, -1) for p, r in zip(parts, roots)])
    right = np.concatenate([np.where(p[3] >= 0, p[3] + r, -1) for p, r in zip(parts, roots)])
    return RandomForestModel(feature, threshold, left.astype(np.int32),
                             right.astype(np.int32), value, roots, d, cfg, inbag)


def predict_forest(model, x):
    """Mean of the tree predictions for one row (returns float) or a matrix."""
    out = model.predict(x)
    return float(out[0]) if np.ndim(x) == 1 else out
