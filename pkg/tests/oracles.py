"""Brute-force reference implementations used by the tests."""

from fractions import Fraction

import numpy as np


def sse_exact(y):
    """Sum of squared deviations from the mean, as an exact fraction."""
    ys = [Fraction(float(v)) for v in y]
    if not ys:
        return Fraction(0)
    mean = sum(ys) / len(ys)
    return sum((v - mean) ** 2 for v in ys)


def candidate_splits(X, min_node_size=1):
    """Every (feature, threshold, left_mask) leaving at least ``min_node_size`` rows per side.

    Thresholds are midpoints between consecutive distinct values, ascending.
    """
    out = []
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = a + (b - a) / 2.0
            if not thr < b:
                thr = a
            left = X[:, f] <= thr
            if left.sum() >= min_node_size and (~left).sum() >= min_node_size:
                out.append((f, thr, left))
    return out


def best_split(X, y, min_node_size=1):
    """Exhaustive search for the split minimising children's SSE (exact arithmetic).

    Returns ``(sse, feature, threshold, left_mask)``; feature is None when no
    split is possible or ``y`` is constant. Ties keep the first split found,
    i.e. the lowest feature, then the smallest threshold.
    """
    best = (sse_exact(y), None, None, None)
    if len(y) < 2 * min_node_size or np.all(y == y[0]):
        return best
    found = None
    for f, thr, left in candidate_splits(X, min_node_size):
        s = sse_exact(y[left]) + sse_exact(y[~left])
        if found is None or s < found[0]:
            found = (s, f, thr, left)
    return found or best


def brute_tree(X, y, min_node_size=1):
    """Recursive exhaustive CART; returns a nested dict tree."""
    _, f, thr, left = best_split(X, y, min_node_size)
    if f is None:
        return {"value": float(np.mean(y))}
    return {"feature": f, "threshold": thr,
            "left": brute_tree(X[left], y[left], min_node_size),
            "right": brute_tree(X[~left], y[~left], min_node_size)}


def brute_predict(tree, x):
    while "feature" in tree:
        tree = tree["left"] if x[tree["feature"]] <= tree["threshold"] else tree["right"]
    return tree["value"]


def nearest_donor(cand, observed_rows, target):
    """Observed row whose candidate is closest to ``target``; ties to the lower row."""
    dist = [(abs(cand[r] - target), r) for r in observed_rows]
    return min(dist)[1]


def gibbs_trace_d1(z, m, iterations):
    """Hand-executed FCS run with single-tree, d=1 PMM conditionals.

    Mirrors the training loop: zero initial fill, columns in natural order,
    each column refitted on its observed rows given the current completion.
    Returns the list of completed matrices after every column update that
    changes anything, keyed by (sweep, column).
    """
    Z = np.where(m, 0.0, z)
    trace = [("init", None, Z.copy())]
    for eta in range(1, iterations + 1):
        for j in range(z.shape[1]):
            mis = np.flatnonzero(m[:, j])
            if len(mis) == 0:
                continue
            obs = np.flatnonzero(~m[:, j])
            X = np.delete(Z, j, axis=1)
            tree = brute_tree(X[obs], Z[obs, j])
            cand = np.array([brute_predict(tree, x) for x in X])
            for i in mis:
                Z[i, j] = z[nearest_donor(cand, obs, cand[i]), j]
            trace.append((eta, j, Z.copy()))
    return trace
