"""Independent reference implementations used only by the tests."""

import numpy as np

from profweight.simple_models import GAIN_TIE_TOL


def brute_force_selection(errors, e_S, alpha, atol=1e-12):
    chosen = []
    for key in errors:
        if errors[key] <= (e_S - alpha) + atol:
            chosen.append(key)
    return tuple(chosen)


def column_mean(scores):
    out = []
    for row in np.asarray(scores):
        total = 0.0
        for v in row:
            total += float(v)
        out.append(total / len(row))
    return np.array(out)


def _weighted_gini_mass(y, w, k):
    """W * Gini for the samples given, computed from scratch."""
    W = float(np.sum(w))
    if W <= 0:
        return 0.0
    g = 1.0
    for c in range(k):
        p = float(np.sum(w[y == c])) / W
        g -= p * p
    return W * g


def exhaustive_split(X, y, w, k, min_leaf):
    """Try every (feature, midpoint) with explicit masks."""
    W = float(np.sum(w))
    parent = _weighted_gini_mass(y, w, k)
    tol = GAIN_TIE_TOL * W
    best = None
    for f in range(X.shape[1]):
        vals = sorted(set(X[:, f].tolist()))
        for a, b in zip(vals[:-1], vals[1:]):
            t = (a + b) / 2.0
            left = X[:, f] <= t
            wl, wr = float(np.sum(w[left])), float(np.sum(w[~left]))
            if wl < min_leaf or wr < min_leaf:
                continue
            gain = parent - _weighted_gini_mass(y[left], w[left], k) - _weighted_gini_mass(y[~left], w[~left], k)
            if best is None or gain > best[0] + tol:
                best = (gain, f, t)
    return best


def oracle_tree(X, y, w, k, max_depth, min_leaf_fraction):
    """Nested tuples: ("leaf", class_weights) or ("split", f, t, left, right)."""
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    min_leaf = min_leaf_fraction * float(np.sum(w))

    def grow(X, y, w, depth):
        counts = np.array([float(np.sum(w[y == c])) for c in range(k)])
        W = counts.sum()
        leaf = ("leaf", counts / W)
        if depth >= max_depth or np.count_nonzero(counts) <= 1 or W < 2 * min_leaf:
            return leaf
        found = exhaustive_split(X, y, w, k, min_leaf)
        if found is None or found[0] <= GAIN_TIE_TOL * W:
            return leaf
        _, f, t = found
        m = X[:, f] <= t
        return ("split", f, t, grow(X[m], y[m], w[m], depth + 1), grow(X[~m], y[~m], w[~m], depth + 1))

    return grow(X, y, w, 0)


def tree_matches(node, ref, atol=1e-12):
    if ref[0] == "leaf":
        return node.is_leaf and np.allclose(node.distribution, ref[1], atol=atol, rtol=0)
    if node.is_leaf:
        return False
    _, f, t, left, right = ref
    return (node.feature == f and node.threshold == t
            and tree_matches(node.left, left, atol) and tree_matches(node.right, right, atol))


def central_difference(f, x, h=1e-6):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g
