"""Random forest of CART regression trees.

Trees are grown on bootstrap resamples with variance-reduction splits over a
random feature subset per node. Randomness: a master PCG64 generator seeded
with the model seed draws, tree by tree, the bootstrap indices and then one
64-bit split seed; inside a tree the feature order at each node comes from a
splitmix64 stream started at that seed. Trees are built in parallel but each
writes only its own slot, so the forest does not depend on thread scheduling.

Split ties are broken by lowest feature index, then lowest threshold.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from ..features import FeatureMatrix
from .base import ModelConfig, ModelError, TrainedModel, make_model

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@numba.njit(cache=True)
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _grow_tree(X, y, samples, mtry, min_leaf, max_depth, seed,
               feature, threshold, left, right, value):
    """Grow one tree into the preallocated node arrays; returns the node count."""
    n_features = X.shape[1]
    n = samples.shape[0]
    idx = samples.copy()
    buf = np.empty(n, dtype=np.int64)
    feats = np.arange(n_features)
    state = np.uint64(seed)

    stack_node = np.empty(2 * n + 2, dtype=np.int64)
    stack_lo = np.empty(2 * n + 2, dtype=np.int64)
    stack_hi = np.empty(2 * n + 2, dtype=np.int64)
    stack_depth = np.empty(2 * n + 2, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        depth = stack_depth[top]
        m = hi - lo

        total = 0.0
        for k in range(lo, hi):
            total += y[idx[k]]
        mean = total / m
        value[node] = mean
        feature[node] = -1
        left[node] = -1
        right[node] = -1

        if m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        pure = True
        y0 = y[idx[lo]]
        for k in range(lo + 1, hi):
            if y[idx[k]] != y0:
                pure = False
                break
        if pure:
            continue

        # Fisher-Yates shuffle of the feature order for this node.
        for k in range(n_features - 1, 0, -1):
            state, r = _splitmix64(state)
            j = np.int64(r % np.uint64(k + 1))
            tmp = feats[k]
            feats[k] = feats[j]
            feats[j] = tmp

        parent_score = total * total / m
        best_score = parent_score
        best_feat = -1
        best_thr = 0.0
        visited = 0
        xs = np.empty(m)
        ys = np.empty(m)
        for fi in range(n_features):
            if visited >= mtry and best_feat >= 0:
                break
            f = feats[fi]
            xmin = np.inf
            xmax = -np.inf
            for k in range(m):
                v = X[idx[lo + k], f]
                xs[k] = v
                if v < xmin:
                    xmin = v
                if v > xmax:
                    xmax = v
            if xmin == xmax:
                continue  # constant here; does not count toward mtry
            order = np.argsort(xs, kind="mergesort")
            visited += 1
            for k in range(m):
                ys[k] = y[idx[lo + order[k]]]
            s_left = 0.0
            for k in range(1, m):
                s_left += ys[k - 1]
                n_left = k
                if n_left < min_leaf or m - n_left < min_leaf:
                    continue
                a = xs[order[k - 1]]
                b = xs[order[k]]
                if a == b:
                    continue
                s_right = total - s_left
                score = s_left * s_left / n_left + s_right * s_right / (m - n_left)
                thr = 0.5 * (a + b)
                if thr >= b:
                    thr = a
                better = score > best_score * (1.0 + 1e-12) + 1e-300
                tie = (not better) and best_feat >= 0 and score == best_score and (
                    f < best_feat or (f == best_feat and thr < best_thr))
                if better or tie:
                    best_score = score
                    best_feat = f
                    best_thr = thr
        if best_feat < 0:
            continue

        # Stable partition of idx[lo:hi] on x <= threshold.
        nl = 0
        for k in range(lo, hi):
            if X[idx[k], best_feat] <= best_thr:
                buf[lo + nl] = idx[k]
                nl += 1
        nr = 0
        for k in range(lo, hi):
            if X[idx[k], best_feat] > best_thr:
                buf[lo + nl + nr] = idx[k]
                nr += 1
        for k in range(lo, hi):
            idx[k] = buf[k]

        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes + 1
        stack_lo[top] = lo + nl
        stack_hi[top] = hi
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = n_nodes
        stack_lo[top] = lo
        stack_hi[top] = lo + nl
        stack_depth[top] = depth + 1
        top += 1
        n_nodes += 2
    return n_nodes


@numba.njit(parallel=True, cache=True)
def _grow_forest(X, y, boot, seeds, mtry, min_leaf, max_depth,
                 feature, threshold, left, right, value, counts):
    for t in numba.prange(boot.shape[0]):
        counts[t] = _grow_tree(X, y, boot[t], mtry, min_leaf, max_depth, seeds[t],
                               feature[t], threshold[t], left[t], right[t], value[t])


@numba.njit(parallel=True, cache=True)
def _predict_trees(X, offsets, feature, threshold, left, right, value):
    n_trees = offsets.shape[0] - 1
    out = np.empty((n_trees, X.shape[0]))
    for t in numba.prange(n_trees):
        base = offsets[t]
        for i in range(X.shape[0]):
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            out[t, i] = value[base + node]
    return out


def fit_random_forest(train: FeatureMatrix, config: ModelConfig | None = None) -> TrainedModel:
    config = config or ModelConfig("random-forest")
    if config.algorithm != "random-forest":
        raise ModelError(f"expected a random-forest config, got {config.algorithm}")
    p = config.params
    X = np.ascontiguousarray(train.X, dtype=np.float64)
    y = np.ascontiguousarray(train.target, dtype=np.float64)
    n, n_features = X.shape
    if n == 0:
        raise ModelError("cannot fit a forest on an empty training set")
    n_trees = int(p["n_estimators"])
    mtry = max(1, math.floor(n_features * p["max_features"]))
    max_depth = -1 if p["max_depth"] is None else int(p["max_depth"])

    rng = np.random.Generator(np.random.PCG64(int(config.seed)))
    boot = np.empty((n_trees, n), dtype=np.int64)
    seeds = np.empty(n_trees, dtype=np.uint64)
    for t in range(n_trees):
        boot[t] = rng.integers(0, n, n)
        seeds[t] = rng.integers(0, 2**63, dtype=np.uint64)

    cap = 2 * n + 1
    feature = np.full((n_trees, cap), -1, dtype=np.int64)
    threshold = np.zeros((n_trees, cap))
    left = np.full((n_trees, cap), -1, dtype=np.int64)
    right = np.full((n_trees, cap), -1, dtype=np.int64)
    value = np.zeros((n_trees, cap))
    counts = np.zeros(n_trees, dtype=np.int64)
    _grow_forest(X, y, boot, seeds, mtry, int(p["min_samples_leaf"]), max_depth,
                 feature, threshold, left, right, value, counts)

    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    arrays = {
        "offsets": offsets,
        "feature": np.concatenate([feature[t, :counts[t]] for t in range(n_trees)]),
        "threshold": np.concatenate([threshold[t, :counts[t]] for t in range(n_trees)]),
        "left": np.concatenate([left[t, :counts[t]] for t in range(n_trees)]),
        "right": np.concatenate([right[t, :counts[t]] for t in range(n_trees)]),
        "value": np.concatenate([value[t, :counts[t]] for t in range(n_trees)]),
    }
    return make_model(config, train, arrays, {"mtry": mtry, "total_nodes": int(offsets[-1])})


def tree_predictions(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    a = model.arrays
    return _predict_trees(np.ascontiguousarray(X, dtype=np.float64), a["offsets"], a["feature"],
                          a["threshold"], a["left"], a["right"], a["value"])


def raw_predict(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    return tree_predictions(model, X).mean(axis=0)
