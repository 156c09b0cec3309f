"""Exact CART trees, bagged forests, and stage-wise gradient boosting.

Split search is exact: candidate thresholds are the midpoints between
adjacent sorted unique values of each feature.  The split criterion is
sum-of-squares reduction; on binary targets this coincides with the
Gini criterion (for y in {0,1}, node SSE = n p (1-p) = n gini / 2), so
one code path serves classification and regression trees.  Gain ties
break toward the lower feature index, then the lower threshold, which
makes training invariant to appending duplicate columns.
"""

from __future__ import annotations

import math

import numpy as np

from .base import derive_seed

# Relative tolerance deciding that a node's targets are constant.
_CONST_TOL = 1e-12


def _best_split(xs: np.ndarray, gs: np.ndarray, min_leaf: int):
    """Best split over a (k, m) block of presorted feature values.

    xs[j] holds the node's values of candidate feature j in sorted order
    and gs[j] the targets in that order.  Returns (gain, row, position)
    with ties broken toward the lower row then lower position, or None
    when no valid split exists.
    """
    k, m = xs.shape
    if m < 2 * min_leaf:
        return None
    csum = np.cumsum(gs, axis=1)
    total = csum[:, -1:]
    n_left = np.arange(1, m)
    n_right = m - n_left
    sum_left = csum[:, :-1]
    gain = (
        sum_left**2 / n_left
        + (total - sum_left) ** 2 / n_right
        - total**2 / m
    )
    valid = (xs[:, 1:] != xs[:, :-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    gain[~valid] = -math.inf
    flat = int(np.argmax(gain))
    row, pos = divmod(flat, m - 1)
    best = float(gain[row, pos])
    if best == -math.inf:
        return None
    return best, row, pos


def presort_features(X: np.ndarray) -> np.ndarray:
    """(k, n) row indices sorting each feature column, stable."""
    return np.vstack([np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])])


class Tree:
    """Flat-array binary tree: feature < 0 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=float)

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feats = self.feature[idx]
            active = feats >= 0
            if not np.any(active):
                break
            rows = np.flatnonzero(active)
            go_left = X[rows, feats[rows]] <= self.threshold[idx[rows]]
            idx[rows] = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])
        return self.value[idx]

    def to_payload(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "Tree":
        return cls(
            payload["feature"],
            payload["threshold"],
            payload["left"],
            payload["right"],
            payload["value"],
        )


def build_tree(
    X: np.ndarray,
    grad: np.ndarray,
    *,
    max_depth: int | None,
    min_leaf: int,
    hess: np.ndarray | None = None,
    rows: np.ndarray | None = None,
    features_per_split: int | None = None,
    rng: np.random.Generator | None = None,
    global_presort: np.ndarray | None = None,
) -> Tree:
    """Fit one CART tree to grad by sum-of-squares reduction.

    Leaf values are mean(grad), or sum(grad)/sum(hess) when a hessian is
    supplied (the Newton step used by boosted classification).  rows
    restricts training to a subsample (must be ascending);
    features_per_split draws a random feature subset at every split
    (requires rng).  global_presort, the (k, n) per-feature stable
    argsort of the full matrix, can be shared across trees.
    """
    n_total, k = X.shape
    if global_presort is None:
        global_presort = presort_features(X)
    if rows is None:
        rows = np.arange(n_total)
        presort = global_presort
    else:
        member = np.zeros(n_total, dtype=bool)
        member[rows] = True
        presort = global_presort[member[global_presort]].reshape(k, len(rows))
    columns = np.arange(k)[:, None]

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def leaf_value(members: np.ndarray) -> float:
        # Reductions run over value-sorted operands so the fit is exactly
        # invariant to the order rows arrived in.
        g_sorted = np.sort(grad[members])
        if hess is None:
            return float(np.mean(g_sorted))
        denom = float(np.sum(np.sort(hess[members])))
        return float(np.sum(g_sorted) / max(denom, 1e-12))

    def new_node() -> int:
        # Leaves keep threshold 0.0: nan would not survive strict JSON.
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    in_node = np.zeros(n_total, dtype=bool)

    def split(node: int, members: np.ndarray, depth: int) -> None:
        g = np.sort(grad[members])
        sum_g2 = float(np.sum(g * g))
        node_sse = sum_g2 - float(np.sum(g)) ** 2 / len(g)
        done = (
            (max_depth is not None and depth >= max_depth)
            or len(members) < 2 * min_leaf
            or node_sse <= _CONST_TOL * max(1.0, sum_g2)
        )
        if not done:
            if features_per_split is not None and features_per_split < k:
                candidates = np.sort(rng.choice(k, size=features_per_split, replace=False))
                block = presort[candidates]
                cols = candidates[:, None]
            else:
                candidates = None
                block = presort
                cols = columns
            in_node[members] = True
            node_sorted = block[in_node[block]].reshape(block.shape[0], len(members))
            in_node[members] = False
            xs = X[node_sorted, cols]
            found = _best_split(xs, grad[node_sorted], min_leaf)
            if found is not None and found[0] > 0.0:
                _, row, pos = found
                best_feat = int(candidates[row]) if candidates is not None else row
                best_thr = (xs[row, pos] + xs[row, pos + 1]) / 2.0
                go_left = X[members, best_feat] <= best_thr
                feature[node] = best_feat
                threshold[node] = best_thr
                left[node] = new_node()
                right[node] = new_node()
                split(left[node], members[go_left], depth + 1)
                split(right[node], members[~go_left], depth + 1)
                return
        value[node] = leaf_value(members)

    root = new_node()
    split(root, np.asarray(rows), 0)
    return Tree(feature, threshold, left, right, value)


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------


def fit_forest(X: np.ndarray, y: np.ndarray, hyper: dict, seed: int) -> dict:
    n, k = X.shape
    if hyper["feature_subsample"] == "sqrt":
        per_split = max(1, int(math.ceil(math.sqrt(k))))
    else:
        per_split = max(1, int(round(float(hyper["feature_subsample"]) * k)))
    n_rows = max(2 * hyper["min_leaf"], int(round(hyper["row_subsample"] * n)))
    n_rows = min(n, n_rows)
    shared_presort = presort_features(X)
    trees = []
    for t in range(hyper["n_trees"]):
        rng = derive_seed(seed, t)
        rows = np.sort(rng.choice(n, size=n_rows, replace=False))
        tree = build_tree(
            X,
            y,
            max_depth=hyper["max_depth"],
            min_leaf=hyper["min_leaf"],
            rows=rows,
            features_per_split=per_split,
            rng=rng,
            global_presort=shared_presort,
        )
        trees.append(tree.to_payload())
    return {"trees": trees}


def predict_forest(params: dict, X: np.ndarray) -> np.ndarray:
    acc = np.zeros(X.shape[0])
    trees = params["trees"]
    for payload in trees:
        acc += Tree.from_payload(payload).predict(X)
    return acc / len(trees)


# ---------------------------------------------------------------------------
# gradient boosting
# ---------------------------------------------------------------------------


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def fit_gbt(X: np.ndarray, y: np.ndarray, hyper: dict, seed: int, task: str) -> dict:
    lr = hyper["learning_rate"]
    if task == "classification":
        base_rate = float(np.clip(np.mean(y), 1e-12, 1.0 - 1e-12))
        f0 = math.log(base_rate / (1.0 - base_rate))
    else:
        f0 = float(np.mean(np.sort(y)))  # order-canonical, see build_tree
    scores = np.full(X.shape[0], f0)
    shared_presort = presort_features(X)
    trees = []
    for _ in range(hyper["n_trees"]):
        if task == "classification":
            p = _sigmoid(scores)
            grad = y - p
            hess = p * (1.0 - p)
        else:
            grad = y - scores
            hess = None
        tree = build_tree(
            X,
            grad,
            max_depth=hyper["max_depth"],
            min_leaf=hyper["min_leaf"],
            hess=hess,
            global_presort=shared_presort,
        )
        scores = scores + lr * tree.predict(X)
        trees.append(tree.to_payload())
    return {"f0": f0, "learning_rate": lr, "trees": trees}


def predict_gbt(params: dict, X: np.ndarray, task: str) -> np.ndarray:
    scores = np.full(X.shape[0], params["f0"])
    lr = params["learning_rate"]
    for payload in params["trees"]:
        scores = scores + lr * Tree.from_payload(payload).predict(X)
    if task == "classification":
        return _sigmoid(scores)
    return scores
