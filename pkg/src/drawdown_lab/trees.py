"""Tree-based regressors built on an exact greedy split search.

Split candidates are midpoints between consecutive distinct feature values.
The standalone tree and the random forest minimize within-children squared
deviation; the boosted ensemble grows trees on gradient statistics with an
L2 leaf penalty and a per-leaf complexity charge, second-order style, so other
twice-differentiable losses can slot in even though squared error keeps the
hessians at one.
"""

from __future__ import annotations

import numpy as np

from .base import BaseEstimator, check_array, check_is_fitted, check_n_features, check_X_y

_LEAF = -1
_GAIN_EPS = 1e-12


class _TreeNodes:
    """Flat node-array representation (serializes to stable JSON)."""

    __slots__ = ("feature", "threshold", "left", "right", "value", "n_samples")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.n_samples: list[int] = []

    def add(self, value: float, n: int) -> int:
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.left.append(_LEAF)
        self.right.append(_LEAF)
        self.value.append(float(value))
        self.n_samples.append(int(n))
        return len(self.value) - 1

    def split(self, node: int, feature: int, threshold: float, left: int, right: int) -> None:
        self.feature[node] = int(feature)
        self.threshold[node] = float(threshold)
        self.left[node] = left
        self.right[node] = right

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f == _LEAF)

    def to_dict(self) -> dict:
        return {
            "feature": list(self.feature),
            "threshold": list(self.threshold),
            "left": list(self.left),
            "right": list(self.right),
            "value": list(self.value),
            "n_samples": list(self.n_samples),
        }

    @classmethod
    def from_dict(cls, d) -> "_TreeNodes":
        t = cls()
        t.feature = [int(v) for v in d["feature"]]
        t.threshold = [float(v) for v in d["threshold"]]
        t.left = [int(v) for v in d["left"]]
        t.right = [int(v) for v in d["right"]]
        t.value = [float(v) for v in d["value"]]
        t.n_samples = [int(v) for v in d["n_samples"]]
        return t


def _predict_nodes(nodes: _TreeNodes, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        if nodes.feature[node] == _LEAF:
            out[rows] = nodes.value[node]
            continue
        go_left = X[rows, nodes.feature[node]] <= nodes.threshold[node]
        stack.append((nodes.left[node], rows[go_left]))
        stack.append((nodes.right[node], rows[~go_left]))
    return out


def _apply_nodes(nodes: _TreeNodes, X: np.ndarray) -> np.ndarray:
    """Leaf index reached by every row."""
    out = np.empty(X.shape[0], dtype=int)
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        if nodes.feature[node] == _LEAF:
            out[rows] = node
            continue
        go_left = X[rows, nodes.feature[node]] <= nodes.threshold[node]
        stack.append((nodes.left[node], rows[go_left]))
        stack.append((nodes.right[node], rows[~go_left]))
    return out


def _scan_variance_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best squared-deviation reduction for one feature; (gain, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    n = xs.size
    s1 = np.cumsum(ys)
    s2 = np.cumsum(ys * ys)
    total1, total2 = s1[-1], s2[-1]
    k = np.arange(1, n)  # left-child sizes
    boundary = xs[:-1] < xs[1:]
    sized = (k >= min_leaf) & (n - k >= min_leaf)
    valid = boundary & sized
    if not valid.any():
        return None
    sse_parent = total2 - total1 * total1 / n
    left1, left2 = s1[:-1], s2[:-1]
    sse_left = left2 - left1 * left1 / k
    right1 = total1 - left1
    sse_right = (total2 - left2) - right1 * right1 / (n - k)
    gain = np.where(valid, sse_parent - sse_left - sse_right, -np.inf)
    best = int(np.argmax(gain))  # first maximum -> lowest threshold on ties
    best_gain = float(gain[best])
    if best_gain <= _GAIN_EPS * (abs(sse_parent) + 1.0):
        return None
    return best_gain, float((xs[best] + xs[best + 1]) / 2.0)


def _grow_variance_tree(X, y, max_depth, min_leaf, rng=None, feature_subset=None) -> _TreeNodes:
    nodes = _TreeNodes()

    def grow(rows: np.ndarray, depth: int) -> int:
        node = nodes.add(y[rows].mean(), rows.size)
        if depth >= max_depth or rows.size < 2 * min_leaf:
            return node
        if feature_subset is not None and feature_subset < X.shape[1]:
            candidates = np.sort(rng.choice(X.shape[1], size=feature_subset, replace=False))
        else:
            candidates = range(X.shape[1])
        best = None  # (gain, feature, threshold); ties resolved to lowest feature
        for f in candidates:
            found = _scan_variance_split(X[rows, f], y[rows], min_leaf)
            if found is not None and (best is None or found[0] > best[0]):
                best = (found[0], f, found[1])
        if best is None:
            return node
        _, f, thr = best
        go_left = X[rows, f] <= thr
        left = grow(rows[go_left], depth + 1)
        right = grow(rows[~go_left], depth + 1)
        nodes.split(node, f, thr, left, right)
        return node

    grow(np.arange(X.shape[0]), 0)
    return nodes


class DecisionTreeRegressor(BaseEstimator):
    """Greedy binary regression tree; leaves predict the child-sample mean.

    Splitting stops at ``max_depth``, when a child would fall below
    ``min_leaf``, or when no split reduces squared deviation.
    """

    def __init__(self, max_depth: int = 5, min_leaf: int = 1):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X, y):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        X, y = check_X_y(X, y)
        self.nodes_ = _grow_variance_tree(X, y, self.max_depth, self.min_leaf)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "nodes_")
        X = check_array(X)
        check_n_features(self, X)
        return _predict_nodes(self.nodes_, X)

    def apply(self, X):
        check_is_fitted(self, "nodes_")
        X = check_array(X)
        check_n_features(self, X)
        return _apply_nodes(self.nodes_, X)

    @property
    def n_leaves_(self) -> int:
        return self.nodes_.n_leaves

    def to_dict(self) -> dict:
        return {"nodes": self.nodes_.to_dict(), "n_features": self.n_features_in_}

    @classmethod
    def from_dict(cls, d) -> "DecisionTreeRegressor":
        m = cls()
        m.nodes_ = _TreeNodes.from_dict(d["nodes"])
        m.n_features_in_ = int(d["n_features"])
        return m


class RandomForestRegressor(BaseEstimator):
    """Average of variance-reduction trees grown on bootstrap row samples with
    per-split random feature subsets.

    ``row_fraction=1.0`` uses the full sample unresampled, so a single-tree
    forest with a full feature subset reproduces the plain tree exactly;
    fractions below one draw with replacement.
    """

    def __init__(
        self,
        n_trees: int = 100,
        row_fraction: float = 1.0,
        feature_subset: int | None = None,
        max_depth: int = 8,
        min_leaf: int = 1,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.row_fraction = row_fraction
        self.feature_subset = feature_subset
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.seed = seed

    def fit(self, X, y):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0.0 < self.row_fraction <= 1.0:
            raise ValueError("row_fraction must lie in (0, 1]")
        X, y = check_X_y(X, y)
        n, p = X.shape
        subset = p if self.feature_subset is None else self.feature_subset
        if not 1 <= subset <= p:
            raise ValueError(f"feature_subset must lie in 1..{p}, got {subset}")
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        self.trees_ = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            if self.row_fraction < 1.0:
                rows = rng.choice(n, size=int(np.ceil(self.row_fraction * n)), replace=True)
            else:
                rows = np.arange(n)
            self.trees_.append(
                _grow_variance_tree(
                    X[rows], y[rows], self.max_depth, self.min_leaf,
                    rng=rng, feature_subset=subset,
                )
            )
        self.n_features_in_ = p
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X)
        check_n_features(self, X)
        out = np.zeros(X.shape[0])
        for nodes in self.trees_:
            out += _predict_nodes(nodes, X)
        return out / len(self.trees_)

    def to_dict(self) -> dict:
        return {
            "params": self.get_params(),
            "trees": [t.to_dict() for t in self.trees_],
            "n_features": self.n_features_in_,
        }

    @classmethod
    def from_dict(cls, d) -> "RandomForestRegressor":
        m = cls(**d["params"])
        m.trees_ = [_TreeNodes.from_dict(t) for t in d["trees"]]
        m.n_features_in_ = int(d["n_features"])
        return m


def _scan_gradient_split(x, g, h, leaf_penalty, gamma, min_leaf):
    """Best regularized-gain split for one feature under gradient statistics."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = xs.size
    G = np.cumsum(g[order])
    H = np.cumsum(h[order])
    total_g, total_h = G[-1], H[-1]
    k = np.arange(1, n)
    boundary = xs[:-1] < xs[1:]
    sized = (k >= min_leaf) & (n - k >= min_leaf)
    valid = boundary & sized
    if not valid.any():
        return None
    gl, hl = G[:-1], H[:-1]
    gr, hr = total_g - gl, total_h - hl
    parent_score = total_g * total_g / (total_h + leaf_penalty)
    gain = 0.5 * (gl * gl / (hl + leaf_penalty) + gr * gr / (hr + leaf_penalty) - parent_score) - gamma
    gain = np.where(valid, gain, -np.inf)
    best = int(np.argmax(gain))
    if gain[best] <= 0.0:
        return None
    return float(gain[best]), float((xs[best] + xs[best + 1]) / 2.0)


def _grow_gradient_tree(X, g, h, max_depth, leaf_penalty, gamma, min_leaf) -> _TreeNodes:
    nodes = _TreeNodes()

    def leaf_weight(rows):
        return -g[rows].sum() / (h[rows].sum() + leaf_penalty)

    def grow(rows, depth) -> int:
        node = nodes.add(leaf_weight(rows), rows.size)
        if depth >= max_depth or rows.size < 2 * min_leaf:
            return node
        best = None
        for f in range(X.shape[1]):
            found = _scan_gradient_split(X[rows, f], g[rows], h[rows], leaf_penalty, gamma, min_leaf)
            if found is not None and (best is None or found[0] > best[0]):
                best = (found[0], f, found[1])
        if best is None:
            return node
        _, f, thr = best
        go_left = X[rows, f] <= thr
        left = grow(rows[go_left], depth + 1)
        right = grow(rows[~go_left], depth + 1)
        nodes.split(node, f, thr, left, right)
        return node

    grow(np.arange(X.shape[0]), 0)
    return nodes


class GradientBoostingRegressor(BaseEstimator):
    """Additively trained trees on squared error with an XGBoost-style
    regularized objective: each round fits a tree to gradients g = yhat - y
    (hessians are one), leaf weights are -G/(H + leaf_penalty), and a split
    must clear ``gamma`` after the 1/2-scaled score improvement. Stage outputs
    are shrunk by ``learning_rate``.
    """

    def __init__(
        self,
        n_rounds: int = 100,
        learning_rate: float = 0.1,
        max_depth: int = 3,
        leaf_penalty: float = 1.0,
        gamma: float = 0.0,
        subsample: float = 1.0,
        min_leaf: int = 1,
        seed: int = 0,
        base_score: float | None = None,
    ):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.leaf_penalty = leaf_penalty
        self.gamma = gamma
        self.subsample = subsample
        self.min_leaf = min_leaf
        self.seed = seed
        self.base_score = base_score

    def fit(self, X, y):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")
        X, y = check_X_y(X, y)
        n = X.shape[0]
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        self.base_score_ = float(y.mean()) if self.base_score is None else float(self.base_score)
        pred = np.full(n, self.base_score_)
        self.trees_ = []
        self.train_loss_ = []
        for round_idx in range(self.n_rounds):
            g = pred - y
            h = np.ones(n)
            if self.subsample < 1.0:
                rows = rng.choice(n, size=max(1, int(round(self.subsample * n))), replace=False)
                rows.sort()
            else:
                rows = np.arange(n)
            nodes = _grow_gradient_tree(
                X[rows], g[rows], h[rows], self.max_depth,
                self.leaf_penalty, self.gamma, self.min_leaf,
            )
            self.trees_.append(nodes)
            pred += self.learning_rate * _predict_nodes(nodes, X)
            loss = float(np.mean((pred - y) ** 2))
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at boosting round {round_idx}")
            self.train_loss_.append(loss)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X)
        check_n_features(self, X)
        out = np.full(X.shape[0], self.base_score_)
        for nodes in self.trees_:
            out += self.learning_rate * _predict_nodes(nodes, X)
        return out

    def staged_outputs(self, X) -> np.ndarray:
        """(n_rounds, n_rows) raw per-tree outputs before shrinkage."""
        check_is_fitted(self, "trees_")
        X = check_array(X)
        check_n_features(self, X)
        return np.array([_predict_nodes(nodes, X) for nodes in self.trees_])

    def to_dict(self) -> dict:
        return {
            "params": self.get_params(),
            "base_score": self.base_score_,
            "trees": [t.to_dict() for t in self.trees_],
            "n_features": self.n_features_in_,
        }

    @classmethod
    def from_dict(cls, d) -> "GradientBoostingRegressor":
        m = cls(**d["params"])
        m.base_score_ = float(d["base_score"])
        m.trees_ = [_TreeNodes.from_dict(t) for t in d["trees"]]
        m.n_features_in_ = int(d["n_features"])
        return m
