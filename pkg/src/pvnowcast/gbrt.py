"""
Histogram-based gradient-boosted regression trees.

A small, dependency-free booster with second-order (Newton) leaf values,
L1/L2 regularisation on leaf weights and depth-wise growth.  Features are
bucketed into at most ``n_bins`` bins from training quantiles; splits are
stored as real thresholds (``x <= threshold`` goes left) so a fitted model
is a pure function of raw feature values and can be dumped to JSON.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .rng import SEARCH, generator


@dataclass(frozen=True)
class BoosterParams:
    n_trees: int = 200
    max_depth: int = 5
    learning_rate: float = 0.1
    l1: float = 0.0
    l2: float = 1.0
    n_bins: int = 32
    min_child_weight: float = 1.0
    early_stopping_rounds: int = 20


def bin_edges(x, n_bins):
    """Split thresholds for one feature (at most ``n_bins - 1``)."""
    uniq = np.unique(x[np.isfinite(x)])
    if len(uniq) <= 1:
        return np.empty(0)
    if len(uniq) <= n_bins:
        return 0.5 * (uniq[:-1] + uniq[1:])
    qs = np.quantile(x, np.linspace(0, 1, n_bins + 1)[1:-1])
    return np.unique(qs)


def _soft(g, alpha):
    if alpha == 0:
        return g
    return np.sign(g) * np.maximum(np.abs(g) - alpha, 0.0)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X):
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            xv = X[rows, np.where(internal, f, 0)]
            go_left = xv <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, nxt, node)
        return self.value[node]

    def to_dict(self):
        nodes = []
        for i in range(len(self.feature)):
            if self.feature[i] < 0:
                nodes.append({"leaf": float(self.value[i])})
            else:
                nodes.append(
                    {
                        "feature": int(self.feature[i]),
                        "threshold": float(self.threshold[i]),
                        "left": int(self.left[i]),
                        "right": int(self.right[i]),
                    }
                )
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d):
        nodes = d["nodes"]
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.intp)
        threshold = np.zeros(n)
        left = np.zeros(n, dtype=np.intp)
        right = np.zeros(n, dtype=np.intp)
        value = np.zeros(n)
        for i, node in enumerate(nodes):
            if "leaf" in node:
                value[i] = node["leaf"]
            else:
                feature[i] = node["feature"]
                threshold[i] = node["threshold"]
                left[i] = node["left"]
                right[i] = node["right"]
        return cls(feature, threshold, left, right, value)


class _Builder:
    def __init__(self, binned, edges, params: BoosterParams):
        self.binned = binned
        self.edges = edges
        self.p = params
        self.n_features = binned.shape[1]
        self.nb = params.n_bins
        self.offsets = (np.arange(self.n_features) * self.nb)[None, :]

    def _score(self, g, h):
        return _soft(g, self.p.l1) ** 2 / (h + self.p.l2)

    def _best_split(self, idx, grad):
        flat = (self.binned[idx] + self.offsets).ravel()
        gw = np.repeat(grad[idx], self.n_features)
        G = np.bincount(flat, weights=gw, minlength=self.n_features * self.nb).reshape(self.n_features, self.nb)
        H = np.bincount(flat, minlength=self.n_features * self.nb).reshape(self.n_features, self.nb).astype(float)
        GL = np.cumsum(G, axis=1)[:, :-1]
        HL = np.cumsum(H, axis=1)[:, :-1]
        gt, ht = grad[idx].sum(), float(len(idx))
        GR, HR = gt - GL, ht - HL
        gain = self._score(GL, HL) + self._score(GR, HR) - self._score(gt, ht)
        valid = (HL >= self.p.min_child_weight) & (HR >= self.p.min_child_weight)
        # only bins that have a real threshold
        n_edges = np.array([len(e) for e in self.edges])
        valid &= np.arange(self.nb - 1)[None, :] < n_edges[:, None]
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        f, b = divmod(k, self.nb - 1)
        if not gain[f, b] > 1e-12:
            return None
        return f, b

    def build(self, grad, lr):
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node():
            feature.append(-1)
            threshold.append(0.0)
            left.append(0)
            right.append(0)
            value.append(0.0)
            return len(feature) - 1

        root = new_node()
        frontier = [(root, np.arange(len(grad)))]
        for depth in range(self.p.max_depth + 1):
            nxt = []
            for node, idx in frontier:
                split = self._best_split(idx, grad) if depth < self.p.max_depth else None
                if split is None:
                    g = grad[idx].sum()
                    value[node] = float(-lr * _soft(g, self.p.l1) / (len(idx) + self.p.l2))
                    continue
                f, b = split
                mask = self.binned[idx, f] <= b
                feature[node] = f
                threshold[node] = float(self.edges[f][b])
                lnode, rnode = new_node(), new_node()
                left[node], right[node] = lnode, rnode
                nxt.append((lnode, idx[mask]))
                nxt.append((rnode, idx[~mask]))
            frontier = nxt
            if not frontier:
                break
        return Tree(
            np.array(feature, dtype=np.intp),
            np.array(threshold),
            np.array(left, dtype=np.intp),
            np.array(right, dtype=np.intp),
            np.array(value),
        )


class GradientBoostedTrees:
    """Squared-error gradient boosting with optional early stopping."""

    def __init__(self, params: BoosterParams | None = None, **kwargs):
        self.params = params or BoosterParams(**kwargs)
        self.trees: list = []
        self.base_score = 0.0
        self.best_iteration = None

    def fit(self, X, y, X_val=None, y_val=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        p = self.params
        edges = [bin_edges(X[:, j], p.n_bins) for j in range(X.shape[1])]
        binned = np.stack(
            [np.searchsorted(e, X[:, j], side="left") for j, e in enumerate(edges)], axis=1
        ).astype(np.intp)
        builder = _Builder(binned, edges, p)

        self.base_score = float(y.mean())
        pred = np.full(len(y), self.base_score)
        self.trees = []
        use_val = X_val is not None and len(X_val) > 0
        if use_val:
            X_val = np.asarray(X_val, dtype=float)
            y_val = np.asarray(y_val, dtype=float)
            pred_val = np.full(len(y_val), self.base_score)
            best = np.sqrt(np.mean((pred_val - y_val) ** 2))
            best_n, stall = 0, 0
        for _ in range(p.n_trees):
            tree = builder.build(pred - y, p.learning_rate)
            self.trees.append(tree)
            pred += tree.predict(X)
            if use_val:
                pred_val += tree.predict(X_val)
                rmse = np.sqrt(np.mean((pred_val - y_val) ** 2))
                if rmse < best - 1e-12:
                    best, best_n, stall = rmse, len(self.trees), 0
                else:
                    stall += 1
                    if stall >= p.early_stopping_rounds:
                        break
        if use_val:
            self.trees = self.trees[:best_n]
            self.best_iteration = best_n
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(len(X), self.base_score)
        for t in self.trees:
            out += t.predict(X)
        return out

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "base_score": self.base_score,
            "best_iteration": self.best_iteration,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d) -> "GradientBoostedTrees":
        model = cls(BoosterParams(**d["params"]))
        model.base_score = float(d["base_score"])
        model.best_iteration = d.get("best_iteration")
        model.trees = [Tree.from_dict(t) for t in d["trees"]]
        return model


SEARCH_SPACE = {
    "learning_rate": (0.03, 0.3),  # log-uniform
    "max_depth": (3, 8),
    "n_trees": (100, 400),
    "l1": (0.0, 1.0),
    "l2": (0.1, 10.0),  # log-uniform
}


def random_search(X, y, X_val, y_val, n_trials=16, seed=0, base: BoosterParams | None = None):
    """Pick hyperparameters by validation RMSE over ``n_trials`` random draws."""
    base = base or BoosterParams()
    rng = generator(seed, SEARCH)
    best_model, best_rmse = None, np.inf
    for _ in range(n_trials):
        lo, hi = SEARCH_SPACE["learning_rate"]
        lr = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        depth = int(rng.integers(SEARCH_SPACE["max_depth"][0], SEARCH_SPACE["max_depth"][1] + 1))
        n_trees = int(rng.integers(SEARCH_SPACE["n_trees"][0], SEARCH_SPACE["n_trees"][1] + 1))
        l1 = float(rng.uniform(*SEARCH_SPACE["l1"]))
        lo, hi = SEARCH_SPACE["l2"]
        l2 = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        params = BoosterParams(n_trees, depth, lr, l1, l2, base.n_bins, base.min_child_weight, base.early_stopping_rounds)
        model = GradientBoostedTrees(params).fit(X, y, X_val, y_val)
        rmse = float(np.sqrt(np.mean((model.predict(X_val) - y_val) ** 2)))
        if rmse < best_rmse:
            best_model, best_rmse = model, rmse
    return best_model
