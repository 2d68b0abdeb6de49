"""From-scratch regression trees, bagged forests, and regularized additive
boosting.

Both tree modes share one split search: raw mode (variance-reduction
splits, mean leaves) is the gradient mode with g = -y, h = 1, so a single
exact second-order criterion drives everything. Tie-breaks are
deterministic: lowest feature index, then lowest threshold.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np


class TreeError(Exception):
    pass


class DimensionMismatch(TreeError):
    pass


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


def _best_split(X, g, h, feats, min_leaf, lam, gamma):
    """Best (feature, threshold, gain) over candidate features.

    Candidates are midpoints between consecutive sorted unique values.
    Returns gain -inf when no valid split exists.
    """
    n = X.shape[0]
    sub = X[:, feats]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    gs = np.take_along_axis(g[:, None], order, axis=0)
    hs = np.take_along_axis(h[:, None], order, axis=0)

    G, H = g.sum(), h.sum()
    Gl = np.cumsum(gs, axis=0)[:-1]
    Hl = np.cumsum(hs, axis=0)[:-1]
    Gr, Hr = G - Gl, H - Hl
    gain = 0.5 * (Gl * Gl / (Hl + lam) + Gr * Gr / (Hr + lam) - G * G / (H + lam)) - gamma

    sizes = np.arange(1, n)
    valid = (xs[:-1] < xs[1:])
    valid &= ((sizes >= min_leaf) & (n - sizes >= min_leaf))[:, None]
    gain = np.where(valid, gain, -np.inf)

    best_pos = gain.argmax(axis=0)               # lowest position wins ties
    best_gain = gain[best_pos, np.arange(len(feats))]
    j = int(best_gain.argmax())                  # lowest feature index wins ties
    if not np.isfinite(best_gain[j]):
        return -1, 0.0, -np.inf
    pos = int(best_pos[j])
    threshold = 0.5 * (xs[pos, j] + xs[pos + 1, j])
    return int(feats[j]), float(threshold), float(best_gain[j])


def _grow(X, g, h, depth, max_depth, min_leaf, lam, gamma, max_features, rng):
    leaf = Leaf(float(-g.sum() / (h.sum() + lam)))
    n, d = X.shape
    if n < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
        return leaf
    if max_features is not None and max_features < d:
        feats = np.sort(rng.choice(d, size=max_features, replace=False))
    else:
        feats = np.arange(d)
    feature, threshold, gain = _best_split(X, g, h, feats, min_leaf, lam, gamma)
    if gain <= 0.0:
        return leaf
    mask = X[:, feature] <= threshold
    if not mask.any() or mask.all():
        # midpoint rounded onto a data value; no usable separation
        return leaf
    left = _grow(X[mask], g[mask], h[mask], depth + 1, max_depth, min_leaf,
                 lam, gamma, max_features, rng)
    right = _grow(X[~mask], g[~mask], h[~mask], depth + 1, max_depth, min_leaf,
                  lam, gamma, max_features, rng)
    return Split(feature, threshold, left, right)


def fit_tree(
    X: np.ndarray,
    y: Optional[np.ndarray] = None,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
    *,
    grad: Optional[np.ndarray] = None,
    hess: Optional[np.ndarray] = None,
    lam: float = 0.0,
    gamma: float = 0.0,
    max_features: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> TreeNode:
    """Fit one regression tree.

    Raw mode (``y`` given): variance-reduction splits with mean-value
    leaves. Gradient mode (``grad``/``hess`` given): exact second-order
    boosting splits with leaves w* = -sum(g)/(sum(h)+lam).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("X must be 2-D")
    if grad is None:
        if y is None:
            raise TreeError("provide y (raw mode) or grad (gradient mode)")
        grad = -np.asarray(y, dtype=np.float64)
        hess = np.ones(len(grad))
    else:
        grad = np.asarray(grad, dtype=np.float64)
        hess = np.ones(len(grad)) if hess is None else np.asarray(hess, dtype=np.float64)
    if len(grad) != X.shape[0]:
        raise DimensionMismatch("targets and X disagree on row count")
    if rng is None:
        rng = np.random.default_rng(0)
    return _grow(X, grad, hess, 0, max_depth, min_samples_leaf, lam, gamma,
                 max_features, rng)


def predict_tree(node: TreeNode, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0])
    _predict_into(node, X, np.arange(X.shape[0]), out)
    return out


def _predict_into(node, X, idx, out):
    if isinstance(node, Leaf):
        out[idx] = node.value
        return
    mask = X[idx, node.feature] <= node.threshold
    _predict_into(node.left, X, idx[mask], out)
    _predict_into(node.right, X, idx[~mask], out)


def tree_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"value": node.value}
    return {"feature": node.feature, "threshold": node.threshold,
            "left": tree_to_dict(node.left), "right": tree_to_dict(node.right)}


def tree_from_dict(obj: dict) -> TreeNode:
    if "value" in obj:
        return Leaf(obj["value"])
    return Split(obj["feature"], obj["threshold"],
                 tree_from_dict(obj["left"]), tree_from_dict(obj["right"]))


@dataclass
class Forest:
    trees: list
    n_features: int
    seed: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            return np.empty(0)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += predict_tree(tree, X)
        return acc / len(self.trees)

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "n_features": self.n_features,
                           "trees": [tree_to_dict(t) for t in self.trees]})

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        obj = json.loads(text)
        return cls(trees=[tree_from_dict(t) for t in obj["trees"]],
                   n_features=obj["n_features"], seed=obj["seed"])


def fit_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 150,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 5,
    bootstrap: bool = True,
    max_features: Optional[int] = "third",
    seed: int = 0,
) -> Forest:
    """Bagged variance-split trees; prediction is the arithmetic mean.

    Per-tree RNG streams derive from (seed, tree index), so a fixed seed
    yields a bit-identical forest regardless of fitting order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise TreeError("empty training set")
    n, d = X.shape
    if max_features == "third":
        max_features = max(1, -(-d // 3))
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        trees.append(fit_tree(X[idx], y[idx], max_depth=max_depth,
                              min_samples_leaf=min_samples_leaf,
                              max_features=max_features, rng=rng))
    return Forest(trees=trees, n_features=d, seed=seed)


@dataclass
class BoostedEnsemble:
    base_score: float
    eta: float
    lam: float
    gamma: float
    trees: list = field(default_factory=list)
    best_iteration: int = 0
    n_features: int = 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            return np.empty(0)
        if self.n_features and X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        pred = np.full(X.shape[0], self.base_score)
        for tree in self.trees[: self.best_iteration]:
            pred += self.eta * predict_tree(tree, X)
        return pred

    def to_json(self) -> str:
        return json.dumps({
            "base_score": self.base_score, "eta": self.eta, "lam": self.lam,
            "gamma": self.gamma, "best_iteration": self.best_iteration,
            "n_features": self.n_features,
            "trees": [tree_to_dict(t) for t in self.trees]})

    @classmethod
    def from_json(cls, text: str) -> "BoostedEnsemble":
        obj = json.loads(text)
        return cls(base_score=obj["base_score"], eta=obj["eta"], lam=obj["lam"],
                   gamma=obj["gamma"], best_iteration=obj["best_iteration"],
                   n_features=obj["n_features"],
                   trees=[tree_from_dict(t) for t in obj["trees"]])


def _boost_one(X, y, X_val, y_val, eta, max_depth, lam, gamma, n_rounds,
               early_stop, min_samples_leaf):
    base = float(y.mean())
    model = BoostedEnsemble(base_score=base, eta=eta, lam=lam, gamma=gamma,
                            n_features=X.shape[1])
    pred = np.full(len(y), base)
    val_pred = np.full(len(y_val), base) if y_val is not None else None
    best_rmse = np.inf
    if val_pred is not None:
        best_rmse = float(np.sqrt(np.mean((y_val - val_pred) ** 2)))
    rounds_since_best = 0
    for k in range(n_rounds):
        g = pred - y  # squared loss: g = yhat - y, h = 1
        tree = fit_tree(X, grad=g, lam=lam, gamma=gamma, max_depth=max_depth,
                        min_samples_leaf=min_samples_leaf)
        model.trees.append(tree)
        pred += eta * predict_tree(tree, X)
        if val_pred is None:
            model.best_iteration = k + 1
            continue
        val_pred += eta * predict_tree(tree, X_val)
        rmse = float(np.sqrt(np.mean((y_val - val_pred) ** 2)))
        if rmse < best_rmse:
            best_rmse = rmse
            model.best_iteration = k + 1
            rounds_since_best = 0
        else:
            rounds_since_best += 1
            if rounds_since_best >= early_stop:
                break
    return model, best_rmse


def fit_xgboost(
    X: np.ndarray,
    y: np.ndarray,
    X_val: Optional[np.ndarray] = None,
    y_val: Optional[np.ndarray] = None,
    *,
    max_depth: int = 6,
    eta: Optional[float] = None,
    etas: tuple = (0.03, 0.1, 0.3),
    lam: float = 1.0,
    gamma: float = 0.0,
    n_rounds: int = 500,
    early_stop: int = 10,
    min_samples_leaf: int = 1,
) -> BoostedEnsemble:
    """Second-order additive boosting with validation-driven learning rate
    and early stopping.

    Without a validation set all rounds are kept; with one, rounds past the
    best validation RMSE are dropped at predict time, and when no round ever
    improves on the base score the ensemble degenerates to base_score only.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X_val is not None:
        X_val = np.asarray(X_val, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.float64)
    candidates = (eta,) if eta is not None else tuple(etas)
    best_model, best_rmse = None, np.inf
    for rate in candidates:
        model, rmse = _boost_one(X, y, X_val, y_val, rate, max_depth, lam,
                                 gamma, n_rounds, early_stop, min_samples_leaf)
        if best_model is None or rmse < best_rmse:
            best_model, best_rmse = model, rmse
    return best_model
