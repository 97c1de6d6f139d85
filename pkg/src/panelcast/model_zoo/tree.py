"""Binary CART used by all tree-based families.

The same builder supports two split criteria: Gini impurity on 0/1 labels
(single trees, forests, extra trees) and the second-order gain used by the
boosting module (gradient/Hessian sums with an L2 leaf penalty). Thresholds
are midpoints between adjacent distinct values; among equal-quality splits
the lowest column index wins, then the lowest threshold, so refits are
reproducible.

When the feature matrix is integer-valued with a small range (the windowed
count features always are), split search runs on per-value histograms
instead of per-node sorts; both kernels produce identical trees for such
data.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import PipelineError
from ._kernels import scan_gini_hist, scan_newton_hist
from .base import TrainedModel, as_matrix, check_training_inputs

_HIST_MAX_VALUE = 255


class Tree:
    """Flat-array binary tree; node 0 is the root, -1 marks a leaf slot."""

    __slots__ = ("feature", "threshold", "left", "right", "value", "n_node", "importance")

    def __init__(self, feature, threshold, left, right, value, n_node, importance):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)
        self.n_node = np.asarray(n_node, dtype=np.int64)
        self.importance = np.asarray(importance, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_values(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.float64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            f = self.feature[node]
            if f < 0:
                out[rows] = self.value[node]
                continue
            go_left = X[rows, f] <= self.threshold[node]
            stack.append((self.right[node], rows[~go_left]))
            stack.append((self.left[node], rows[go_left]))
        return out

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            f = self.feature[node]
            if f >= 0:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max()) if self.n_nodes else 0

    def leaf_sizes(self) -> np.ndarray:
        leaves = self.feature < 0
        return self.n_node[leaves]

    def to_state(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_node": self.n_node.tolist(),
            "importance": self.importance.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "Tree":
        return cls(**state)


def int_codes_or_none(X: np.ndarray) -> np.ndarray | None:
    """An int16 copy of X when histogram split search applies."""
    if X.size == 0:
        return None
    lo, hi = X.min(), X.max()
    if lo < 0 or hi > _HIST_MAX_VALUE:
        return None
    if not np.all(X == np.floor(X)):
        return None
    return X.astype(np.int16)


def _gini_sum(pos: np.ndarray, n: np.ndarray) -> np.ndarray:
    """n * gini(pos/n), safe at n == 0."""
    n = np.asarray(n, dtype=np.float64)
    pos = np.asarray(pos, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = n - (pos * pos + (n - pos) * (n - pos)) / n
    return np.where(n > 0, out, 0.0)


def _best_gini_sort(vals, y_node, m, pos_total, min_leaf):
    order = np.argsort(vals, kind="mergesort")
    sv = vals[order]
    cpos = np.cumsum(y_node[order])
    tt = np.flatnonzero(sv[1:] != sv[:-1]) + 1  # candidate left sizes
    if tt.size == 0:
        return None
    valid = (tt >= min_leaf) & ((m - tt) >= min_leaf)
    tt = tt[valid]
    if tt.size == 0:
        return None
    nl = tt.astype(np.float64)
    posl = cpos[tt - 1]
    nr, posr = m - nl, pos_total - posl
    parent = _gini_sum(np.array(pos_total), np.array(m))
    decrease = (parent - _gini_sum(posl, nl) - _gini_sum(posr, nr)) / m
    k = int(np.argmax(decrease))
    t = tt[k]
    return float(decrease[k]), (float(sv[t - 1]) + float(sv[t])) / 2.0


def _newton_objective(g, h, lam):
    return g * g / (h + lam)


def _best_newton_sort(vals, g_node, h_node, g_total, h_total, m, min_leaf, lam):
    order = np.argsort(vals, kind="mergesort")
    sv = vals[order]
    cg = np.cumsum(g_node[order])
    ch = np.cumsum(h_node[order])
    tt = np.flatnonzero(sv[1:] != sv[:-1]) + 1
    if tt.size == 0:
        return None
    valid = (tt >= min_leaf) & ((m - tt) >= min_leaf)
    tt = tt[valid]
    if tt.size == 0:
        return None
    gl, hl = cg[tt - 1], ch[tt - 1]
    gain = (
        _newton_objective(gl, hl, lam)
        + _newton_objective(g_total - gl, h_total - hl, lam)
        - _newton_objective(g_total, h_total, lam)
    )
    k = int(np.argmax(gain))
    t = tt[k]
    return float(gain[k]), (float(sv[t - 1]) + float(sv[t])) / 2.0


def _random_threshold_split(X, rows, feats, y_node, m, pos_total, min_leaf, rng):
    """One uniform threshold per candidate feature; best random cut by Gini."""
    cols = X[np.ix_(rows, feats)]
    lo = cols.min(axis=0)
    hi = cols.max(axis=0)
    thresholds = rng.uniform(lo, hi)
    mask = cols <= thresholds
    nl = mask.sum(axis=0).astype(np.float64)
    pl = (y_node[:, None] * mask).sum(axis=0)
    valid = (hi > lo) & (nl >= min_leaf) & ((m - nl) >= min_leaf)
    if not valid.any():
        return 0.0, -1, 0.0
    parent = float(_gini_sum(np.array(float(pos_total)), np.array(float(m))))
    decrease = (parent - _gini_sum(pl, nl) - _gini_sum(pos_total - pl, m - nl)) / m
    decrease = np.where(valid, decrease, -np.inf)
    k = int(np.argmax(decrease))
    if decrease[k] <= 0.0:
        return 0.0, -1, 0.0
    return float(decrease[k]), int(feats[k]), float(thresholds[k])


def resolve_max_features(max_features, n_features: int) -> int:
    """Number of split candidates: 'sqrt'/'log2' round up with a floor of 1;
    None (or 'all') means every column."""
    if max_features in (None, "all", "null"):
        return n_features
    if max_features == "sqrt":
        return max(1, min(n_features, math.ceil(math.sqrt(n_features))))
    if max_features == "log2":
        return max(1, min(n_features, math.ceil(math.log2(n_features)) if n_features > 1 else 1))
    if isinstance(max_features, (int, np.integer)) and max_features >= 1:
        return min(n_features, int(max_features))
    raise PipelineError("CONFIG_INVALID", f"unsupported max_features {max_features!r}")


def grow_tree(
    X: np.ndarray,
    *,
    criterion: str,
    y: np.ndarray | None = None,
    grad: np.ndarray | None = None,
    hess: np.ndarray | None = None,
    max_depth: int | None,
    min_samples_leaf: int = 1,
    max_features=None,
    rng: np.random.Generator | None = None,
    random_thresholds: bool = False,
    lam: float = 1.0,
    codes: np.ndarray | None = None,
) -> Tree:
    """Grow one tree.

    criterion 'gini' needs ``y``; criterion 'newton' needs ``grad``/``hess``
    and stores leaf values -sum(g)/(sum(h)+lam). ``codes`` is the optional
    int16 view enabling histogram split search. ``random_thresholds`` draws
    one uniform cut per candidate feature instead of scanning (extra trees).
    """
    n, p = X.shape
    k_features = resolve_max_features(max_features, p)
    if k_features < p and rng is None:
        raise PipelineError("CONFIG_INVALID", "feature subsampling needs an rng")
    if random_thresholds and rng is None:
        raise PipelineError("CONFIG_INVALID", "random thresholds need an rng")
    n_values = int(codes.max()) + 1 if codes is not None and codes.size else 0
    all_feats = np.arange(p, dtype=np.int64)

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    n_node: list[int] = []
    importance = np.zeros(p, dtype=np.float64)

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        n_node.append(0)
        return len(feature) - 1

    root = new_node()
    stack: list[tuple[int, np.ndarray, int]] = [(root, np.arange(n), 0)]
    while stack:
        idx, rows, depth = stack.pop()
        m = rows.size
        n_node[idx] = m

        if criterion == "gini":
            y_node = y[rows]
            pos_total = float(y_node.sum())
            value[idx] = pos_total / m
            splittable = 0.0 < pos_total < m
        else:
            g_node, h_node = grad[rows], hess[rows]
            g_total, h_total = float(g_node.sum()), float(h_node.sum())
            value[idx] = -g_total / (h_total + lam)
            splittable = True

        if (
            not splittable
            or m < 2 * min_samples_leaf
            or m < 2
            or (max_depth is not None and depth >= max_depth)
        ):
            continue

        feats = (
            np.sort(rng.choice(p, size=k_features, replace=False)).astype(np.int64)
            if k_features < p
            else all_feats
        )

        if random_thresholds:
            best_score, best_feat, best_thr = _random_threshold_split(
                X, rows, feats, y_node, m, pos_total, min_samples_leaf, rng
            )
        elif codes is not None:
            if criterion == "gini":
                best_score, best_feat, best_thr = scan_gini_hist(
                    codes, rows, feats, y, float(min_samples_leaf), n_values
                )
            else:
                best_score, best_feat, best_thr = scan_newton_hist(
                    codes, rows, feats, grad, hess, lam, float(min_samples_leaf), n_values
                )
        else:
            best_score, best_feat, best_thr = 0.0, -1, 0.0
            for f in feats:
                col = X[rows, f]
                if criterion == "gini":
                    found = _best_gini_sort(col, y_node, m, pos_total, min_samples_leaf)
                else:
                    found = _best_newton_sort(
                        col, g_node, h_node, g_total, h_total, m, min_samples_leaf, lam
                    )
                if found is None:
                    continue
                score, thr = found
                if score > best_score:
                    best_score, best_feat, best_thr = score, int(f), thr

        if best_feat < 0:
            continue

        col = X[rows, best_feat]
        go_left = col <= best_thr
        rows_l, rows_r = rows[go_left], rows[~go_left]
        if rows_l.size == 0 or rows_r.size == 0:
            continue

        feature[idx] = best_feat
        threshold[idx] = best_thr
        if criterion == "gini":
            importance[best_feat] += (m / n) * best_score
        else:
            importance[best_feat] += best_score
        left_id, right_id = new_node(), new_node()
        left[idx], right[idx] = left_id, right_id
        stack.append((right_id, rows_r, depth + 1))
        stack.append((left_id, rows_l, depth + 1))

    return Tree(feature, threshold, left, right, value, n_node, importance)


class TreeModel(TrainedModel):
    family = "tree"

    def __init__(self, tree: Tree, n_features: int, **kwargs):
        super().__init__(**kwargs)
        self.tree = tree
        self._n_features = n_features

    @property
    def n_features(self) -> int:
        return self._n_features

    def _predict(self, values: np.ndarray) -> np.ndarray:
        return self.tree.predict_values(values)

    def importances_raw(self) -> np.ndarray:
        return self.tree.importance.copy()

    def to_state(self) -> dict:
        return {"tree": self.tree.to_state(), "n_features": self._n_features}

    @classmethod
    def from_state(cls, state: dict, **kwargs) -> "TreeModel":
        return cls(Tree.from_state(state["tree"]), state["n_features"], **kwargs)


def train_tree(
    X,
    y,
    max_depth: int | None,
    max_features=None,
    seed: int = 0,
) -> TreeModel:
    """Fit a single Gini CART; a single-class y yields a one-leaf tree."""
    values, fingerprint, names = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    check_training_inputs(values, y, require_variation=False)
    rng = np.random.default_rng(seed)
    tree = grow_tree(
        values,
        criterion="gini",
        y=y,
        max_depth=max_depth,
        min_samples_leaf=1,
        max_features=max_features,
        rng=rng,
        codes=int_codes_or_none(values),
    )
    return TreeModel(
        tree,
        values.shape[1],
        params={"max_depth": max_depth, "max_features": max_features},
        seed=seed,
        fingerprint=fingerprint,
        column_names=names,
    )
