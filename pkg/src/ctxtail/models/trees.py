"""Histogram-based decision trees: random forest (Gini) and gradient boosting
(logistic loss), sharing one vectorized level-wise grower.

Features are binned once per fit; per level, per-node histograms for all
features come out of a single (bins x n) @ (n x accumulators) matmul, so
growth cost is dominated by BLAS.  Split thresholds are stored as raw feature
values, so prediction works on unbinned inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linear import sigmoid, sample_weights


@dataclass
class Tree:
    feature: np.ndarray  # (n_nodes,) int32, -1 for leaves
    threshold: np.ndarray  # (n_nodes,) float64; left iff x < threshold
    left: np.ndarray  # (n_nodes,) int32
    right: np.ndarray  # (n_nodes,) int32
    value: np.ndarray  # (n_nodes,) float64, defined at leaves

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            live = feat >= 0
            if not live.any():
                break
            idx = np.flatnonzero(live)
            go_left = X[idx, feat[idx]] < self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
        return self.value[node]

    def predict_one(self, x: np.ndarray) -> float:
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if x[self.feature[i]] < self.threshold[i] else self.right[i]
        return float(self.value[i])

    def as_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
        )


class _BinnedData:
    def __init__(self, X: np.ndarray, max_bins: int = 32):
        X = np.asarray(X, dtype=np.float64)
        n, d = X.shape
        self.n, self.d = n, d
        self.edges: list[np.ndarray] = []
        codes = np.empty((n, d), dtype=np.int32)
        lo = X.min(axis=0)
        hi = X.max(axis=0)
        qgrid = np.linspace(0, 1, max_bins + 1)[1:-1]
        for f in range(d):
            col = X[:, f]
            if lo[f] == hi[f]:
                edges = np.empty(0)
            elif np.all((col == lo[f]) | (col == hi[f])):  # two-valued column
                edges = np.array([(lo[f] + hi[f]) / 2.0])
            else:
                if n > 4 * max_bins:
                    qs = np.quantile(col, qgrid)
                    edges = np.unique(qs)
                else:
                    uniq = np.unique(col)
                    if uniq.size <= max_bins:
                        edges = (uniq[:-1] + uniq[1:]) / 2.0
                    else:
                        edges = np.unique(np.quantile(col, qgrid))
            self.edges.append(edges)
            codes[:, f] = np.searchsorted(edges, col, side="right")
        self.codes = codes
        self.n_bins = np.array([len(e) + 1 for e in self.edges], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.n_bins)])
        self.total_bins = int(self.offsets[-1])
        # Transposed one-hot of binned features (bins x samples): histogram
        # accumulation is then one matmul, and a feature subset is a row slice.
        onehot_t = np.zeros((self.total_bins, n), dtype=np.float32)
        flat = self.offsets[:-1][None, :] + codes
        rows = np.repeat(np.arange(n), d)
        onehot_t[flat.ravel(), rows] = 1.0
        self.onehot_t = onehot_t

    def subset(self, feature_idx: np.ndarray) -> "_BinnedData":
        """Row-sliced view over a feature subset (shares nothing mutable)."""
        sub = object.__new__(_BinnedData)
        sub.n = self.n
        sub.d = len(feature_idx)
        sub.edges = [self.edges[f] for f in feature_idx]
        sub.codes = self.codes[:, feature_idx]
        sub.n_bins = self.n_bins[feature_idx]
        sub.offsets = np.concatenate([[0], np.cumsum(sub.n_bins)])
        sub.total_bins = int(sub.offsets[-1])
        rows = np.concatenate(
            [np.arange(self.offsets[f], self.offsets[f] + self.n_bins[f]) for f in feature_idx]
        )
        sub.onehot_t = self.onehot_t[rows]
        return sub


def _grow_tree(
    data: _BinnedData,
    acc: np.ndarray,  # (n, n_acc) accumulator columns
    max_depth: int,
    min_samples_leaf: int,
    leaf_value_fn,
    gain_fn,
    feature_mask_fn=None,
) -> tuple[Tree, np.ndarray]:
    """Level-wise growth; returns the tree and each sample's leaf node id.

    gain_fn(hist_l, node_totals) works on stacked nodes: hist_l is
    (m, d, max_b - 1, n_acc), node_totals (m, n_acc); it returns a gain array
    (m, d, max_b - 1) and a validity mask.  When min_samples_leaf > 0 the last
    accumulator column must hold per-sample counts.
    leaf_value_fn(acc_sums row) -> leaf prediction.
    """
    n, d = data.n, data.d
    n_acc = acc.shape[1]
    max_b = int(data.n_bins.max())

    # Padded gather map: (d, max_b) rows into hist_flat, dummy row for padding.
    gather = np.full((d, max_b), data.total_bins, dtype=np.int64)
    for f in range(d):
        gather[f, : data.n_bins[f]] = np.arange(data.offsets[f], data.offsets[f] + data.n_bins[f])
    pad_mask = np.arange(max_b - 1)[None, :] < (data.n_bins[:, None] - 1)  # (d, max_b-1)

    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [0.0]
    node_of = np.zeros(n, dtype=np.int32)

    frontier = [0]
    frontier_rows: list[np.ndarray] = [np.arange(n)]
    depth = 0
    while frontier and depth < max_depth:
        m = len(frontier)
        local = np.full(n, -1, dtype=np.int64)
        for j, rows in enumerate(frontier_rows):
            local[rows] = j
        live = local >= 0
        scatter = np.zeros((n, m * n_acc), dtype=np.float32)
        cols = (local[live][:, None] * n_acc + np.arange(n_acc)[None, :]).astype(np.int64)
        scatter[np.flatnonzero(live)[:, None], cols] = acc[live]
        hist_flat = data.onehot_t @ scatter  # (total_bins, m * n_acc)
        hist_flat = np.vstack([hist_flat, np.zeros((1, m * n_acc), dtype=np.float32)])

        # (d, max_b, m, n_acc) -> (m, d, max_b, n_acc)
        hist = hist_flat[gather].reshape(d, max_b, m, n_acc).transpose(2, 0, 1, 3).astype(np.float64)
        cum = np.cumsum(hist, axis=2)  # left-side sums for split "code <= t"
        totals = cum[:, 0, -1, :] if d else np.zeros((m, n_acc))  # (m, n_acc)
        hist_l = cum[:, :, :-1, :]  # splitting after the last bin is no split

        gain, valid = gain_fn(hist_l, totals)
        if min_samples_leaf > 0:
            counts_l = hist_l[:, :, :, -1]
            counts_r = totals[:, None, None, -1] - counts_l
            valid &= (counts_l >= min_samples_leaf) & (counts_r >= min_samples_leaf)
        valid &= pad_mask[None, :, :]
        if feature_mask_fn is not None:
            for j in range(m):
                valid[j] &= feature_mask_fn(d)[:, None]
        gain = np.where(valid, gain, -np.inf)
        flat_gain = gain.reshape(m, -1)
        best_flat = np.argmax(flat_gain, axis=1)
        best_gain = flat_gain[np.arange(m), best_flat]

        next_frontier: list[int] = []
        next_rows: list[np.ndarray] = []
        for j, node_id in enumerate(frontier):
            if not np.isfinite(best_gain[j]) or best_gain[j] <= 1e-12:
                value[node_id] = leaf_value_fn(totals[j])
                continue
            f_best, t_best = divmod(int(best_flat[j]), max_b - 1)
            rows = frontier_rows[j]
            li = len(feature)
            feature.extend([-1, -1])
            threshold.extend([0.0, 0.0])
            left.extend([-1, -1])
            right.extend([-1, -1])
            value.extend([0.0, 0.0])
            feature[node_id] = f_best
            threshold[node_id] = float(data.edges[f_best][t_best])
            left[node_id] = li
            right[node_id] = li + 1
            goes_left = data.codes[rows, f_best] <= t_best
            rows_l, rows_r = rows[goes_left], rows[~goes_left]
            node_of[rows_l] = li
            node_of[rows_r] = li + 1
            next_frontier.extend([li, li + 1])
            next_rows.extend([rows_l, rows_r])
        frontier = next_frontier
        frontier_rows = next_rows
        depth += 1

    # Whatever remains on the frontier becomes leaves.
    for node_id, rows in zip(frontier, frontier_rows):
        sums = acc[rows].sum(axis=0)
        value[node_id] = leaf_value_fn(sums)

    tree = Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
    )
    return tree, node_of


class GradientBoosting:
    """Boosted regression trees on the logistic loss; scores go through the sigmoid."""

    def __init__(
        self,
        n_trees: int = 60,
        lr: float = 0.15,
        max_depth: int = 3,
        max_bins: int = 32,
        reg_lambda: float = 1.0,
        min_samples_leaf: int = 0,
        min_child_weight: float = 1.0,
        colsample: float = 1.0,
        class_weight: bool = True,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.lr = lr
        self.max_depth = max_depth
        self.max_bins = max_bins
        self.reg_lambda = reg_lambda
        self.min_samples_leaf = min_samples_leaf
        self.min_child_weight = min_child_weight
        self.colsample = colsample
        self.class_weight = class_weight
        self.seed = seed
        self.trees: list[Tree] = []
        self.base_score = 0.0
        self.loss_curve: list[float] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GradientBoosting":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        sw = sample_weights(y, self.class_weight)
        rng = np.random.default_rng(self.seed)
        data = _BinnedData(X, self.max_bins)

        p_bar = float(np.clip((sw * y).sum() / sw.sum(), 1e-6, 1 - 1e-6))
        self.base_score = float(np.log(p_bar / (1 - p_bar)))
        F = np.full(X.shape[0], self.base_score)
        lam = self.reg_lambda
        mcw = self.min_child_weight

        def gain_fn(hist_l, node_totals):
            G = node_totals[:, None, None, 0]
            H = node_totals[:, None, None, 1]
            GL, HL = hist_l[..., 0], hist_l[..., 1]
            GR, HR = G - GL, H - HL
            valid = (HL >= mcw) & (HR >= mcw)
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam)
            return 0.5 * np.nan_to_num(gain, nan=-np.inf), valid

        def leaf_value_fn(sums):
            return float(-sums[0] / (sums[1] + lam))

        self.trees = []
        self.loss_curve = []
        d = X.shape[1]
        for _ in range(self.n_trees):
            p = sigmoid(F)
            g = sw * (p - y)
            h = sw * p * (1 - p)
            if self.min_samples_leaf > 0:
                acc = np.column_stack([g, h, np.ones_like(g)])
            else:
                acc = np.column_stack([g, h])
            if self.colsample < 1.0:
                chosen = np.flatnonzero(rng.random(d) < self.colsample)
                if chosen.size == 0:
                    chosen = np.array([int(rng.integers(0, d))])
                tree, node_of = _grow_tree(
                    data.subset(chosen), acc, self.max_depth, self.min_samples_leaf,
                    leaf_value_fn, gain_fn,
                )
                internal = tree.feature >= 0
                tree.feature[internal] = chosen[tree.feature[internal]]
            else:
                tree, node_of = _grow_tree(
                    data, acc, self.max_depth, self.min_samples_leaf, leaf_value_fn, gain_fn
                )
            F = F + self.lr * tree.value[node_of]
            self.trees.append(tree)
            eps = 1e-12
            pnew = sigmoid(F)
            loss = float(
                -(sw * (y * np.log(pnew + eps) + (1 - y) * np.log(1 - pnew + eps))).sum() / sw.sum()
            )
            self.loss_curve.append(loss)
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        F = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            F += self.lr * tree.predict(X)
        return F

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.decision_function(X))


class RandomForest:
    """Bagged depth-limited trees split on Gini; score is the fraction of trees voting 1."""

    def __init__(
        self,
        n_trees: int = 50,
        max_depth: int = 8,
        max_bins: int = 32,
        min_samples_leaf: int = 2,
        max_features: str | int = "sqrt",
        class_weight: bool = True,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.max_bins = max_bins
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.class_weight = class_weight
        self.seed = seed
        self.trees: list[Tree] = []

    def _n_features(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(d)))
        if self.max_features == "all":
            return d
        return max(1, min(int(self.max_features), d))

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        n, d = X.shape
        sw_full = sample_weights(y, self.class_weight)
        rng = np.random.default_rng(self.seed)
        k = self._n_features(d)

        def gain_fn(hist_l, node_totals):
            WY = node_totals[:, None, None, 0]
            W = node_totals[:, None, None, 1]
            WYL, WL = hist_l[..., 0], hist_l[..., 1]
            WYR, WR = WY - WYL, W - WL
            valid = (WL > 0) & (WR > 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                gini_parent = W - (WY**2 + (W - WY) ** 2) / W
                gini_l = WL - (WYL**2 + (WL - WYL) ** 2) / WL
                gini_r = WR - (WYR**2 + (WR - WYR) ** 2) / WR
                gain = gini_parent - gini_l - gini_r
            return np.nan_to_num(gain, nan=-np.inf), valid

        def leaf_value_fn(sums):
            wy, w = sums[0], sums[1]
            return 1.0 if w > 0 and wy / w >= 0.5 else 0.0

        self.trees = []
        for _ in range(self.n_trees):
            idx = rng.integers(0, n, n)
            data = _BinnedData(X[idx], self.max_bins)
            acc = np.column_stack(
                [sw_full[idx] * y[idx], sw_full[idx], np.ones(n)]
            )

            def mask_fn(_d, r=rng):
                mask = np.zeros(d, dtype=bool)
                mask[r.choice(d, size=k, replace=False)] = True
                return mask

            tree, _ = _grow_tree(
                data, acc, self.max_depth, self.min_samples_leaf, leaf_value_fn, gain_fn, mask_fn
            )
            self.trees.append(tree)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros(X.shape[0])
        for tree in self.trees:
            votes += tree.predict(X)
        return votes / len(self.trees)
