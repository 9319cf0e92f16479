"""Multi-output CART regression trees and random forests.

A split maximizes the reduction of the summed per-output squared error.
For a node whose target rows y_1..y_n are sorted along a feature, splitting
after position i reduces the error by, up to a node constant,

    |S_i|^2 / i + |S - S_i|^2 / (n - i),      S_i = y_1 + ... + y_i.

Every term is an inner product of training rows, so all trees of a forest
share one Gram matrix G = Y Y^T of the centred targets and the scan costs
O(n^2) per node and feature whatever the output width. With 4T targets per
scenario this is far cheaper than cumulative sums over the targets.

A fitted forest keeps, per leaf, the multiset of training rows that reached
it. Predictions are a sparse (query x train) weight matrix times the
training targets, i.e. the average of the leaf means.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import sparse

from aebsurro.experts.base import Expert, check_positive_int
from aebsurro.sim import CHANNELS


class Tree:
    """Flat node arrays of one fitted tree; ``feature == -1`` marks a leaf."""

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.leaf_rows = {}  # node -> training rows (with bootstrap repeats)

    def add_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        return len(self.feature) - 1

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def n_leaves(self):
        return len(self.leaf_rows)

    def apply(self, X):
        """Leaf node reached by each row of X."""
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        nodes = np.zeros(len(X), dtype=int)
        while True:
            f = feature[nodes]
            inner = f >= 0
            if not inner.any():
                return nodes
            go_left = X[np.arange(len(X)), np.where(inner, f, 0)] <= threshold[nodes]
            nodes = np.where(inner, np.where(go_left, left[nodes], right[nodes]), nodes)


def scan_feature(x_sorted, gram_sorted, min_leaf):
    """Best split along one feature for a node already sorted by that feature.

    Returns (score, position) with the left child made of the first
    ``position`` rows, or (-inf, None) when no admissible threshold exists.
    """
    n = len(x_sorted)
    pos = np.arange(min_leaf, n - min_leaf + 1)
    pos = pos[x_sorted[pos - 1] < x_sorted[pos]]
    if len(pos) == 0:
        return -np.inf, None
    prefix = np.cumsum(gram_sorted, axis=1)
    # |S_i|^2 = sum_{a,b<=i} G_ab, built row by row from the strictly lower triangle
    lower = np.zeros(n)
    lower[1:] = prefix[np.arange(1, n), np.arange(n - 1)]
    sq = np.cumsum(2.0 * lower + np.diagonal(gram_sorted))
    dot = np.cumsum(prefix[:, -1])  # S . S_i
    total = dot[-1]
    sq_i, dot_i = sq[pos - 1], dot[pos - 1]
    score = sq_i / pos + (total - 2.0 * dot_i + sq_i) / (n - pos)
    best = int(np.argmax(score))
    return float(score[best]), int(pos[best])


def _is_constant(idx, node_gram, Y):
    if idx.min() == idx.max():
        return True
    trace = float(np.trace(node_gram))
    sse = trace - float(node_gram.sum()) / len(idx)
    if sse > 1e-9 * trace:
        return False
    return float(np.ptp(Y[idx], axis=0).max()) == 0.0


def build_tree(X, Y, gram, rows, mtry, min_leaf=1, max_depth=None, rng=None):
    """Grow one tree on ``rows`` (indices into X, Y and gram; repeats allowed).

    At each node ``mtry`` features are drawn without replacement; if none of
    them admits a threshold the remaining features are tried in random order.
    """
    rng = np.random.default_rng() if rng is None else rng
    n_features = X.shape[1]
    tree = Tree()
    stack = [(tree.add_node(), np.asarray(rows, dtype=int), 0)]
    while stack:
        node, idx, depth = stack.pop()
        best = None
        if len(idx) >= 2 * min_leaf and (max_depth is None or depth < max_depth):
            best_score = -np.inf
            for rank, f in enumerate(rng.permutation(n_features)):
                if rank >= mtry and best is not None:
                    break
                order = np.argsort(X[idx, f], kind="stable")
                sorted_rows = idx[order]
                sub = gram.take(sorted_rows, axis=0).take(sorted_rows, axis=1)
                if rank == 0 and _is_constant(idx, sub, Y):
                    break
                x_sorted = X[sorted_rows, f]
                score, position = scan_feature(x_sorted, sub, min_leaf)
                if position is not None and score > best_score:
                    best_score = score
                    best = (f, order, x_sorted, position)
        if best is None:
            tree.leaf_rows[node] = idx
            continue
        f, order, x_sorted, position = best
        threshold = 0.5 * (x_sorted[position - 1] + x_sorted[position])
        if threshold >= x_sorted[position]:
            threshold = x_sorted[position - 1]
        tree.feature[node] = int(f)
        tree.threshold[node] = float(threshold)
        left, right = tree.add_node(), tree.add_node()
        tree.left[node], tree.right[node] = left, right
        stack.append((right, idx[order[position:]], depth + 1))
        stack.append((left, idx[order[:position]], depth + 1))
    return tree


class RandomForest:
    """Bagged multi-output CART trees averaged at prediction time.

    Tree ``i`` draws its randomness from the ``i``-th child of
    ``SeedSequence(seed)``, so a forest's first trees do not change when more
    trees are added.
    """

    def __init__(self, n_trees=200, mtry=2, min_leaf=2, max_depth=None, bootstrap=True, seed=0, n_jobs=1):
        self.n_trees = check_positive_int("n_trees", n_trees)
        self.mtry = check_positive_int("mtry", mtry)
        self.min_leaf = check_positive_int("min_leaf", min_leaf)
        self.max_depth = None if max_depth is None else check_positive_int("max_depth", max_depth, 0)
        self.bootstrap = bool(bootstrap)
        self.seed = seed
        self.n_jobs = max(1, int(n_jobs))

    def fit(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
        n = len(X)
        self.n_features_ = X.shape[1]
        self.Y_ = Y.copy()
        centred = Y - Y.mean(axis=0)
        gram = centred @ centred.T
        mtry = min(self.mtry, self.n_features_)
        root = self.seed if isinstance(self.seed, np.random.SeedSequence) else np.random.SeedSequence(self.seed)
        # same children as root.spawn() but without advancing the caller's sequence
        seeds = [np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + (i,)) for i in range(self.n_trees)]

        def grow(seed_seq):
            rng = np.random.default_rng(seed_seq)
            rows = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            return build_tree(X, centred, gram, rows, mtry, self.min_leaf, self.max_depth, rng)

        if self.n_jobs > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                self.trees_ = list(pool.map(grow, seeds))
        else:
            self.trees_ = [grow(s) for s in seeds]
        self._compile(n)
        return self

    def _compile(self, n_train):
        """Concatenate the trees into flat arrays and a leaf -> train weight matrix."""
        feature, threshold, left, right, leaf_of = [], [], [], [], []
        roots = []
        w_rows, w_cols, w_vals = [], [], []
        offset = n_leaves = 0
        for tree in self.trees_:
            roots.append(offset)
            feature.append(np.asarray(tree.feature, dtype=np.int64))
            threshold.append(np.asarray(tree.threshold, dtype=float))
            shift = lambda a: np.where(np.asarray(a) >= 0, np.asarray(a) + offset, -1)  # noqa: E731
            left.append(shift(tree.left))
            right.append(shift(tree.right))
            ids = np.full(tree.n_nodes, -1, dtype=np.int64)
            for node in sorted(tree.leaf_rows):
                rows = tree.leaf_rows[node]
                uniq, counts = np.unique(rows, return_counts=True)
                ids[node] = n_leaves
                w_rows.append(np.full(len(uniq), n_leaves))
                w_cols.append(uniq)
                w_vals.append(counts / len(rows))
                n_leaves += 1
            leaf_of.append(ids)
            offset += tree.n_nodes
        self.feature_ = np.concatenate(feature)
        self.threshold_ = np.concatenate(threshold)
        self.left_ = np.concatenate(left)
        self.right_ = np.concatenate(right)
        self.leaf_of_ = np.concatenate(leaf_of)
        self.roots_ = np.asarray(roots, dtype=np.int64)
        self.leaf_weights_ = sparse.csr_matrix(
            (np.concatenate(w_vals), (np.concatenate(w_rows), np.concatenate(w_cols))),
            shape=(n_leaves, n_train))

    def apply(self, X):
        """Global leaf index per (query, tree)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        nodes = np.broadcast_to(self.roots_, (len(X), len(self.roots_))).copy()
        rows = np.arange(len(X))[:, None]
        while True:
            f = self.feature_[nodes]
            inner = f >= 0
            if not inner.any():
                break
            go_left = X[rows, np.where(inner, f, 0)] <= self.threshold_[nodes]
            nodes = np.where(inner, np.where(go_left, self.left_[nodes], self.right_[nodes]), nodes)
        return self.leaf_of_[nodes]

    def weights(self, X):
        """Sparse (query x train) weights: prediction = weights @ Y_train."""
        leaves = self.apply(X)
        m, k = leaves.shape
        pick = sparse.csr_matrix((np.full(m * k, 1.0 / k), leaves.ravel(), np.arange(0, m * k + 1, k)),
                                 shape=(m, self.leaf_weights_.shape[0]))
        return pick @ self.leaf_weights_

    def predict(self, X):
        return np.asarray(self.weights(X) @ self.Y_)


def _forest_kwargs(hp, seed, n_jobs):
    return dict(n_trees=hp["n_trees"], mtry=hp["mtry"], min_leaf=hp["min_leaf"], max_depth=hp.get("max_depth"),
                bootstrap=hp.get("bootstrap", True), seed=seed, n_jobs=n_jobs)


class GlobalRFExpert(Expert):
    """One forest over all 4*T outputs ("1-RF")."""

    family = "1-rf"

    def __init__(self, n_trees=200, mtry=2, min_leaf=2, seed=0, bootstrap=True, max_depth=None,
                 n_jobs=1, name=None):
        super().__init__(name, n_trees=n_trees, mtry=mtry, min_leaf=min_leaf, seed=seed,
                         bootstrap=bootstrap, max_depth=max_depth)
        self.n_jobs = n_jobs

    def _fit(self, X, Y):
        hp = self.hyperparameters
        self.forest_ = RandomForest(**_forest_kwargs(hp, hp["seed"], self.n_jobs)).fit(X, Y.reshape(len(Y), -1))

    def _predict(self, X):
        return self.forest_.predict(X)


class PerSeriesRFExpert(Expert):
    """One forest per output channel ("4-RF")."""

    family = "4-rf"

    def __init__(self, n_trees=200, mtry=2, min_leaf=2, seed=0, bootstrap=True, max_depth=None,
                 n_jobs=1, name=None):
        super().__init__(name, n_trees=n_trees, mtry=mtry, min_leaf=min_leaf, seed=seed,
                         bootstrap=bootstrap, max_depth=max_depth)
        self.n_jobs = n_jobs

    def _fit(self, X, Y):
        hp = self.hyperparameters
        seeds = np.random.SeedSequence(hp["seed"]).spawn(len(CHANNELS))
        self.forests_ = [RandomForest(**_forest_kwargs(hp, s, self.n_jobs)).fit(X, Y[:, c, :])
                         for c, s in enumerate(seeds)]

    def _predict(self, X):
        return np.stack([f.predict(X) for f in self.forests_], axis=1)


def fit_rf_global(X, Y, n_trees=200, mtry=2, min_leaf=2, seed=0, **kwargs):
    return GlobalRFExpert(n_trees, mtry, min_leaf, seed, **kwargs).fit(X, Y)


def fit_rf_per_series(X, Y, n_trees=200, mtry=2, min_leaf=2, seed=0, **kwargs):
    return PerSeriesRFExpert(n_trees, mtry, min_leaf, seed, **kwargs).fit(X, Y)


def default_mtry(n_features):
    return max(1, n_features // 3)

