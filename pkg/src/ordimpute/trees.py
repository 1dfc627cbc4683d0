"""Classification trees and random forests for ordinal predictors.

Splits respect the level ordering: every candidate is of the form
``level <= c`` for an interior threshold c, scored by the decrease in
node-size-weighted Gini impurity.  Ties are broken deterministically
toward the lowest predictor index, then the lowest threshold.  A split
is accepted only when both children keep at least ``min_leaf`` training
rows and the weighted impurity decrease exceeds the complexity
threshold (default: 1e-4 of the root node's Gini impurity).

Leaves store the class counts of the training rows routed to them, so
a leaf is a multiset of observed response levels: SAMPLE-mode
imputation draws uniformly from that multiset (for a forest, after
picking one tree uniformly at random), while MAJORITY mode predicts
each tree's modal level and takes a plurality vote across trees, every
tie again resolved toward the lowest level.

All trees of a forest are grown together, level-synchronously: one set
of vectorized histogram passes per depth covers every open node of
every tree, which keeps fitting fast without native extensions.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .base import check_level_matrix, check_levels, sample_rows_categorical

_NEG_INF = -np.inf


class _ForestArrays:
    """Flat node storage shared by all trees of one forest."""

    __slots__ = ("var", "thr", "left", "right", "leaf_counts", "roots", "n_classes")

    def __init__(self, var, thr, left, right, leaf_counts, roots, n_classes):
        self.var = var
        self.thr = thr
        self.left = left
        self.right = right
        self.leaf_counts = leaf_counts
        self.roots = roots
        self.n_classes = n_classes

    @property
    def n_nodes(self) -> int:
        return self.var.size

    def is_leaf(self, ids: np.ndarray) -> np.ndarray:
        return self.var[ids] < 0


def _grow(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    cards: np.ndarray,
    n_trees: int,
    mtry: int,
    min_leaf: int,
    complexity: float | None,
    bootstrap: bool,
    rng: np.random.Generator | None,
    max_depth: int,
) -> _ForestArrays:
    n, q = X.shape
    C = n_classes
    if bootstrap:
        rows = rng.integers(0, n, size=n_trees * n)
    else:
        rows = np.tile(np.arange(n), n_trees)
    ix = np.ascontiguousarray(X[rows] - 1)  # 0-based levels, (R, q)
    iy = np.ascontiguousarray(y[rows] - 1)  # 0-based classes, (R,)
    R = rows.size
    n_per_tree = float(n)

    # Frontier state: one slot per open node.
    slot = np.repeat(np.arange(n_trees), n)  # instance -> slot
    active = np.arange(R)  # instances in open nodes
    slot_node = np.arange(n_trees)  # slot -> global node id
    slot_tree = np.arange(n_trees)  # slot -> tree
    next_id = n_trees

    # Node records filled on resolution.
    rec_internal: list[tuple[np.ndarray, ...]] = []
    rec_leaf: list[tuple[np.ndarray, np.ndarray]] = []
    tree_threshold: np.ndarray | None = None

    dmax = int(cards.max())
    depth = 0
    while slot_node.size:
        F = slot_node.size
        sx = ix[active]
        sy = iy[active]
        ss = slot[active]
        # Per-slot class counts and Gini from a single histogram pass.
        cls_counts = np.bincount(ss * C + sy, minlength=F * C).reshape(F, C).astype(float)
        n_f = cls_counts.sum(axis=1)
        sumsq = (cls_counts**2).sum(axis=1)
        gini = 1.0 - sumsq / n_f**2
        if depth == 0:
            # slots at depth 0 are exactly the trees, in order
            if complexity is None:
                tree_threshold = 1e-4 * gini
            else:
                tree_threshold = np.full(n_trees, float(complexity))
        thr_f = tree_threshold[slot_tree]

        force_leaf = depth >= max_depth or q == 0 or dmax < 2
        if not force_leaf:
            gains = np.full((F, q, dmax - 1), _NEG_INF)
            for k in range(q):
                Dk = int(cards[k])
                if Dk < 2:
                    continue
                hist = (
                    np.bincount(
                        (ss * Dk + sx[:, k]) * C + sy,
                        minlength=F * Dk * C,
                    )
                    .reshape(F, Dk, C)
                    .astype(float)
                )
                left = np.cumsum(hist, axis=1)[:, : Dk - 1, :]  # (F, Dk-1, C)
                nL = left.sum(axis=2)
                nR = n_f[:, None] - nL
                with np.errstate(divide="ignore", invalid="ignore"):
                    wL = nL - (left**2).sum(axis=2) / nL
                    right = cls_counts[:, None, :] - left
                    wR = nR - (right**2).sum(axis=2) / nR
                    g = (n_f[:, None] * gini[:, None] - wL - wR) / n_per_tree
                bad = (nL < min_leaf) | (nR < min_leaf)
                g[bad] = _NEG_INF
                g[~np.isfinite(g)] = _NEG_INF
                gains[:, k, : Dk - 1] = g
            if mtry < q:
                ranks = np.argsort(rng.random((F, q)), axis=1)
                allowed = ranks < mtry
                gains[~allowed] = _NEG_INF
            flat = gains.reshape(F, q * (dmax - 1))
            best = flat.argmax(axis=1)
            best_gain = flat[np.arange(F), best]
            best_var = best // (dmax - 1)
            best_thr = best % (dmax - 1) + 1  # threshold c: go left if level <= c
            do_split = best_gain > thr_f
        else:
            do_split = np.zeros(F, dtype=bool)
            best_var = np.zeros(F, dtype=np.int64)
            best_thr = np.ones(F, dtype=np.int64)

        # Resolve leaves.
        leaf_slots = np.flatnonzero(~do_split)
        if leaf_slots.size:
            rec_leaf.append((slot_node[leaf_slots], cls_counts[leaf_slots]))
        # Resolve splits and build the next frontier.
        split_slots = np.flatnonzero(do_split)
        if split_slots.size == 0:
            break
        S = split_slots.size
        lefts = next_id + 2 * np.arange(S)
        rights = lefts + 1
        rec_internal.append(
            (slot_node[split_slots], best_var[split_slots], best_thr[split_slots], lefts, rights)
        )
        next_id += 2 * S
        # Route active instances of splitting slots to child slots.
        slot_pos = np.full(F, -1)
        slot_pos[split_slots] = np.arange(S)
        pos = slot_pos[ss]
        keep = pos >= 0
        inst = active[keep]
        posk = pos[keep]
        went_right = (
            sx[keep, best_var[split_slots][posk]] > best_thr[split_slots][posk] - 1
        )
        slot[inst] = 2 * posk + went_right
        active = inst
        slot_node = np.empty(2 * S, dtype=np.int64)
        slot_node[0::2] = lefts
        slot_node[1::2] = rights
        slot_tree = np.repeat(slot_tree[split_slots], 2)
        depth += 1

    # Assemble dense arrays.
    N = next_id
    var = np.full(N, -1, dtype=np.int64)
    thr = np.zeros(N, dtype=np.int64)
    left = np.full(N, -1, dtype=np.int64)
    right = np.full(N, -1, dtype=np.int64)
    leaf_counts = np.zeros((N, C), dtype=np.int64)
    for ids, v, t, l, r in rec_internal:
        var[ids] = v
        thr[ids] = t
        left[ids] = l
        right[ids] = r
    for ids, counts in rec_leaf:
        leaf_counts[ids] = counts.astype(np.int64)
    return _ForestArrays(var, thr, left, right, leaf_counts, np.arange(n_trees), C)


def _route(forest: _ForestArrays, X0: np.ndarray, tree_ids: np.ndarray) -> np.ndarray:
    """Leaf node id for each (row, tree) pair; X0 holds 0-based levels."""
    cur = forest.roots[tree_ids].copy()
    pending = np.flatnonzero(forest.var[cur] >= 0)
    while pending.size:
        nodes = cur[pending]
        v = forest.var[nodes]
        go_right = X0[pending, v] > forest.thr[nodes] - 1
        cur[pending] = np.where(go_right, forest.right[nodes], forest.left[nodes])
        pending = pending[forest.var[cur[pending]] >= 0]
    return cur


def _majority_from_counts(counts: np.ndarray) -> np.ndarray:
    """Modal class per row, ties to the lowest level (argmax keeps the first max)."""
    return counts.argmax(axis=1) + 1


class CartSampler(BaseEstimator):
    """Single classification tree with leaf-multiset sampling.

    Fitting is a deterministic function of the training data: no
    randomness enters until ``sample`` draws from a leaf.
    """

    def __init__(
        self,
        min_leaf: int = 4,
        complexity: float | None = None,
        max_depth: int = 32,
    ):
        self.min_leaf = min_leaf
        self.complexity = complexity
        self.max_depth = max_depth

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        cardinality: int | None = None,
        predictor_cardinalities: np.ndarray | None = None,
    ):
        X, y, cards, C = _check_tree_input(X, y, cardinality, predictor_cardinalities)
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")
        if y.size < self.min_leaf:
            raise ValueError(f"need at least min_leaf={self.min_leaf} rows")
        self.cardinality_ = C
        self.predictor_cardinalities_ = cards
        self.forest_ = _grow(
            X,
            y,
            C,
            cards,
            n_trees=1,
            mtry=X.shape[1],
            min_leaf=self.min_leaf,
            complexity=self.complexity,
            bootstrap=False,
            rng=None,
            max_depth=self.max_depth,
        )
        return self

    def leaf_counts(self, X: np.ndarray) -> np.ndarray:
        """Class-count vector of the leaf each row lands in."""
        X = check_level_matrix(X, self.predictor_cardinalities_)
        leaves = _route(self.forest_, X - 1, np.zeros(X.shape[0], dtype=np.int64))
        return self.forest_.leaf_counts[leaves]

    def sample(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one level per row uniformly from its leaf multiset."""
        counts = self.leaf_counts(X).astype(float)
        return sample_rows_categorical(counts, rng)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Modal leaf level per row, ties to the lowest level."""
        return _majority_from_counts(self.leaf_counts(X))

    def root_split(self) -> tuple[int, int] | None:
        """(variable, threshold) at the root, or None for a single leaf."""
        root = int(self.forest_.roots[0])
        if self.forest_.var[root] < 0:
            return None
        return int(self.forest_.var[root]), int(self.forest_.thr[root])


class ForestSampler(BaseEstimator):
    """Random forest over ordinal predictors with two imputation modes.

    SAMPLE mode picks a tree uniformly at random per row and draws from
    its leaf multiset, preserving draw variability across imputations;
    MAJORITY mode takes the plurality of per-tree modal levels and is a
    deterministic function of (fitted forest, row).  Bootstrap samples
    are of size n; ``mtry`` predictors (default floor(sqrt(q))) are
    candidate split variables at each node.
    """

    def __init__(
        self,
        n_trees: int = 10,
        mtry: int | None = None,
        min_leaf: int = 4,
        complexity: float | None = None,
        mode: str = "sample",
        max_depth: int = 32,
    ):
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_leaf = min_leaf
        self.complexity = complexity
        self.mode = mode
        self.max_depth = max_depth

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        rng: np.random.Generator,
        cardinality: int | None = None,
        predictor_cardinalities: np.ndarray | None = None,
    ):
        if self.mode not in ("sample", "majority"):
            raise ValueError(f"mode must be 'sample' or 'majority', got {self.mode!r}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        X, y, cards, C = _check_tree_input(X, y, cardinality, predictor_cardinalities)
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")
        if y.size < self.min_leaf:
            raise ValueError(f"need at least min_leaf={self.min_leaf} rows")
        mtry = self.mtry
        if mtry is None:
            mtry = max(1, int(np.floor(np.sqrt(X.shape[1]))))
        if not 1 <= mtry <= max(1, X.shape[1]):
            raise ValueError(f"mtry must be in 1..{X.shape[1]}")
        self.mtry_ = mtry
        self.cardinality_ = C
        self.predictor_cardinalities_ = cards
        self.forest_ = _grow(
            X,
            y,
            C,
            cards,
            n_trees=self.n_trees,
            mtry=mtry,
            min_leaf=self.min_leaf,
            complexity=self.complexity,
            bootstrap=True,
            rng=rng,
            max_depth=self.max_depth,
        )
        return self

    def _tree_counts(self, X: np.ndarray, tree_ids: np.ndarray) -> np.ndarray:
        leaves = _route(self.forest_, X - 1, tree_ids)
        return self.forest_.leaf_counts[leaves]

    def impute(self, X: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Impute one level per row according to the configured mode."""
        X = check_level_matrix(X, self.predictor_cardinalities_)
        n = X.shape[0]
        if self.mode == "sample":
            if rng is None:
                raise ValueError("SAMPLE mode needs an rng")
            tree_ids = rng.integers(0, self.n_trees, size=n)
            counts = self._tree_counts(X, tree_ids).astype(float)
            return sample_rows_categorical(counts, rng)
        # majority: every tree votes with its modal level
        reps = np.repeat(np.arange(n), self.n_trees)
        tree_ids = np.tile(np.arange(self.n_trees), n)
        counts = self._tree_counts(X[reps], tree_ids)
        votes = _majority_from_counts(counts).reshape(n, self.n_trees)
        tallies = np.zeros((n, self.cardinality_), dtype=np.int64)
        for t in range(self.n_trees):
            np.add.at(tallies, (np.arange(n), votes[:, t] - 1), 1)
        return _majority_from_counts(tallies)

    def mixture_pmf(self, x_row: np.ndarray) -> np.ndarray:
        """SAMPLE-mode draw distribution for one row: tree-uniform leaf mixture."""
        X = check_level_matrix(
            np.asarray(x_row)[None, :], self.predictor_cardinalities_
        )
        reps = np.repeat(X - 1, self.n_trees, axis=0)
        leaves = _route(self.forest_, reps, np.arange(self.n_trees))
        counts = self.forest_.leaf_counts[leaves].astype(float)
        pmf = counts / counts.sum(axis=1, keepdims=True)
        return pmf.mean(axis=0)


def _check_tree_input(X, y, cardinality, predictor_cardinalities):
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    if predictor_cardinalities is None:
        predictor_cardinalities = X.max(axis=0) if X.shape[1] else np.zeros(0)
    cards = np.asarray(predictor_cardinalities, dtype=np.int64)
    X = check_level_matrix(X, cards)
    y = np.asarray(y)
    if cardinality is None:
        cardinality = int(y.max())
    y = check_levels(y, cardinality, "labels")
    if y.size != X.shape[0]:
        raise ValueError("X and y disagree on n")
    return X, y, cards, int(cardinality)
