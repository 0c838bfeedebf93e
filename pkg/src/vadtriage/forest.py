"""From-scratch CART trees and a seeded random-forest ensemble.

Split search is exhaustive over midpoints between adjacent observed values of
each candidate feature, minimizing weighted child Gini impurity. Ties break
deterministically: lowest feature index, then lowest threshold. Each tree in
a forest consumes an independent substream spawned from the forest seed, so
results are reproducible bit-for-bit and trees could be fit in parallel
without changing the outcome.

Trees are stored as flat arrays (fast batch prediction); the nested
Split/Leaf view is materialized on demand for audit and export.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .domain import stable_seed
from .errors import (
    EmptyTraining,
    NoOobRows,
    TooFewRowsPerClass,
    UntrainedModel,
)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    max_depth: Optional[int] = None
    min_leaf: int = 1
    mtry: int = 3  # ceil(sqrt(7))

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry < 1:
            raise ValueError("mtry must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "mtry": self.mtry,
        }

    @classmethod
    def from_dict(cls, d) -> "ForestParams":
        return cls(
            n_trees=d["n_trees"],
            max_depth=d["max_depth"],
            min_leaf=d["min_leaf"],
            mtry=d["mtry"],
        )


@dataclass(frozen=True)
class Leaf:
    vad_count: int
    total: int

    @property
    def fraction(self) -> float:
        return self.vad_count / self.total


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Split, Leaf]


@dataclass(frozen=True)
class PathStep:
    feature_index: int
    threshold: float
    went_left: bool


class Tree:
    """A fitted CART tree over flat node arrays.

    Node 0 is the root. ``feature[i] == -1`` marks a leaf; internal nodes
    carry child indices in ``left``/``right``. Every node stores its label
    counts (``vad``, ``total``) over the rows that reached it during fitting.
    """

    __slots__ = ("feature", "threshold", "left", "right", "vad", "total")

    def __init__(self, feature, threshold, left, right, vad, total):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.vad = np.asarray(vad, dtype=np.int64)
        self.total = np.asarray(total, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def root(self) -> TreeNode:
        """Materialize the nested Split/Leaf view (iterative; safe for deep trees)."""
        built: dict[int, TreeNode] = {}
        # children before parents: nodes are appended in preorder, so reverse
        # index order guarantees children exist when the parent is built
        for i in range(self.n_nodes - 1, -1, -1):
            if self.feature[i] < 0:
                built[i] = Leaf(int(self.vad[i]), int(self.total[i]))
            else:
                built[i] = Split(
                    feature_index=int(self.feature[i]),
                    threshold=float(self.threshold[i]),
                    left=built[int(self.left[i])],
                    right=built[int(self.right[i])],
                )
        return built[0]

    def leaf_for(self, x: np.ndarray) -> int:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = int(self.left[node])
            else:
                node = int(self.right[node])
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int32)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active[rows] = self.feature[node[rows]] >= 0
        return self.vad[node] / self.total[node]

    def route(self, x: np.ndarray) -> list[int]:
        """Node-id sequence from root to leaf for one row."""
        x = np.asarray(x, dtype=np.float64)
        nodes = [0]
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = int(self.left[node])
            else:
                node = int(self.right[node])
            nodes.append(node)
        return nodes

    def path(self, x: np.ndarray) -> tuple[list[PathStep], Leaf]:
        x = np.asarray(x, dtype=np.float64)
        steps: list[PathStep] = []
        node = 0
        while self.feature[node] >= 0:
            f = int(self.feature[node])
            t = float(self.threshold[node])
            went_left = bool(x[f] <= t)
            steps.append(PathStep(f, t, went_left))
            node = int(self.left[node]) if went_left else int(self.right[node])
        return steps, Leaf(int(self.vad[node]), int(self.total[node]))

    def node_counts(self, node: int) -> tuple[int, int]:
        return int(self.vad[node]), int(self.total[node])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if self.feature[i] < 0 else float(t)
                          for i, t in enumerate(self.threshold)],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "vad": self.vad.tolist(),
            "total": self.total.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "Tree":
        thr = [math.nan if t is None else t for t in d["threshold"]]
        return cls(d["feature"], thr, d["left"], d["right"], d["vad"], d["total"])

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return (
            np.array_equal(self.feature, other.feature)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.vad, other.vad)
            and np.array_equal(self.total, other.total)
            and np.array_equal(
                np.nan_to_num(self.threshold), np.nan_to_num(other.threshold)
            )
        )


def _candidate_features(n_features: int, mtry: int, rng) -> np.ndarray:
    # when mtry covers every feature, skip the draw entirely so the random
    # stream is identical across fits that differ only in column count
    if mtry >= n_features:
        return np.arange(n_features)
    return np.sort(rng.choice(n_features, size=mtry, replace=False))


def _best_split(X, y, idx, candidates, min_leaf):
    """Best (gini, feature, threshold) over candidate features, or None.

    First strict minimum wins: candidate features are scanned in ascending
    index order and thresholds ascend within a feature, which yields the
    lowest-index / lowest-threshold tie-break.
    """
    n = idx.size
    n_vad = int(y[idx].sum())
    best_gini = np.inf
    best_feature = -1
    best_threshold = math.nan
    for f in candidates:
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        sy = y[idx][order]
        boundaries = np.nonzero(sv[1:] != sv[:-1])[0]
        if boundaries.size == 0:
            continue
        n_left = boundaries + 1
        n_right = n - n_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        boundaries = boundaries[ok]
        n_left = n_left[ok]
        n_right = n_right[ok]
        cum_vad = np.cumsum(sy)
        vad_left = cum_vad[boundaries]
        vad_right = n_vad - vad_left
        p1l = vad_left / n_left
        p0l = (n_left - vad_left) / n_left
        gini_left = 1.0 - p1l * p1l - p0l * p0l
        p1r = vad_right / n_right
        p0r = (n_right - vad_right) / n_right
        gini_right = 1.0 - p1r * p1r - p0r * p0r
        weighted = (n_left * gini_left + n_right * gini_right) / n
        j = int(np.argmin(weighted))  # first occurrence = lowest threshold
        if weighted[j] < best_gini:
            best_gini = float(weighted[j])
            best_feature = int(f)
            best_threshold = (float(sv[boundaries[j]]) + float(sv[boundaries[j] + 1])) / 2.0
    if best_feature < 0:
        return None
    return best_gini, best_feature, best_threshold


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams = ForestParams(),
    rng: Optional[np.random.Generator] = None,
) -> Tree:
    """Grow one CART tree.

    ``y`` is boolean (True = VAD). The tree stops at pure nodes, at the depth
    limit, or when no candidate split leaves ``min_leaf`` rows per child.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyTraining("need at least one training row")
    if rng is None:
        rng = np.random.default_rng(0)
    n, f = X.shape
    mtry = min(params.mtry, f)

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    vad: list[int] = []
    total: list[int] = []

    # explicit stack keeps preorder identical to the recursive formulation
    # without recursion-depth limits
    stack: list[tuple[np.ndarray, int, int, bool]] = [(np.arange(n), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = node_id
            else:
                right[parent] = node_id
        nv = int(y[idx].sum())
        nt = int(idx.size)
        vad.append(nv)
        total.append(nt)

        split = None
        pure = nv == 0 or nv == nt
        depth_capped = params.max_depth is not None and depth >= params.max_depth
        if not pure and not depth_capped:
            cand = _candidate_features(f, mtry, rng)
            split = _best_split(X, y, idx, cand, params.min_leaf)

        if split is None:
            feature.append(-1)
            threshold.append(math.nan)
            left.append(-1)
            right.append(-1)
        else:
            _, bf, bt = split
            feature.append(bf)
            threshold.append(bt)
            left.append(-1)
            right.append(-1)
            mask = X[idx, bf] <= bt
            stack.append((idx[~mask], depth + 1, node_id, False))
            stack.append((idx[mask], depth + 1, node_id, True))

    return Tree(feature, threshold, left, right, vad, total)


def decision_path(tree: Tree, x: np.ndarray) -> tuple[list[PathStep], Leaf]:
    """Root-to-leaf route for one row: ordered split steps plus terminal leaf."""
    return tree.path(x)


class Forest:
    """Bootstrap ensemble of CART trees with out-of-bag bookkeeping."""

    def __init__(self, trees, params, seed, n_features, kind=None,
                 oob_vad=None, oob_total=None):
        self.trees: list[Tree] = trees
        self.params = params
        self.seed = int(seed)
        self.n_features = int(n_features)
        self.kind = kind
        self.oob_vad = oob_vad
        self.oob_total = oob_total

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean over trees of the leaf VAD fraction, per row of X."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        acc = np.zeros(len(X), dtype=np.float64)
        for tree in self.trees:
            acc += tree.predict_proba(X)
        out = acc / len(self.trees)
        return float(out[0]) if single else out

    def classify(self, X: np.ndarray, threshold: float = 0.5):
        """VAD iff predicted probability >= threshold (ties go to VAD, so
        borderline parcels surface for human review)."""
        proba = self.predict_proba(X)
        if isinstance(proba, float):
            return proba >= threshold
        return proba >= threshold

    def to_json(self) -> str:
        obj = {
            "version": 1,
            "kind": self.kind,
            "seed": self.seed,
            "n_features": self.n_features,
            "params": self.params.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
            "oob_vad": None if self.oob_vad is None else self.oob_vad.tolist(),
            "oob_total": None if self.oob_total is None else self.oob_total.tolist(),
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        obj = json.loads(text)
        if obj.get("version") != 1:
            raise ValueError(f"unsupported forest version {obj.get('version')!r}")
        return cls(
            trees=[Tree.from_dict(t) for t in obj["trees"]],
            params=ForestParams.from_dict(obj["params"]),
            seed=obj["seed"],
            n_features=obj["n_features"],
            kind=obj["kind"],
            oob_vad=None if obj["oob_vad"] is None else np.asarray(obj["oob_vad"]),
            oob_total=None if obj["oob_total"] is None else np.asarray(obj["oob_total"]),
        )


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams = ForestParams(),
    seed: int = 0,
    kind=None,
) -> Forest:
    """Fit ``n_trees`` trees, each on a same-size bootstrap resample drawn
    from a per-tree substream of ``seed``. Rows absent from a bootstrap get
    that tree's vote recorded for out-of-bag scoring."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    if len(X) == 0:
        raise EmptyTraining("need at least one training row")
    if len(np.unique(y)) < 2 or len(X) < 2:
        import logging

        logging.getLogger(__name__).warning(
            "training data has a single label class or a single row; "
            "forest will predict a constant"
        )
    n = len(X)
    children = np.random.SeedSequence(seed).spawn(params.n_trees)
    trees = []
    oob_vad = np.zeros(n, dtype=np.int64)
    oob_total = np.zeros(n, dtype=np.int64)
    for child in children:
        rng = np.random.default_rng(child)
        sample = rng.integers(0, n, size=n)
        tree = fit_tree(X[sample], y[sample], params, rng)
        trees.append(tree)
        in_bag = np.zeros(n, dtype=bool)
        in_bag[sample] = True
        oob_rows = np.nonzero(~in_bag)[0]
        if oob_rows.size:
            frac = tree.predict_proba(X[oob_rows])
            votes_vad = frac >= 0.5
            oob_total[oob_rows] += 1
            oob_vad[oob_rows] += votes_vad
    return Forest(trees, params, seed, X.shape[1], kind, oob_vad, oob_total)


def predict_proba(forest: Forest, x: np.ndarray):
    if forest is None or not forest.trees:
        raise UntrainedModel("forest has no trees")
    return forest.predict_proba(x)


def classify(forest: Forest, x: np.ndarray, threshold: float = 0.5):
    if forest is None or not forest.trees:
        raise UntrainedModel("forest has no trees")
    return forest.classify(x, threshold)


def oob_score(forest: Forest, y: np.ndarray) -> float:
    """Accuracy of out-of-bag majority votes against the training labels.

    Rows that were never out of bag are excluded from the denominator.
    """
    if forest.oob_total is None:
        raise NoOobRows("forest was trained without OOB bookkeeping")
    y = np.asarray(y, dtype=bool)
    voted = forest.oob_total > 0
    if not voted.any():
        raise NoOobRows("no training row was ever out of bag; raise n_trees")
    pred = forest.oob_vad[voted] / forest.oob_total[voted] >= 0.5
    return float(np.mean(pred == y[voted]))


def stratified_folds(y: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified fold assignment: shuffle within each class,
    deal round-robin. Per-fold class counts stay within one of each other."""
    y = np.asarray(y, dtype=bool)
    if k < 2:
        raise ValueError("k must be >= 2")
    counts = [int((~y).sum()), int(y.sum())]
    if min(counts) < 2:
        raise TooFewRowsPerClass(
            f"each class needs >= 2 rows for stratified folds, got {counts}"
        )
    if len(y) < k:
        raise TooFewRowsPerClass(f"{len(y)} rows cannot fill {k} folds")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (False, True):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(len(idx))]
        for i, row in enumerate(idx):
            folds[i % k].append(int(row))
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


@dataclass(frozen=True)
class CVResult:
    mean: float
    per_fold: tuple[float, ...]
    k: int
    seed: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "per_fold": list(self.per_fold),
                "k": self.k, "seed": self.seed}


def cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams = ForestParams(),
    k: int = 5,
    seed: int = 0,
    folds: Optional[list[np.ndarray]] = None,
) -> CVResult:
    """Stratified k-fold accuracy. Fold assignment and per-fold forest seeds
    derive from ``seed`` alone, so repeat calls are identical; pass ``folds``
    to reuse one assignment across paired runs."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    if folds is None:
        folds = stratified_folds(y, k, seed)
    accs = []
    all_rows = np.arange(len(y))
    for i, test_rows in enumerate(folds):
        train_mask = np.ones(len(y), dtype=bool)
        train_mask[test_rows] = False
        train_rows = all_rows[train_mask]
        forest = fit_forest(
            X[train_rows], y[train_rows], params, seed=stable_seed(seed, "cv-fold", i)
        )
        pred = forest.predict_proba(X[test_rows]) >= 0.5
        accs.append(float(np.mean(pred == y[test_rows])))
    return CVResult(mean=float(np.mean(accs)), per_fold=tuple(accs), k=len(folds), seed=seed)
