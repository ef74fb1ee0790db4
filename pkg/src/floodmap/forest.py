"""From-scratch CART Random Forest for per-pixel flood classification.

Determinism contract: tree t draws everything from a generator seeded with
``mix64(seed, t)``, so results are identical across runs and thread counts.
Within a tree, nodes consume the RNG in depth-first pre-order, left child
first; only nodes that attempt a split draw candidate features.

Split ranking avoids float summation order entirely.  For a candidate with
left class counts (a, b) and right counts (c, d), maximizing the weighted
Gini decrease is equivalent to maximizing

    M = ((a*a + b*b) * (c + d) + (c*c + d*d) * (a + b)) / ((a + b) * (c + d))

whose numerator and denominator are exact 64-bit integers for any node up
to ~2 million samples.  A split improves the parent iff M > (p*p + q*q)/n
for parent counts (p, q).  Ties break to the lowest feature index, then
the lowest threshold.  Thresholds are midpoints of consecutive distinct
sorted float32 values, computed exactly in float64.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from math import floor, sqrt

import numpy as np

from .errors import DegenerateInputError, SemanticsError, ShapeError
from .raster import MASK_NODATA, Mask, Raster

_U64 = (1 << 64) - 1


def mix64(seed: int, index: int) -> int:
    """SplitMix64 finalizer over seed + (index+1) * golden-gamma."""
    x = (seed + (index + 1) * 0x9E3779B97F4A7C15) & _U64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _U64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _U64
    x ^= x >> 31
    return x


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix64(seed & _U64, tree_index)))


@dataclass(frozen=True)
class SampleMatrix:
    """n x f feature matrix with optional {0,1} labels.

    Nodata pixels must be filtered out before assembly; NaN rows are
    rejected.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.features, dtype=np.float32))
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise ShapeError(f"features must be a non-empty n x f matrix, got {x.shape}")
        if np.isnan(x).any():
            raise ShapeError("sample matrix must not contain NaN rows")
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (x.shape[0],):
                raise ShapeError("labels length must equal the sample count")
            if not np.isin(y, (0, 1)).all():
                raise ShapeError("labels must be 0 or 1")
            object.__setattr__(self, "labels", np.ascontiguousarray(y.astype(np.uint8)))
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != x.shape[1]:
                raise ShapeError("feature_names length must equal the feature count")
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def f(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    mtry: int | None = None  # None resolves to floor(sqrt(f)) at fit time
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ShapeError("n_trees must be at least 1")
        if self.min_samples_split < 2:
            raise ShapeError("min_samples_split must be at least 2")
        if self.min_samples_leaf < 1:
            raise ShapeError("min_samples_leaf must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ShapeError("max_depth must be non-negative")

    def resolve_mtry(self, f: int) -> int:
        mtry = self.mtry if self.mtry is not None else max(1, floor(sqrt(f)))
        if not 1 <= mtry <= f:
            raise ShapeError(f"mtry={mtry} outside [1, {f}]")
        return mtry


@dataclass
class Tree:
    """Flat array form of one CART tree; node 0 is the root.

    feature[i] == -1 marks a leaf; left/right hold child node ids.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]


@dataclass
class Forest:
    trees: list[Tree]
    params: ForestParams
    importances: np.ndarray
    feature_names: tuple[str, ...]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def gini_impurity(counts: tuple[int, int]) -> float:
    """1 - p0^2 - p1^2 for a two-class node; in [0, 0.5]."""
    n0, n1 = int(counts[0]), int(counts[1])
    total = n0 + n1
    if total < 1:
        raise DegenerateInputError("Gini impurity of an empty node is undefined")
    return 1.0 - (n0 * n0 + n1 * n1) / (total * total)


def _search_feature(
    col: np.ndarray, ones_pref: np.ndarray, order: np.ndarray, msl: int
) -> tuple[float, float] | None:
    """Best (score, threshold) along one sorted feature column.

    *ones_pref* is the cumulative count of 1-labels in sort order; *order*
    the argsort of *col*.  Returns None when no boundary is splittable.
    """
    sv = col[order]
    n = sv.shape[0]
    boundaries = np.nonzero(sv[:-1] < sv[1:])[0]
    if boundaries.size == 0:
        return None
    n_left = boundaries + 1
    n_right = n - n_left
    if msl > 1:
        keep = (n_left >= msl) & (n_right >= msl)
        boundaries = boundaries[keep]
        if boundaries.size == 0:
            return None
        n_left = n_left[keep]
        n_right = n_right[keep]

    n1_total = int(ones_pref[-1])
    b = ones_pref[boundaries]          # ones on the left
    a = n_left - b                     # zeros on the left
    d = n1_total - b                   # ones on the right
    c = n_right - d                    # zeros on the right
    num = (a * a + b * b) * n_right + (c * c + d * d) * n_left
    den = n_left * n_right
    scores = num.astype(np.float64) / den.astype(np.float64)
    k = int(np.argmax(scores))         # first occurrence keeps the lowest threshold
    pos = int(boundaries[k])
    threshold = (float(sv[pos]) + float(sv[pos + 1])) / 2.0
    return float(scores[k]), threshold


def _best_split_arrays(
    x: np.ndarray,
    y: np.ndarray,
    candidates: np.ndarray,
    msl: int,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, impurity_decrease) over candidate features."""
    n = y.shape[0]
    n1 = int(y.sum())
    n0 = n - n1
    parent_score = float(n0 * n0 + n1 * n1) / float(n)
    best = None
    best_score = parent_score  # strict improvement implies Gini decrease > 0
    for j in np.sort(candidates):
        col = x[:, j]
        order = np.argsort(col)
        ones_pref = np.cumsum(y[order], dtype=np.int64)
        found = _search_feature(col, ones_pref, order, msl)
        if found is None:
            continue
        score, threshold = found
        if score > best_score:
            best_score = score
            best = (int(j), threshold)
    if best is None:
        return None
    decrease = best_score / n - (n0 * n0 + n1 * n1) / float(n) ** 2
    return best[0], best[1], float(decrease)


def best_split(
    samples: SampleMatrix, candidate_features
) -> tuple[int, float, float] | None:
    """CART split search over midpoints of consecutive distinct values.

    Returns (feature_index, threshold, impurity_decrease) maximizing the
    weighted Gini decrease, or None when nothing improves the parent.
    """
    if samples.labels is None:
        raise DegenerateInputError("best_split needs labeled samples")
    cand = np.asarray(sorted(set(int(c) for c in candidate_features)), dtype=np.int64)
    if cand.size == 0 or cand.min() < 0 or cand.max() >= samples.f:
        raise ShapeError("candidate features out of range")
    return _best_split_arrays(samples.features, samples.labels, cand, msl=1)


def _grow_tree(
    x: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    mtry: int,
    rng: np.random.Generator,
    importance_acc: np.ndarray,
) -> Tree:
    n_total = y.shape[0]
    f = x.shape[1]
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    leaf_class: list[int] = []
    counts: list[tuple[int, int]] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_class.append(0)
        counts.append((0, 0))
        return len(feature) - 1

    root = new_node()
    # LIFO with right pushed first = depth-first pre-order, left child first.
    stack: list[tuple[int, np.ndarray, int]] = [(root, np.arange(n_total), 0)]
    while stack:
        node, idx, depth = stack.pop()
        y_node = y[idx]
        n1 = int(y_node.sum())
        n0 = idx.shape[0] - n1
        counts[node] = (n0, n1)
        leaf_class[node] = 1 if n1 > n0 else 0

        if (
            n0 == 0
            or n1 == 0
            or idx.shape[0] < params.min_samples_split
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            continue

        cand = rng.choice(f, size=mtry, replace=False)
        found = _best_split_arrays(
            x[idx], y_node, cand, msl=params.min_samples_leaf
        )
        if found is None:
            continue
        j, thr, decrease = found
        importance_acc[j] += (idx.shape[0] / n_total) * decrease

        # Compare in float64: midpoints of adjacent float32 values are not
        # float32-representable, and float32 comparison would round them.
        go_left = x[idx, j].astype(np.float64) <= thr
        left_id = new_node()
        right_id = new_node()
        feature[node] = j
        threshold[node] = thr
        left[node] = left_id
        right[node] = right_id
        stack.append((right_id, idx[~go_left], depth + 1))
        stack.append((left_id, idx[go_left], depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        leaf_class=np.asarray(leaf_class, dtype=np.int8),
        counts=np.asarray(counts, dtype=np.int64),
    )


def _fit_one(
    t: int, samples: SampleMatrix, params: ForestParams, mtry: int
) -> tuple[Tree, np.ndarray]:
    rng = _tree_rng(params.seed, t)
    x, y = samples.features, samples.labels
    if params.bootstrap:
        draw = rng.integers(0, samples.n, size=samples.n)
        x, y = x[draw], y[draw]
    acc = np.zeros(samples.f, dtype=np.float64)
    tree = _grow_tree(x, y, params, mtry, rng, acc)
    return tree, acc


def fit_forest(
    samples: SampleMatrix, params: ForestParams, threads: int = 1
) -> Forest:
    """Train the ensemble; bit-identical output for fixed (samples, params).

    Importances are per-feature sums of node-weighted Gini decreases,
    averaged over trees and normalized to sum 1 (uniform 1/f when no tree
    ever split).
    """
    if samples.labels is None:
        raise DegenerateInputError("training needs labels")
    if samples.n < 2:
        raise DegenerateInputError("training needs at least two samples")
    n1 = int(samples.labels.sum())
    if n1 == 0 or n1 == samples.n:
        raise DegenerateInputError("training labels must contain both classes")
    mtry = params.resolve_mtry(samples.f)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(
                    lambda t: _fit_one(t, samples, params, mtry),
                    range(params.n_trees),
                )
            )
    else:
        results = [_fit_one(t, samples, params, mtry) for t in range(params.n_trees)]

    trees = [tree for tree, _ in results]
    raw = np.zeros(samples.f, dtype=np.float64)
    for _, acc in results:
        raw += acc
    raw /= params.n_trees
    total = raw.sum()
    importances = raw / total if total > 0 else np.full(samples.f, 1.0 / samples.f)

    names = samples.feature_names or tuple(f"f{i}" for i in range(samples.f))
    return Forest(
        trees=trees,
        params=replace(params, mtry=mtry),
        importances=importances,
        feature_names=names,
    )


def _route_tree(tree: Tree, x: np.ndarray) -> np.ndarray:
    """Leaf class for each row of x (level-synchronous descent)."""
    m = x.shape[0]
    node = np.zeros(m, dtype=np.int64)
    while True:
        cur_feat = tree.feature[node]
        active = np.nonzero(cur_feat >= 0)[0]
        if active.size == 0:
            break
        an = node[active]
        vals = x[active, tree.feature[an]].astype(np.float64)
        go_left = vals <= tree.threshold[an]
        node[active] = np.where(go_left, tree.left[an], tree.right[an])
    return tree.leaf_class[node]


def predict_forest(
    forest: Forest, samples: SampleMatrix, threads: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Majority vote over trees: (labels, vote_fraction).

    A sample is flood (1) iff strictly more than half the trees vote 1;
    an exact tie yields 0.
    """
    if samples.f != forest.n_features:
        raise ShapeError(
            f"sample has {samples.f} features, forest expects {forest.n_features}"
        )
    x = samples.features
    n_trees = len(forest.trees)

    def vote_block(trees: list[Tree]) -> np.ndarray:
        votes = np.zeros(x.shape[0], dtype=np.int64)
        for tree in trees:
            votes += _route_tree(tree, x)
        return votes

    if threads > 1 and n_trees > 1:
        chunks = np.array_split(np.arange(n_trees), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda ids: vote_block([forest.trees[i] for i in ids]),
                    [c for c in chunks if c.size],
                )
            )
        votes = np.sum(parts, axis=0)
    else:
        votes = vote_block(forest.trees)

    labels = (votes * 2 > n_trees).astype(np.uint8)
    return labels, votes / n_trees


def predict_raster(forest: Forest, stack: Raster, threads: int = 1) -> Mask:
    """Per-pixel forest prediction; pixels with any NaN band become nodata."""
    if stack.band_count != forest.n_features:
        raise ShapeError(
            f"stack has {stack.band_count} bands, forest expects {forest.n_features}"
        )
    if tuple(stack.semantics) != tuple(forest.feature_names) and not all(
        name.startswith("f") and name[1:].isdigit() for name in forest.feature_names
    ):
        raise SemanticsError(
            f"stack bands {stack.semantics} do not match forest features "
            f"{forest.feature_names}"
        )
    cube = stack.to_array()
    x = cube.reshape(stack.band_count, -1).T
    valid = ~np.isnan(x).any(axis=1)
    out = np.full(x.shape[0], MASK_NODATA, dtype=np.uint8)
    if valid.any():
        matrix = SampleMatrix(x[valid], feature_names=forest.feature_names)
        labels, _ = predict_forest(forest, matrix, threads=threads)
        out[valid] = labels
    return Mask(out.reshape(stack.height, stack.width))


def feature_importance(forest: Forest) -> list[tuple[str, float]]:
    """(name, weight) pairs in canonical band order; weights sum to 1."""
    return [(name, float(w)) for name, w in zip(forest.feature_names, forest.importances)]


# ---------------------------------------------------------------------------
# Serialization (forest.json)
# ---------------------------------------------------------------------------


def _tree_to_obj(tree: Tree) -> dict:
    # Iterative construction; deep trees would blow the recursion limit.
    objs: list[dict] = [None] * tree.n_nodes  # type: ignore[list-item]
    order = []
    stack = [0]
    while stack:
        i = stack.pop()
        order.append(i)
        if tree.feature[i] >= 0:
            stack.append(int(tree.left[i]))
            stack.append(int(tree.right[i]))
    for i in reversed(order):
        if tree.feature[i] < 0:
            objs[i] = {
                "kind": "leaf",
                "class": int(tree.leaf_class[i]),
                "counts": [int(tree.counts[i, 0]), int(tree.counts[i, 1])],
            }
        else:
            objs[i] = {
                "kind": "internal",
                "feature": int(tree.feature[i]),
                "threshold": float(tree.threshold[i]),
                "counts": [int(tree.counts[i, 0]), int(tree.counts[i, 1])],
                "left": objs[int(tree.left[i])],
                "right": objs[int(tree.right[i])],
            }
    return objs[0]


def _tree_from_obj(obj: dict) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    leaf_class: list[int] = []
    counts: list[tuple[int, int]] = []

    stack = [(obj, -1, "")]
    while stack:
        node, parent, side = stack.pop()
        i = len(feature)
        if parent >= 0:
            if side == "L":
                left[parent] = i
            else:
                right[parent] = i
        c = node.get("counts", [0, 0])
        if node["kind"] == "leaf":
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            leaf_class.append(int(node["class"]))
            counts.append((int(c[0]), int(c[1])))
        else:
            feature.append(int(node["feature"]))
            threshold.append(float(node["threshold"]))
            left.append(-1)
            right.append(-1)
            leaf_class.append(0)
            counts.append((int(c[0]), int(c[1])))
            stack.append((node["right"], i, "R"))
            stack.append((node["left"], i, "L"))
    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        leaf_class=np.asarray(leaf_class, dtype=np.int8),
        counts=np.asarray(counts, dtype=np.int64),
    )


def forest_to_json(forest: Forest) -> str:
    doc = {
        "params": {
            "n_trees": forest.params.n_trees,
            "mtry": forest.params.mtry,
            "min_samples_split": forest.params.min_samples_split,
            "min_samples_leaf": forest.params.min_samples_leaf,
            "max_depth": forest.params.max_depth,
            "bootstrap": forest.params.bootstrap,
            "seed": forest.params.seed,
        },
        "feature_names": list(forest.feature_names),
        "importances": [float(w) for w in forest.importances],
        "trees": [_tree_to_obj(t) for t in forest.trees],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def forest_from_json(text: str) -> Forest:
    doc = json.loads(text)
    params = ForestParams(**doc["params"])
    return Forest(
        trees=[_tree_from_obj(o) for o in doc["trees"]],
        params=params,
        importances=np.asarray(doc["importances"], dtype=np.float64),
        feature_names=tuple(doc["feature_names"]),
    )


def save_forest(forest: Forest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(forest_to_json(forest))


def load_forest(path) -> Forest:
    with open(path, "r", encoding="utf-8") as fh:
        return forest_from_json(fh.read())
