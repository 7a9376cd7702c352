"""Multi-output random-forest regression.

CART trees split on the (feature, threshold) pair that minimises the summed
squared error over all outputs. Thresholds are midpoints between consecutive
distinct feature values, and ties go to the lowest feature index and then the
lowest threshold. Every feature is considered at every split. Leaves store
per-output means; the forest averages leaves and never renormalises.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numba
import numpy as np

from .errors import InputError
from .rng import derive_seed, uniform_batch

MODEL_FORMAT_VERSION = 1
_LEAF = -1
# relative margin a split must beat the incumbent by to replace it
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ForestParams:
    num_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    bootstrap: bool = True

    def validate(self) -> None:
        if self.num_trees < 1:
            raise InputError("num_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InputError("max_depth must be >= 0 or None")
        if self.min_samples_split < 2:
            raise InputError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise InputError("min_samples_leaf must be >= 1")


@dataclass
class Tree:
    """Flat node arrays; node 0 is the root, ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] == _LEAF:
            return {"value": [float(v) for v in self.value[node]]}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, root: dict, d: int) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []

        def visit(node: dict) -> int:
            i = len(feature)
            feature.append(_LEAF)
            threshold.append(0.0)
            left.append(_LEAF)
            right.append(_LEAF)
            value.append(np.zeros(d))
            if "value" in node:
                value[i] = np.asarray(node["value"], dtype=float)
                return i
            feature[i] = int(node["feature"])
            threshold[i] = float(node["threshold"])
            left[i] = visit(node["left"])
            right[i] = visit(node["right"])
            return i

        visit(root)
        return cls(
            np.array(feature, dtype=np.int64),
            np.array(threshold, dtype=float),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(value, dtype=float).reshape(-1, d),
        )


@numba.njit(cache=True)
def _leaf_value(Y, rows, lo, hi):
    """Mean of Y[rows[lo:hi]] anchored at the first row, clipped to the range.

    Anchoring makes the mean of identical rows exact.
    """
    d = Y.shape[1]
    first = Y[rows[lo]]
    acc = np.zeros(d)
    vmin = first.copy()
    vmax = first.copy()
    for i in range(lo, hi):
        y = Y[rows[i]]
        for j in range(d):
            acc[j] += y[j] - first[j]
            if y[j] < vmin[j]:
                vmin[j] = y[j]
            if y[j] > vmax[j]:
                vmax[j] = y[j]
    out = np.empty(d)
    n = hi - lo
    for j in range(d):
        v = first[j] + acc[j] / n
        out[j] = min(max(v, vmin[j]), vmax[j])
    return out


@numba.njit(cache=True)
def _is_pure(Y, rows, lo, hi):
    first = Y[rows[lo]]
    for i in range(lo + 1, hi):
        y = Y[rows[i]]
        for j in range(Y.shape[1]):
            if y[j] != first[j]:
                return False
    return True


@numba.njit(cache=True)
def _best_split(X, Y, rows, lo, hi, min_samples_leaf):
    """Return (feature, threshold) of the best split, or (-1, 0.0) if none."""
    n = hi - lo
    m = X.shape[1]
    d = Y.shape[1]
    total = np.zeros(d)
    for i in range(lo, hi):
        total += Y[rows[i]]
    best_score = -np.inf
    best_feature = -1
    best_threshold = 0.0
    vals = np.empty(n)
    left_sum = np.zeros(d)
    for f in range(m):
        for i in range(n):
            vals[i] = X[rows[lo + i], f]
        order = np.argsort(vals, kind="mergesort")
        left_sum[:] = 0.0
        for i in range(n - 1):
            left_sum += Y[rows[lo + order[i]]]
            a = vals[order[i]]
            b = vals[order[i + 1]]
            if a == b:
                continue
            n_left = i + 1
            n_right = n - n_left
            if n_left < min_samples_leaf or n_right < min_samples_leaf:
                continue
            # SSE = const - score, so maximising score minimises the split SSE
            score = 0.0
            for j in range(d):
                r = total[j] - left_sum[j]
                score += left_sum[j] * left_sum[j] / n_left + r * r / n_right
            if best_feature < 0 or score > best_score + _TIE_RTOL * abs(best_score):
                best_score = score
                best_feature = f
                mid = 0.5 * (a + b)
                best_threshold = mid if mid < b else a
    return best_feature, best_threshold


@numba.njit(cache=True)
def _grow(X, Y, rows, max_depth, min_samples_split, min_samples_leaf):
    n = rows.shape[0]
    d = Y.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, d))
    work = rows.copy()
    scratch = np.empty(n, dtype=np.int64)

    # stack entries: node id, lo, hi, depth
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    count = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        lo = stack[top, 1]
        hi = stack[top, 2]
        depth = stack[top, 3]
        value[node] = _leaf_value(Y, work, lo, hi)
        if (
            hi - lo < min_samples_split
            or (max_depth >= 0 and depth >= max_depth)
            or _is_pure(Y, work, lo, hi)
        ):
            continue
        f, thr = _best_split(X, Y, work, lo, hi, min_samples_leaf)
        if f < 0:
            continue
        # stable partition of work[lo:hi] into <= thr and > thr
        nl = 0
        nr = 0
        for i in range(lo, hi):
            r = work[i]
            if X[r, f] <= thr:
                work[lo + nl] = r
                nl += 1
            else:
                scratch[nr] = r
                nr += 1
        for i in range(nr):
            work[lo + nl + i] = scratch[i]
        feature[node] = f
        threshold[node] = thr
        left[node] = count
        right[node] = count + 1
        # push right first so the left subtree is expanded first
        stack[top, 0] = count + 1
        stack[top, 1] = lo + nl
        stack[top, 2] = hi
        stack[top, 3] = depth + 1
        stack[top + 1, 0] = count
        stack[top + 1, 1] = lo
        stack[top + 1, 2] = lo + nl
        stack[top + 1, 3] = depth + 1
        top += 2
        count += 2
    return (
        feature[:count].copy(),
        threshold[:count].copy(),
        left[:count].copy(),
        right[:count].copy(),
        value[:count].copy(),
    )


@numba.njit(cache=True)
def _predict_tree(feature, threshold, left, right, value, X):
    out = np.empty((X.shape[0], value.shape[1]))
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != -1:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@dataclass
class ForestModel:
    trees: list[Tree]
    d: int
    m: int
    seed: int
    params: ForestParams = field(default_factory=ForestParams)
    y_min: np.ndarray = None
    y_max: np.ndarray = None

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        """Mean leaf vector over trees; accepts one m-vector or an (N, m) matrix."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.m:
            raise InputError(f"expected {self.m} features, got {X.shape[1]}")
        X = np.ascontiguousarray(X)
        preds = [
            _predict_tree(t.feature, t.threshold, t.left, t.right, t.value, X)
            for t in self.trees
        ]
        # anchored at the first tree so identical leaves average exactly
        base = preds[0]
        acc = np.zeros_like(base)
        for p in preds[1:]:
            acc += p - base
        out = np.clip(base + acc / len(preds), self.y_min, self.y_max)
        return out[0] if single else out

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": MODEL_FORMAT_VERSION,
                "d": self.d,
                "m": self.m,
                "seed": self.seed,
                "params": asdict(self.params),
                "y_min": [float(v) for v in self.y_min],
                "y_max": [float(v) for v in self.y_max],
                "trees": [t.to_dict() for t in self.trees],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        doc = json.loads(text)
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise InputError(f"unsupported model format {doc.get('format_version')!r}")
        d = int(doc["d"])
        return cls(
            trees=[Tree.from_dict(t, d) for t in doc["trees"]],
            d=d,
            m=int(doc["m"]),
            seed=int(doc["seed"]),
            params=ForestParams(**doc["params"]),
            y_min=np.array(doc["y_min"], dtype=float),
            y_max=np.array(doc["y_max"], dtype=float),
        )


def bootstrap_rows(n: int, num_trees: int, seed: int) -> np.ndarray:
    """(num_trees, n) row indices; tree t draws from stream derive_seed(seed, t)."""
    seeds = [derive_seed(seed, t) for t in range(num_trees)]
    u = uniform_batch(seeds, n)  # (n, num_trees)
    return np.minimum((u * n).astype(np.int64), n - 1).T.copy()


def fit(X, Y, params: ForestParams = ForestParams(), seed: int = 42) -> ForestModel:
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    Y = np.ascontiguousarray(np.asarray(Y, dtype=float))
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise InputError(f"incompatible shapes X{X.shape}, Y{Y.shape}")
    if X.shape[0] == 0:
        raise InputError("cannot fit on zero rows")
    params.validate()
    n = X.shape[0]
    if params.bootstrap:
        samples = bootstrap_rows(n, params.num_trees, seed)
    else:
        samples = np.tile(np.arange(n, dtype=np.int64), (params.num_trees, 1))
    max_depth = -1 if params.max_depth is None else params.max_depth
    trees = [
        Tree(*_grow(X, Y, rows, max_depth, params.min_samples_split, params.min_samples_leaf))
        for rows in samples
    ]
    return ForestModel(
        trees=trees,
        d=Y.shape[1],
        m=X.shape[1],
        seed=seed,
        params=params,
        y_min=Y.min(axis=0),
        y_max=Y.max(axis=0),
    )


@dataclass(frozen=True)
class MSE:
    overall: float
    per_output: tuple[float, ...]


def mse(model: ForestModel, X, Y) -> MSE:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] == 0:
        raise InputError("mse of an empty set")
    if Y.shape != (X.shape[0], model.d):
        raise InputError(f"Y has shape {Y.shape}, expected ({X.shape[0]}, {model.d})")
    per_output = ((Y - model.predict(X)) ** 2).mean(axis=0)
    return MSE(float(per_output.mean()), tuple(float(v) for v in per_output))
