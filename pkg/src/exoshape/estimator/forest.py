"""Random-forest regression built from CART trees.

Trees split greedily on squared error, consider every feature at every
node and break gain ties toward the lowest feature index, then the lowest
threshold. Each tree is grown on a bootstrap resample drawn from its own
generator, spawned from the master seed, so the forest is a pure function
of ``(X, y, hyperparameters, seed)``.

Growing uses presorted index lists: every feature is sorted once per tree
and the sorted lists are partitioned stably at each split.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_NAMES

__all__ = ["RegressionTree", "ForestModel", "fit_tree", "fit_forest", "predict", "load_forest"]

FORMAT = "exoshape-forest"
VERSION = 1


@dataclass
class RegressionTree:
    """Flat node arrays; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.value[node]
            fi = np.where(inner, f, 0)
            go_left = X[rows, fi] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(inner, nxt, node)


def _best_split(order, X, y, min_leaf):
    # order: (n_features, n) sorted sample indices of this node
    n = order.shape[1]
    total = y[order[0]].sum()
    best = (0.0, -1, 0.0, 0)
    base = total * total / n
    lo, hi = min_leaf - 1, n - min_leaf - 1
    if hi < lo:
        return best
    nl = np.arange(lo + 1, hi + 2, dtype=float)
    nr = n - nl
    for f in range(order.shape[0]):
        idx = order[f]
        xs = X[idx, f]
        cs = np.cumsum(y[idx])
        sl = cs[lo:hi + 1]
        sr = total - sl
        score = sl * sl / nl + sr * sr / nr - base
        distinct = xs[lo:hi + 1] < xs[lo + 1:hi + 2]
        score = np.where(distinct, score, -np.inf)
        j = int(np.argmax(score))
        if score[j] > best[0]:
            a, b = xs[lo + j], xs[lo + j + 1]
            thr = 0.5 * (a + b)
            if not (a <= thr < b):
                thr = a
            best = (float(score[j]), f, float(thr), lo + j + 1)
    return best


def fit_tree(X, y, max_depth: int = 10, min_leaf: int = 5, sample=None) -> RegressionTree:
    """Grow one CART tree on rows ``sample`` (all rows when ``None``)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if sample is None:
        sample = np.arange(X.shape[0])
    # work on the resampled copy so duplicates are distinct rows
    Xs, ys = X[sample], y[sample]
    n_feat = Xs.shape[1]
    order = np.stack([np.argsort(Xs[:, f], kind="stable") for f in range(n_feat)])

    feat, thr, left, right, val, cnt = [], [], [], [], [], []

    def new_node(rows_sorted):
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        yy = ys[rows_sorted[0]]
        val.append(float(yy.sum() / yy.size))
        cnt.append(int(yy.size))
        return len(feat) - 1

    root = new_node(order)
    stack = [(root, order, 0)]
    tol = 1e-12
    while stack:
        node, od, depth = stack.pop()
        n = od.shape[1]
        if depth >= max_depth or n < 2 * min_leaf:
            continue
        yy = ys[od[0]]
        if yy.max() == yy.min():
            continue
        gain, f, t, _ = _best_split(od, Xs, ys, min_leaf)
        if f < 0 or gain <= tol * max(1.0, float(np.dot(yy, yy))):
            continue
        goes_left = np.zeros(Xs.shape[0], dtype=bool)
        goes_left[od[f][Xs[od[f], f] <= t]] = True
        m = goes_left[od]
        nl = int(m[0].sum())
        od_l = od[m].reshape(n_feat, nl)
        od_r = od[~m].reshape(n_feat, n - nl)
        li, ri = new_node(od_l), new_node(od_r)
        feat[node], thr[node], left[node], right[node] = f, t, li, ri
        stack.append((ri, od_r, depth + 1))
        stack.append((li, od_l, depth + 1))

    return RegressionTree(
        np.array(feat, dtype=np.intp),
        np.array(thr, dtype=float),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(val, dtype=float),
        np.array(cnt, dtype=np.intp),
    )


@dataclass
class ForestModel:
    trees: list
    max_depth: int = 10
    min_leaf: int = 5
    seed: int = 0
    feature_names: tuple = FEATURE_NAMES
    y_range: tuple = (np.nan, np.nan)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        acc = np.zeros(X.shape[0])
        for tr in self.trees:
            acc += tr.predict(X)
        out = acc / self.n_trees
        return out[0] if single else out

    def save(self, path) -> None:
        """Versioned text format; floats as hex so a reload is bit-exact."""
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        lines = [
            f"{FORMAT} {VERSION}",
            f"n_trees {self.n_trees}",
            f"max_depth {self.max_depth}",
            f"min_leaf {self.min_leaf}",
            f"seed {self.seed}",
            f"features {','.join(self.feature_names)}",
            f"y_range {float(self.y_range[0]).hex()} {float(self.y_range[1]).hex()}",
        ]
        for i, tr in enumerate(self.trees):
            lines.append(f"tree {i} {tr.n_nodes}")
            for j in range(tr.n_nodes):
                lines.append(
                    f"{tr.feature[j]} {float(tr.threshold[j]).hex()} {tr.left[j]} {tr.right[j]} "
                    f"{float(tr.value[j]).hex()} {tr.count[j]}"
                )
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def load_forest(path) -> ForestModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    try:
        fmt, ver = lines[0].split()
        if fmt != FORMAT or int(ver) != VERSION:
            raise ValueError(f"unsupported model format {lines[0]!r}")
        head = dict(ln.split(" ", 1) for ln in lines[1:7])
        lo, hi = head["y_range"].split()
        n_trees = int(head["n_trees"])
        trees, pos = [], 7
        for _ in range(n_trees):
            _, _, n = lines[pos].split()
            rows = [ln.split() for ln in lines[pos + 1:pos + 1 + int(n)]]
            pos += 1 + int(n)
            trees.append(
                RegressionTree(
                    np.array([int(r[0]) for r in rows], dtype=np.intp),
                    np.array([float.fromhex(r[1]) for r in rows]),
                    np.array([int(r[2]) for r in rows], dtype=np.intp),
                    np.array([int(r[3]) for r in rows], dtype=np.intp),
                    np.array([float.fromhex(r[4]) for r in rows]),
                    np.array([int(r[5]) for r in rows], dtype=np.intp),
                )
            )
    except (IndexError, KeyError, ValueError) as exc:
        raise ValueError(f"malformed model file {path}: {exc}") from None
    return ForestModel(
        trees,
        int(head["max_depth"]),
        int(head["min_leaf"]),
        int(head["seed"]),
        tuple(head["features"].split(",")),
        (float.fromhex(lo), float.fromhex(hi)),
    )


def fit_forest(
    X,
    y,
    trees: int = 50,
    depth: int = 10,
    min_leaf: int = 5,
    seed: int = 0,
    feature_names=None,
    bootstrap: bool = True,
) -> ForestModel:
    """Bagged CART ensemble; tree ``i`` draws its bootstrap from the
    ``i``-th child of ``SeedSequence(seed)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ValueError("X must be (n, d) and y (n,) with matching n")
    if y.size < 50:
        raise ValueError("need at least 50 samples")
    if trees < 1 or depth < 0 or min_leaf < 1:
        raise ValueError("trees >= 1, depth >= 0 and min_leaf >= 1 required")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("non-finite training data")
    names = tuple(feature_names) if feature_names is not None else (
        FEATURE_NAMES if X.shape[1] == len(FEATURE_NAMES) else tuple(f"f{i + 1}" for i in range(X.shape[1]))
    )
    if len(names) != X.shape[1]:
        raise ValueError("feature_names length does not match X")
    n = y.size
    out = []
    for child in np.random.SeedSequence(seed).spawn(trees):
        rng = np.random.default_rng(child)
        sample = rng.integers(0, n, n) if bootstrap else np.arange(n)
        out.append(fit_tree(X, y, depth, min_leaf, sample))
    return ForestModel(out, depth, min_leaf, seed, names, (float(y.min()), float(y.max())))


def predict(model: ForestModel, f) -> np.ndarray:
    """Mean of the tree outputs for one feature vector or a batch."""
    return model.predict(f)
