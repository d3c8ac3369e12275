"""Random forest of CART trees grown on Gini impurity, compiled with numba.

Trees are stored flat: one row per node with ``feature`` (-1 at leaves),
``threshold``, ``left``/``right`` child ids and the bootstrap-weighted class
counts ``n0``/``n1``. A sample goes left when ``x[feature] <= threshold``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba as nb
import numpy as np

from .. import rng

FORMAT_TAG = "weekend-personality-forest/1"


class SingleClassInput(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ForestHyper:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None -> floor(sqrt(d))
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def mtry(self, d: int) -> int:
        k = self.features_per_split if self.features_per_split is not None else math.isqrt(d)
        if not 1 <= k <= d:
            raise ValueError(f"features_per_split={k} outside [1, {d}]")
        return k


# --- compiled core -----------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 2.0**-53
_S58 = np.uint64(58)
_ZERO = np.uint64(0)
_ONE = np.uint64(1)
_DEBRUIJN = np.uint64(0x03F79D71B4CB0A89)
_DEBRUIJN_POS = np.zeros(64, np.int64)
for _k in range(64):
    _DEBRUIJN_POS[(((1 << _k) * 0x03F79D71B4CB0A89) & ((1 << 64) - 1)) >> 58] = _k


@nb.njit(cache=True)
def _uniform(state):
    # state is a length-1 uint64 array, advanced in place
    z = state[0] + _GOLDEN
    state[0] = z
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    z = z ^ (z >> _S31)
    return float(z >> _S11) * _INV53


@nb.njit(cache=True)
def _below(state, n):
    return int(_uniform(state) * n)


@nb.njit(cache=True)
def _grow_tree(Xt, y, presort, rank, svals, mtry, max_depth, min_leaf, seed,
               feat, thr, left, right, n0, n1, imp):
    """Grow one tree into the preallocated node arrays; returns the node count."""
    d, n = Xt.shape
    state = np.empty(1, np.uint64)
    state[0] = seed

    counts = np.zeros(n, np.int64)
    for _ in range(n):
        counts[_below(state, n)] += 1
    m = 0
    for i in range(n):
        if counts[i] > 0:
            m += 1
    idx = np.empty(m, np.int64)
    k = 0
    for i in range(n):
        if counts[i] > 0:
            idx[k] = i
            k += 1
    total = float(n)
    n_words = (n + 63) >> 6
    bits = np.empty(n_words, np.uint64)
    w1 = np.empty(n, np.float64)
    w0 = np.empty(n, np.float64)
    for i in range(n):
        w1[i] = counts[i] if y[i] == 1 else 0.0
        w0[i] = counts[i] - w1[i]

    perm = np.arange(d)
    swaps = np.empty(mtry, np.int64)
    vals = np.empty(n + 1, np.float64)
    order = np.empty(n + 1, np.int64)
    stack_node = np.empty(m + 1, np.int64)
    stack_lo = np.empty(m + 1, np.int64)
    stack_hi = np.empty(m + 1, np.int64)
    stack_depth = np.empty(m + 1, np.int64)

    n_nodes = 1
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = m
    stack_depth[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]

        c0 = 0.0
        c1 = 0.0
        for k in range(lo, hi):
            i = idx[k]
            if y[i] == 1:
                c1 += counts[i]
            else:
                c0 += counts[i]
        w = c0 + c1
        n0[node] = c0
        n1[node] = c1
        feat[node] = -1
        thr[node] = 0.0
        left[node] = -1
        right[node] = -1
        if c0 == 0.0 or c1 == 0.0 or w < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        cnt = hi - lo
        best_score = -1.0
        best_f = -1
        best_t = 0.0
        for j in range(mtry):
            r = j + _below(state, d - j)
            swaps[j] = r
            f = perm[r]
            perm[r] = perm[j]
            perm[j] = f

            # node samples of feature f in ascending value order -> order/vals,
            # via a bitset over the feature's presorted ranks
            for q in range(n_words):
                bits[q] = _ZERO
            for k in range(cnt):
                rk = rank[f, idx[lo + k]]
                bits[rk >> 6] |= _ONE << np.uint64(rk & 63)
            k = 0
            for q in range(n_words):
                word = bits[q]
                while word != _ZERO:
                    low = word & (~word + _ONE)
                    rk = (q << 6) + _DEBRUIJN_POS[(low * _DEBRUIJN) >> _S58]
                    order[k] = presort[f, rk]
                    vals[k] = svals[f, rk]
                    k += 1
                    word ^= low

            l0 = 0.0
            l1 = 0.0
            for k in range(cnt - 1):
                i = order[k]
                l1 += w1[i]
                l0 += w0[i]
                v_a = vals[k]
                v_b = vals[k + 1]
                if v_a == v_b:
                    continue
                wl = l0 + l1
                wr = w - wl
                if wl < min_leaf or wr < min_leaf:
                    continue
                t = 0.5 * v_a + 0.5 * v_b
                if not (v_a < t < v_b):
                    continue
                r0 = c0 - l0
                r1 = c1 - l1
                score = (l0 * l0 + l1 * l1) / wl + (r0 * r0 + r1 * r1) / wr
                if score > best_score or (
                    score == best_score and (f < best_f or (f == best_f and t < best_t))
                ):
                    best_score = score
                    best_f = f
                    best_t = t

        # undo the swaps so every node starts from the identity permutation
        for j in range(mtry - 1, -1, -1):
            r = swaps[j]
            tmp = perm[r]
            perm[r] = perm[j]
            perm[j] = tmp

        parent = (c0 * c0 + c1 * c1) / w
        if best_f < 0 or best_score <= parent + 1e-12 * w:
            continue

        # partition idx[lo:hi] so that x <= t comes first
        a = lo
        b = hi - 1
        while a <= b:
            if Xt[best_f, idx[a]] <= best_t:
                a += 1
            else:
                tmp = idx[a]
                idx[a] = idx[b]
                idx[b] = tmp
                b -= 1
        feat[node] = best_f
        thr[node] = best_t
        imp[best_f] += (best_score - parent) / total
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        # right pushed first so the left subtree is grown first
        stack_node[sp] = rid
        stack_lo[sp] = a
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = lid
        stack_lo[sp] = lo
        stack_hi[sp] = a
        stack_depth[sp] = depth + 1
        sp += 1
    return n_nodes


@nb.njit(cache=True)
def _grow_forest(Xt, y, presort, mtry, max_depth, min_leaf, seeds):
    d, n = Xt.shape
    n_trees = seeds.shape[0]
    cap = 2 * n + 1
    feat = np.empty(n_trees * cap, np.int64)
    thr = np.empty(n_trees * cap, np.float64)
    left = np.empty(n_trees * cap, np.int64)
    right = np.empty(n_trees * cap, np.int64)
    n0 = np.empty(n_trees * cap, np.float64)
    n1 = np.empty(n_trees * cap, np.float64)
    imp = np.zeros((n_trees, d), np.float64)
    offsets = np.zeros(n_trees + 1, np.int64)
    rank = np.empty((d, n), np.int32)
    svals = np.empty((d, n), np.float64)
    for f in range(d):
        for q in range(n):
            rank[f, presort[f, q]] = q
            svals[f, q] = Xt[f, presort[f, q]]
    pos = 0
    for t in range(n_trees):
        cnt = _grow_tree(
            Xt, y, presort, rank, svals, mtry, max_depth, min_leaf, seeds[t],
            feat[pos:pos + cap], thr[pos:pos + cap], left[pos:pos + cap],
            right[pos:pos + cap], n0[pos:pos + cap], n1[pos:pos + cap], imp[t],
        )
        pos += cnt
        offsets[t + 1] = pos
    return feat[:pos].copy(), thr[:pos].copy(), left[:pos].copy(), right[:pos].copy(), \
        n0[:pos].copy(), n1[:pos].copy(), imp, offsets


@nb.njit(cache=True)
def _tree_votes(feat, thr, left, right, n0, n1, offsets, X):
    n_trees = offsets.shape[0] - 1
    out = np.empty((X.shape[0], n_trees), np.int8)
    for s in range(X.shape[0]):
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feat[base + node] >= 0:
                if X[s, feat[base + node]] <= thr[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            out[s, t] = 1 if n1[base + node] > n0[base + node] else 0
    return out


# --- public API ---------------------------------------------------------------


def sort_index(X: np.ndarray) -> np.ndarray:
    """Per-feature ascending sample order, shape (d, n); reusable across forests."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int32))


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n0: np.ndarray
    n1: np.ndarray

    def __len__(self) -> int:
        return len(self.feature)

    def leaf_label(self, x: np.ndarray) -> int:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return int(self.n1[node] > self.n0[node])


@dataclass(eq=False)
class ForestModel:
    """Trained forest in flat form; tree ``t`` owns rows ``offsets[t]:offsets[t+1]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n0: np.ndarray
    n1: np.ndarray
    offsets: np.ndarray
    tree_importances: np.ndarray = field(repr=False)  # (n_trees, d) raw impurity decreases
    feature_names: list[str] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.tree_importances.shape[1]

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    @property
    def trees(self) -> list[Tree]:
        out = []
        for t in range(self.n_trees):
            s = slice(self.offsets[t], self.offsets[t + 1])
            out.append(Tree(self.feature[s], self.threshold[s], self.left[s], self.right[s],
                            self.n0[s], self.n1[s]))
        return out

    @classmethod
    def from_trees(cls, trees: Sequence[Tree], tree_importances: np.ndarray,
                   feature_names: Sequence[str]) -> "ForestModel":
        offsets = np.zeros(len(trees) + 1, np.int64)
        offsets[1:] = np.cumsum([len(t) for t in trees])
        cat = lambda attr, dt: np.concatenate([getattr(t, attr) for t in trees]).astype(dt)  # noqa: E731
        return cls(cat("feature", np.int64), cat("threshold", np.float64), cat("left", np.int64),
                   cat("right", np.int64), cat("n0", np.float64), cat("n1", np.float64), offsets,
                   np.asarray(tree_importances, dtype=np.float64), list(feature_names))

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Per-tree leaf-majority votes, shape (n_samples, n_trees)."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return _tree_votes(self.feature, self.threshold, self.left, self.right,
                           self.n0, self.n1, self.offsets, X)

    def vote_share(self, X: np.ndarray) -> np.ndarray:
        return self.votes(X).mean(axis=1)

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        v = self.votes(X)
        # majority, ties go to class 0
        return (2 * v.sum(axis=1, dtype=np.int64) > v.shape[1]).astype(np.int64)


def train_forest(X: np.ndarray, y: np.ndarray, hyper: ForestHyper,
                 feature_names: Sequence[str] | None = None,
                 presort: np.ndarray | None = None) -> ForestModel:
    """Fit ``hyper.n_trees`` bootstrap CART trees.

    Tree ``t`` draws from the stream ``derive(hyper.seed, t)``: first ``n``
    bootstrap indices, then, at every node in depth-first (left-first) order,
    a partial Fisher-Yates shuffle of ``range(d)`` picking the candidate
    features. ``presort`` may pass a precomputed :func:`sort_index` of ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape} does not match y {y.shape}")
    if X.shape[0] < 2 or len(np.unique(y)) < 2:
        raise SingleClassInput("training data must contain both classes")
    if not np.isfinite(X).all():
        raise ValueError("X contains NaN or infinite values; impute first")
    d = X.shape[1]
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(d)]
    if len(names) != d:
        raise DimensionMismatch(f"{len(names)} feature names for {d} columns")
    if presort is None:
        presort = sort_index(X)
    seeds = np.array([rng.derive(hyper.seed, t) for t in range(hyper.n_trees)], dtype=np.uint64)
    max_depth = -1 if hyper.max_depth is None else hyper.max_depth
    feat, thr, left, right, n0, n1, imp, offsets = _grow_forest(
        np.ascontiguousarray(X.T), y, presort, hyper.mtry(d), max_depth,
        hyper.min_samples_leaf, seeds)
    return ForestModel(feat, thr, left, right, n0, n1, offsets, imp, names)


def predict(model: ForestModel, x: Sequence[float]) -> tuple[int, float]:
    """Majority label (ties -> 0) and the fraction of trees voting 1 for one sample."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("predict takes a single feature vector")
    v = model.votes(x[None, :])[0]
    ones = int(v.sum())
    return int(2 * ones > len(v)), ones / len(v)


def importance(model: ForestModel) -> np.ndarray:
    """Mean Gini decrease per feature across trees, normalised to sum to 1."""
    raw = model.tree_importances.mean(axis=0)
    s = raw.sum()
    if s <= 0:
        return np.full(model.n_features, 1.0 / model.n_features)
    return raw / s


# --- dump / load --------------------------------------------------------------
# {"format": FORMAT_TAG, "feature_names": [...],
#  "trees": [{"nodes": [[feature, threshold, left, right, n0, n1], ...],
#             "importance": [...]}, ...]}
# Node 0 is the root; leaves have feature = left = right = -1.


def dumps(model: ForestModel) -> str:
    trees = []
    for t, tree in enumerate(model.trees):
        nodes = [
            [int(f), float(th), int(lf), int(rt), float(a), float(b)]
            for f, th, lf, rt, a, b in zip(tree.feature, tree.threshold, tree.left,
                                          tree.right, tree.n0, tree.n1)
        ]
        trees.append({"nodes": nodes, "importance": model.tree_importances[t].tolist()})
    return json.dumps({"format": FORMAT_TAG, "feature_names": model.feature_names,
                       "trees": trees}, separators=(",", ":"))


def loads(text: str) -> ForestModel:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    trees = []
    for rec in doc["trees"]:
        arr = np.array(rec["nodes"], dtype=np.float64).reshape(-1, 6)
        trees.append(Tree(arr[:, 0].astype(np.int64), arr[:, 1].copy(),
                          arr[:, 2].astype(np.int64), arr[:, 3].astype(np.int64),
                          arr[:, 4].copy(), arr[:, 5].copy()))
    imp = np.array([rec["importance"] for rec in doc["trees"]], dtype=np.float64)
    return ForestModel.from_trees(trees, imp, doc["feature_names"])


def save(model: ForestModel, path: str | Path) -> None:
    Path(path).write_text(dumps(model) + "\n", encoding="utf-8")


def load(path: str | Path) -> ForestModel:
    return loads(Path(path).read_text(encoding="utf-8"))
