"""Recursive feature elimination and the leave-one-out harness around it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .. import rng
from .forest import ForestHyper, importance, sort_index, train_forest


class BadTarget(ValueError):
    pass


def rfe(X: np.ndarray, y: np.ndarray, hyper: ForestHyper, target_k: int,
        drop_frac: float = 0.2, presort: np.ndarray | None = None) -> np.ndarray:
    """Column indices (ascending) that survive elimination down to ``target_k``.

    Round ``r`` fits a forest seeded ``derive(hyper.seed, 1, r)`` on the
    surviving columns and drops the ``ceil(drop_frac * remaining)`` least
    important, never going below ``target_k``. Equal importances drop the
    higher column index first.
    """
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    if not 1 <= target_k <= d:
        raise BadTarget(f"target_k={target_k} outside [1, {d}]")
    if not 0.0 < drop_frac <= 1.0:
        raise BadTarget(f"drop_frac={drop_frac} outside (0, 1]")
    if presort is None:
        presort = sort_index(X)
    keep = np.arange(d)
    round_ = 0
    while keep.size > target_k:
        h = replace(hyper, seed=rng.derive(hyper.seed, 1, round_))
        model = train_forest(X[:, keep], y, h, presort=np.ascontiguousarray(presort[keep]))
        imp = importance(model)
        n_drop = min(math.ceil(drop_frac * keep.size), keep.size - target_k)
        # lexsort: last key is primary -> importance ascending, then index descending
        worst = np.lexsort((-keep, imp))[:n_drop]
        keep = np.delete(keep, worst)
        round_ += 1
    return keep


def impute_median(train: np.ndarray, *others: np.ndarray) -> list[np.ndarray]:
    """Fill NaNs with per-column medians of ``train`` (0 where a column is all NaN)."""
    train = np.asarray(train, dtype=np.float64)
    s = np.sort(train, axis=0)  # NaNs sort last
    cnt = np.sum(~np.isnan(train), axis=0)
    cols = np.arange(train.shape[1])
    lo = np.maximum((cnt - 1) // 2, 0)
    med = (s[lo, cols] + s[cnt // 2 - (cnt == 0), cols]) / 2
    med[cnt == 0] = 0.0
    out = []
    for a in (train, *others):
        a = np.array(a, dtype=np.float64, copy=True)
        rows, cols = np.nonzero(np.isnan(a))
        a[rows, cols] = med[cols]
        out.append(a)
    return out


@dataclass
class LoocvResult:
    predictions: np.ndarray
    truth: np.ndarray
    vote_share: np.ndarray
    selected: list[np.ndarray] = field(repr=False)
    user_ids: list[str] = field(default_factory=list)


FoldHook = Callable[[int, np.ndarray], None]


def loocv_fold(X: np.ndarray, y: np.ndarray, i: int, hyper: ForestHyper, target_k: int,
               drop_frac: float = 0.2) -> tuple[int, float, np.ndarray]:
    """Hold out row ``i``: impute, select and fit on the rest, predict row ``i``."""
    n = X.shape[0]
    train = np.arange(n) != i
    fold_seed = rng.derive(hyper.seed, i)
    Xtr, Xte = impute_median(X[train], X[i:i + 1])
    ytr = y[train]
    presort = sort_index(Xtr)
    keep = rfe(Xtr, ytr, replace(hyper, seed=fold_seed), target_k, drop_frac, presort)
    model = train_forest(Xtr[:, keep], ytr, replace(hyper, seed=rng.derive(fold_seed, 2)),
                         presort=np.ascontiguousarray(presort[keep]))
    votes = model.votes(Xte[:, keep])[0]
    ones = int(votes.sum())
    return int(2 * ones > votes.size), ones / votes.size, keep


def loocv(X: np.ndarray, y: Sequence[int], hyper: ForestHyper, target_k: int,
          drop_frac: float = 0.2, user_ids: Sequence[str] | None = None,
          hook: FoldHook | None = None) -> LoocvResult:
    """Leave-one-out predictions; fold ``i`` uses the stream ``derive(hyper.seed, i)``.

    Missing values (NaN) are imputed from the training fold only. ``hook`` is
    called with ``(i, training_row_indices)`` before each fold is fitted.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if n < 3:
        raise ValueError("leave-one-out needs at least 3 users")
    if y.shape != (n,):
        raise ValueError(f"{y.shape[0]} labels for {n} rows")
    target_k = min(target_k, X.shape[1])
    preds = np.empty(n, np.int64)
    shares = np.empty(n, np.float64)
    selected = []
    for i in range(n):
        if hook is not None:
            hook(i, np.flatnonzero(np.arange(n) != i))
        preds[i], shares[i], keep = loocv_fold(X, y, i, hyper, target_k, drop_frac)
        selected.append(keep)
    ids = list(user_ids) if user_ids is not None else [str(i) for i in range(n)]
    return LoocvResult(preds, y.copy(), shares, selected, ids)
