"""Agreement metrics for binary predictions."""
from __future__ import annotations

from typing import Sequence

import numpy as np


class LengthMismatch(ValueError):
    pass


def _pair(pred: Sequence[int], truth: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.int64).ravel()
    t = np.asarray(truth, dtype=np.int64).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} predictions vs {t.size} labels")
    if p.size == 0:
        raise LengthMismatch("empty input")
    return p, t


def confusion(pred: Sequence[int], truth: Sequence[int]) -> tuple[int, int, int, int]:
    """(TP, TN, FP, FN) with class 1 as positive."""
    p, t = _pair(pred, truth)
    tp = int(np.sum((p == 1) & (t == 1)))
    tn = int(np.sum((p == 0) & (t == 0)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    return tp, tn, fp, fn


def accuracy(pred: Sequence[int], truth: Sequence[int]) -> float:
    p, t = _pair(pred, truth)
    return int(np.sum(p == t)) / p.size


def cohens_kappa(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    Evaluated on integer counts, ``(n*agree - E) / (n*n - E)`` with
    ``E = pred1*true1 + pred0*true0``, so a constant predictor gives exactly 0.
    """
    tp, tn, fp, fn = confusion(pred, truth)
    n = tp + tn + fp + fn
    pred1, true1 = tp + fp, tp + fn
    expected = pred1 * true1 + (n - pred1) * (n - true1)
    denom = n * n - expected
    if denom == 0:
        # p_e = 1: both vectors constant and equal, so p_o = 1 as well
        return 1.0
    return (n * (tp + tn) - expected) / denom
