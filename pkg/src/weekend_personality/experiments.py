"""Day-subset comparison protocols, paired McNemar tests and the masked results table."""
from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import rng as rng_mod
from .features import (AGGREGATE_FEATURES, POLICY_ORDER, DayRecord, FeatureConfig,
                       InsufficientDaysForPolicy, Policy, aggregate_records, select_days)
from .learn import ForestHyper, LengthMismatch, accuracy, cohens_kappa, loocv
from .survey import TRAITS

DEFAULT_REPETITIONS = 10
EXACT_LIMIT = 25  # b + c below this uses the exact binomial test
TRAIT_HEADERS = {"extraversion": "Extra.", "agreeableness": "Agree.",
                 "conscientiousness": "Consc.", "neuroticism": "Neur.", "openness": "Open."}
DEFAULT_PAIRS = ((Policy.WEEKEND_TWO_WEEKS, Policy.WEEKDAY_TWO_WEEKS),
                 (Policy.WEEKEND_ONE, Policy.WEEKDAY_ONE),
                 (Policy.SATURDAY_ONLY, Policy.SUNDAY_ONLY))


class TooFewUsers(ValueError):
    def __init__(self, policy: Policy, trait: str, n: int, detail: str = "") -> None:
        self.policy, self.trait, self.n = policy, trait, n
        super().__init__(f"{policy.value}/{trait}: {n} usable users{detail}")


# --- McNemar ---------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonResult:
    policy_a: str
    policy_b: str
    trait: str
    b: int  # A right, B wrong
    c: int  # A wrong, B right
    p_value: float
    method: str  # "exact" | "chi-square-corrected" | "degenerate"
    n_users: int = 0


def _binom_two_sided(b: int, c: int) -> float:
    n = b + c
    k = min(b, c)
    tail = sum(math.comb(n, i) for i in range(k + 1))
    return min(1.0, 2.0 * tail / 2 ** n)


def _chi2_sf_1df(x: float) -> float:
    return math.erfc(math.sqrt(x / 2.0))


def mcnemar_counts(b: int, c: int) -> tuple[float, str]:
    if b < 0 or c < 0:
        raise ValueError("discordant counts must be non-negative")
    n = b + c
    if n == 0:
        return 1.0, "degenerate"
    if n < EXACT_LIMIT:
        return _binom_two_sided(b, c), "exact"
    return _chi2_sf_1df((abs(b - c) - 1) ** 2 / n), "chi-square-corrected"


def mcnemar(preds_a: Sequence[int], preds_b: Sequence[int], truth: Sequence[int],
            policy_a: str = "A", policy_b: str = "B", trait: str = "") -> ComparisonResult:
    a = np.asarray(preds_a)
    b_ = np.asarray(preds_b)
    t = np.asarray(truth)
    if not (a.shape == b_.shape == t.shape):
        raise LengthMismatch(f"lengths {a.size}, {b_.size}, {t.size}")
    ra, rb = a == t, b_ == t
    b = int(np.sum(ra & ~rb))
    c = int(np.sum(~ra & rb))
    p, method = mcnemar_counts(b, c)
    return ComparisonResult(policy_a, policy_b, trait, b, c, p, method, int(t.size))


# --- reports -----------------------------------------------------------------------


@dataclass
class Repetition:
    rep: int
    seed: int
    user_ids: list[str]
    predictions: list[int]
    truth: list[int]
    accuracy: float
    kappa: float
    excluded: int = 0


@dataclass
class EvalReport:
    trait: str
    policy: Policy
    repetitions: list[Repetition]
    selected_counts: dict[str, int] = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return float(np.mean([r.accuracy for r in self.repetitions]))

    @property
    def kappa(self) -> float:
        return float(np.mean([r.kappa for r in self.repetitions]))

    def pooled(self) -> tuple[dict[str, int], dict[str, int]]:
        """Per-user majority prediction over repetitions (ties go to 0), and truth."""
        ones: Counter[str] = Counter()
        seen: Counter[str] = Counter()
        truth: dict[str, int] = {}
        for r in self.repetitions:
            for u, p, t in zip(r.user_ids, r.predictions, r.truth):
                ones[u] += p
                seen[u] += 1
                truth[u] = t
        return {u: int(2 * ones[u] > seen[u]) for u in sorted(seen)}, truth

    def to_dict(self) -> dict:
        pooled, _ = self.pooled()
        return {"trait": self.trait, "policy": self.policy.value, "label": self.policy.label,
                "accuracy": self.accuracy, "kappa": self.kappa,
                "repetitions": [asdict(r) for r in self.repetitions],
                "pooled": pooled, "selected_counts": dict(sorted(self.selected_counts.items()))}

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalReport":
        reps = [Repetition(**r) for r in d["repetitions"]]
        return cls(d["trait"], Policy(d["policy"]), reps, dict(d.get("selected_counts", {})))


def policy_matrix(records: Mapping[str, Sequence[DayRecord]], policy: Policy, rep: int,
                  seed: int, config: FeatureConfig = FeatureConfig()
                  ) -> tuple[list[str], np.ndarray, list[str]]:
    """Aggregate features of every user that satisfies ``policy``.

    Returns (user ids, n x 142 matrix, excluded user ids). User ``u`` draws its
    days from ``generator(derive(seed, "select", policy index, rep), u)``.
    """
    stream = rng_mod.derive(seed, "select", POLICY_ORDER.index(policy), rep)
    ids, rows, excluded = [], [], []
    for u in sorted(records):
        recs = {r.key: r for r in records[u]}
        try:
            chosen = select_days(policy, list(recs), rng_mod.generator(stream, u), config.window_days)
        except InsufficientDaysForPolicy:
            excluded.append(u)
            continue
        ids.append(u)
        rows.append(aggregate_records([recs[k] for k in chosen], config, policy).values)
    X = np.vstack(rows) if rows else np.zeros((0, len(AGGREGATE_FEATURES)))
    return ids, X, excluded


def _loocv_job(args):
    X, y, hyper, target_k, drop_frac = args
    res = loocv(X, y, hyper, target_k, drop_frac)
    return res.predictions, res.selected


def _map(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=1))


def repetitions_for(policy: Policy, n_reps: int = DEFAULT_REPETITIONS) -> int:
    return n_reps if policy.randomized else 1


def run_protocol(records: Mapping[str, Sequence[DayRecord]],
                 labels: Mapping[str, Mapping[str, int]],
                 policies: Sequence[Policy] = POLICY_ORDER,
                 traits: Sequence[str] = TRAITS,
                 hyper: ForestHyper = ForestHyper(), target_k: int = 30, drop_frac: float = 0.2,
                 seed: int = 0, n_reps: int = DEFAULT_REPETITIONS, jobs: int = 1,
                 config: FeatureConfig = FeatureConfig(), log=None) -> list[EvalReport]:
    """Leave-one-out evaluation of every (trait, policy) cell.

    ``labels`` maps trait -> user -> class. Fold seeds of repetition ``r`` are
    derived from ``derive(seed, "loocv", trait index, policy index, r)``, so the
    result does not depend on ``jobs``. Reports come back trait-major in the
    order of ``traits`` and ``policies``.
    """
    matrices = {}
    for p in policies:
        for r in range(repetitions_for(p, n_reps)):
            matrices[p, r] = policy_matrix(records, p, r, seed, config)
            if log is not None and matrices[p, r][2]:
                log(f"{p.value} rep {r}: excluded {len(matrices[p, r][2])} users")

    cells, tasks = [], []
    for t in traits:
        lab = labels[t]
        for p in policies:
            for r in range(repetitions_for(p, n_reps)):
                ids, X, excluded = matrices[p, r]
                keep = [i for i, u in enumerate(ids) if u in lab]
                y = np.array([lab[ids[i]] for i in keep], dtype=np.int64)
                if len(keep) < 3 or min(int(y.sum()), len(y) - int(y.sum())) < 2:
                    raise TooFewUsers(p, t, len(keep), " (or a class with fewer than 2 users)")
                s = rng_mod.derive(seed, "loocv", TRAITS.index(t), POLICY_ORDER.index(p), r)
                hy = replace(hyper, seed=s)
                cells.append((t, p, r, s, [ids[i] for i in keep], y, len(excluded)))
                tasks.append((X[keep], y, hy, target_k, drop_frac))

    results = _map(_loocv_job, tasks, jobs)

    reports: dict[tuple[str, Policy], EvalReport] = {}
    for (t, p, r, s, uid, y, n_ex), (pred, selected) in zip(cells, results):
        rep = reports.setdefault((t, p), EvalReport(t, p, []))
        rep.repetitions.append(Repetition(r, s, uid, [int(v) for v in pred], [int(v) for v in y],
                                          accuracy(pred, y), cohens_kappa(pred, y), n_ex))
        for keep in selected:
            for j in keep:
                name = AGGREGATE_FEATURES[int(j)]
                rep.selected_counts[name] = rep.selected_counts.get(name, 0) + 1
    return [reports[t, p] for t in traits for p in policies]


def compare(reports: Iterable[EvalReport],
            pairs: Sequence[tuple[Policy, Policy]] = DEFAULT_PAIRS) -> list[ComparisonResult]:
    """McNemar on pooled predictions over the users both policies kept."""
    by = {(r.trait, r.policy): r for r in reports}
    traits = list(dict.fromkeys(r.trait for r in by.values()))
    out = []
    for t in traits:
        for a, b in pairs:
            if (t, a) not in by or (t, b) not in by:
                continue
            pa, truth = by[t, a].pooled()
            pb, _ = by[t, b].pooled()
            common = sorted(set(pa) & set(pb))
            out.append(mcnemar([pa[u] for u in common], [pb[u] for u in common],
                               [truth[u] for u in common], a.value, b.value, t))
    return out


# --- table -------------------------------------------------------------------------


def percent(acc: float) -> str:
    return str(int((Decimal(repr(acc)) * 100).quantize(Decimal(1), rounding=ROUND_HALF_UP)))


def format_cell(acc: float, kappa: float, acc_threshold: float = 0.65,
                kappa_threshold: float = 0.3) -> tuple[str, str]:
    if acc < acc_threshold or kappa < kappa_threshold:
        return "-", "-"
    return percent(acc), f"{kappa:.2f}"


@dataclass
class ResultsTable:
    traits: list[str]
    rows: list[tuple[str, list[tuple[str, str]]]]  # (row label, cells per trait)

    def to_text(self) -> str:
        head1 = ["Model/Type of day used"]
        head2 = [""]
        for t in self.traits:
            head1 += [TRAIT_HEADERS.get(t, t), ""]
            head2 += ["Acc (%)", "kappa"]
        grid = [head1, head2] + [[label] + [x for cell in cells for x in cell]
                                 for label, cells in self.rows]
        widths = [max(len(r[i]) for r in grid) for i in range(len(head1))]
        lines = []
        for k, r in enumerate(grid):
            parts = [r[0].ljust(widths[0])] + [r[i].rjust(widths[i]) for i in range(1, len(r))]
            lines.append(" | ".join(parts).rstrip())
            if k == 1:
                lines.append("-" * len(lines[0]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"traits": self.traits,
                "rows": [{"model": label,
                          "cells": {t: {"acc": a, "kappa": k}
                                    for t, (a, k) in zip(self.traits, cells)}}
                         for label, cells in self.rows]}


def render_results_table(reports: Iterable[EvalReport], acc_threshold: float = 0.65,
                         kappa_threshold: float = 0.3) -> ResultsTable:
    """Rows follow the policy order, columns the trait order; masked cells read "-"."""
    reports = list(reports)
    by = {(r.trait, r.policy): r for r in reports}
    traits = [t for t in TRAITS if any(r.trait == t for r in reports)]
    policies = [p for p in POLICY_ORDER if any(r.policy is p for r in reports)]
    rows = []
    for p in policies:
        cells = []
        for t in traits:
            r = by.get((t, p))
            cells.append(("", "") if r is None else
                         format_cell(r.accuracy, r.kappa, acc_threshold, kappa_threshold))
        rows.append((p.label, cells))
    return ResultsTable(traits, rows)


# --- files ---------------------------------------------------------------------------


def dumps_reports(reports: Iterable[EvalReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=1, sort_keys=True) + "\n"


def write_reports(reports: Iterable[EvalReport], path: str | Path) -> None:
    Path(path).write_text(dumps_reports(reports))


def read_reports(path: str | Path) -> list[EvalReport]:
    return [EvalReport.from_dict(d) for d in json.loads(Path(path).read_text())]


def write_comparisons(results: Iterable[ComparisonResult], path: str | Path) -> None:
    Path(path).write_text(json.dumps([asdict(r) for r in results], indent=1, sort_keys=True) + "\n")
