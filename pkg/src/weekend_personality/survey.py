"""IPIP-50 scoring, reliability, descriptive statistics and median-split labels."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

TRAITS = ("extraversion", "agreeableness", "conscientiousness", "neuroticism", "openness")
TRAIT_ABBREV = {"extraversion": "E", "agreeableness": "A", "conscientiousness": "C",
                "neuroticism": "N", "openness": "O"}
N_ITEMS = 50
ITEMS_PER_TRAIT = 10
ITEM_COLUMNS = tuple(f"item_{i}" for i in range(1, N_ITEMS + 1))

# reference cohort medians, usable as fixed split thresholds
REFERENCE_MEDIANS = {"extraversion": 31.0, "agreeableness": 40.0, "conscientiousness": 34.0,
                     "neuroticism": 30.0, "openness": 37.0}
# reference mean / std per trait, the synthetic generator's default distribution
REFERENCE_MOMENTS = {"extraversion": (30.01, 7.42), "agreeableness": (39.50, 5.56),
                     "conscientiousness": (34.17, 5.55), "neuroticism": (29.34, 7.83),
                     "openness": (36.81, 5.01)}

BALANCE_WARNING_FRACTION = 0.4


class ItemOutOfRange(ValueError):
    pass


class KeyMismatch(ValueError):
    pass


class DegenerateVariance(ValueError):
    """Total score variance is zero, so alpha is undefined."""


class ClassImbalanceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KeyEntry:
    item: int  # 1-based
    trait: str
    reversed: bool


@dataclass(frozen=True)
class ScoringKey:
    entries: tuple[KeyEntry, ...]

    def __post_init__(self) -> None:
        items = sorted(e.item for e in self.entries)
        if items != list(range(1, N_ITEMS + 1)):
            raise KeyMismatch("key must cover items 1..50 exactly once")
        for t in TRAITS:
            n = sum(e.trait == t for e in self.entries)
            if n != ITEMS_PER_TRAIT:
                raise KeyMismatch(f"{t}: {n} items, expected {ITEMS_PER_TRAIT}")
        unknown = {e.trait for e in self.entries} - set(TRAITS)
        if unknown:
            raise KeyMismatch(f"unknown traits {sorted(unknown)}")

    def items_of(self, trait: str) -> list[KeyEntry]:
        return sorted((e for e in self.entries if e.trait == trait), key=lambda e: e.item)

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """(trait index per item, reversed flag per item), both indexed by item-1."""
        trait = np.empty(N_ITEMS, np.int64)
        rev = np.empty(N_ITEMS, bool)
        for e in self.entries:
            trait[e.item - 1] = TRAITS.index(e.trait)
            rev[e.item - 1] = e.reversed
        return trait, rev


_POLARITY = {"positive": False, "+": False, "reversed": True, "-": True, "negative": True}


def read_key(path: str | Path) -> ScoringKey:
    with open(path, newline="") as f:
        return _key_from_rows(csv.DictReader(f))


def _key_from_rows(rows: Iterable[Mapping[str, str]]) -> ScoringKey:
    entries = []
    for row in rows:
        try:
            pol = _POLARITY[row["polarity"].strip().lower()]
            trait = row["trait"].strip().lower()
            item = int(row["item"])
        except (KeyError, ValueError) as exc:
            raise KeyMismatch(f"bad key row {row!r}") from exc
        entries.append(KeyEntry(item, trait, pol))
    return ScoringKey(tuple(entries))


def default_key() -> ScoringKey:
    """The IPIP-50 key bundled with the package (Emotional Stability scored as Neuroticism)."""
    text = resources.files("weekend_personality").joinpath("data/ipip50_key.csv").read_text()
    return _key_from_rows(csv.DictReader(text.splitlines()))


def write_key(key: ScoringKey, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["item", "trait", "polarity"])
        for e in sorted(key.entries, key=lambda e: e.item):
            w.writerow([e.item, e.trait, "reversed" if e.reversed else "positive"])


@dataclass(frozen=True)
class QuestionnaireResponse:
    user_id: str
    items: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.items) != N_ITEMS:
            raise ItemOutOfRange(f"{self.user_id}: {len(self.items)} items, expected {N_ITEMS}")
        for i, v in enumerate(self.items, 1):
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or not 1 <= v <= 5:
                raise ItemOutOfRange(f"{self.user_id}: item_{i} = {v!r} not in 1..5")


TraitScores = dict  # trait name -> integer score


def score_ipip50(resp: QuestionnaireResponse, key: ScoringKey) -> dict[str, int]:
    trait_idx, rev = key.matrices()
    v = np.asarray(resp.items, dtype=np.int64)
    v = np.where(rev, 6 - v, v)
    sums = np.bincount(trait_idx, weights=v, minlength=len(TRAITS))
    return {t: int(round(sums[i])) for i, t in enumerate(TRAITS)}


def score_all(responses: Iterable[QuestionnaireResponse], key: ScoringKey) -> dict[str, dict[str, int]]:
    """user id -> trait scores."""
    return {r.user_id: score_ipip50(r, key) for r in responses}


def trait_item_matrix(responses: Sequence[QuestionnaireResponse], key: ScoringKey,
                      trait: str) -> np.ndarray:
    """users x 10 matrix of one trait's items with reversed items already flipped."""
    cols = key.items_of(trait)
    m = np.array([[r.items[e.item - 1] for e in cols] for r in responses], dtype=np.int64)
    flip = np.array([e.reversed for e in cols])
    return np.where(flip, 6 - m, m)


def cronbach_alpha(items: np.ndarray) -> float:
    """k/(k-1) * (1 - sum of item variances / variance of the total), population variances."""
    m = np.asarray(items, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise ValueError("cronbach_alpha needs at least 2 users and 2 items")
    k = m.shape[1]
    total_var = float(m.sum(axis=1).var())
    if total_var == 0.0:
        raise DegenerateVariance("total score has zero variance")
    return k / (k - 1) * (1.0 - float(m.var(axis=0).sum()) / total_var)


@dataclass
class TraitLabels:
    trait: str
    median: float
    labels: dict[str, int]
    class_counts: tuple[int, int] = (0, 0)
    fixed_threshold: bool = False

    @property
    def degenerate(self) -> bool:
        return min(self.class_counts) == 0


def median_split(scores: Mapping[str, float], trait: str = "",
                 threshold: float | None = None) -> TraitLabels:
    """Label 1 iff the score is strictly above the median (or ``threshold`` when given)."""
    if threshold is None and len(scores) < 2:
        raise ValueError("median split needs at least 2 users")
    vals = np.array(list(scores.values()), dtype=np.float64)
    med = float(np.median(vals)) if threshold is None else float(threshold)
    labels = {u: int(s > med) for u, s in scores.items()}
    ones = sum(labels.values())
    counts = (len(labels) - ones, ones)
    if labels and min(counts) < BALANCE_WARNING_FRACTION * len(labels):
        warnings.warn(f"{trait or 'trait'}: classes {counts[0]}/{counts[1]} around median {med}",
                      ClassImbalanceWarning, stacklevel=2)
    return TraitLabels(trait, med, labels, counts, threshold is not None)


@dataclass
class LabelSet:
    traits: dict[str, TraitLabels] = field(default_factory=dict)

    def __getitem__(self, trait: str) -> TraitLabels:
        return self.traits[trait]


def label_cohort(scores: Mapping[str, Mapping[str, int]],
                 thresholds: Mapping[str, float] | None = None) -> LabelSet:
    out = LabelSet()
    for t in TRAITS:
        per_user = {u: s[t] for u, s in scores.items()}
        out.traits[t] = median_split(per_user, t, None if thresholds is None else thresholds.get(t))
    return out


STAT_ORDER = ("mean", "std", "median", "max", "min")


def trait_stats(scores: Mapping[str, Mapping[str, int]]) -> dict[str, dict[str, float]]:
    """Population mean, std, median, max and min of each trait."""
    if not scores:
        raise ValueError("trait_stats needs at least one user")
    out = {}
    for t in TRAITS:
        v = np.array([s[t] for s in scores.values()], dtype=np.float64)
        out[t] = {"mean": float(v.mean()), "std": float(v.std()), "median": float(np.median(v)),
                  "max": float(v.max()), "min": float(v.min())}
    return out


# --- delimited files -----------------------------------------------------------


def read_questionnaire(path: str | Path) -> list[QuestionnaireResponse]:
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in ("user_id", *ITEM_COLUMNS) if c not in (reader.fieldnames or [])]
        if missing:
            raise KeyMismatch(f"{path}: missing columns {missing[:3]}")
        for lineno, row in enumerate(reader, 2):
            try:
                items = tuple(int(row[c]) for c in ITEM_COLUMNS)
            except ValueError as exc:
                raise ItemOutOfRange(f"{path}:{lineno}: {exc}") from exc
            out.append(QuestionnaireResponse(row["user_id"], items))
    return out


def write_questionnaire(responses: Iterable[QuestionnaireResponse], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["user_id", *ITEM_COLUMNS])
        for r in responses:
            w.writerow([r.user_id, *r.items])


def write_labels(labels: LabelSet, scores: Mapping[str, Mapping[str, int]], path: str | Path) -> None:
    """One row per user: id, the five scores, the five labels."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["user_id", *TRAITS, *(f"{t}_label" for t in TRAITS)])
        for u in sorted(scores):
            w.writerow([u, *(scores[u][t] for t in TRAITS),
                        *(labels[t].labels[u] for t in TRAITS)])


def read_labels(path: str | Path) -> tuple[dict[str, dict[str, int]], dict[str, dict[str, int]]]:
    """(scores, labels), each user id -> trait -> int."""
    scores, labels = {}, {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            u = row["user_id"]
            scores[u] = {t: int(row[t]) for t in TRAITS}
            labels[u] = {t: int(row[f"{t}_label"]) for t in TRAITS}
    return scores, labels
