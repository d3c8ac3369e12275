"""Location geometry and routine measures."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numba as nb
import numpy as np

EARTH_RADIUS_M = 6_371_000.0
SLOTS_PER_DAY = 48  # 30-minute slots
ABSENT = -1


class EmptyInput(ValueError):
    pass


class InsufficientDays(ValueError):
    pass


class UndefinedRoutine(ValueError):
    """No pair of days shares an observed slot."""


@dataclass(frozen=True, slots=True)
class Fix:
    local_seconds: float
    lat: float
    lon: float


def _latlon(fixes) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(fixes, np.ndarray):
        arr = np.asarray(fixes, dtype=np.float64).reshape(-1, 2)
        return arr[:, 0].copy(), arr[:, 1].copy()
    fixes = list(fixes)
    lat = np.fromiter((f.lat for f in fixes), np.float64, len(fixes))
    lon = np.fromiter((f.lon for f in fixes), np.float64, len(fixes))
    return lat, lon


def haversine_m(a: Fix, b: Fix) -> float:
    return float(_haversine(a.lat, a.lon, b.lat, b.lon))


@nb.njit(cache=True)
def _haversine(lat1, lon1, lat2, lon2):
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_many(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorised great-circle distance in metres."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin((p2 - p1) / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


@nb.njit(cache=True)
def _leader_cluster(lat, lon, radius_m):
    n = lat.shape[0]
    labels = np.empty(n, np.int64)
    c_lat = np.empty(n, np.float64)
    c_lon = np.empty(n, np.float64)
    c_n = np.zeros(n, np.int64)
    k = 0
    for i in range(n):
        found = -1
        for c in range(k):
            if _haversine(lat[i], lon[i], c_lat[c], c_lon[c]) <= radius_m:
                found = c
                break
        if found < 0:
            found = k
            c_lat[k] = lat[i]
            c_lon[k] = lon[i]
            c_n[k] = 1
            k += 1
        else:
            m = c_n[found] + 1
            c_lat[found] += (lat[i] - c_lat[found]) / m
            c_lon[found] += (lon[i] - c_lon[found]) / m
            c_n[found] = m
        labels[i] = found
    return labels


def cluster_fixes(fixes: Sequence[Fix] | np.ndarray, radius_m: float = 250.0) -> np.ndarray:
    """Greedy leader clustering in input order.

    Each fix joins the first cluster (by creation order) whose running-mean
    centroid lies within ``radius_m``, otherwise it founds a new one. Ids are
    dense from 0 in order of first appearance.
    """
    if radius_m <= 0:
        raise ValueError("radius_m must be positive")
    lat, lon = _latlon(fixes)
    return _leader_cluster(lat, lon, float(radius_m))


def radius_of_gyration_m(fixes: Sequence[Fix] | np.ndarray) -> float:
    lat, lon = _latlon(fixes)
    if lat.size == 0:
        raise EmptyInput("radius of gyration of no fixes")
    d = haversine_many(lat, lon, lat.mean(), lon.mean())
    return float(np.sqrt(np.mean(d * d)))


def max_displacement_m(lat: np.ndarray, lon: np.ndarray) -> float:
    if lat.size < 2:
        return 0.0
    i, j = np.triu_indices(lat.size, k=1)
    return float(haversine_many(lat[i], lon[i], lat[j], lon[j]).max())


def slot_labels(local_seconds: Iterable[float], labels: Iterable[int],
                slot_minutes: int = 30) -> np.ndarray:
    """Modal label per time slot of the day (smallest label wins ties; ABSENT if empty)."""
    if 1440 % slot_minutes:
        raise ValueError("slot_minutes must divide a day")
    n_slots = 1440 // slot_minutes
    sec = np.asarray(list(local_seconds) if not isinstance(local_seconds, np.ndarray)
                     else local_seconds, dtype=np.float64)
    lab = np.asarray(list(labels) if not isinstance(labels, np.ndarray) else labels,
                     dtype=np.int64)
    out = np.full(n_slots, ABSENT, np.int64)
    if sec.size == 0:
        return out
    slot = np.minimum((sec // (slot_minutes * 60)).astype(np.int64), n_slots - 1)
    n_lab = int(lab.max()) + 1
    counts = np.zeros((n_slots, n_lab), np.int64)
    np.add.at(counts, (slot, lab), 1)
    present = counts.sum(axis=1) > 0
    out[present] = counts[present].argmax(axis=1)  # argmax returns the first (smallest) max
    return out


def routine_index(day_slot_labels: Mapping[object, Sequence[int]] | Sequence[Sequence[int]]) -> float:
    """Mean over day pairs of the agreement rate on slots observed on both days.

    Pairs without a co-observed slot are left out of the mean.
    """
    days = list(day_slot_labels.values()) if isinstance(day_slot_labels, Mapping) \
        else list(day_slot_labels)
    if len(days) < 2:
        raise InsufficientDays(f"routine index needs >= 2 days, got {len(days)}")
    arr = np.asarray(days, dtype=np.int64)
    rates = []
    for a, b in combinations(range(arr.shape[0]), 2):
        both = (arr[a] != ABSENT) & (arr[b] != ABSENT)
        m = int(both.sum())
        if m:
            rates.append(int(np.sum(arr[a][both] == arr[b][both])) / m)
    if not rates:
        raise UndefinedRoutine("no pair of days shares an observed slot")
    return math.fsum(rates) / len(rates)
