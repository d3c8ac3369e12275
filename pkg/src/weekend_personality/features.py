"""Daily behavioural features, day-subset policies and per-user aggregation."""
from __future__ import annotations

import enum
import io
import math
import zipfile
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping, Sequence

import numpy as np

from . import mobility
from .sensorlog import CATEGORIES, DayKey, Kind, SensorEvent, UserDays

SEGMENTS = ("night", "morning", "afternoon", "evening")
SEGMENT_HOURS = (0, 6, 12, 18)


class Segment(enum.IntEnum):
    NIGHT = 0
    MORNING = 1
    AFTERNOON = 2
    EVENING = 3


def segment_of(local_seconds: float) -> Segment:
    """Night [00,06), Morning [06,12), Afternoon [12,18), Evening [18,24)."""
    if not 0 <= local_seconds < 86_400:
        raise ValueError(f"{local_seconds} s is outside the day")
    return Segment(int(local_seconds // 21_600))


def _segments(sec: np.ndarray) -> np.ndarray:
    return np.minimum((np.asarray(sec) // 21_600).astype(np.int64), 3)


def _seg_names(stem: str) -> list[str]:
    return [f"{stem}_{s}" for s in SEGMENTS]


# feature dictionary: (category, names) in a fixed order
FEATURE_GROUPS: tuple[tuple[Kind, tuple[str, ...]], ...] = (
    (Kind.LIGHT, ("light_mean_day", *_seg_names("light_mean"))),
    (Kind.NOISE, ("noise_mean_day", "noise_std_day", "noise_max_day",
                  *[f"noise_{stat}_{s}" for s in SEGMENTS for stat in ("mean", "std", "max")])),
    (Kind.BATTERY, ("battery_mean_level", "battery_charging_hours")),
    (Kind.ACCELEROMETER, tuple(f"accel_{stat}_{s}" for s in SEGMENTS
                               for stat in ("mean", "std", "max"))),
    (Kind.CALL, ("call_count", "call_in", "call_out", "call_missed", "call_total_dur",
                 "call_mean_dur", "call_max_dur", "call_std_dur", "call_night_frac")),
    (Kind.UNLOCK, ("unlock_count", "screen_on_hours", "session_mean_min", "session_std_min",
                   "session_max_min", *_seg_names("unlock_count"))),
    (Kind.PEDOMETER, ("steps_total", *_seg_names("steps"))),
    (Kind.LOCATION, ("loc_distance_m", "loc_radius_gyration_m", "loc_n_clusters",
                     "loc_entropy", "loc_norm_entropy", "loc_top_cluster_frac",
                     "loc_max_displacement_m", "loc_transitions", "loc_log_variance",
                     *_seg_names("loc_distance_m"))),
)

DAILY_FEATURES: tuple[str, ...] = tuple(n for _, names in FEATURE_GROUPS for n in names)
FEATURE_CATEGORY: dict[str, Kind] = {n: k for k, names in FEATURE_GROUPS for n in names}
CATEGORY_COUNTS: dict[Kind, int] = {k: len(names) for k, names in FEATURE_GROUPS}
_INDEX = {n: i for i, n in enumerate(DAILY_FEATURES)}

LOC_VARIANCE_FLOOR = 1e-10  # deg^2, keeps the log finite for a stationary day

ROUTINE_FEATURES = ("routine_index_location", "routine_index_screen")
AGGREGATE_FEATURES: tuple[str, ...] = tuple(
    f"{n}__{stat}" for n in DAILY_FEATURES for stat in ("mean", "std")) + ROUTINE_FEATURES

assert len(DAILY_FEATURES) == 70 and len(AGGREGATE_FEATURES) == 142


@dataclass(frozen=True)
class FeatureConfig:
    cluster_radius_m: float = 250.0
    slot_minutes: int = 30
    min_categories: int = 4  # a day is usable with >= this many categories observed
    window_days: int = 14


@dataclass
class DailyFeatureVector:
    day: DayKey
    values: np.ndarray  # 70 floats, NaN where missing
    missing: np.ndarray  # 70 bools
    categories_present: frozenset[Kind] = frozenset()

    def __getitem__(self, name: str) -> float:
        return float(self.values[_INDEX[name]])

    def is_missing(self, name: str) -> bool:
        return bool(self.missing[_INDEX[name]])

    def as_dict(self) -> dict[str, float | None]:
        return {n: (None if m else float(v))
                for n, v, m in zip(DAILY_FEATURES, self.values, self.missing)}


def _mean(x: np.ndarray) -> float:
    return float(x.mean()) if x.size else math.nan


def _std(x: np.ndarray) -> float:
    return float(x.std()) if x.size else math.nan


def _max(x: np.ndarray) -> float:
    return float(x.max()) if x.size else math.nan


def _light(sec, lux):
    seg = _segments(sec)
    return [_mean(lux)] + [_mean(lux[seg == s]) for s in range(4)]


def _noise(sec, db):
    seg = _segments(sec)
    out = [_mean(db), _std(db), _max(db)]
    for s in range(4):
        x = db[seg == s]
        out += [_mean(x), _std(x), _max(x)]
    return out


def _battery(sec, level, charging):
    # charging time: each event's state holds until the next event, the last until midnight
    ends = np.append(sec[1:], 86_400.0)
    hours = float(np.sum((ends - sec)[charging])) / 3600.0
    return [_mean(level), hours]


def _accel(sec, xyz):
    seg = _segments(sec)
    mag = np.sqrt(np.sum(xyz * xyz, axis=1))
    out = []
    for s in range(4):
        x = mag[seg == s]
        out += [_mean(x), _std(x), _max(x)]
    return out


def _calls(sec, states, durs):
    n = len(states)
    night = _segments(sec) == 0
    return [float(n), float(states.count("incoming")), float(states.count("outgoing")),
            float(states.count("missed")), float(durs.sum()), _mean(durs), _max(durs),
            _std(durs), float(night.sum()) / n]


def _unlocks(sec, kinds):
    seg = _segments(sec)
    is_unlock = np.array([k == "unlock" for k in kinds])
    sessions = []
    opened = None
    # a session runs from screen_on to the next screen_off; unclosed ones are dropped
    for t, k in zip(sec, kinds):
        if k == "screen_on" and opened is None:
            opened = t
        elif k == "screen_off" and opened is not None:
            sessions.append(t - opened)
            opened = None
    s = np.asarray(sessions, dtype=np.float64) / 60.0
    out = [float(is_unlock.sum()), float(s.sum()) / 60.0, _mean(s), _std(s), _max(s)]
    out += [float(np.sum(is_unlock & (seg == g))) for g in range(4)]
    return out


def _steps(sec, steps):
    seg = _segments(sec)
    return [float(steps.sum())] + [float(steps[seg == g].sum()) for g in range(4)]


def location_features(sec: np.ndarray, lat: np.ndarray, lon: np.ndarray,
                      radius_m: float = 250.0) -> list[float]:
    step = mobility.haversine_many(lat[:-1], lon[:-1], lat[1:], lon[1:]) if lat.size > 1 \
        else np.zeros(0)
    seg = _segments(sec)
    labels = mobility._leader_cluster(lat, lon, float(radius_m))
    k = int(labels.max()) + 1
    p = np.bincount(labels, minlength=k) / labels.size
    entropy = float(-np.sum(p * np.log(p)))
    norm_entropy = entropy / math.log(k) if k > 1 else 0.0
    transitions = float(np.sum(labels[1:] != labels[:-1]))
    out = [float(step.sum()), mobility.radius_of_gyration_m(np.column_stack([lat, lon])),
           float(k), entropy, norm_entropy, float(p.max()),
           mobility.max_displacement_m(lat, lon), transitions,
           math.log(float(lat.var() + lon.var()) + LOC_VARIANCE_FLOOR)]
    # each hop is credited to the segment of the fix it arrives at
    out += [float(step[seg[1:] == g].sum()) for g in range(4)]
    return out


def extract_daily(day: DayKey, events: Sequence[SensorEvent], local_seconds: Sequence[float],
                  config: FeatureConfig = FeatureConfig()) -> DailyFeatureVector:
    """All 70 daily features for one user-day.

    A category without events leaves all of its features missing. Inside an
    observed category, per-segment sums and counts default to 0 while means,
    standard deviations and maxima over no samples stay missing.
    """
    sec = np.asarray(local_seconds, dtype=np.float64)
    if len(sec) != len(events):
        raise ValueError("local_seconds must align with events")
    by_kind: dict[Kind, list[int]] = {k: [] for k in CATEGORIES}
    for i, ev in enumerate(events):
        by_kind[ev.kind].append(i)

    values = np.full(len(DAILY_FEATURES), np.nan)
    present = set()
    pos = 0
    for kind, names in FEATURE_GROUPS:
        idx = by_kind[kind]
        if idx:
            present.add(kind)
            s = sec[idx]
            pl = [events[i].payload for i in idx]
            if kind is Kind.LIGHT:
                vals = _light(s, np.array([p.lux for p in pl]))
            elif kind is Kind.NOISE:
                vals = _noise(s, np.array([p.db for p in pl]))
            elif kind is Kind.BATTERY:
                vals = _battery(s, np.array([p.level for p in pl]),
                                np.array([p.charging for p in pl], dtype=bool))
            elif kind is Kind.ACCELEROMETER:
                vals = _accel(s, np.array([(p.x, p.y, p.z) for p in pl]))
            elif kind is Kind.CALL:
                vals = _calls(s, [p.state for p in pl], np.array([p.duration_s for p in pl]))
            elif kind is Kind.UNLOCK:
                vals = _unlocks(s, [p.event for p in pl])
            elif kind is Kind.PEDOMETER:
                vals = _steps(s, np.array([p.steps for p in pl], dtype=np.float64))
            else:
                vals = location_features(s, np.array([p.lat for p in pl]),
                                         np.array([p.lon for p in pl]), config.cluster_radius_m)
            values[pos:pos + len(names)] = vals
        pos += len(names)
    return DailyFeatureVector(day, values, np.isnan(values), frozenset(present))


# --- per-day records used for aggregation ------------------------------------


@dataclass
class DayRecord:
    """Everything aggregation needs from one user-day."""

    daily: DailyFeatureVector
    fix_seconds: np.ndarray
    fix_lat: np.ndarray
    fix_lon: np.ndarray
    screen_slots: np.ndarray  # modal screen state per slot, ABSENT where unobserved

    @property
    def key(self) -> DayKey:
        return self.daily.day


SCREEN_STATE = {"screen_on": 1, "unlock": 1, "screen_off": 0, "lock": 0}


def day_record(day: DayKey, events: Sequence[SensorEvent], local_seconds: Sequence[float],
               config: FeatureConfig = FeatureConfig()) -> DayRecord:
    sec = np.asarray(local_seconds, dtype=np.float64)
    daily = extract_daily(day, events, sec, config)
    loc = [i for i, e in enumerate(events) if e.kind is Kind.LOCATION]
    scr = [i for i, e in enumerate(events) if e.kind is Kind.UNLOCK]
    screen = mobility.slot_labels(sec[scr], [SCREEN_STATE[events[i].payload.event] for i in scr],
                                  config.slot_minutes)
    return DayRecord(daily, sec[loc], np.array([events[i].payload.lat for i in loc]),
                     np.array([events[i].payload.lon for i in loc]), screen)


def is_usable(record: DayRecord | DailyFeatureVector, config: FeatureConfig = FeatureConfig()) -> bool:
    daily = record.daily if isinstance(record, DayRecord) else record
    return len(daily.categories_present) >= config.min_categories


def study_window(keys: Sequence[DayKey], window_days: int = 14) -> list[DayKey]:
    """Days within ``window_days`` calendar days of the earliest one, in date order."""
    keys = sorted(keys)
    if not keys:
        return []
    end = keys[0].local_date + timedelta(days=window_days)
    return [k for k in keys if k.local_date < end]


def user_records(user: UserDays, config: FeatureConfig = FeatureConfig()) -> list[DayRecord]:
    """Usable days of the user's study window, in date order."""
    records = [day_record(k, user.days[k], user.local_seconds[k], config)
               for k in user.sorted_keys()]
    usable = [r for r in records if is_usable(r, config)]
    window = {k for k in study_window([r.key for r in usable], config.window_days)}
    return [r for r in usable if r.key in window]


# --- day-subset policies ------------------------------------------------------


class Policy(str, enum.Enum):
    FULL_TWO_WEEKS = "full_two_weeks"
    WEEKEND_TWO_WEEKS = "weekend_two_weeks"
    WEEKDAY_TWO_WEEKS = "weekday_two_weeks"
    WEEKEND_ONE = "weekend_one"
    WEEKDAY_ONE = "weekday_one"
    SATURDAY_ONLY = "saturday_only"
    SUNDAY_ONLY = "sunday_only"
    RANDOM_WEEKDAY = "random_weekday"

    @property
    def label(self) -> str:
        return POLICY_LABELS[self]

    @property
    def randomized(self) -> bool:
        return self not in (Policy.FULL_TWO_WEEKS, Policy.WEEKEND_TWO_WEEKS)


POLICY_LABELS = {
    Policy.FULL_TWO_WEEKS: "Full dataset (2 weeks)",
    Policy.WEEKEND_TWO_WEEKS: "Weekend (2 weeks)",
    Policy.WEEKDAY_TWO_WEEKS: "Weekday (2 weeks)",
    Policy.WEEKEND_ONE: "Weekend (1 week)",
    Policy.WEEKDAY_ONE: "Weekday (1 week)",
    Policy.SATURDAY_ONLY: "Saturday",
    Policy.SUNDAY_ONLY: "Sunday",
    Policy.RANDOM_WEEKDAY: "Random Weekday",
}
POLICY_ORDER: tuple[Policy, ...] = tuple(Policy)


class InsufficientDaysForPolicy(ValueError):
    def __init__(self, policy: Policy, needed: int, available: int) -> None:
        self.policy, self.needed, self.available = policy, needed, available
        super().__init__(f"{policy.value}: needs {needed} days, {available} available")


def _weekends(days: Sequence[DayKey]) -> list[tuple[DayKey, DayKey]]:
    by_date = {k.local_date: k for k in days}
    out = []
    for k in sorted(days):
        if k.day_class.value == "saturday":
            sun = by_date.get(k.local_date + timedelta(days=1))
            if sun is not None:
                out.append((k, sun))
    return out


def select_days(policy: Policy, days: Sequence[DayKey], rng: np.random.Generator,
                window_days: int = 14) -> list[DayKey]:
    """Pick the days a policy uses from one user's (usable, windowed) days.

    Randomised choices are uniform without replacement via ``rng.choice`` on
    the date-sorted candidates; the result is returned in date order.
    """
    days = sorted(days)
    weekdays = [k for k in days if not k.is_weekend]
    weekend = [k for k in days if k.is_weekend]

    def pick(pool: list[DayKey], k: int) -> list[DayKey]:
        if len(pool) < k:
            raise InsufficientDaysForPolicy(policy, k, len(pool))
        chosen = rng.choice(len(pool), size=k, replace=False)
        return sorted(pool[i] for i in chosen)

    if policy is Policy.FULL_TWO_WEEKS:
        if len(days) < window_days:
            raise InsufficientDaysForPolicy(policy, window_days, len(days))
        return list(days)
    if policy is Policy.WEEKEND_TWO_WEEKS:
        if len(weekend) < 4:
            raise InsufficientDaysForPolicy(policy, 4, len(weekend))
        return weekend
    if policy is Policy.WEEKDAY_TWO_WEEKS:
        return pick(weekdays, 4)
    if policy is Policy.WEEKEND_ONE:
        pairs = _weekends(days)
        if not pairs:
            raise InsufficientDaysForPolicy(policy, 2, len(weekend))
        return list(pairs[int(rng.integers(len(pairs)))])
    if policy is Policy.WEEKDAY_ONE:
        return pick(weekdays, 2)
    if policy is Policy.SATURDAY_ONLY:
        return pick([k for k in weekend if k.day_class.value == "saturday"], 1)
    if policy is Policy.SUNDAY_ONLY:
        return pick([k for k in weekend if k.day_class.value == "sunday"], 1)
    return pick(weekdays, 1)


# --- aggregation ----------------------------------------------------------------


@dataclass
class AggregateFeatureVector:
    user_id: str
    policy: Policy | None
    values: np.ndarray  # 142 floats, NaN where missing
    missing: np.ndarray
    days: tuple[date, ...] = field(default=())

    def __getitem__(self, name: str) -> float:
        return float(self.values[AGGREGATE_FEATURES.index(name)])


def _routine_or_nan(slots: Mapping[object, np.ndarray] | None) -> float:
    if not slots:
        return math.nan
    try:
        return mobility.routine_index(slots)
    except (mobility.InsufficientDays, mobility.UndefinedRoutine):
        return math.nan


def aggregate(daily: Sequence[DailyFeatureVector],
              location_slots: Mapping[object, np.ndarray] | None = None,
              screen_slots: Mapping[object, np.ndarray] | None = None,
              policy: Policy | None = None) -> AggregateFeatureVector:
    """Mean and population std of each daily feature over the days where it is present,
    followed by the two routine indices (missing with fewer than two days)."""
    if not daily:
        raise ValueError("aggregate needs at least one day")
    M = np.vstack([d.values for d in daily])
    present = ~np.vstack([d.missing for d in daily])
    cnt = present.sum(axis=0)
    Z = np.where(present, M, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = Z.sum(axis=0) / cnt
        dev = np.where(present, M - mean, 0.0)
        std = np.sqrt((dev * dev).sum(axis=0) / cnt)
    mean[cnt == 0] = np.nan
    std[cnt == 0] = np.nan
    vals = np.empty(len(AGGREGATE_FEATURES))
    vals[0:140:2] = mean
    vals[1:140:2] = std
    vals[140] = _routine_or_nan(location_slots)
    vals[141] = _routine_or_nan(screen_slots)
    return AggregateFeatureVector(daily[0].day.user_id, policy, vals, np.isnan(vals),
                                  tuple(d.day.local_date for d in daily))


def aggregate_records(records: Sequence[DayRecord], config: FeatureConfig = FeatureConfig(),
                      policy: Policy | None = None) -> AggregateFeatureVector:
    """Aggregate selected days; places for the location routine are clustered
    over the fixes of these days only."""
    lat = np.concatenate([r.fix_lat for r in records]) if records else np.zeros(0)
    lon = np.concatenate([r.fix_lon for r in records]) if records else np.zeros(0)
    loc_slots = {}
    if lat.size:
        labels = mobility._leader_cluster(lat, lon, float(config.cluster_radius_m))
        pos = 0
        for r in records:
            n = r.fix_lat.size
            if n:
                loc_slots[r.key] = mobility.slot_labels(r.fix_seconds, labels[pos:pos + n],
                                                        config.slot_minutes)
            pos += n
    screen = {r.key: r.screen_slots for r in records if (r.screen_slots != mobility.ABSENT).any()}
    return aggregate([r.daily for r in records], loc_slots, screen, policy)


# --- files ------------------------------------------------------------------------


def feature_manifest() -> dict:
    """Machine-readable name -> index maps for both feature levels."""
    return {"daily": {n: i for i, n in enumerate(DAILY_FEATURES)},
            "daily_category": {n: FEATURE_CATEGORY[n].value for n in DAILY_FEATURES},
            "aggregate": {n: i for i, n in enumerate(AGGREGATE_FEATURES)}}


def _cell(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_daily_csv(records: Sequence[DayRecord], path) -> None:
    with open(path, "w") as f:
        f.write(",".join(("user_id", "local_date", "day_class", *DAILY_FEATURES)) + "\n")
        for r in records:
            k = r.key
            f.write(",".join((k.user_id, k.local_date.isoformat(), k.day_class.value,
                              *(_cell(v) for v in r.daily.values))) + "\n")


def write_matrix_csv(user_ids: Sequence[str], X: np.ndarray, path,
                     names: Sequence[str] = AGGREGATE_FEATURES) -> None:
    """Delimited matrix with a header of feature names; missing cells are empty."""
    with open(path, "w") as f:
        f.write(",".join(("user_id", *names)) + "\n")
        for u, row in zip(user_ids, X):
            f.write(",".join((u, *(_cell(v) for v in row))) + "\n")


def read_matrix_csv(path) -> tuple[list[str], np.ndarray, list[str]]:
    with open(path) as f:
        header = f.readline().rstrip("\n").split(",")
        ids, rows = [], []
        for line in f:
            parts = line.rstrip("\n").split(",")
            ids.append(parts[0])
            rows.append([float(x) if x else math.nan for x in parts[1:]])
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 1)
    return ids, X, header[1:]


_KIND_BITS = {k: 1 << i for i, k in enumerate(CATEGORIES)}


def save_records(records: Mapping[str, Sequence[DayRecord]], path) -> None:
    """All users' day records in one ``.npz`` (exact round trip)."""
    flat = [r for u in sorted(records) for r in records[u]]
    n_fix = np.array([r.fix_lat.size for r in flat], dtype=np.int64)
    _savez_stable(
        path,
        user=np.array([r.key.user_id for r in flat], dtype=str),
        users=np.array(sorted(records), dtype=str),
        ordinal=np.array([r.key.local_date.toordinal() for r in flat], dtype=np.int64),
        values=np.vstack([r.daily.values for r in flat]) if flat
        else np.zeros((0, len(DAILY_FEATURES))),
        present=np.array([sum(_KIND_BITS[k] for k in r.daily.categories_present) for r in flat],
                         dtype=np.int64),
        fix_offsets=np.concatenate([[0], np.cumsum(n_fix)]),
        fix_seconds=np.concatenate([r.fix_seconds for r in flat]) if flat else np.zeros(0),
        fix_lat=np.concatenate([r.fix_lat for r in flat]) if flat else np.zeros(0),
        fix_lon=np.concatenate([r.fix_lon for r in flat]) if flat else np.zeros(0),
        screen=np.vstack([r.screen_slots for r in flat]) if flat else np.zeros((0, 48), np.int64),
    )


def _savez_stable(path, **arrays: np.ndarray) -> None:
    """Like ``np.savez_compressed`` but with fixed entry timestamps, so bytes are reproducible."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asanyarray(arr), allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def load_records(path) -> dict[str, list[DayRecord]]:
    z = np.load(path)
    out: dict[str, list[DayRecord]] = {str(u): [] for u in z["users"]}
    off = z["fix_offsets"]
    for i, (u, o) in enumerate(zip(z["user"], z["ordinal"])):
        key = DayKey.of(str(u), date.fromordinal(int(o)))
        vals = z["values"][i].copy()
        present = frozenset(k for k, b in _KIND_BITS.items() if int(z["present"][i]) & b)
        a, b = int(off[i]), int(off[i + 1])
        out[str(u)].append(DayRecord(DailyFeatureVector(key, vals, np.isnan(vals), present),
                                     z["fix_seconds"][a:b].copy(), z["fix_lat"][a:b].copy(),
                                     z["fix_lon"][a:b].copy(), z["screen"][i].copy()))
    return out


def cohort_records(user_days: Mapping[str, UserDays],
                   config: FeatureConfig = FeatureConfig()) -> dict[str, list[DayRecord]]:
    return {u: user_records(user_days[u], config) for u in sorted(user_days)}
