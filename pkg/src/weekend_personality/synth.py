"""Synthetic cohorts: questionnaires plus two weeks of sensor logs with planted couplings.

Each user's behaviour is drawn from documented baselines. A coupling
``(trait, feature, weekday_effect, weekend_effect)`` shifts the daily value of
``feature`` by ``signal * effect * BASELINE_SD[feature]`` on days of the
matching tag, for users in the upper class of ``trait``. With ``signal = 0``
nothing in the sensor stream depends on personality.
"""
from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import numpy as np

from . import rng as rng_mod
from .sensorlog import (Accelerometer, Battery, Call, Kind, Light, Location, Noise, Pedometer,
                        SensorEvent, Unlock, write_events, write_timezones)
from .survey import (ITEMS_PER_TRAIT, ClassImbalanceWarning, REFERENCE_MOMENTS, TRAITS, QuestionnaireResponse,
                     ScoringKey, default_key, median_split, write_key, write_questionnaire)

SLOT_S = 900  # 15-minute cadence for light, noise, pedometer, accelerometer, location
N_SLOTS = 96
DAYLIGHT = slice(24, 80)  # 06:00-20:00
DAYLIGHT_FRAC = (80 - 24) / N_SLOTS

# --- behavioural baselines -----------------------------------------------------
CALL_RATE = (6.0, 1.2)  # user mean calls/day ~ N(mean, sd), then Poisson per day
UNLOCK_RATE = (45.0, 4.0)
STEPS = (7000.0, 1200.0, 1900.0)  # user mean, between-user sd, day-to-day sd
NOISE_DB = (38.0, 56.0, 1.5, 3.0, 4.0)  # night, day level, user sd, day sd, reading sd
LIGHT_LUX = (5.0, 250.0, 30.0, 60.0, 40.0)  # night, daylight level, user sd, day sd, reading sd
SESSION_MEAN_S = 240.0
CALL_DURATION_MEAN_S = 120.0
GPS_JITTER_M = 20.0
GPS_DROP = 0.1
CITY = (40.4168, -3.7038)

# standard deviation of each couplable daily feature across users and days
BASELINE_SD: dict[str, float] = {
    "call_count": math.sqrt(CALL_RATE[0] + CALL_RATE[1] ** 2),
    "unlock_count": math.sqrt(UNLOCK_RATE[0] + UNLOCK_RATE[1] ** 2),
    "steps_total": math.hypot(STEPS[1], STEPS[2]),
    "noise_mean_day": math.sqrt(NOISE_DB[2] ** 2 + NOISE_DB[3] ** 2 + NOISE_DB[4] ** 2 / N_SLOTS),
    "light_mean_day": DAYLIGHT_FRAC * math.sqrt(
        LIGHT_LUX[2] ** 2 + LIGHT_LUX[3] ** 2 + LIGHT_LUX[4] ** 2 / (80 - 24)),
}
COUPLABLE = tuple(BASELINE_SD)

# hourly weights for calls and phone sessions
_HOUR_W = np.array([0.15, 0.08, 0.05, 0.05, 0.05, 0.1, 0.3, 0.8, 1.0, 1.0, 1.0, 1.0,
                    1.1, 1.0, 1.0, 1.0, 1.0, 1.1, 1.2, 1.3, 1.3, 1.2, 0.9, 0.5])
_HOUR_W = _HOUR_W / _HOUR_W.sum()


class BadSpec(ValueError):
    pass


@dataclass(frozen=True)
class Coupling:
    feature: str
    weekday_effect: float
    weekend_effect: float


def default_couplings() -> dict[str, tuple[Coupling, ...]]:
    return {
        "extraversion": (Coupling("call_count", 0.3, 1.5), Coupling("noise_mean_day", 0.3, 1.5)),
        "neuroticism": (Coupling("unlock_count", 0.3, 1.5), Coupling("steps_total", -0.3, -1.5)),
    }


@dataclass(frozen=True)
class CohortSpec:
    n_users: int = 200
    timezone: str = "Europe/Madrid"
    start_date: date = date(2018, 3, 5)
    n_days: int = 14
    trait_moments: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: dict(REFERENCE_MOMENTS))
    signal: float = 0.0
    couplings: Mapping[str, tuple[Coupling, ...]] = field(default_factory=default_couplings)
    seed: int = 0
    item_noise: float = 0.75
    dropout: float = 0.02  # chance a category records nothing on a given day

    def validate(self) -> None:
        if self.n_users < 1:
            raise BadSpec("n_users must be positive")
        if self.start_date.weekday() != 0:
            raise BadSpec(f"start_date {self.start_date} is not a Monday")
        if self.n_days < 1:
            raise BadSpec("n_days must be positive")
        if not 0.0 <= self.signal <= 1.0:
            raise BadSpec("signal must lie in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise BadSpec("dropout must lie in [0, 1)")
        if self.item_noise < 0:
            raise BadSpec("item_noise must be non-negative")
        try:
            ZoneInfo(self.timezone)
        except (ZoneInfoNotFoundError, ValueError) as exc:
            raise BadSpec(f"unknown timezone {self.timezone!r}") from exc
        for t in TRAITS:
            if t not in self.trait_moments:
                raise BadSpec(f"no distribution for {t}")
            if self.trait_moments[t][1] < 0:
                raise BadSpec(f"{t}: negative std")
        for t, cs in self.couplings.items():
            if t not in TRAITS:
                raise BadSpec(f"coupling for unknown trait {t!r}")
            for c in cs:
                if c.feature not in COUPLABLE:
                    raise BadSpec(f"{c.feature!r} is not couplable; choose from {COUPLABLE}")


@dataclass
class Cohort:
    spec: CohortSpec
    events: list[SensorEvent]
    responses: list[QuestionnaireResponse]
    scores: dict[str, dict[str, int]]
    classes: dict[str, dict[str, int]]  # trait -> user -> class
    tz_map: dict[str, str]
    key: ScoringKey

    @property
    def user_ids(self) -> list[str]:
        return [r.user_id for r in self.responses]


# --- questionnaire ---------------------------------------------------------------


def draw_scores(spec: CohortSpec, index: int) -> dict[str, int]:
    g = rng_mod.generator(spec.seed, "scores", index)
    out = {}
    for t in TRAITS:
        mu, sd = spec.trait_moments[t]
        out[t] = int(np.clip(np.rint(g.normal(mu, sd)), 10, 50))
    return out


def keyed_items(score: int, noise: float, g: np.random.Generator) -> np.ndarray:
    """Ten keyed item values in 1..5 around score/10 that sum to ``score`` exactly."""
    theta = score / ITEMS_PER_TRAIT
    v = np.clip(np.rint(theta + g.normal(0.0, noise, ITEMS_PER_TRAIT)), 1, 5).astype(np.int64)
    gap = score - int(v.sum())
    while gap:
        step = 1 if gap > 0 else -1
        movable = np.flatnonzero(v < 5) if step > 0 else np.flatnonzero(v > 1)
        # nudge the item furthest from theta in the needed direction
        dist = (theta - v[movable]) * step
        j = movable[int(np.argmax(dist))]
        v[j] += step
        gap -= step
    return v


def make_response(user_id: str, scores: Mapping[str, int], key: ScoringKey, noise: float,
                  g: np.random.Generator) -> QuestionnaireResponse:
    items = np.zeros(50, np.int64)
    for t in TRAITS:
        entries = key.items_of(t)
        v = keyed_items(scores[t], noise, g)
        for e, x in zip(entries, v):
            items[e.item - 1] = 6 - x if e.reversed else x
    return QuestionnaireResponse(user_id, tuple(int(x) for x in items))


# --- sensor stream -----------------------------------------------------------------


def _offset_deg(lat: float, north_m: float, east_m: float) -> tuple[float, float]:
    dlat = north_m / 111_194.9
    dlon = east_m / (111_194.9 * math.cos(math.radians(lat)))
    return dlat, dlon


@dataclass
class _Person:
    call_rate: float
    unlock_rate: float
    steps_mean: float
    noise_off: float
    light_off: float
    anchors: np.ndarray  # (k, 2) lat/lon, row 0 = home, row 1 = regular daytime place
    works: float  # probability of spending a weekday at anchor 1


def _person(g: np.random.Generator) -> _Person:
    home_lat = CITY[0] + g.normal(0, 0.03)
    home_lon = CITY[1] + g.normal(0, 0.03)
    k = int(g.integers(2, 6))
    anchors = [(home_lat, home_lon)]
    for _ in range(k - 1):
        r = g.uniform(1_000, 8_000)
        a = g.uniform(0, 2 * math.pi)
        dlat, dlon = _offset_deg(home_lat, r * math.cos(a), r * math.sin(a))
        anchors.append((home_lat + dlat, home_lon + dlon))
    return _Person(
        call_rate=max(0.5, g.normal(*CALL_RATE)),
        unlock_rate=max(5.0, g.normal(*UNLOCK_RATE)),
        steps_mean=max(1000.0, g.normal(STEPS[0], STEPS[1])),
        noise_off=g.normal(0, NOISE_DB[2]),
        light_off=g.normal(0, LIGHT_LUX[2]),
        anchors=np.array(anchors),
        works=g.uniform(0.6, 0.95),
    )


def _places(p: _Person, weekend: bool, g: np.random.Generator) -> np.ndarray:
    """Anchor index for each 15-minute slot."""
    where = np.zeros(N_SLOTS, np.int64)
    k = len(p.anchors)
    if not weekend and g.random() < p.works:
        start = int(g.integers(32, 40))
        end = int(g.integers(64, 74))
        where[start:end] = 1
        if k > 2 and g.random() < 0.3:
            s = int(g.integers(76, 84))
            where[s:s + int(g.integers(4, 10))] = int(g.integers(2, k))
    else:
        for _ in range(int(g.integers(1, 3))):
            s = int(g.integers(40, 80))
            where[s:s + int(g.integers(8, 17))] = int(g.integers(1, k))
    return where


def _sessions(n: int, g: np.random.Generator) -> list[tuple[float, float]]:
    hours = g.choice(24, size=n, p=_HOUR_W)
    starts = np.sort(hours * 3600.0 + g.uniform(0, 3600, n))
    out = []
    last_end = -10.0
    for i, s in enumerate(starts):
        if s < last_end + 5.0:
            continue
        nxt = starts[i + 1] if i + 1 < n else 86_399.0
        dur = min(g.exponential(SESSION_MEAN_S) + 3.0, max(nxt - s - 3.0, 2.0), 86_399.0 - s)
        if dur < 2.0:
            continue
        out.append((float(s), float(s + dur)))
        last_end = s + dur
    return out


def _shifts(spec: CohortSpec, classes: Mapping[str, int], weekend: bool) -> dict[str, float]:
    out = {f: 0.0 for f in COUPLABLE}
    for trait, cs in spec.couplings.items():
        if not classes.get(trait):
            continue
        for c in cs:
            eff = c.weekend_effect if weekend else c.weekday_effect
            out[c.feature] += spec.signal * eff * BASELINE_SD[c.feature]
    return out


def _day_events(p: _Person, shifts: Mapping[str, float], weekend: bool, dropout: float,
                g: np.random.Generator) -> list[tuple[int, Kind, object]]:
    """(local ms, kind, payload) for one day, unsorted."""
    out: list[tuple[int, Kind, object]] = []
    slot_t = np.arange(N_SLOTS) * SLOT_S + g.uniform(0, 60, N_SLOTS)
    slot_ms = np.floor(slot_t * 1000).astype(np.int64)
    keep = g.random(8) >= dropout

    # location
    where = _places(p, weekend, g)
    base = p.anchors[where]
    jitter = g.normal(0, GPS_JITTER_M, (N_SLOTS, 2))
    lat = base[:, 0] + jitter[:, 0] / 111_194.9
    lon = base[:, 1] + jitter[:, 1] / (111_194.9 * math.cos(math.radians(base[0, 0])))
    fix = g.random(N_SLOTS) >= GPS_DROP
    if keep[7]:
        out += [(int(slot_ms[i]), Kind.LOCATION, Location(round(float(lat[i]), 6),
                                                         round(float(lon[i]), 6)))
                for i in np.flatnonzero(fix)]

    # steps follow waking hours and movement between places
    w = np.full(N_SLOTS, 1.0)
    w[:28] = 0.03
    w[92:] = 0.3
    moves = np.flatnonzero(np.diff(where) != 0) + 1
    w[moves] += 6.0
    w[np.maximum(moves - 1, 0)] += 3.0
    total = max(0.0, p.steps_mean + g.normal(0, STEPS[2]) + shifts["steps_total"])
    steps = g.multinomial(int(round(total)), w / w.sum())
    if keep[6]:
        out += [(int(slot_ms[i]), Kind.PEDOMETER, Pedometer(int(steps[i]))) for i in range(N_SLOTS)]
    if keep[3]:
        mag = 9.81 + 0.004 * steps + np.abs(g.normal(0, 0.25, N_SLOTS))
        u = g.normal(0, 1, (N_SLOTS, 3))
        u = u / np.linalg.norm(u, axis=1, keepdims=True) * mag[:, None]
        out += [(int(slot_ms[i]) + 200, Kind.ACCELEROMETER,
                 Accelerometer(round(float(u[i, 0]), 4), round(float(u[i, 1]), 4),
                               round(float(u[i, 2]), 4))) for i in range(N_SLOTS)]

    # noise and light day curves
    if keep[1]:
        level = np.where((np.arange(N_SLOTS) >= 28) & (np.arange(N_SLOTS) < 92),
                         NOISE_DB[1], NOISE_DB[0])
        db = level + p.noise_off + g.normal(0, NOISE_DB[3]) + g.normal(0, NOISE_DB[4], N_SLOTS)
        db = db + shifts["noise_mean_day"]
        out += [(int(slot_ms[i]) + 400, Kind.NOISE, Noise(round(float(db[i]), 3)))
                for i in range(N_SLOTS)]
    if keep[0]:
        lux = LIGHT_LUX[0] * np.exp(g.normal(0, 0.3, N_SLOTS))
        day_level = LIGHT_LUX[1] + p.light_off + g.normal(0, LIGHT_LUX[3]) \
            + shifts["light_mean_day"] / DAYLIGHT_FRAC
        lux[DAYLIGHT] = np.maximum(0.0, day_level + g.normal(0, LIGHT_LUX[4], 80 - 24))
        out += [(int(slot_ms[i]) + 600, Kind.LIGHT, Light(round(float(lux[i]), 3)))
                for i in range(N_SLOTS)]

    # battery: readings every two hours, charging overnight
    if keep[2]:
        level = 100.0
        for h in range(0, 24, 2):
            charging = h < 7 or h >= 23
            level = min(100.0, level + 18.0) if charging else max(3.0, level - g.uniform(7, 13))
            out.append((h * 3_600_000 + int(g.integers(0, 60_000)), Kind.BATTERY,
                        Battery(round(float(np.clip(level + g.normal(0, 1.0), 0, 100)), 2),
                                charging)))

    # calls
    if keep[4]:
        n = int(g.poisson(max(0.1, p.call_rate + shifts["call_count"])))
        hrs = g.choice(24, size=n, p=_HOUR_W)
        for h in hrs:
            t = int((h * 3600 + g.uniform(0, 3600)) * 1000)
            r = g.random()
            state = "incoming" if r < 0.45 else ("outgoing" if r < 0.85 else "missed")
            dur = 0.0 if state == "missed" else round(float(g.exponential(CALL_DURATION_MEAN_S)), 1)
            out.append((t, Kind.CALL, Call(state, dur)))

    # phone sessions
    if keep[5]:
        n = int(g.poisson(max(1.0, p.unlock_rate + shifts["unlock_count"])))
        for s, e in _sessions(n, g):
            s_ms, e_ms = int(s * 1000), int(e * 1000)
            out += [(s_ms, Kind.UNLOCK, Unlock("screen_on")), (s_ms + 500, Kind.UNLOCK, Unlock("unlock")),
                    (e_ms, Kind.UNLOCK, Unlock("screen_off")), (e_ms + 1, Kind.UNLOCK, Unlock("lock"))]
    return out


def _utc_converter(d: date, tz: ZoneInfo):
    """Map local milliseconds within day ``d`` to UTC epoch milliseconds."""
    midnight = int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp()) * 1000
    offs = np.array([int(datetime(d.year, d.month, d.day, h, tzinfo=tz).utcoffset().total_seconds())
                     * 1000 for h in range(24)], dtype=np.int64)

    def convert(local_ms: int) -> int:
        return midnight + local_ms - int(offs[min(local_ms // 3_600_000, 23)])
    return convert


def user_events(spec: CohortSpec, index: int, user_id: str,
                classes: Mapping[str, int]) -> list[SensorEvent]:
    g = rng_mod.generator(spec.seed, "events", index)
    tz = ZoneInfo(spec.timezone)
    p = _person(g)
    events: list[SensorEvent] = []
    for k in range(spec.n_days):
        d = spec.start_date + timedelta(days=k)
        weekend = d.weekday() >= 5
        conv = _utc_converter(d, tz)
        raw = _day_events(p, _shifts(spec, classes, weekend), weekend, spec.dropout, g)
        raw.sort(key=lambda r: (r[0], r[1].value))
        events += [SensorEvent(user_id, conv(t), kind, pl) for t, kind, pl in raw]
    return events


def generate_cohort(spec: CohortSpec, key: ScoringKey | None = None) -> Cohort:
    spec.validate()
    key = key or default_key()
    ids = [f"u{i:04d}" for i in range(spec.n_users)]
    scores = {u: draw_scores(spec, i) for i, u in enumerate(ids)}
    if spec.n_users >= 2:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClassImbalanceWarning)
            classes = {t: median_split({u: s[t] for u, s in scores.items()}, t).labels
                       for t in TRAITS}
    else:
        classes = {t: {ids[0]: 0} for t in TRAITS}
    responses = [make_response(u, scores[u], key, spec.item_noise,
                               rng_mod.generator(spec.seed, "items", i))
                 for i, u in enumerate(ids)]
    events: list[SensorEvent] = []
    for i, u in enumerate(ids):
        events += user_events(spec, i, u, {t: classes[t][u] for t in TRAITS})
    return Cohort(spec, events, responses, scores, classes, {u: spec.timezone for u in ids}, key)


# --- files ---------------------------------------------------------------------------

COHORT_FILES = {"events": "events.jsonl", "questionnaire": "questionnaire.csv",
                "key": "key.csv", "timezones": "timezones.csv", "truth": "truth.csv"}


def write_cohort(cohort: Cohort, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in COHORT_FILES.items()}
    write_events(cohort.events, paths["events"])
    write_questionnaire(cohort.responses, paths["questionnaire"])
    write_key(cohort.key, paths["key"])
    write_timezones(cohort.tz_map, paths["timezones"])
    with open(paths["truth"], "w") as f:
        f.write("user_id," + ",".join(f"{t}_class" for t in TRAITS) + "\n")
        for u in cohort.user_ids:
            f.write(u + "," + ",".join(str(cohort.classes[t][u]) for t in TRAITS) + "\n")
    return paths


def _couplings_to_text(cs: tuple[Coupling, ...]) -> str:
    return ", ".join(f"{c.feature}:{c.weekday_effect:g}:{c.weekend_effect:g}" for c in cs)


def _couplings_from_text(text: str) -> tuple[Coupling, ...]:
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            feat, wd, we = part.split(":")
            out.append(Coupling(feat.strip(), float(wd), float(we)))
        except ValueError as exc:
            raise BadSpec(f"coupling {part!r} is not feature:weekday:weekend") from exc
    return tuple(out)


def spec_to_config(spec: CohortSpec) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp["cohort"] = {"n_users": str(spec.n_users), "timezone": spec.timezone,
                    "start_date": spec.start_date.isoformat(), "n_days": str(spec.n_days),
                    "signal": repr(spec.signal), "seed": str(spec.seed),
                    "item_noise": repr(spec.item_noise), "dropout": repr(spec.dropout)}
    cp["traits"] = {t: f"{m:g}, {s:g}" for t, (m, s) in spec.trait_moments.items()}
    cp["couplings"] = {t: _couplings_to_text(cs) for t, cs in spec.couplings.items()}
    return cp


def write_spec(spec: CohortSpec, path: str | Path) -> None:
    with open(path, "w") as f:
        spec_to_config(spec).write(f)


def read_spec(path: str | Path, base: CohortSpec = CohortSpec()) -> CohortSpec:
    """Read an INI-style spec; absent keys keep the values of ``base``.

    ``[cohort]`` holds scalars, ``[traits]`` maps a trait to ``mean, std`` and
    ``[couplings]`` maps a trait to ``feature:weekday:weekend`` entries. A
    ``[couplings]`` section replaces the default couplings entirely.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise BadSpec(f"cannot read {path}")
    kw: dict = {}
    if cp.has_section("cohort"):
        c = cp["cohort"]
        conv = {"n_users": int, "timezone": str, "start_date": date.fromisoformat,
                "n_days": int, "signal": float, "seed": int, "item_noise": float,
                "dropout": float}
        for name, val in c.items():
            if name not in conv:
                raise BadSpec(f"unknown [cohort] key {name!r}")
            try:
                kw[name] = conv[name](val)
            except ValueError as exc:
                raise BadSpec(f"[cohort] {name} = {val!r}: {exc}") from exc
    if cp.has_section("traits"):
        moments = dict(base.trait_moments)
        for t, val in cp["traits"].items():
            try:
                m, s = (float(x) for x in val.split(","))
            except ValueError as exc:
                raise BadSpec(f"[traits] {t} = {val!r} is not 'mean, std'") from exc
            moments[t] = (m, s)
        kw["trait_moments"] = moments
    if cp.has_section("couplings"):
        kw["couplings"] = {t: _couplings_from_text(v) for t, v in cp["couplings"].items()}
    spec = replace(base, **kw)
    spec.validate()
    return spec
