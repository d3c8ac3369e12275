"""Parsing and day-partitioning of smartphone sensor event streams.

Wire format: one JSON object per line with ``user``, ``ts`` (ISO-8601 with an
offset or ``Z``), ``kind`` and the kind's payload fields::

    {"user":"u1","ts":"2018-03-03T09:00:00Z","kind":"light","lux":120.0}
"""
from __future__ import annotations

import csv
import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Union
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import numpy as np

MS_PER_DAY = 86_400_000
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class Kind(str, enum.Enum):
    LIGHT = "light"
    NOISE = "noise"
    BATTERY = "battery"
    ACCELEROMETER = "accelerometer"
    CALL = "call"
    UNLOCK = "unlock"
    PEDOMETER = "pedometer"
    LOCATION = "location"


CATEGORIES: tuple[Kind, ...] = tuple(Kind)


# --- payloads -----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Light:
    lux: float


@dataclass(frozen=True, slots=True)
class Noise:
    db: float


@dataclass(frozen=True, slots=True)
class Battery:
    level: float
    charging: bool


@dataclass(frozen=True, slots=True)
class Accelerometer:
    x: float
    y: float
    z: float


@dataclass(frozen=True, slots=True)
class Call:
    state: str  # incoming | outgoing | missed
    duration_s: float


@dataclass(frozen=True, slots=True)
class Unlock:
    event: str  # screen_on | screen_off | unlock | lock


@dataclass(frozen=True, slots=True)
class Pedometer:
    steps: int


@dataclass(frozen=True, slots=True)
class Location:
    lat: float
    lon: float


Payload = Union[Light, Noise, Battery, Accelerometer, Call, Unlock, Pedometer, Location]

PAYLOAD_TYPES: dict[Kind, type] = {
    Kind.LIGHT: Light,
    Kind.NOISE: Noise,
    Kind.BATTERY: Battery,
    Kind.ACCELEROMETER: Accelerometer,
    Kind.CALL: Call,
    Kind.UNLOCK: Unlock,
    Kind.PEDOMETER: Pedometer,
    Kind.LOCATION: Location,
}

CALL_STATES = ("incoming", "outgoing", "missed")
UNLOCK_EVENTS = ("screen_on", "screen_off", "unlock", "lock")


@dataclass(frozen=True, slots=True)
class SensorEvent:
    user_id: str
    ts_ms: int  # UTC, milliseconds since the Unix epoch
    kind: Kind
    payload: Payload

    def __post_init__(self) -> None:
        if not isinstance(self.payload, PAYLOAD_TYPES[self.kind]):
            raise TypeError(f"{type(self.payload).__name__} payload for kind {self.kind.value}")


# --- errors -------------------------------------------------------------------


class ParseError(ValueError):
    def __init__(self, message: str, lineno: int | None = None) -> None:
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


class MalformedLine(ParseError):
    pass


class UnknownKind(ParseError):
    pass


class OutOfRangeField(ParseError):
    pass


class MissingTimezone(KeyError):
    pass


# --- parsing ------------------------------------------------------------------


def parse_timestamp(text: str) -> int:
    """ISO-8601 instant with an explicit offset -> UTC milliseconds (floored)."""
    if not isinstance(text, str):
        raise ValueError("timestamp must be a string")
    t = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        raise ValueError("timestamp has no UTC offset")
    delta = dt - _EPOCH
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def format_timestamp(ts_ms: int) -> str:
    dt = _EPOCH + timedelta(milliseconds=ts_ms)
    if ts_ms % 1000:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts_ms % 1000:03d}Z"
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _number(rec: dict, key: str, lineno: int | None) -> float:
    if key not in rec:
        raise MalformedLine(f"missing field {key!r}", lineno)
    v = rec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MalformedLine(f"field {key!r} is not a number", lineno)
    v = float(v)
    if not math.isfinite(v):
        raise OutOfRangeField(f"field {key!r} is not finite", lineno)
    return v


def _bounded(rec: dict, key: str, lo: float | None, hi: float | None,
             lineno: int | None) -> float:
    v = _number(rec, key, lineno)
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise OutOfRangeField(f"{key}={v} outside [{lo}, {hi}]", lineno)
    return v


def _choice(rec: dict, key: str, options: tuple[str, ...], lineno: int | None) -> str:
    if key not in rec:
        raise MalformedLine(f"missing field {key!r}", lineno)
    v = rec[key]
    if not isinstance(v, str):
        raise MalformedLine(f"field {key!r} is not a string", lineno)
    if v not in options:
        raise OutOfRangeField(f"{key}={v!r} not one of {options}", lineno)
    return v


_PAYLOAD_FIELDS: dict[Kind, tuple[str, ...]] = {
    Kind.LIGHT: ("lux",),
    Kind.NOISE: ("db",),
    Kind.BATTERY: ("level", "charging"),
    Kind.ACCELEROMETER: ("x", "y", "z"),
    Kind.CALL: ("state", "duration_s"),
    Kind.UNLOCK: ("event",),
    Kind.PEDOMETER: ("steps",),
    Kind.LOCATION: ("lat", "lon"),
}


def _payload(kind: Kind, rec: dict, lineno: int | None) -> Payload:
    if kind is Kind.LIGHT:
        return Light(_bounded(rec, "lux", 0.0, None, lineno))
    if kind is Kind.NOISE:
        return Noise(_number(rec, "db", lineno))
    if kind is Kind.BATTERY:
        level = _bounded(rec, "level", 0.0, 100.0, lineno)
        charging = rec.get("charging")
        if not isinstance(charging, bool):
            raise MalformedLine("field 'charging' must be true or false", lineno)
        return Battery(level, charging)
    if kind is Kind.ACCELEROMETER:
        return Accelerometer(*(_number(rec, k, lineno) for k in ("x", "y", "z")))
    if kind is Kind.CALL:
        state = _choice(rec, "state", CALL_STATES, lineno)
        dur = _bounded(rec, "duration_s", 0.0, None, lineno)
        if state == "missed" and dur != 0.0:
            raise OutOfRangeField("missed call with non-zero duration", lineno)
        return Call(state, dur)
    if kind is Kind.UNLOCK:
        return Unlock(_choice(rec, "event", UNLOCK_EVENTS, lineno))
    if kind is Kind.PEDOMETER:
        steps = rec.get("steps")
        if isinstance(steps, bool) or not isinstance(steps, int):
            raise MalformedLine("field 'steps' must be an integer", lineno)
        if steps < 0:
            raise OutOfRangeField(f"steps={steps} is negative", lineno)
        return Pedometer(steps)
    return Location(_bounded(rec, "lat", -90.0, 90.0, lineno),
                    _bounded(rec, "lon", -180.0, 180.0, lineno))


def parse_event_line(line: str, lineno: int | None = None) -> SensorEvent:
    try:
        rec = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedLine(f"not valid JSON ({exc.msg if hasattr(exc, 'msg') else exc})",
                            lineno) from None
    if not isinstance(rec, dict):
        raise MalformedLine("record is not an object", lineno)
    for key in ("user", "ts", "kind"):
        if key not in rec:
            raise MalformedLine(f"missing field {key!r}", lineno)
    user = rec["user"]
    if not isinstance(user, str) or not user:
        raise MalformedLine("field 'user' must be a non-empty string", lineno)
    try:
        ts_ms = parse_timestamp(rec["ts"])
    except (ValueError, TypeError, OverflowError) as exc:
        raise MalformedLine(f"bad timestamp {rec['ts']!r}: {exc}", lineno) from None
    kind_text = rec["kind"]
    if not isinstance(kind_text, str):
        raise MalformedLine("field 'kind' must be a string", lineno)
    try:
        kind = Kind(kind_text.lower())
    except ValueError:
        raise UnknownKind(f"unknown kind {kind_text!r}", lineno) from None
    extra = set(rec) - {"user", "ts", "kind", *_PAYLOAD_FIELDS[kind]}
    if extra:
        raise MalformedLine(f"unexpected fields {sorted(extra)} for kind {kind.value}", lineno)
    return SensorEvent(user, ts_ms, kind, _payload(kind, rec, lineno))


def format_event(event: SensorEvent) -> str:
    """Inverse of :func:`parse_event_line`."""
    rec: dict[str, object] = {"user": event.user_id, "ts": format_timestamp(event.ts_ms),
                              "kind": event.kind.value}
    p = event.payload
    for key in _PAYLOAD_FIELDS[event.kind]:
        rec[key] = getattr(p, key)
    return json.dumps(rec, separators=(",", ":"), ensure_ascii=False)


@dataclass
class IngestSummary:
    lines: int = 0
    accepted: int = 0
    rejected: dict[str, int] = field(default_factory=dict)
    first_errors: list[str] = field(default_factory=list)
    duplicates: int = 0

    def reject(self, exc: ParseError, keep: int = 20) -> None:
        name = type(exc).__name__
        self.rejected[name] = self.rejected.get(name, 0) + 1
        if len(self.first_errors) < keep:
            self.first_errors.append(str(exc))

    def as_dict(self) -> dict:
        return {"lines": self.lines, "accepted": self.accepted,
                "rejected": dict(sorted(self.rejected.items())),
                "duplicates": self.duplicates, "first_errors": list(self.first_errors)}


def iter_events(lines: Iterable[str], summary: IngestSummary | None = None,
                strict: bool = False) -> Iterator[SensorEvent]:
    """Parse lines, skipping blanks; bad lines are counted (or raised when strict)."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if summary is not None:
            summary.lines += 1
        try:
            ev = parse_event_line(line, lineno)
        except ParseError as exc:
            if strict or summary is None:
                raise
            summary.reject(exc)
            continue
        if summary is not None:
            summary.accepted += 1
        yield ev


def read_events(path: str | Path, summary: IngestSummary | None = None,
                strict: bool = False) -> list[SensorEvent]:
    with open(path, encoding="utf-8") as fh:
        return list(iter_events(fh, summary, strict))


def write_events(events: Iterable[SensorEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ev in events:
            fh.write(format_event(ev) + "\n")


def read_timezones(path: str | Path) -> dict[str, str]:
    """Cohort metadata: delimited text with ``user_id`` and ``timezone`` columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        sample = fh.read(2048)
        fh.seek(0)
        dialect = csv.Sniffer().sniff(sample, delimiters=",;\t") if sample else csv.excel
        reader = csv.DictReader(fh, dialect=dialect)
        missing = {"user_id", "timezone"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = {}
        for row in reader:
            tz = row["timezone"].strip()
            try:
                ZoneInfo(tz)
            except (ZoneInfoNotFoundError, ValueError):
                raise ValueError(f"{path}: unknown timezone {tz!r}") from None
            out[row["user_id"].strip()] = tz
        return out


def write_timezones(tz_map: Mapping[str, str], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "timezone"])
        for user in sorted(tz_map):
            w.writerow([user, tz_map[user]])


# --- days ---------------------------------------------------------------------


class DayClass(str, enum.Enum):
    WEEKDAY = "weekday"
    SATURDAY = "saturday"
    SUNDAY = "sunday"

    @classmethod
    def of(cls, d: date) -> "DayClass":
        wd = d.weekday()
        if wd == 5:
            return cls.SATURDAY
        if wd == 6:
            return cls.SUNDAY
        return cls.WEEKDAY


@dataclass(frozen=True, order=True)
class DayKey:
    user_id: str
    local_date: date
    day_class: DayClass = field(compare=False)

    @classmethod
    def of(cls, user_id: str, local_date: date) -> "DayKey":
        return cls(user_id, local_date, DayClass.of(local_date))

    @property
    def is_weekend(self) -> bool:
        return self.day_class is not DayClass.WEEKDAY


@dataclass
class UserDays:
    user_id: str
    timezone: str
    days: dict[DayKey, list[SensorEvent]]
    # seconds since local midnight for each event, aligned with ``days``
    local_seconds: dict[DayKey, np.ndarray] = field(repr=False)
    duplicates: int = 0

    def sorted_keys(self) -> list[DayKey]:
        return sorted(self.days)


def utc_offsets_ms(ts_ms: np.ndarray, tz: ZoneInfo) -> np.ndarray:
    """UTC offset in ms for each instant.

    Offsets are looked up once per UTC hour; an hour whose start and end
    offsets differ (a transition inside it) is resolved per event.
    """
    ts_ms = np.asarray(ts_ms, dtype=np.int64)
    out = np.empty(ts_ms.shape, np.int64)
    hours, inverse = np.unique(ts_ms // 3_600_000, return_inverse=True)

    def off(ms: int) -> int:
        dt = _EPOCH + timedelta(milliseconds=int(ms))
        return int(tz.utcoffset(dt.astimezone(tz)).total_seconds() * 1000)

    for h_i, h in enumerate(hours):
        start = off(h * 3_600_000)
        end = off(h * 3_600_000 + 3_599_999)
        sel = inverse == h_i
        if start == end:
            out[sel] = start
        else:
            for j in np.flatnonzero(sel):
                out[j] = off(ts_ms[j])
    return out


def build_user_days(events: Iterable[SensorEvent], tz_map: Mapping[str, str]) -> dict[str, UserDays]:
    # dicts keep first-occurrence order, so same-instant events sort stably
    by_user: dict[str, dict[SensorEvent, None]] = defaultdict(dict)
    raw_counts: dict[str, int] = defaultdict(int)
    for ev in events:
        by_user[ev.user_id][ev] = None
        raw_counts[ev.user_id] += 1
    for user in by_user:
        if user not in tz_map:
            raise MissingTimezone(user)

    out: dict[str, UserDays] = {}
    for user in sorted(by_user):
        tz_name = tz_map[user]
        tz = ZoneInfo(tz_name)
        evs = sorted(by_user[user], key=lambda e: e.ts_ms)
        ts = np.fromiter((e.ts_ms for e in evs), dtype=np.int64, count=len(evs))
        local = ts + utc_offsets_ms(ts, tz)
        day_no = local // MS_PER_DAY
        sec = (local - day_no * MS_PER_DAY) / 1000.0
        days: dict[DayKey, list[SensorEvent]] = {}
        secs: dict[DayKey, np.ndarray] = {}
        bounds = np.flatnonzero(np.diff(day_no)) + 1 if len(evs) else np.array([], np.int64)
        starts = np.concatenate([[0], bounds]) if len(evs) else []
        ends = np.concatenate([bounds, [len(evs)]]) if len(evs) else []
        for a, b in zip(starts, ends):
            d = date(1970, 1, 1) + timedelta(days=int(day_no[a]))
            key = DayKey.of(user, d)
            days[key] = evs[a:b]
            secs[key] = sec[a:b].copy()
        out[user] = UserDays(user, tz_name, days, secs, raw_counts[user] - len(evs))
    return out
