from __future__ import annotations

import math
from collections import Counter
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weekend_personality import features as F
from weekend_personality.features import (
    AGGREGATE_FEATURES, CATEGORY_COUNTS, DAILY_FEATURES, DailyFeatureVector, InsufficientDaysForPolicy,
    Policy, Segment, aggregate, extract_daily, segment_of, select_days, study_window)
from weekend_personality.rng import generator
from weekend_personality.sensorlog import (Battery, Call, DayKey, Kind, Light, Location, Noise,
                                           Pedometer, SensorEvent, Unlock)

DAY = DayKey.of("u", date(2018, 3, 6))


def H(h, m=0, s=0):
    return h * 3600 + m * 60 + s


def day(*items):
    """items: (local seconds, kind, payload)."""
    evs = [SensorEvent("u", i, k, p) for i, (_, k, p) in enumerate(items)]
    return extract_daily(DAY, evs, [t for t, _, _ in items])


class TestSegments:
    @pytest.mark.parametrize("t,seg", [(H(5, 59, 59), Segment.NIGHT), (H(6), Segment.MORNING),
                                       (H(18, 30), Segment.EVENING), (0, Segment.NIGHT),
                                       (H(12), Segment.AFTERNOON), (86_399.999, Segment.EVENING)])
    def test_boundaries(self, t, seg):
        assert segment_of(t) is seg

    def test_outside_day(self):
        with pytest.raises(ValueError):
            segment_of(86_400)


class TestDictionary:
    def test_dimensions(self):
        assert len(DAILY_FEATURES) == 70 and len(set(DAILY_FEATURES)) == 70
        assert len(AGGREGATE_FEATURES) == 142 and len(set(AGGREGATE_FEATURES)) == 142

    def test_category_counts(self):
        counts = [CATEGORY_COUNTS[k] for k in (Kind.LIGHT, Kind.NOISE, Kind.BATTERY,
                                               Kind.ACCELEROMETER, Kind.CALL, Kind.UNLOCK,
                                               Kind.PEDOMETER, Kind.LOCATION)]
        assert counts == [5, 15, 2, 12, 9, 9, 5, 13]
        assert Counter(F.FEATURE_CATEGORY.values()) == Counter(CATEGORY_COUNTS)

    def test_aggregate_order(self):
        assert AGGREGATE_FEATURES[:2] == ("light_mean_day__mean", "light_mean_day__std")
        assert AGGREGATE_FEATURES[-2:] == ("routine_index_location", "routine_index_screen")

    def test_manifest(self):
        m = F.feature_manifest()
        assert m["daily"]["call_count"] == DAILY_FEATURES.index("call_count")
        assert len(m["aggregate"]) == 142


class TestDaily:
    def test_light(self):
        v = day((H(7), Kind.LIGHT, Light(100.0)), (H(9), Kind.LIGHT, Light(200.0)))
        assert v["light_mean_day"] == 150 and v["light_mean_morning"] == 150
        for seg in ("night", "afternoon", "evening"):
            assert v.is_missing(f"light_mean_{seg}")
        assert v.is_missing("noise_mean_day")

    def test_steps(self):
        v = day((H(13), Kind.PEDOMETER, Pedometer(1500)), (H(15), Kind.PEDOMETER, Pedometer(2500)))
        assert v["steps_total"] == 4000 and v["steps_afternoon"] == 4000
        assert v["steps_night"] == v["steps_morning"] == v["steps_evening"] == 0

    def test_calls(self):
        v = day((H(2), Kind.CALL, Call("incoming", 60.0)), (H(10), Kind.CALL, Call("outgoing", 120.0)),
                (H(20), Kind.CALL, Call("missed", 0.0)))
        assert [v[n] for n in ("call_count", "call_in", "call_out", "call_missed")] == [3, 1, 1, 1]
        assert v["call_total_dur"] == 180 and v["call_mean_dur"] == 60 and v["call_max_dur"] == 120
        # oracle: statistics.pstdev([60, 120, 0])
        assert v["call_std_dur"] == pytest.approx(48.98979485566356, rel=1e-12)
        assert v["call_night_frac"] == pytest.approx(1 / 3)

    def test_noise_segments(self):
        v = day((H(1), Kind.NOISE, Noise(30.0)), (H(2), Kind.NOISE, Noise(40.0)),
                (H(19), Kind.NOISE, Noise(60.0)))
        assert v["noise_mean_day"] == pytest.approx(130 / 3)
        assert v["noise_max_day"] == 60
        assert v["noise_mean_night"] == 35 and v["noise_std_night"] == 5
        assert v["noise_std_evening"] == 0
        assert v.is_missing("noise_mean_morning")

    def test_battery_charging_hours(self):
        v = day((H(0), Kind.BATTERY, Battery(40.0, True)), (H(6), Kind.BATTERY, Battery(100.0, False)),
                (H(22), Kind.BATTERY, Battery(20.0, True)))
        assert v["battery_charging_hours"] == pytest.approx(8.0)
        assert v["battery_mean_level"] == pytest.approx(160 / 3)

    def test_unlock_sessions(self):
        v = day((H(8), Kind.UNLOCK, Unlock("screen_on")), (H(8, 0, 1), Kind.UNLOCK, Unlock("unlock")),
                (H(8, 10), Kind.UNLOCK, Unlock("screen_off")), (H(8, 10, 1), Kind.UNLOCK, Unlock("lock")),
                (H(21), Kind.UNLOCK, Unlock("screen_on")), (H(21, 0, 1), Kind.UNLOCK, Unlock("unlock")),
                (H(21, 30), Kind.UNLOCK, Unlock("screen_off")),
                (H(23), Kind.UNLOCK, Unlock("screen_on")))  # never closed, ignored
        assert v["unlock_count"] == 2
        assert v["unlock_count_morning"] == 1 and v["unlock_count_evening"] == 1
        assert v["unlock_count_night"] == 0
        assert v["session_mean_min"] == 20 and v["session_max_min"] == 30
        assert v["session_std_min"] == 10
        assert v["screen_on_hours"] == pytest.approx(40 / 60)

    def test_location(self):
        d = 1000 / 111_194.92664455874
        v = day((H(7), Kind.LOCATION, Location(40.0, -3.0)), (H(8), Kind.LOCATION, Location(40.0, -3.0)),
                (H(13), Kind.LOCATION, Location(40.0 + d, -3.0)))
        assert v["loc_n_clusters"] == 2 and v["loc_transitions"] == 1
        assert v["loc_distance_m"] == pytest.approx(1000, rel=1e-9)
        assert v["loc_distance_m_afternoon"] == pytest.approx(1000, rel=1e-9)
        assert v["loc_distance_m_morning"] == 0
        p = np.array([2 / 3, 1 / 3])
        assert v["loc_entropy"] == pytest.approx(-(p * np.log(p)).sum())
        assert v["loc_norm_entropy"] == pytest.approx(-(p * np.log(p)).sum() / math.log(2))
        assert v["loc_top_cluster_frac"] == pytest.approx(2 / 3)
        assert v["loc_max_displacement_m"] == pytest.approx(1000, rel=1e-9)

    def test_single_place_entropy(self):
        v = day((H(7), Kind.LOCATION, Location(40.0, -3.0)))
        assert v["loc_norm_entropy"] == 0 and v["loc_entropy"] == 0
        assert v["loc_radius_gyration_m"] == 0

    def test_empty_day_all_missing(self):
        v = extract_daily(DAY, [], [])
        assert v.missing.all() and v.values.size == 70


def dvec(values):
    v = np.asarray(values, dtype=np.float64)
    return DailyFeatureVector(DAY, v, np.isnan(v))


class TestAggregate:
    def test_two_days(self):
        a = np.full(70, np.nan); a[0] = 100
        b = np.full(70, np.nan); b[0] = 200
        agg = aggregate([dvec(a), dvec(b)])
        assert agg["light_mean_day__mean"] == 150 and agg["light_mean_day__std"] == 50
        assert agg.values.size == 142

    def test_single_day(self):
        v = np.arange(70, dtype=float)
        agg = aggregate([dvec(v)])
        assert (agg.values[1:140:2] == 0).all()
        assert (agg.values[0:140:2] == v).all()
        assert agg.missing[140] and agg.missing[141]

    @given(st.lists(st.lists(st.one_of(st.none(), st.floats(-1e6, 1e6)), min_size=70, max_size=70),
                    min_size=1, max_size=6))
    def test_masked_statistics(self, rows):
        days = [dvec([math.nan if x is None else x for x in r]) for r in rows]
        agg = aggregate(days)
        for j in range(70):
            present = [r[j] for r in rows if r[j] is not None]
            m, s = agg.values[2 * j], agg.values[2 * j + 1]
            if not present:
                assert math.isnan(m) and math.isnan(s)
                continue
            mu = math.fsum(present) / len(present)
            sd = math.sqrt(math.fsum((x - mu) ** 2 for x in present) / len(present))
            assert m == pytest.approx(mu, rel=1e-12, abs=1e-12 * max(1.0, abs(mu)) + 1e-9)
            assert s == pytest.approx(sd, rel=1e-9, abs=1e-6)

    def test_routine_indices(self):
        from weekend_personality.mobility import ABSENT
        slots = {"d1": [0] * 48, "d2": [0] * 48}
        agg = aggregate([dvec(np.zeros(70))] * 2, slots, {"d1": [1] * 48, "d2": [ABSENT] * 48})
        assert agg["routine_index_location"] == 1.0
        assert math.isnan(agg["routine_index_screen"])


def window(start=date(2018, 3, 5), n=14):
    return [DayKey.of("u", start + timedelta(days=i)) for i in range(n)]


class TestSelect:
    def test_weekend_two_weeks(self):
        got = select_days(Policy.WEEKEND_TWO_WEEKS, window(), generator(0))
        assert len(got) == 4 and all(k.is_weekend for k in got)

    def test_full(self):
        assert select_days(Policy.FULL_TWO_WEEKS, window(), generator(0)) == window()
        with pytest.raises(InsufficientDaysForPolicy):
            select_days(Policy.FULL_TWO_WEEKS, window()[:13], generator(0))

    def test_saturday_deterministic(self):
        a = select_days(Policy.SATURDAY_ONLY, window(), generator(5))
        b = select_days(Policy.SATURDAY_ONLY, window(), generator(5))
        assert a == b and len(a) == 1 and a[0].day_class.value == "saturday"

    def test_weekday_two_weeks_over_seeds(self):
        seen = set()
        for s in range(10):
            got = select_days(Policy.WEEKDAY_TWO_WEEKS, window(), generator(s))
            assert len(got) == 4 and not any(k.is_weekend for k in got)
            seen.add(tuple(got))
        assert len(seen) > 1

    def test_weekend_one_is_a_real_weekend(self):
        for s in range(20):
            sat, sun = select_days(Policy.WEEKEND_ONE, window(), generator(s))
            assert sun.local_date - sat.local_date == timedelta(days=1)
            assert sat.day_class.value == "saturday"

    def test_weekend_one_needs_a_pair(self):
        days = [k for k in window() if k.local_date not in (date(2018, 3, 11), date(2018, 3, 17))]
        with pytest.raises(InsufficientDaysForPolicy) as info:
            select_days(Policy.WEEKEND_ONE, days, generator(0))
        assert info.value.policy is Policy.WEEKEND_ONE

    def test_insufficient_reports_counts(self):
        only_weekdays = [k for k in window() if not k.is_weekend]
        with pytest.raises(InsufficientDaysForPolicy) as info:
            select_days(Policy.SUNDAY_ONLY, only_weekdays, generator(0))
        assert (info.value.needed, info.value.available) == (1, 0)

    @given(st.sampled_from(list(Policy)), st.integers(0, 2**63 - 1),
           st.sets(st.integers(0, 13), min_size=0, max_size=14))
    def test_constraints(self, policy, seed, drop):
        days = [k for i, k in enumerate(window()) if i not in drop]
        try:
            got = select_days(policy, days, generator(seed))
        except InsufficientDaysForPolicy:
            return
        assert got == select_days(policy, days, generator(seed))
        assert set(got) <= set(days) and len(set(got)) == len(got)
        size = {Policy.FULL_TWO_WEEKS: 14, Policy.WEEKEND_TWO_WEEKS: 4, Policy.WEEKDAY_TWO_WEEKS: 4,
                Policy.WEEKEND_ONE: 2, Policy.WEEKDAY_ONE: 2}.get(policy, 1)
        assert len(got) == size
        if policy in (Policy.WEEKDAY_TWO_WEEKS, Policy.WEEKDAY_ONE, Policy.RANDOM_WEEKDAY):
            assert not any(k.is_weekend for k in got)
        if policy in (Policy.WEEKEND_TWO_WEEKS, Policy.WEEKEND_ONE):
            assert all(k.is_weekend for k in got)

    def test_study_window(self):
        keys = window(n=20)
        assert study_window(keys[::-1]) == keys[:14]


def test_records_round_trip(tmp_path):
    from weekend_personality.synth import CohortSpec, generate_cohort
    from weekend_personality.sensorlog import build_user_days
    c = generate_cohort(CohortSpec(n_users=3, seed=2))
    recs = F.cohort_records(build_user_days(c.events, c.tz_map))
    F.save_records(recs, tmp_path / "r.npz")
    back = F.load_records(tmp_path / "r.npz")
    assert list(back) == list(recs)
    for u in recs:
        for a, b in zip(recs[u], back[u]):
            assert a.key == b.key and a.key.day_class is b.key.day_class
            np.testing.assert_array_equal(a.daily.values, b.daily.values)
            assert a.daily.categories_present == b.daily.categories_present
            np.testing.assert_array_equal(a.fix_lat, b.fix_lat)
            np.testing.assert_array_equal(a.screen_slots, b.screen_slots)
        agg_a = F.aggregate_records(recs[u]).values
        agg_b = F.aggregate_records(back[u]).values
        np.testing.assert_array_equal(agg_a, agg_b)
    F.save_records(recs, tmp_path / "r2.npz")
    assert (tmp_path / "r.npz").read_bytes() == (tmp_path / "r2.npz").read_bytes()


def test_matrix_csv_round_trip(tmp_path):
    X = np.array([[1.5, np.nan], [0.1, -2.0]])
    F.write_matrix_csv(["a", "b"], X, tmp_path / "m.csv", names=["f1", "f2"])
    ids, Y, names = F.read_matrix_csv(tmp_path / "m.csv")
    assert ids == ["a", "b"] and names == ["f1", "f2"]
    np.testing.assert_array_equal(np.isnan(X), np.isnan(Y))
    assert Y[0, 0] == 1.5 and Y[1, 0] == 0.1
