from __future__ import annotations

import dataclasses
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weekend_personality import features, sensorlog, synth
from weekend_personality.survey import TRAITS, default_key, score_ipip50
from weekend_personality.synth import BadSpec, CohortSpec, Coupling


@given(st.integers(10, 50), st.floats(0.0, 2.0), st.integers(0, 2**32))
def test_keyed_items_sum_exactly(score, noise, seed):
    v = synth.keyed_items(score, noise, np.random.default_rng(seed))
    assert v.sum() == score and v.min() >= 1 and v.max() <= 5


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_questionnaire_round_trip(seed):
    spec = CohortSpec(n_users=3, seed=seed)
    key = default_key()
    for i in range(3):
        s = synth.draw_scores(spec, i)
        r = synth.make_response(f"u{i}", s, key, spec.item_noise, np.random.default_rng(seed + i))
        assert score_ipip50(r, key) == s


def test_score_31_round_trip():
    key = default_key()
    s = {t: 31 for t in TRAITS}
    assert score_ipip50(synth.make_response("x", s, key, 0.75, np.random.default_rng(0)), key) == s


def test_cohort_scores_and_classes(small_cohort):
    key = small_cohort.key
    for r in small_cohort.responses:
        assert score_ipip50(r, key) == small_cohort.scores[r.user_id]
    for t in TRAITS:
        med = np.median([s[t] for s in small_cohort.scores.values()])
        for u, s in small_cohort.scores.items():
            assert small_cohort.classes[t][u] == int(s[t] > med)


def test_logs_ingest_cleanly(small_cohort, tmp_path):
    paths = synth.write_cohort(small_cohort, tmp_path)
    summary = sensorlog.IngestSummary()
    events = sensorlog.read_events(paths["events"], summary)
    assert not summary.rejected and summary.accepted == len(small_cohort.events) == len(events)
    days = sensorlog.build_user_days(events, sensorlog.read_timezones(paths["timezones"]))
    assert sorted(days) == small_cohort.user_ids
    assert all(len(days[u].days) == 14 for u in days)


def test_every_user_has_a_full_window(small_records):
    for recs in small_records.values():
        assert len(recs) >= 12
        assert all(len(r.daily.values) == 70 for r in recs)


def test_deterministic(tmp_path):
    spec = CohortSpec(n_users=3, seed=9, signal=0.5)
    a = synth.write_cohort(synth.generate_cohort(spec), tmp_path / "a")
    b = synth.write_cohort(synth.generate_cohort(spec), tmp_path / "b")
    for k in a:
        assert a[k].read_bytes() == b[k].read_bytes()


def test_null_cohort_ignores_classes():
    spec = CohortSpec(n_users=2, seed=5, signal=0.0)
    ones = synth.user_events(spec, 0, "u", {t: 1 for t in TRAITS})
    zeros = synth.user_events(spec, 0, "u", {t: 0 for t in TRAITS})
    assert ones == zeros


def test_signal_moves_coupled_feature_on_weekends():
    spec = CohortSpec(n_users=1, seed=2, signal=1.0, dropout=0.0,
                      couplings={"extraversion": (Coupling("call_count", 0.0, 3.0),)})
    calls, first_week = {}, {}
    for cls in (0, 1):
        ev = synth.user_events(spec, 0, "u", {t: cls for t in TRAITS})
        recs = features.user_records(sensorlog.build_user_days(ev, {"u": spec.timezone})["u"])
        for r in recs:
            calls.setdefault((cls, r.key.is_weekend), []).append(r.daily["call_count"])
        # draws are shared across days, so only days before the first weekend match exactly
        first_week[cls] = np.array([r.daily.values for r in recs[:5]])
    assert np.array_equal(first_week[0], first_week[1], equal_nan=True)
    assert np.mean(calls[1, True]) > np.mean(calls[0, True])


@pytest.mark.slow
def test_null_neutrality_day_level():
    c = synth.generate_cohort(CohortSpec(n_users=1000, seed=11))
    recs = features.cohort_records(sensorlog.build_user_days(c.events, c.tz_map))
    per_user = {u: np.array([r.daily.values for r in rs]) for u, rs in recs.items()}
    for t in TRAITS:
        A = np.vstack([v for u, v in per_user.items() if c.classes[t][u] == 0])
        B = np.vstack([v for u, v in per_user.items() if c.classes[t][u] == 1])
        sd = np.sqrt((np.nanvar(A, 0) + np.nanvar(B, 0)) / 2)
        d = np.abs(np.nanmean(B, 0) - np.nanmean(A, 0)) / np.where(sd > 0, sd, 1.0)
        assert np.nanmax(d) < 0.1, (t, features.DAILY_FEATURES[int(np.nanargmax(d))])


@pytest.mark.parametrize("change", [
    {"n_users": 0}, {"start_date": date(2018, 3, 6)}, {"signal": 1.5}, {"dropout": 1.0},
    {"timezone": "Mars/Olympus"}, {"couplings": {"extraversion": (Coupling("gyration", 1, 1),)}},
    {"couplings": {"grumpiness": ()}}, {"trait_moments": {"extraversion": (30, 7)}},
])
def test_bad_spec(change):
    with pytest.raises(BadSpec):
        synth.generate_cohort(dataclasses.replace(CohortSpec(n_users=2), **change))


def test_spec_file_round_trip(tmp_path):
    spec = CohortSpec(n_users=17, signal=0.25, seed=4, timezone="Asia/Tokyo",
                      couplings={"openness": (Coupling("light_mean_day", 0.5, -1.25),)})
    synth.write_spec(spec, tmp_path / "s.ini")
    assert synth.read_spec(tmp_path / "s.ini") == spec


def test_spec_file_rejects_unknown_key(tmp_path):
    (tmp_path / "s.ini").write_text("[cohort]\nusers = 3\n")
    with pytest.raises(BadSpec):
        synth.read_spec(tmp_path / "s.ini")
