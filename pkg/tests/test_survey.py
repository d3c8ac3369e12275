from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weekend_personality.survey import (
    REFERENCE_MEDIANS, TRAITS, ClassImbalanceWarning, DegenerateVariance, ItemOutOfRange, KeyEntry,
    KeyMismatch, QuestionnaireResponse, ScoringKey, cronbach_alpha, default_key, median_split,
    read_key, read_questionnaire, score_ipip50, trait_stats, write_key, write_questionnaire)

KEY = default_key()
responses = st.lists(st.integers(1, 5), min_size=50, max_size=50).map(
    lambda v: QuestionnaireResponse("u", tuple(v)))


class TestKey:
    def test_ten_items_per_trait(self):
        for t in TRAITS:
            assert len(KEY.items_of(t)) == 10

    def test_bundled_polarities(self):
        rev = {t: sum(e.reversed for e in KEY.items_of(t)) for t in TRAITS}
        assert rev == {"extraversion": 5, "agreeableness": 4, "conscientiousness": 4,
                       "neuroticism": 2, "openness": 3}
        assert [e.item for e in KEY.items_of("extraversion")] == list(range(1, 50, 5))

    def test_mismatch(self):
        entries = list(KEY.entries)
        entries[0] = KeyEntry(1, "agreeableness", False)
        with pytest.raises(KeyMismatch):
            ScoringKey(tuple(entries))

    def test_file_round_trip(self, tmp_path):
        write_key(KEY, tmp_path / "k.csv")
        assert read_key(tmp_path / "k.csv") == KEY


class TestScoring:
    def test_neutral(self):
        s = score_ipip50(QuestionnaireResponse("u", (3,) * 50), KEY)
        assert s == {t: 30 for t in TRAITS}

    def test_all_fives_closed_form(self):
        s = score_ipip50(QuestionnaireResponse("u", (5,) * 50), KEY)
        for t in TRAITS:
            p = sum(not e.reversed for e in KEY.items_of(t))
            assert s[t] == 5 * p + (10 - p)

    @given(responses)
    def test_range(self, r):
        assert all(10 <= v <= 50 for v in score_ipip50(r, KEY).values())

    @given(responses, st.integers(0, 49))
    def test_monotone(self, r, i):
        if r.items[i] == 5:
            return
        up = list(r.items)
        up[i] += 1
        before = score_ipip50(r, KEY)
        after = score_ipip50(QuestionnaireResponse("u", tuple(up)), KEY)
        e = next(e for e in KEY.entries if e.item == i + 1)
        if e.reversed:
            assert after[e.trait] == before[e.trait] - 1
        else:
            assert after[e.trait] == before[e.trait] + 1

    @pytest.mark.parametrize("items", [(0,) + (3,) * 49, (6,) + (3,) * 49, (3,) * 49, (3.0,) * 50])
    def test_item_out_of_range(self, items):
        with pytest.raises(ItemOutOfRange):
            QuestionnaireResponse("u", items)

    def test_questionnaire_file(self, tmp_path):
        rs = [QuestionnaireResponse("a", (1,) * 50), QuestionnaireResponse("b", (5,) * 25 + (2,) * 25)]
        write_questionnaire(rs, tmp_path / "q.csv")
        assert read_questionnaire(tmp_path / "q.csv") == rs

    def test_questionnaire_bad_value(self, tmp_path):
        p = tmp_path / "q.csv"
        p.write_text("user_id," + ",".join(f"item_{i}" for i in range(1, 51)) + "\n"
                     + "a," + ",".join(["3"] * 49 + ["9"]) + "\n")
        with pytest.raises(ItemOutOfRange):
            read_questionnaire(p)


class TestAlpha:
    def test_identical_columns(self):
        col = np.array([1, 2, 3, 4, 5, 2])
        assert cronbach_alpha(np.tile(col[:, None], (1, 10))) == pytest.approx(1.0)

    def test_hand_computed(self):
        # item variances 2/3 each, total variance 8/3 -> 2 * (1 - (4/3)/(8/3)) = 1
        assert cronbach_alpha(np.array([[1, 2], [2, 3], [3, 4]])) == pytest.approx(1.0)

    def test_independent_items_near_zero(self):
        rng = np.random.default_rng(11)
        assert abs(cronbach_alpha(rng.integers(1, 6, (10_000, 10)))) < 0.05

    def test_degenerate(self):
        with pytest.raises(DegenerateVariance):
            cronbach_alpha(np.full((4, 3), 2))

    @given(st.lists(st.lists(st.integers(1, 5), min_size=4, max_size=4), min_size=2, max_size=30))
    def test_at_most_one(self, rows):
        m = np.array(rows)
        try:
            assert cronbach_alpha(m) <= 1 + 1e-12
        except DegenerateVariance:
            assert m.sum(axis=1).var() == 0


class TestMedianSplit:
    def test_strict_above(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClassImbalanceWarning)
            out = median_split({k: v for k, v in zip("abcde", [10, 20, 30, 40, 50])})
        assert out.median == 30
        assert [out.labels[k] for k in "abcde"] == [0, 0, 0, 1, 1]
        assert out.class_counts == (3, 2)

    def test_reference_threshold(self):
        out = median_split({"x": 31, "y": 32}, "extraversion", REFERENCE_MEDIANS["extraversion"])
        assert out.labels == {"x": 0, "y": 1} and out.median == 31.0

    def test_ties_collapse(self):
        with pytest.warns(ClassImbalanceWarning):
            out = median_split({"a": 30, "b": 30, "c": 30})
        assert set(out.labels.values()) == {0} and out.class_counts == (3, 0) and out.degenerate

    @given(st.dictionaries(st.text(min_size=1, max_size=4), st.integers(10, 50), min_size=2))
    def test_count_above(self, scores):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClassImbalanceWarning)
            out = median_split(scores)
        assert sum(out.labels.values()) == sum(v > out.median for v in scores.values())
        if len(set(scores.values())) == len(scores) and len(scores) % 2 == 0:
            assert out.class_counts[0] == out.class_counts[1]


class TestStats:
    def test_singleton(self):
        s = trait_stats({"u": {t: 40 for t in TRAITS}})
        assert s["openness"] == {"mean": 40, "std": 0, "median": 40, "max": 40, "min": 40}

    @given(st.lists(st.lists(st.integers(10, 50), min_size=5, max_size=5), min_size=1, max_size=40))
    def test_brute_force(self, rows):
        scores = {str(i): dict(zip(TRAITS, r)) for i, r in enumerate(rows)}
        s = trait_stats(scores)
        for j, t in enumerate(TRAITS):
            v = sorted(r[j] for r in rows)
            n = len(v)
            mu = sum(v) / n
            med = v[n // 2] if n % 2 else (v[n // 2 - 1] + v[n // 2]) / 2
            assert s[t]["mean"] == pytest.approx(mu, rel=1e-12)
            assert s[t]["std"] == pytest.approx((sum((x - mu) ** 2 for x in v) / n) ** 0.5,
                                                rel=1e-12, abs=1e-12)
            assert (s[t]["median"], s[t]["max"], s[t]["min"]) == (med, v[-1], v[0])
