from __future__ import annotations

import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


import pytest  # noqa: E402

from weekend_personality import features, sensorlog, synth  # noqa: E402


@pytest.fixture(scope="session")
def small_cohort():
    return synth.generate_cohort(synth.CohortSpec(n_users=14, signal=0.8, seed=3))


@pytest.fixture(scope="session")
def small_records(small_cohort):
    days = sensorlog.build_user_days(small_cohort.events, small_cohort.tz_map)
    return features.cohort_records(days)
