"""Shared helper: synthetic cohort -> day records -> protocol reports."""
from __future__ import annotations

import time
import warnings

from weekend_personality import experiments, features, sensorlog, synth
from weekend_personality.learn import ForestHyper


def run(seed: int, signal: float, users: int, policies, traits, trees: int = 100,
        target_k: int = 30, reps: int = experiments.DEFAULT_REPETITIONS, jobs: int = 1):
    t0 = time.perf_counter()
    cohort = synth.generate_cohort(synth.CohortSpec(n_users=users, signal=signal, seed=seed))
    records = features.cohort_records(sensorlog.build_user_days(cohort.events, cohort.tz_map))
    t1 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        reports = experiments.run_protocol(records, cohort.classes, policies, traits,
                                           ForestHyper(n_trees=trees), target_k, seed=seed,
                                           n_reps=reps, jobs=jobs)
    return reports, t1 - t0, time.perf_counter() - t1
