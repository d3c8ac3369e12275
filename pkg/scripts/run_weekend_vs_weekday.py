#!/usr/bin/env python3
"""Planted-signal experiment: weekend-only vs weekday-only features on synthetic cohorts.

    python3 scripts/run_weekend_vs_weekday.py --seeds 0 1 2 3 4 --signal 0.8
"""
from __future__ import annotations

import argparse
import statistics

from _cohort import run
from weekend_personality.features import Policy


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--signal", type=float, default=0.8)
    ap.add_argument("--users", type=int, default=200)
    ap.add_argument("--traits", default="extraversion,neuroticism")
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    traits = args.traits.split(",")
    policies = [Policy.WEEKEND_TWO_WEEKS, Policy.WEEKDAY_TWO_WEEKS]
    acc: dict = {}
    for s in args.seeds:
        reports, gen_s, eval_s = run(s, args.signal, args.users, policies, traits, args.trees,
                                     jobs=args.jobs)
        line = []
        for r in reports:
            acc.setdefault((r.trait, r.policy), []).append(r.accuracy)
            line.append(f"{r.trait[:5]}/{r.policy.value}={r.accuracy:.3f}")
        print(f"seed {s}: {' '.join(line)}  (cohort {gen_s:.0f}s, evaluation {eval_s:.0f}s)")
    print("median over seeds:")
    for t in traits:
        we = statistics.median(acc[t, Policy.WEEKEND_TWO_WEEKS])
        wd = statistics.median(acc[t, Policy.WEEKDAY_TWO_WEEKS])
        print(f"  {t:13s} weekend {we:.3f}  weekday {wd:.3f}  gap {100 * (we - wd):+.1f} points")


if __name__ == "__main__":
    main()
