#!/usr/bin/env python3
"""Null cohort (no planted signal): accuracy and kappa should sit at chance.

    python3 scripts/run_null.py --seeds 0 1 2 3 4
"""
from __future__ import annotations

import argparse
import statistics

from _cohort import run
from weekend_personality.features import Policy
from weekend_personality.survey import TRAITS


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--users", type=int, default=200)
    ap.add_argument("--policy", default=Policy.FULL_TWO_WEEKS.value,
                    choices=[p.value for p in Policy])
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    policy = Policy(args.policy)
    acc: dict = {t: [] for t in TRAITS}
    kap: dict = {t: [] for t in TRAITS}
    for s in args.seeds:
        reports, _, eval_s = run(s, 0.0, args.users, [policy], TRAITS, jobs=args.jobs)
        for r in reports:
            acc[r.trait].append(r.accuracy)
            kap[r.trait].append(r.kappa)
        print(f"seed {s}: " + " ".join(f"{r.trait[:5]} {r.accuracy:.3f}/{r.kappa:+.3f}"
                                       for r in reports) + f"  ({eval_s:.0f}s)")
    for t in TRAITS:
        print(f"{t:17s} median acc {statistics.median(acc[t]):.3f}  "
              f"median kappa {statistics.median(kap[t]):+.3f}")


if __name__ == "__main__":
    main()
