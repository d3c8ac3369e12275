"""Command-line pipeline: ingest, features, labels, evaluate, compare, report, synth.

Stages talk through files in ``--out``. Each stage writes ``<stage>.manifest.json``
holding its configuration, seed and the sha256 of every input and output, with
no timestamps, so identical reruns give identical bytes.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from . import experiments, features, sensorlog, survey, synth
from .features import POLICY_ORDER, FeatureConfig, Policy
from .learn import ForestHyper

FILES = {
    "events": "events.jsonl", "timezones": "timezones.csv", "questionnaire": "questionnaire.csv",
    "key": "key.csv", "ingest": "ingest.json", "records": "day_records.npz",
    "daily": "daily_features.csv", "aggregate": "aggregate_all.csv",
    "feature_manifest": "feature_manifest.json", "labels": "labels.csv",
    "trait_stats": "trait_stats.json", "reports": "reports.json",
    "comparisons": "comparisons.json", "table_txt": "results_table.txt",
    "table_json": "results_table.json", "spec": "cohort_spec.ini",
}

# exceptions that mean "bad data", reported with exit code 1
DATA_ERRORS = (sensorlog.ParseError, sensorlog.MissingTimezone, survey.ItemOutOfRange,
               survey.KeyMismatch, synth.BadSpec, experiments.TooFewUsers, ValueError, OSError)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    out: str = "."
    events: str | None = None
    timezones: str | None = None
    questionnaire: str | None = None
    key: str | None = None
    seed: int = 0
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    mtry: int | None = None
    target_k: int = 30
    drop_frac: float = 0.2
    repetitions: int = experiments.DEFAULT_REPETITIONS
    acc_threshold: float = 0.65
    kappa_threshold: float = 0.3
    cluster_radius_m: float = 250.0
    slot_minutes: int = 30
    min_categories: int = 4
    median: str = "cohort"  # or "reference"
    policies: list[str] = field(default_factory=lambda: [p.value for p in POLICY_ORDER])
    traits: list[str] = field(default_factory=lambda: list(survey.TRAITS))
    strict: bool = False

    def path(self, name: str) -> Path:
        explicit = getattr(self, name, None) if name in ("events", "timezones",
                                                         "questionnaire", "key") else None
        return Path(explicit) if explicit else Path(self.out) / FILES[name]

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(self.cluster_radius_m, self.slot_minutes, self.min_categories)

    def hyper(self) -> ForestHyper:
        return ForestHyper(self.n_trees, self.max_depth, self.min_leaf, self.mtry, self.seed)


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: RunConfig, stage: str, inputs: Sequence[Path], outputs: Sequence[Path],
                   keys: Sequence[str]) -> None:
    conf = {k: getattr(cfg, k) for k in keys}
    doc = {"stage": stage, "seed": cfg.seed, "config": conf,
           "inputs": {p.name: sha256(p) for p in inputs if p.exists()},
           "outputs": {p.name: sha256(p) for p in outputs}}
    path = Path(cfg.out) / f"{stage}.manifest.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


# --- stages --------------------------------------------------------------------------


def _load_days(cfg: RunConfig) -> tuple[dict, sensorlog.IngestSummary]:
    summary = sensorlog.IngestSummary()
    events = sensorlog.read_events(_need(cfg.path("events"), "event log"), summary, cfg.strict)
    tz = sensorlog.read_timezones(_need(cfg.path("timezones"), "timezone map"))
    days = sensorlog.build_user_days(events, tz)
    summary.duplicates = sum(d.duplicates for d in days.values())
    return days, summary


def stage_ingest(cfg: RunConfig) -> int:
    days, summary = _load_days(cfg)
    doc = summary.as_dict()
    doc["users"] = {u: {"days": len(d.days),
                        "weekend_days": sum(k.is_weekend for k in d.days)}
                    for u, d in sorted(days.items())}
    out = cfg.path("ingest")
    out.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    write_manifest(cfg, "ingest", [cfg.path("events"), cfg.path("timezones")], [out], ["strict"])
    _log(f"ingest: {summary.accepted}/{summary.lines} lines accepted, "
         f"{summary.duplicates} duplicates, {len(days)} users")
    return 0


FEATURE_KEYS = ["cluster_radius_m", "slot_minutes", "min_categories", "strict"]


def stage_features(cfg: RunConfig) -> int:
    days, summary = _load_days(cfg)
    fc = cfg.feature_config()
    records = features.cohort_records(days, fc)
    outs = [cfg.path("records"), cfg.path("daily"), cfg.path("aggregate"),
            cfg.path("feature_manifest")]
    features.save_records(records, outs[0])
    features.write_daily_csv([r for u in sorted(records) for r in records[u]], outs[1])
    ids = [u for u in sorted(records) if records[u]]
    X = [features.aggregate_records(records[u], fc).values for u in ids]
    features.write_matrix_csv(ids, np.array(X).reshape(len(ids), -1), outs[2])
    outs[3].write_text(json.dumps(features.feature_manifest(), indent=1) + "\n")
    write_manifest(cfg, "features", [cfg.path("events"), cfg.path("timezones")], outs, FEATURE_KEYS)
    _log(f"features: {sum(map(len, records.values()))} usable days for {len(ids)} users")
    return 0


def stage_labels(cfg: RunConfig) -> int:
    q = _need(cfg.path("questionnaire"), "questionnaire")
    key_path = cfg.path("key")
    key = survey.read_key(key_path) if key_path.exists() else survey.default_key()
    responses = survey.read_questionnaire(q)
    scores = survey.score_all(responses, key)
    thresholds = survey.REFERENCE_MEDIANS if cfg.median == "reference" else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", survey.ClassImbalanceWarning)
        labels = survey.label_cohort(scores, thresholds)
    for w in caught:
        _log(f"warning: {w.message}")
    survey.write_labels(labels, scores, cfg.path("labels"))
    stats = {"n_users": len(scores), "stats": survey.trait_stats(scores), "alpha": {},
             "median": {t: labels[t].median for t in survey.TRAITS},
             "class_counts": {t: list(labels[t].class_counts) for t in survey.TRAITS}}
    for t in survey.TRAITS:
        try:
            stats["alpha"][t] = survey.cronbach_alpha(survey.trait_item_matrix(responses, key, t))
        except (survey.DegenerateVariance, ValueError) as exc:
            stats["alpha"][t] = None
            _log(f"alpha undefined for {t}: {exc}")
    cfg.path("trait_stats").write_text(json.dumps(stats, indent=1, sort_keys=True) + "\n")
    write_manifest(cfg, "labels", [q, key_path], [cfg.path("labels"), cfg.path("trait_stats")],
                   ["median"])
    return 0


EVAL_KEYS = ["n_trees", "max_depth", "min_leaf", "mtry", "target_k", "drop_frac", "repetitions",
             "policies", "traits", *FEATURE_KEYS, "median"]


def stage_evaluate(cfg: RunConfig, jobs: int) -> int:
    if not cfg.path("labels").exists():
        if not cfg.path("questionnaire").exists():
            raise UsageError(f"questionnaire not found: {cfg.path('questionnaire')}")
        stage_labels(cfg)
    if not cfg.path("records").exists():
        stage_features(cfg)
    records = features.load_records(cfg.path("records"))
    _, per_user = survey.read_labels(cfg.path("labels"))
    labels = {t: {u: per_user[u][t] for u in per_user} for t in cfg.traits}
    reports = experiments.run_protocol(
        records, labels, [Policy(p) for p in cfg.policies], cfg.traits, cfg.hyper(),
        cfg.target_k, cfg.drop_frac, cfg.seed, cfg.repetitions, jobs, cfg.feature_config(),
        log=_log)
    experiments.write_reports(reports, cfg.path("reports"))
    write_manifest(cfg, "evaluate", [cfg.path("records"), cfg.path("labels")],
                   [cfg.path("reports")], EVAL_KEYS)
    for r in reports:
        _log(f"{r.trait:17s} {r.policy.label:24s} acc {r.accuracy:.3f}  kappa {r.kappa:+.3f}")
    return 0


def _pairs(text: str | None) -> list[tuple[Policy, Policy]]:
    if not text:
        return list(experiments.DEFAULT_PAIRS)
    out = []
    for part in text.split(","):
        a, _, b = part.partition(":")
        try:
            out.append((Policy(a.strip()), Policy(b.strip())))
        except ValueError as exc:
            raise UsageError(f"bad policy pair {part!r}") from exc
    return out


def stage_compare(cfg: RunConfig, pairs: str | None) -> int:
    reports = experiments.read_reports(_need(cfg.path("reports"), "reports"))
    results = experiments.compare(reports, _pairs(pairs))
    experiments.write_comparisons(results, cfg.path("comparisons"))
    write_manifest(cfg, "compare", [cfg.path("reports")], [cfg.path("comparisons")], [])
    for r in results:
        print(f"{r.trait:17s} {r.policy_a} vs {r.policy_b}: b={r.b} c={r.c} "
              f"p={r.p_value:.4g} ({r.method})")
    return 0


def stage_report(cfg: RunConfig) -> int:
    reports = experiments.read_reports(_need(cfg.path("reports"), "reports"))
    table = experiments.render_results_table(reports, cfg.acc_threshold, cfg.kappa_threshold)
    text = table.to_text()
    cfg.path("table_txt").write_text(text)
    cfg.path("table_json").write_text(json.dumps(table.to_dict(), indent=1, sort_keys=True) + "\n")
    write_manifest(cfg, "report", [cfg.path("reports")],
                   [cfg.path("table_txt"), cfg.path("table_json")],
                   ["acc_threshold", "kappa_threshold"])
    sys.stdout.write(text)
    return 0


def stage_synth(cfg: RunConfig, args: argparse.Namespace) -> int:
    base = synth.read_spec(args.spec) if args.spec else synth.CohortSpec()
    over = {k: v for k, v in (("n_users", args.users), ("signal", args.signal),
                              ("timezone", args.timezone), ("n_days", args.days))
            if v is not None}
    if args.start:
        over["start_date"] = date.fromisoformat(args.start)
    if args.seed is not None or not args.spec:
        over["seed"] = cfg.seed
    spec = replace(base, **over)
    cfg = replace(cfg, seed=spec.seed)
    cohort = synth.generate_cohort(spec)
    out = Path(cfg.out)
    paths = synth.write_cohort(cohort, out)
    synth.write_spec(spec, out / FILES["spec"])
    write_manifest(cfg, "synth", [Path(args.spec)] if args.spec else [],
                   [*paths.values(), out / FILES["spec"]], [])
    _log(f"synth: {spec.n_users} users, {len(cohort.events)} events -> {out}")
    return 0


# --- parser ---------------------------------------------------------------------------


def _csv_list(valid: Sequence[str]):
    def parse(text: str) -> list[str]:
        if text == "all":
            return list(valid)
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in valid]
        if bad:
            raise argparse.ArgumentTypeError(f"unknown {bad}; choose from {', '.join(valid)}")
        return items
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weekend-personality",
                                description="Personality classification from phone sensor logs.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_positional=False):
        if out_positional:
            sp.add_argument("out_dir", nargs="?", help="run directory (same as --out)")
        sp.add_argument("--out", default=None, help="run directory (default: .)")
        sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    def inputs(sp):
        sp.add_argument("--events", help="event log (default OUT/events.jsonl)")
        sp.add_argument("--timezones", help="user_id,timezone file (default OUT/timezones.csv)")
        sp.add_argument("--strict", action="store_true", help="fail on the first bad line")

    def feats(sp):
        sp.add_argument("--cluster-radius", type=float, default=250.0, dest="cluster_radius_m")
        sp.add_argument("--slot-minutes", type=int, default=30)
        sp.add_argument("--min-categories", type=int, default=4)

    def survey_args(sp):
        sp.add_argument("--questionnaire", help="default OUT/questionnaire.csv")
        sp.add_argument("--key", help="scoring key (default OUT/key.csv, else the bundled key)")
        sp.add_argument("--median", choices=("cohort", "reference"), default="cohort",
                        help="split at the cohort median or the fixed reference medians")

    sp = sub.add_parser("ingest", help="parse and validate an event log")
    common(sp)
    inputs(sp)
    sp = sub.add_parser("features", help="daily features and per-user aggregates")
    common(sp)
    inputs(sp)
    feats(sp)
    sp = sub.add_parser("labels", help="score questionnaires and split at the median")
    common(sp)
    survey_args(sp)

    sp = sub.add_parser("evaluate", help="leave-one-out evaluation per policy and trait")
    common(sp)
    inputs(sp)
    feats(sp)
    survey_args(sp)
    sp.add_argument("--policies", type=_csv_list([q.value for q in POLICY_ORDER]),
                    default=[q.value for q in POLICY_ORDER])
    sp.add_argument("--traits", type=_csv_list(survey.TRAITS), default=list(survey.TRAITS))
    sp.add_argument("--trees", type=int, default=100, dest="n_trees")
    sp.add_argument("--max-depth", type=int, default=None)
    sp.add_argument("--min-leaf", type=int, default=1)
    sp.add_argument("--mtry", type=int, default=None, help="features per split (default sqrt d)")
    sp.add_argument("--target-k", type=int, default=30)
    sp.add_argument("--drop-frac", type=float, default=0.2)
    sp.add_argument("--repetitions", type=int, default=experiments.DEFAULT_REPETITIONS,
                    help="repetitions of randomised policies")

    sp = sub.add_parser("compare", help="McNemar tests between policies")
    common(sp)
    sp.add_argument("--pairs", help="a:b,c:d policy pairs (default: the three standard pairs)")

    sp = sub.add_parser("report", help="render the masked results table")
    common(sp, out_positional=True)
    sp.add_argument("--acc-threshold", type=float, default=0.65)
    sp.add_argument("--kappa-threshold", type=float, default=0.3)

    sp = sub.add_parser("synth", help="generate a synthetic cohort")
    common(sp)
    sp.add_argument("--spec", help="INI cohort spec; flags override it")
    sp.add_argument("--users", type=int)
    sp.add_argument("--signal", type=float)
    sp.add_argument("--timezone")
    sp.add_argument("--days", type=int)
    sp.add_argument("--start", help="first day (a Monday), YYYY-MM-DD")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    out = getattr(args, "out_dir", None) or args.out or "."
    kw = {"out": out}
    for f in asdict(cfg):
        if f != "out" and getattr(args, f, None) is not None:
            kw[f] = getattr(args, f)
    if args.seed is None:
        kw["seed"] = 0
    return replace(cfg, **kw)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = config_from_args(args)
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "ingest":
            return stage_ingest(cfg)
        if args.command == "features":
            return stage_features(cfg)
        if args.command == "labels":
            return stage_labels(cfg)
        if args.command == "evaluate":
            return stage_evaluate(cfg, args.jobs)
        if args.command == "compare":
            return stage_compare(cfg, args.pairs)
        if args.command == "report":
            return stage_report(cfg)
        return stage_synth(cfg, args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        where = f" (line {exc.lineno})" if getattr(exc, "lineno", None) else ""
        print(f"error: {type(exc).__name__}{where}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
