from __future__ import annotations

import json

import pytest

from weekend_personality.cli import main

FAST = ["--trees", "5", "--target-k", "6", "--repetitions", "2"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert main(["synth", "--users", "14", "--signal", "0.8", "--seed", "7", "--out", str(d)]) == 0
    return d


def test_pipeline_end_to_end(run_dir, capsys):
    d = str(run_dir)
    assert main(["ingest", "--out", d]) == 0
    ingest = json.loads((run_dir / "ingest.json").read_text())
    assert ingest["accepted"] == ingest["lines"] and not ingest["rejected"]
    assert main(["features", "--out", d]) == 0
    assert main(["labels", "--out", d]) == 0
    assert main(["evaluate", "--policies", "all", "--out", d, *FAST]) == 0
    assert len(json.loads((run_dir / "reports.json").read_text())) == 40
    assert main(["compare", "--out", d]) == 0
    assert len(json.loads((run_dir / "comparisons.json").read_text())) == 15
    capsys.readouterr()
    assert main(["report", d]) == 0
    out = capsys.readouterr().out
    assert out.startswith("Model/Type of day used")
    assert len(out.splitlines()) == 3 + 8
    for stage in ("synth", "ingest", "features", "labels", "evaluate", "compare", "report"):
        doc = json.loads((run_dir / f"{stage}.manifest.json").read_text())
        assert doc["stage"] == stage and doc["outputs"]


def test_report_is_reproducible(run_dir, tmp_path):
    # a second evaluate on copies of the inputs reproduces reports and manifest byte for byte
    other = tmp_path / "again"
    other.mkdir()
    for name in ("events.jsonl", "timezones.csv", "questionnaire.csv", "key.csv"):
        (other / name).write_bytes((run_dir / name).read_bytes())
    args = ["evaluate", "--policies", "weekend_two_weeks,saturday_only", "--traits",
            "extraversion", *FAST]
    assert main([*args, "--out", str(other)]) == 0
    first = (other / "reports.json").read_bytes(), (other / "evaluate.manifest.json").read_bytes()
    assert main([*args, "--out", str(other), "--jobs", "2"]) == 0
    assert ((other / "reports.json").read_bytes(),
            (other / "evaluate.manifest.json").read_bytes()) == first


def test_missing_questionnaire_is_usage_error(tmp_path, capsys):
    assert main(["evaluate", "--out", str(tmp_path), "--questionnaire",
                 str(tmp_path / "nope.csv")]) == 2
    assert "questionnaire not found" in capsys.readouterr().err


def test_bad_event_line_is_data_error(tmp_path, capsys):
    (tmp_path / "events.jsonl").write_text('{"user_id": "a", "kind": "teleport"}\n')
    (tmp_path / "timezones.csv").write_text("user_id,timezone\na,UTC\n")
    assert main(["ingest", "--out", str(tmp_path), "--strict"]) == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_bad_policy_name_exits_2(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["evaluate", "--out", str(tmp_path), "--policies", "mondays"])
    assert e.value.code == 2
