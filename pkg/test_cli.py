#!/usr/bin/env python3
"""
Tests for the command-line entry point
"""

import json

from conftest import SCENARIOS
from src.cli.main import EXIT_INVALID, EXIT_IO, EXIT_OK, main

HYBRID = str(SCENARIOS / "hybrid-usecase.json")


def test_validate_bundled_scenario():
    assert main(["validate", "--scenario", HYBRID]) == EXIT_OK


def test_validate_reports_subnet_overlap(tmp_path, capsys):
    document = json.loads((SCENARIOS / "hybrid-usecase.json").read_text())
    document["overlay"]["manual_subnets"] = {"cesnet": "10.8.0.0/24", "aws": "10.8.0.128/25"}
    path = tmp_path / "overlap.json"
    path.write_text(json.dumps(document))
    assert main(["validate", "--scenario", str(path)]) == EXIT_INVALID
    assert "subnet overlap" in capsys.readouterr().err


def test_validate_missing_file(tmp_path):
    assert main(["validate", "--scenario", str(tmp_path / "nope.json")]) == EXIT_IO


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["validate", "--scenario", str(path)]) == EXIT_INVALID


def test_plan_topology_prints_json(capsys):
    assert main(["plan-topology", "--scenario", HYBRID]) == EXIT_OK
    topology = json.loads(capsys.readouterr().out)
    assert topology["central_points"] == ["front-end"]
    assert topology["subnets"]["cesnet"]["prefix"] == "10.8.0.0/24"
    assert set(topology) >= {"central_points", "vrouters", "subnets", "tunnels", "routes"}


def test_run_is_deterministic(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--scenario", HYBRID, "--seed", "42", "--out", str(first)]) == EXIT_OK
    assert main(["run", "--scenario", HYBRID, "--seed", "42", "--out", str(second)]) == EXIT_OK
    for name in ("events.jsonl", "timeline.csv", "summary.json", "topology.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()

    summary = json.loads((first / "summary.json").read_text())
    assert 0.56 <= summary["utilization"] <= 0.76
    header = (first / "timeline.csv").read_text().splitlines()[0]
    assert header == "node,state,enter_s,exit_s"
    line = json.loads((first / "events.jsonl").read_text().splitlines()[0])
    assert list(line) == ["t", "seq", "kind", "node", "detail"]


def test_run_emits_only_requested(tmp_path):
    out = tmp_path / "only-summary"
    assert main(["run", "--scenario", HYBRID, "--out", str(out), "--emit", "summary"]) == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["summary.json"]


def test_compare_identical_paths(capsys):
    assert main(["compare", "--scenario", HYBRID, "--against", HYBRID]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["makespan_delta"] == 0
    assert report["cost_delta"] == 0
