#!/usr/bin/env python3
"""
Tests for scenario types and validation
"""

import json

import pytest

from conftest import SCENARIOS, make_site
from src.domain.errors import (
    BadBounds,
    DuplicateSla,
    NoPublicIpAtFrontEnd,
    QuotaInfeasible,
    ScenarioInvalid,
    UnknownSite,
)
from src.domain.models import SLA, CipherProfile, ClusterTemplate, DurationRange, node_sort_key
from src.domain.validation import load_scenario, parse_scenario, template_violations, validate_template


def test_hybrid_template_is_valid(sites, template):
    assert validate_template(template, sites) is template


def test_max_below_initial_is_bad_bounds(sites):
    template = ClusterTemplate(front_end_site="cesnet", initial_workers=[("cesnet", 1)], max_workers=0)
    with pytest.raises(BadBounds):
        validate_template(template, sites)


def test_front_end_site_needs_public_ip(aws):
    closed = make_site("cesnet", max_public_ips=0)
    template = ClusterTemplate(front_end_site="cesnet", max_workers=2)
    with pytest.raises(NoPublicIpAtFrontEnd):
        validate_template(template, [closed, aws])


def test_unknown_site_reported_first(sites):
    template = ClusterTemplate(front_end_site="mars", initial_workers=[("cesnet", 1)], max_workers=2)
    problems = template_violations(template, sites)
    assert [type(p) for p in problems] == [UnknownSite]


def test_initial_workers_must_fit_quota(sites):
    # front-end plus 3 workers at a 3-instance site
    template = ClusterTemplate(front_end_site="cesnet", initial_workers=[("cesnet", 3)], max_workers=5)
    with pytest.raises(QuotaInfeasible):
        validate_template(template, sites)


def test_vrouter_counts_against_remote_quota(cesnet):
    tiny = make_site("aws", kind="public", max_instances=1)
    template = ClusterTemplate(front_end_site="cesnet", initial_workers=[("aws", 1)], max_workers=2)
    with pytest.raises(QuotaInfeasible):
        validate_template(template, [cesnet, tiny])


def test_duplicate_sla(sites):
    template = ClusterTemplate(
        front_end_site="cesnet", max_workers=2,
        site_preferences=[SLA(site_id="aws", priority=1), SLA(site_id="aws", priority=2)])
    with pytest.raises(DuplicateSla):
        validate_template(template, sites)


def test_validation_is_pure(sites, template):
    assert template_violations(template, sites) == template_violations(template, sites) == []


def test_bundled_fixtures_load():
    for path in sorted(SCENARIOS.glob("*.json")):
        scenario = load_scenario(path)
        assert scenario.template.front_end_site == "cesnet"


def test_unknown_keys_rejected():
    document = json.loads((SCENARIOS / "hybrid-usecase.json").read_text())
    document["colour"] = "blue"
    with pytest.raises(ScenarioInvalid) as info:
        parse_scenario(document)
    assert any("colour" in p for p in info.value.problems)


def test_duration_range_ordered():
    with pytest.raises(ValueError):
        DurationRange(min=20, max=15)


def test_plain_cipher_has_no_penalty():
    with pytest.raises(ValueError):
        CipherProfile(mode="none", throughput_factor=0.5)


def test_worker_floor_defaults_to_initial(template):
    assert template.worker_floor == 2
    assert template.model_copy(update={"min_workers": 0}).worker_floor == 0


def test_natural_node_order():
    names = ["vnode-10", "vnode-2", "vnode-1"]
    assert sorted(names, key=node_sort_key) == ["vnode-1", "vnode-2", "vnode-10"]
