"""
Scenario loading and validation
"""

import ipaddress
import json
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

from pydantic import ValidationError

from src.domain.errors import (
    BadBounds,
    DuplicateSla,
    NoPublicIpAtFrontEnd,
    QuotaInfeasible,
    ScenarioError,
    ScenarioInvalid,
    SubnetOverlap,
    UnknownSite,
)
from src.domain.models import CloudSite, ClusterTemplate, Scenario

logger = logging.getLogger("hybrid_cluster.domain")


def template_violations(template: ClusterTemplate, sites: Sequence[CloudSite]) -> List[ScenarioError]:
    """Every problem with the template, in a stable order"""
    site_map: Dict[str, CloudSite] = {site.site_id: site for site in sites}
    problems: List[ScenarioError] = []

    referenced = [template.front_end_site]
    referenced += [site_id for site_id, _ in template.initial_workers]
    referenced += [sla.site_id for sla in template.site_preferences]
    for site_id in dict.fromkeys(referenced):
        if site_id not in site_map:
            problems.append(UnknownSite(f"unknown site '{site_id}'"))
    if problems:
        return problems

    front_end = site_map[template.front_end_site]
    if front_end.max_public_ips < 1:
        problems.append(NoPublicIpAtFrontEnd(
            f"front-end site '{front_end.site_id}' has no public IP available"))

    initial = template.initial_worker_count
    if any(count < 0 for _, count in template.initial_workers):
        problems.append(BadBounds("initial worker counts must be non-negative"))
    if template.max_workers < initial:
        problems.append(BadBounds(
            f"max_workers {template.max_workers} is below the {initial} initial workers"))
    if template.min_workers is not None and template.min_workers > template.max_workers:
        problems.append(BadBounds(
            f"min_workers {template.min_workers} exceeds max_workers {template.max_workers}"))

    seen = set()
    for sla in template.site_preferences:
        if sla.site_id in seen:
            problems.append(DuplicateSla(f"more than one SLA entry for site '{sla.site_id}'"))
        seen.add(sla.site_id)

    per_site: Dict[str, int] = {}
    for site_id, count in template.initial_workers:
        per_site[site_id] = per_site.get(site_id, 0) + count
    per_site.setdefault(template.front_end_site, 0)
    for site_id, workers in per_site.items():
        site = site_map[site_id]
        needed = workers
        if site_id == template.front_end_site:
            needed += 1
        elif workers > 0 and site.supports_private_networks:
            # the site's vRouter is an extra VM
            needed += 1
        if needed > site.max_instances:
            problems.append(QuotaInfeasible(
                f"site '{site_id}' needs {needed} instances for the initial deployment "
                f"but its quota is {site.max_instances}"))
    return problems


def validate_template(template: ClusterTemplate, sites: Sequence[CloudSite]) -> ClusterTemplate:
    """Return the template unchanged or raise the first violation"""
    problems = template_violations(template, sites)
    if problems:
        raise problems[0]
    return template


def scenario_violations(scenario: Scenario) -> List[ScenarioError]:
    problems: List[ScenarioError] = []
    ids = [site.site_id for site in scenario.sites]
    for site_id in sorted({s for s in ids if ids.count(s) > 1}):
        problems.append(BadBounds(f"site '{site_id}' is declared more than once"))

    problems += template_violations(scenario.template, scenario.sites)

    site_map = scenario.site_map()
    for site_id in scenario.overlay.backup_cp_sites:
        if site_id not in site_map:
            problems.append(UnknownSite(f"unknown backup central point site '{site_id}'"))
        elif site_map[site_id].max_public_ips < 1:
            problems.append(NoPublicIpAtFrontEnd(
                f"backup central point site '{site_id}' has no public IP available"))

    networks = []
    for site_id, prefix in sorted(scenario.overlay.manual_subnets.items()):
        if site_id not in site_map:
            problems.append(UnknownSite(f"manual subnet for unknown site '{site_id}'"))
        try:
            networks.append((site_id, ipaddress.ip_network(prefix)))
        except ValueError as e:
            problems.append(BadBounds(f"manual subnet for '{site_id}' is not a prefix: {e}"))
    for i, (a_site, a_net) in enumerate(networks):
        for b_site, b_net in networks[i + 1:]:
            if a_net.overlaps(b_net):
                problems.append(SubnetOverlap(
                    f"subnet overlap: {a_site} {a_net} and {b_site} {b_net}"))

    for fault in scenario.faults:
        if fault.after_block is not None and fault.after_block > len(scenario.workload):
            problems.append(BadBounds(
                f"fault on '{fault.node_id}' refers to block {fault.after_block} of {len(scenario.workload)}"))
    return problems


def validate_scenario(scenario: Scenario) -> Scenario:
    problems = scenario_violations(scenario)
    if problems:
        raise ScenarioInvalid(problems)
    return scenario


def parse_scenario(document: Union[str, bytes, dict]) -> Scenario:
    """Strict parse of a scenario document; unknown keys are rejected"""
    try:
        if isinstance(document, dict):
            return Scenario.model_validate(document)
        return Scenario.model_validate_json(document)
    except ValidationError as e:
        problems = [
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}"
            for err in e.errors()
        ]
        raise ScenarioInvalid(problems) from e


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Load a scenario file; FileNotFoundError propagates untouched"""
    text = Path(path).read_text()
    try:
        json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioInvalid([f"not valid JSON: {e}"]) from e
    scenario = parse_scenario(text)
    logger.debug(f"Loaded scenario {path} with {len(scenario.sites)} sites")
    return scenario
