"""
Shared pytest fixtures
"""

from pathlib import Path

import pytest

from src.domain.models import SLA, CloudSite, ClusterTemplate, CostRate, PhaseDurations, Scenario
from src.domain.validation import load_scenario
from src.sim.engine import run_scenario

SCENARIOS = Path(__file__).parent / "data" / "scenarios"


def make_site(site_id, kind="on_premises", max_instances=3, max_public_ips=1, private=True,
              phases=(60, 300, 60, 480), deprovision=120, per_hour=0.0, vrouter_per_hour=None,
              availability=1.0):
    return CloudSite(
        site_id=site_id,
        kind=kind,
        max_instances=max_instances,
        max_public_ips=max_public_ips,
        supports_private_networks=private,
        provisioning_phase_durations=PhaseDurations(
            network_create=phases[0], vm_create=phases[1], tunnel_setup=phases[2], contextualize=phases[3]),
        deprovision_duration=deprovision,
        billing=CostRate(per_hour=per_hour),
        vrouter_billing=None if vrouter_per_hour is None else CostRate(per_hour=vrouter_per_hour),
        availability=availability,
    )


def make_scenario(sites, template, workload=(), **extra) -> Scenario:
    document = {
        "sites": [s.model_dump(mode="json") for s in sites],
        "template": template.model_dump(mode="json"),
        "workload": list(workload),
        "overlay": extra.pop("overlay", {}),
        "seed": extra.pop("seed", 0),
    }
    document.update(extra)
    return Scenario.model_validate(document)


@pytest.fixture
def cesnet():
    return make_site("cesnet")


@pytest.fixture
def aws():
    return make_site("aws", kind="public", max_instances=4, phases=(60, 540, 120, 480),
                     deprovision=1200, per_hour=0.0464, vrouter_per_hour=0.0116)


@pytest.fixture
def sites(cesnet, aws):
    return [cesnet, aws]


@pytest.fixture
def template():
    return ClusterTemplate(
        front_end_site="cesnet",
        initial_workers=[("cesnet", 2)],
        max_workers=5,
        site_preferences=[SLA(site_id="cesnet", priority=1), SLA(site_id="aws", priority=2)],
    )


@pytest.fixture(scope="session")
def hybrid_scenario():
    return load_scenario(SCENARIOS / "hybrid-usecase.json")


@pytest.fixture(scope="session")
def hybrid_timeline(hybrid_scenario):
    return run_scenario(hybrid_scenario)
