#!/usr/bin/env python3
"""
End-to-end checks of the bundled hybrid use-case replay
"""

import pytest

from conftest import SCENARIOS
from src.domain.models import NodeState
from src.domain.validation import load_scenario
from src.elasticity.policy import check_transition
from src.sim.engine import Simulation, compare_scenarios, run_scenario
from src.sim.metrics import summarize

HOUR = 3600.0


@pytest.fixture(scope="module")
def summary(hybrid_timeline):
    return summarize(hybrid_timeline)


def state_changes(timeline, node=None):
    return [e for e in timeline.events
            if e["kind"] == "state_change" and (node is None or e["node"] == node)]


def block_arrivals(timeline):
    return [e["t"] for e in timeline.events if e["kind"] == "job_arrival"]


def cloud_workers(timeline):
    return sorted(n for n in timeline.workers if timeline.node_sites[n] == "aws")


def test_cloud_nodes_come_up_in_twenty_minute_steps(hybrid_timeline):
    cloud = set(cloud_workers(hybrid_timeline))
    ready = [e["t"] for e in state_changes(hybrid_timeline)
             if e["node"] in cloud and e["detail"]["from"] == "powering_on" and e["detail"]["to"] == "idle"]
    first_three = ready[:3]
    assert len(first_three) == 3
    assert [b - a for a, b in zip(first_three, first_three[1:])] == [1200.0, 1200.0]


def test_cloud_add_node_takes_twenty_minutes(hybrid_timeline):
    adds = [e for e in hybrid_timeline.events
            if e["kind"] == "update_started" and e["detail"]["op_kind"] == "add_node"
            and e["detail"]["target_site"] == "aws"]
    assert adds
    for add in adds:
        assert add["detail"]["finishes_at"] - add["detail"]["started_at"] == 1200.0


def test_utilization_band(summary):
    assert 0.56 <= summary["utilization"] <= 0.76


def test_busy_time(summary):
    assert abs(summary["busy_s_by_site"]["aws"] - (9 * HOUR + 42 * 60)) <= 30 * 60
    assert abs(summary["busy_s"] - 20 * HOUR) <= 1.5 * HOUR


def test_total_cost(summary):
    assert 0.70 <= summary["total_cost"] <= 0.80
    assert summary["cost_by_site"]["cesnet"] == 0.0


def test_every_job_completes(hybrid_timeline):
    assert hybrid_timeline.jobs_arrived == hybrid_timeline.jobs_done == 3676


def test_on_premises_only_needs_about_four_more_hours(hybrid_scenario):
    cesnet_only = load_scenario(SCENARIOS / "cesnet-only.json")
    report = compare_scenarios(hybrid_scenario, cesnet_only)
    assert 3.5 * HOUR <= report["makespan_delta"] <= 4.5 * HOUR
    assert report["cost_delta"] < 0


def test_parallel_provisioning_shortens_the_run(hybrid_scenario):
    parallel = load_scenario(SCENARIOS / "hybrid-usecase-parallel.json")
    assert compare_scenarios(hybrid_scenario, parallel)["makespan_delta"] < 0


def _poweroff_outcomes(timeline, start, end):
    """(node, outcome, t) for every power-off scheduled in [start, end), matched to the change that ends it"""
    schedules = [(e["node"], e["t"]) for e in timeline.events
                 if e["kind"] == "action" and e["detail"]["action"] == "schedule_poweroff"
                 and start <= e["t"] < end]
    outcomes = []
    for node, scheduled_at in schedules:
        for e in state_changes(timeline, node):
            if e["t"] >= scheduled_at and e["detail"]["from"] == "poweroff_scheduled":
                outcomes.append((node, e["detail"]["to"], e["t"]))
                break
    return outcomes


def test_behavioral_replay(hybrid_timeline):
    arrivals = block_arrivals(hybrid_timeline)
    assert len(arrivals) == 4

    after_first = _poweroff_outcomes(hybrid_timeline, arrivals[0], arrivals[1])
    powered_off = [(n, t) for n, to, t in after_first if to == "powering_off"]
    cancelled = [n for n, to, _ in after_first if to == "idle"]
    assert len(powered_off) == 1
    assert cancelled

    cycle_at = None
    states = state_changes(hybrid_timeline, "vnode-5")
    for i, e in enumerate(states):
        if e["detail"]["to"] == "failed":
            tail = [s["detail"]["to"] for s in states[i:i + 4]]
            assert tail == ["failed", "powering_off", "off", "powering_on"]
            cycle_at = e["t"]
            break
    assert cycle_at is not None
    assert any(e["kind"] == "action" and e["detail"]["action"] == "reprovision" and e["node"] == "vnode-5"
               for e in hybrid_timeline.events)

    before_last = _poweroff_outcomes(hybrid_timeline, arrivals[2], arrivals[3])
    final_off = [(n, t) for n, to, t in before_last if to == "powering_off" and t < arrivals[3]]
    assert len(final_off) == 1

    assert powered_off[0][1] < cycle_at < final_off[0][1]


def test_same_seed_identical_events(hybrid_scenario, hybrid_timeline):
    assert run_scenario(hybrid_scenario).events == hybrid_timeline.events


@pytest.mark.parametrize("fixture", ["hybrid-usecase.json", "hybrid-usecase-parallel.json", "cesnet-only.json"])
def test_state_machine_soundness(fixture, hybrid_timeline):
    timeline = hybrid_timeline if fixture == "hybrid-usecase.json" else run_scenario(load_scenario(SCENARIOS / fixture))
    for e in state_changes(timeline):
        check_transition(e["node"], NodeState(e["detail"]["from"]), NodeState(e["detail"]["to"]))

    for node in timeline.nodes():
        intervals = timeline.intervals[node]
        for before, after in zip(intervals, intervals[1:]):
            assert before.exit == after.enter
        assert intervals[-1].exit == timeline.makespan
        total = sum(i.duration for i in intervals)
        assert total == pytest.approx(timeline.makespan - intervals[0].enter)
        assert timeline.used_seconds(node) <= timeline.paid_seconds(node)
        assert intervals[-1].state == NodeState.OFF


class CheckedSimulation(Simulation):
    """Asserts the deployment-wide invariants after every handled event"""

    def __init__(self, scenario):
        super().__init__(scenario)
        self.last_cost = 0.0
        self.checked = 0

    def _handle(self, event):
        super()._handle(event)
        record = self.record
        cost = self.timeline.costs.total_cost
        assert cost >= self.last_cost
        self.last_cost = cost
        if self.finished:
            return
        assert record.public_ip_count() == len(record.topology.central_points)
        for site_id, used in record.site_usage().items():
            assert used <= record.sites[site_id].max_instances, f"{site_id} over quota at t={self.now}"
        if not record.parallel_provisioning:
            assert len(record.active_updates) <= 1
        self.checked += 1


@pytest.mark.parametrize("fixture", ["hybrid-usecase.json", "hybrid-usecase-parallel.json", "cesnet-only.json"])
def test_deployment_invariants_hold_at_every_event(fixture):
    simulation = CheckedSimulation(load_scenario(SCENARIOS / fixture))
    timeline = simulation.run()
    assert simulation.checked > 0

    for session in timeline.costs.sessions:
        for interval in timeline.intervals[session["node"]]:
            if interval.state == NodeState.OFF:
                assert interval.exit <= session["start_s"] or interval.enter >= session["end_s"]
