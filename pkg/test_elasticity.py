#!/usr/bin/env python3
"""
Tests for the elasticity policy and node state machine
"""

import pytest

from src.domain.errors import InvalidTransition
from src.domain.models import NodeRole, NodeState, VMInstance
from src.elasticity.policy import (
    ActionKind,
    ElasticityPolicy,
    LrmsReport,
    QueueView,
    after_failed_poweroff,
    check_transition,
    evaluate,
    on_lrms_report,
    select_victims,
)

POLICY = ElasticityPolicy(max_workers=5, idle_timeout=300, poweroff_grace=120, min_workers=0)


def worker(node_id, state, site="aws", since=0.0):
    return VMInstance(node_id, site, NodeRole.WORKER, state=state, slots=1, state_since=since)


def kinds(actions):
    return [a.kind for a in actions]


def test_scale_out_when_queue_exceeds_slots():
    nodes = [worker("vnode-1", NodeState.USED), worker("vnode-2", NodeState.USED), worker("vnode-3", NodeState.OFF)]
    assert kinds(evaluate(QueueView(pending=5), nodes, POLICY, 100.0)) == [ActionKind.POWER_ON]


def test_no_scale_out_at_max_workers():
    nodes = [worker(f"vnode-{i}", NodeState.USED) for i in range(1, 6)]
    assert evaluate(QueueView(pending=5), nodes, POLICY, 100.0) == []


def test_booting_nodes_count_as_capacity():
    nodes = [worker("vnode-1", NodeState.USED), worker("vnode-2", NodeState.POWERING_ON), worker("vnode-3", NodeState.OFF)]
    assert evaluate(QueueView(pending=1), nodes, POLICY, 100.0) == []


def test_idle_past_timeout_is_scheduled():
    nodes = [worker("vnode-1", NodeState.IDLE, since=0.0)]
    actions = evaluate(QueueView(pending=0), nodes, POLICY, 300.0)
    assert kinds(actions) == [ActionKind.SCHEDULE_POWEROFF]
    assert actions[0].grace == 120


def test_idle_before_timeout_is_kept():
    nodes = [worker("vnode-1", NodeState.IDLE, since=100.0)]
    assert evaluate(QueueView(pending=0), nodes, POLICY, 300.0) == []


def test_floor_protects_initial_workers(cesnet, aws):
    policy = ElasticityPolicy(max_workers=5, idle_timeout=300, poweroff_grace=120, min_workers=2)
    nodes = [
        worker("vnode-1", NodeState.IDLE, site="cesnet"),
        worker("vnode-2", NodeState.IDLE, site="cesnet"),
        worker("vnode-3", NodeState.IDLE, since=50.0),
    ]
    actions = evaluate(QueueView(pending=0), nodes, policy, 1000.0, {"cesnet": cesnet, "aws": aws})
    assert [a.node_id for a in actions] == ["vnode-3"]


def test_fresh_public_node_does_not_shield_expired_on_premises_node(cesnet, aws):
    policy = ElasticityPolicy(max_workers=5, idle_timeout=300, poweroff_grace=120, min_workers=1)
    nodes = [
        worker("vnode-1", NodeState.IDLE, site="cesnet", since=0.0),
        worker("vnode-3", NodeState.IDLE, since=900.0),
    ]
    actions = evaluate(QueueView(pending=0), nodes, policy, 1000.0, {"cesnet": cesnet, "aws": aws})
    assert [a.node_id for a in actions] == ["vnode-1"]


def test_burst_cancels_scheduled_poweroffs():
    nodes = [worker(f"vnode-{i}", NodeState.POWEROFF_SCHEDULED) for i in (3, 4, 5)]
    actions = evaluate(QueueView(pending=900), nodes, POLICY, 100.0)
    assert kinds(actions) == [ActionKind.CANCEL_POWEROFF] * 3 + [ActionKind.POWER_ON]
    assert [a.node_id for a in actions[:3]] == ["vnode-3", "vnode-4", "vnode-5"]


def test_small_burst_cancels_only_what_it_needs():
    nodes = [worker(f"vnode-{i}", NodeState.POWEROFF_SCHEDULED) for i in (3, 4, 5)]
    actions = evaluate(QueueView(pending=1), nodes, POLICY, 100.0)
    assert [a.node_id for a in actions] == ["vnode-3"]


def test_victims_public_first_then_longest_idle(cesnet, aws):
    sites = {"cesnet": cesnet, "aws": aws}
    idle = [
        worker("vnode-1", NodeState.IDLE, site="cesnet", since=0.0),
        worker("vnode-3", NodeState.IDLE, since=200.0),
        worker("vnode-4", NodeState.IDLE, since=100.0),
        worker("vnode-5", NodeState.IDLE, since=100.0),
    ]
    order = [n.node_id for n in select_victims(idle, POLICY, sites)]
    assert order == ["vnode-5", "vnode-4", "vnode-3", "vnode-1"]


def test_lrms_off_marks_used_node_failed():
    actions = on_lrms_report(worker("vnode-5", NodeState.USED), LrmsReport.OFF, 9300.0, POLICY)
    assert kinds(actions) == [ActionKind.MARK_FAILED, ActionKind.SCHEDULE_POWEROFF]
    assert actions[1].grace == 0.0


@pytest.mark.parametrize("node_id, role", [
    ("front-end", NodeRole.FRONT_END),
    ("vrouter-aws", NodeRole.VROUTER),
    ("cp-aws", NodeRole.CENTRAL_POINT),
])
def test_lrms_off_for_non_worker_is_ignored(node_id, role):
    node = VMInstance(node_id, "aws", role, state=NodeState.IDLE, slots=0)
    assert on_lrms_report(node, LrmsReport.OFF, 3000.0, POLICY) == []


def test_lrms_off_for_booting_node_within_deadline():
    node = worker("vnode-5", NodeState.POWERING_ON)
    assert on_lrms_report(node, LrmsReport.OFF, 1000.0, POLICY, deadline=1200.0) == []
    late = on_lrms_report(node, LrmsReport.OFF, 1500.0, POLICY, deadline=1200.0)
    assert kinds(late) == [ActionKind.MARK_FAILED, ActionKind.SCHEDULE_POWEROFF]


def test_lrms_off_for_off_node_is_ignored():
    assert on_lrms_report(worker("vnode-5", NodeState.OFF), LrmsReport.OFF, 10.0, POLICY) == []
    assert on_lrms_report(worker("vnode-5", NodeState.IDLE), LrmsReport.RESPONDING, 10.0, POLICY) == []


def test_reprovision_only_with_pending_jobs():
    node = worker("vnode-5", NodeState.OFF)
    assert kinds(after_failed_poweroff(node, QueueView(pending=3), POLICY, 0.0)) == [ActionKind.REPROVISION]
    assert after_failed_poweroff(node, QueueView(pending=0), POLICY, 0.0) == []


def test_transitions():
    check_transition("vnode-1", NodeState.POWEROFF_SCHEDULED, NodeState.IDLE)
    with pytest.raises(InvalidTransition):
        check_transition("vnode-1", NodeState.OFF, NodeState.USED)
    with pytest.raises(InvalidTransition):
        check_transition("vnode-1", NodeState.FAILED, NodeState.IDLE)
