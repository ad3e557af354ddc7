"""
Queue-driven elasticity policy: decides when worker nodes are powered on,
scheduled for power-off, cancelled, or declared failed. Decisions only; the
simulation loop carries them out.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence

from config.settings import DEFAULT_IDLE_TIMEOUT, DEFAULT_POWEROFF_GRACE, FAILURE_DETECTION_SECONDS
from src.domain.errors import InvalidTransition
from src.domain.models import CloudSite, NodeState, SiteKind, VMInstance, node_sort_key

logger = logging.getLogger("hybrid_cluster.elasticity")

PAY_PER_USE_FIRST = "pay_per_use_first_then_longest_idle"

ALLOWED_TRANSITIONS: Dict[NodeState, FrozenSet[NodeState]] = {
    NodeState.OFF: frozenset({NodeState.POWERING_ON}),
    NodeState.POWERING_ON: frozenset({NodeState.IDLE, NodeState.FAILED}),
    NodeState.IDLE: frozenset({NodeState.USED, NodeState.POWEROFF_SCHEDULED, NodeState.FAILED}),
    NodeState.USED: frozenset({NodeState.IDLE, NodeState.FAILED}),
    NodeState.POWEROFF_SCHEDULED: frozenset({NodeState.POWERING_OFF, NodeState.IDLE}),
    NodeState.POWERING_OFF: frozenset({NodeState.OFF}),
    NodeState.FAILED: frozenset({NodeState.POWERING_OFF}),
}


def check_transition(node_id: str, old: NodeState, new: NodeState) -> None:
    if new not in ALLOWED_TRANSITIONS[old]:
        raise InvalidTransition(f"{node_id}: {old.value} -> {new.value} is not allowed")


class ActionKind(str, Enum):
    POWER_ON = "power_on"
    SCHEDULE_POWEROFF = "schedule_poweroff"
    CANCEL_POWEROFF = "cancel_poweroff"
    MARK_FAILED = "mark_failed"
    REPROVISION = "reprovision"


class LrmsReport(str, Enum):
    RESPONDING = "responding"
    OFF = "off"


@dataclass(frozen=True)
class ElasticityPolicy:
    max_workers: int
    idle_timeout: float = DEFAULT_IDLE_TIMEOUT
    poweroff_grace: float = DEFAULT_POWEROFF_GRACE
    victim_order: str = PAY_PER_USE_FIRST
    reprovision_failed: bool = True
    min_workers: int = 0
    failure_detection_delay: float = FAILURE_DETECTION_SECONDS

    @classmethod
    def from_scenario(cls, scenario) -> "ElasticityPolicy":
        template = scenario.template
        return cls(
            max_workers=template.max_workers,
            idle_timeout=template.idle_timeout,
            poweroff_grace=template.poweroff_grace,
            reprovision_failed=scenario.simulation.reprovision_failed,
            min_workers=template.worker_floor,
            failure_detection_delay=scenario.simulation.failure_detection_delay,
        )


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    issue_time: float
    node_id: Optional[str] = None
    site_hint: Optional[str] = None
    grace: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"action": self.kind.value}
        if self.node_id is not None:
            out["node"] = self.node_id
        if self.site_hint is not None:
            out["site_hint"] = self.site_hint
        if self.grace is not None:
            out["grace"] = self.grace
        return out


@dataclass(frozen=True)
class QueueView:
    pending: int
    running: int = 0


def select_victims(
    idle_nodes: Sequence[VMInstance],
    policy: ElasticityPolicy,
    sites: Optional[Mapping[str, CloudSite]] = None,
) -> List[VMInstance]:
    """Public-cloud nodes first, then longest idle, ties by node_id descending"""
    def pay_per_use_rank(node: VMInstance) -> int:
        if sites is None or node.site_id not in sites:
            return 1
        return 0 if sites[node.site_id].kind == SiteKind.PUBLIC else 1

    by_id_desc = sorted(idle_nodes, key=lambda n: node_sort_key(n.node_id), reverse=True)
    return sorted(by_id_desc, key=lambda n: (pay_per_use_rank(n), n.state_since))


def evaluate(
    queue: QueueView,
    nodes: Sequence[VMInstance],
    policy: ElasticityPolicy,
    now: float,
    sites: Optional[Mapping[str, CloudSite]] = None,
) -> List[Action]:
    workers = [n for n in nodes if n.is_worker]
    active = [n for n in workers if n.state != NodeState.OFF]
    scheduled = sorted(
        (n for n in workers if n.state == NodeState.POWEROFF_SCHEDULED),
        key=lambda n: node_sort_key(n.node_id),
    )
    free_slots = sum(n.slots for n in workers if n.state in (NodeState.IDLE, NodeState.POWERING_ON))

    actions: List[Action] = []
    if queue.pending > 0:
        deficit = queue.pending - free_slots
        for node in scheduled:
            if deficit <= 0:
                break
            actions.append(Action(ActionKind.CANCEL_POWEROFF, now, node_id=node.node_id))
            deficit -= node.slots
        if deficit > 0 and len(active) < policy.max_workers:
            # one at a time; the orchestrator serializes updates anyway
            actions.append(Action(ActionKind.POWER_ON, now))
        return actions

    up = [n for n in workers if n.state in (NodeState.IDLE, NodeState.USED, NodeState.POWEROFF_SCHEDULED)]
    removable = len(up) - policy.min_workers - len(scheduled)
    if removable <= 0:
        return actions
    expired = [n for n in workers if n.state == NodeState.IDLE and now - n.state_since >= policy.idle_timeout]
    for node in select_victims(expired, policy, sites)[:removable]:
        actions.append(Action(
            ActionKind.SCHEDULE_POWEROFF, now, node_id=node.node_id, grace=policy.poweroff_grace))
    return actions


def on_lrms_report(
    node: VMInstance,
    reported: LrmsReport,
    now: float,
    policy: ElasticityPolicy,
    deadline: Optional[float] = None,
) -> List[Action]:
    """React to the LRMS seeing a node as responding or off"""
    # the LRMS only manages workers
    if not node.is_worker or LrmsReport(reported) == LrmsReport.RESPONDING:
        return []
    late_boot = (
        node.state == NodeState.POWERING_ON
        and deadline is not None
        and now > deadline + policy.failure_detection_delay
    )
    if node.state in (NodeState.IDLE, NodeState.USED) or late_boot:
        logger.warning(f"{node.node_id} reported off by the LRMS while {node.state.value}; marking failed")
        return [
            Action(ActionKind.MARK_FAILED, now, node_id=node.node_id),
            Action(ActionKind.SCHEDULE_POWEROFF, now, node_id=node.node_id, grace=0.0),
        ]
    return []


def after_failed_poweroff(
    node: VMInstance,
    queue: QueueView,
    policy: ElasticityPolicy,
    now: float,
) -> List[Action]:
    """A failed node finished powering off: bring it back if work is waiting"""
    if policy.reprovision_failed and queue.pending > 0:
        return [Action(ActionKind.REPROVISION, now, node_id=node.node_id)]
    return []
