"""
PaaS-style orchestration of a hybrid cluster deployment: site ranking, the
phased provisioning pipeline and the one-update-at-a-time workflow.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from src.domain.errors import Busy, InvalidUpdate, NoEligibleSite, QuotaExceeded, UnknownSite
from src.domain.models import (
    FRONT_END_NODE,
    SLA,
    CloudSite,
    ClusterTemplate,
    NodeRole,
    NodeState,
    OverlaySpec,
    PhaseDurations,
    VMInstance,
    backup_cp_name,
    node_sort_key,
    vrouter_name,
    worker_name,
)
from src.domain.validation import validate_template
from src.elasticity.policy import check_transition
from src.overlay.topology import OverlayTopology, assign_addresses, plan_topology

logger = logging.getLogger("hybrid_cluster.orchestrator")


class UpdateKind(str, Enum):
    INITIAL_DEPLOY = "initial_deploy"
    ADD_NODE = "add_node"
    REMOVE_NODE = "remove_node"
    DESTROY = "destroy"


class Phase(str, Enum):
    NETWORK_CREATE = "network_create"
    VM_CREATE = "vm_create"
    TUNNEL_SETUP = "tunnel_setup"
    CONTEXTUALIZE = "contextualize"
    DEPROVISION = "deprovision"
    DONE = "done"


PROVISIONING_PHASES = (Phase.NETWORK_CREATE, Phase.VM_CREATE, Phase.TUNNEL_SETUP, Phase.CONTEXTUALIZE)


@dataclass(frozen=True)
class SiteScore:
    site_id: str
    score: float
    sla_priority: int
    availability: float
    free_quota: int

    @property
    def components(self) -> Dict[str, float]:
        return {
            "sla_priority": self.sla_priority,
            "availability": self.availability,
            "free_quota": self.free_quota,
        }


@dataclass
class UpdateOperation:
    op_id: str
    kind: UpdateKind
    target_site: str
    node_ids: Tuple[str, ...]
    started_at: float
    schedule: Tuple[Tuple[Phase, float], ...]
    phase_index: int = 0

    @property
    def phase(self) -> Phase:
        if self.phase_index >= len(self.schedule):
            return Phase.DONE
        return self.schedule[self.phase_index][0]

    @property
    def finishes_at(self) -> float:
        return self.schedule[-1][1] if self.schedule else self.started_at

    def to_dict(self) -> dict:
        return {
            "op_id": self.op_id,
            "op_kind": self.kind.value,
            "target_site": self.target_site,
            "nodes": list(self.node_ids),
            "started_at": self.started_at,
            "finishes_at": self.finishes_at,
        }


@dataclass
class DeploymentRecord:
    deployment_id: str
    template: ClusterTemplate
    sites: Dict[str, CloudSite]
    overlay: OverlaySpec
    topology: Optional[OverlayTopology] = None
    nodes: Dict[str, VMInstance] = field(default_factory=dict)
    active_updates: List[UpdateOperation] = field(default_factory=list)
    history: List[UpdateOperation] = field(default_factory=list)
    parallel_provisioning: bool = False
    journal: List[dict] = field(default_factory=list)
    op_counter: int = 0

    @property
    def in_flight(self) -> Optional[UpdateOperation]:
        return self.active_updates[0] if self.active_updates else None

    def set_state(self, node_id: str, state: NodeState, now: float) -> None:
        node = self.nodes[node_id]
        check_transition(node_id, node.state, state)
        paid = node.paid_seconds
        if state == NodeState.OFF:
            paid += now - node.state_since
        self.nodes[node_id] = replace(node, state=state, state_since=now, paid_seconds=paid)
        self.journal.append({
            "kind": "state_change",
            "node": node_id,
            "from": node.state.value,
            "to": state.value,
            "t": now,
        })

    def site_usage(self) -> Counter:
        return Counter(n.site_id for n in self.nodes.values() if n.state != NodeState.OFF and n.site_id)

    def workers(self) -> List[VMInstance]:
        return [self.nodes[n] for n in sorted(self.nodes, key=node_sort_key) if self.nodes[n].is_worker]

    def public_ip_count(self) -> int:
        return sum(1 for n in self.nodes.values() if n.has_public_ip and n.state != NodeState.OFF)

    def replan_topology(self) -> OverlayTopology:
        placement: Dict[str, List[str]] = {}
        for node in self.nodes.values():
            if node.state == NodeState.OFF or not node.site_id:
                continue
            if node.role in (NodeRole.FRONT_END, NodeRole.WORKER, NodeRole.STAND_ALONE_CLIENT):
                placement.setdefault(node.site_id, []).append(node.node_id)
        if FRONT_END_NODE not in placement.get(self.template.front_end_site, []):
            placement.setdefault(self.template.front_end_site, []).append(FRONT_END_NODE)
        planned = plan_topology(
            list(self.sites.values()),
            placement,
            self.template.front_end_site,
            self.overlay.backup_cp_sites,
            cipher=self.overlay.cipher,
        )
        self.topology = assign_addresses(planned, self.overlay.base_prefix, self.overlay.manual_subnets)
        for node_id, address in self.topology.addresses.items():
            if node_id in self.nodes and self.nodes[node_id].private_address != address:
                self.nodes[node_id] = replace(self.nodes[node_id], private_address=address)
        return self.topology

    def _next_op_id(self) -> str:
        self.op_counter += 1
        return f"op-{self.op_counter}"


def rank_sites(
    slas: Sequence[SLA],
    sites: Sequence[CloudSite],
    needed: int = 1,
    usage: Optional[Mapping[str, int]] = None,
) -> List[SiteScore]:
    """Order candidate sites by availability / SLA priority, best first"""
    site_map = {site.site_id: site for site in sites}
    usage = usage or {}
    entries = list(slas) or [SLA(site_id=site.site_id, priority=1) for site in sites]

    scores = []
    for sla in entries:
        if sla.site_id not in site_map:
            raise UnknownSite(f"SLA references unknown site '{sla.site_id}'")
        site = site_map[sla.site_id]
        free_quota = site.max_instances - usage.get(site.site_id, 0)
        if free_quota <= 0 or free_quota < needed or site.availability <= 0:
            continue
        scores.append(SiteScore(
            site_id=site.site_id,
            score=site.availability / sla.priority,
            sla_priority=sla.priority,
            availability=site.availability,
            free_quota=free_quota,
        ))
    if not scores:
        raise NoEligibleSite(f"no site can host {needed} more instance(s)")
    return sorted(scores, key=lambda s: (-s.score, s.site_id))


def _provisioning_schedule(phases: Sequence[PhaseDurations], clock: float) -> Tuple[Tuple[Phase, float], ...]:
    """Nodes provisioned together share each phase; the slowest site sets its length"""
    schedule = []
    t = clock
    for phase in PROVISIONING_PHASES:
        t += max(getattr(p, phase.value) for p in phases)
        schedule.append((phase, t))
    return tuple(schedule)


def submit_deployment(
    template: ClusterTemplate,
    sites: Sequence[CloudSite],
    clock: float,
    overlay: Optional[OverlaySpec] = None,
    parallel_provisioning: bool = False,
    deployment_id: str = "deployment-1",
) -> DeploymentRecord:
    """Create the deployment and start its initial_deploy update"""
    validate_template(template, sites)
    overlay = overlay or OverlaySpec()
    site_map = {site.site_id: site for site in sites}
    record = DeploymentRecord(
        deployment_id=deployment_id,
        template=template,
        sites=site_map,
        overlay=overlay,
        parallel_provisioning=parallel_provisioning,
    )

    fe_site = template.front_end_site
    record.nodes[FRONT_END_NODE] = VMInstance(
        FRONT_END_NODE, fe_site, NodeRole.FRONT_END, has_public_ip=True, state_since=clock)
    for index in range(1, template.max_workers + 1):
        record.nodes[worker_name(index)] = VMInstance(
            worker_name(index), None, NodeRole.WORKER, slots=template.worker_slots, state_since=clock)

    launching = [FRONT_END_NODE]
    involved = {fe_site}
    index = 1
    for site_id, count in template.initial_workers:
        for _ in range(count):
            name = worker_name(index)
            record.nodes[name] = replace(record.nodes[name], site_id=site_id)
            launching.append(name)
            involved.add(site_id)
            index += 1
    for site_id in overlay.backup_cp_sites:
        cp = backup_cp_name(site_id)
        record.nodes[cp] = VMInstance(cp, site_id, NodeRole.CENTRAL_POINT, has_public_ip=True, state_since=clock)
        launching.append(cp)
        involved.add(site_id)
    for site_id in sorted(involved):
        if _needs_vrouter(record, site_id):
            router = vrouter_name(site_id)
            record.nodes[router] = VMInstance(router, site_id, NodeRole.VROUTER, state_since=clock)
            launching.append(router)

    for node_id in launching:
        record.set_state(node_id, NodeState.POWERING_ON, clock)
    op = UpdateOperation(
        op_id=record._next_op_id(),
        kind=UpdateKind.INITIAL_DEPLOY,
        target_site=fe_site,
        node_ids=tuple(launching),
        started_at=clock,
        schedule=_provisioning_schedule([site_map[s].provisioning_phase_durations for s in sorted(involved)], clock),
    )
    record.active_updates.append(op)
    record.replan_topology()
    record.journal.append({**op.to_dict(), "kind": "update_started", "t": clock})
    logger.info(f"Deployment {deployment_id} submitted: {len(launching)} VMs, ready at t={op.finishes_at}")
    return record


def _needs_vrouter(record: DeploymentRecord, site_id: str) -> bool:
    site = record.sites[site_id]
    if site_id == record.template.front_end_site or site_id in record.overlay.backup_cp_sites:
        return False
    if not site.supports_private_networks:
        return False
    router = record.nodes.get(vrouter_name(site_id))
    return router is None or router.state == NodeState.OFF


def _check_busy(record: DeploymentRecord, kind: UpdateKind) -> None:
    if not record.active_updates:
        return
    concurrent_adds = (
        record.parallel_provisioning
        and kind == UpdateKind.ADD_NODE
        and all(op.kind == UpdateKind.ADD_NODE for op in record.active_updates)
    )
    if not concurrent_adds:
        raise Busy(f"update {record.in_flight.op_id} is still in progress")


def request_update(
    record: DeploymentRecord,
    kind: UpdateKind,
    target_site: Optional[str],
    clock: float,
    node_id: Optional[str] = None,
) -> UpdateOperation:
    """Start one add_node, remove_node or destroy update; Busy leaves the record untouched"""
    kind = UpdateKind(kind)
    if kind == UpdateKind.INITIAL_DEPLOY:
        raise InvalidUpdate("initial_deploy is started by submit_deployment")
    _check_busy(record, kind)

    if kind == UpdateKind.ADD_NODE:
        return _start_add(record, target_site, clock, node_id)
    if kind == UpdateKind.REMOVE_NODE:
        return _start_remove(record, clock, node_id)
    return _start_destroy(record, clock)


def _start_add(record: DeploymentRecord, target_site: Optional[str], clock: float, node_id: Optional[str]) -> UpdateOperation:
    if node_id is None:
        spare = [n for n in record.workers() if n.state == NodeState.OFF]
        if not spare:
            raise QuotaExceeded(f"all {record.template.max_workers} worker nodes are already allocated")
        node_id = spare[0].node_id
    node = record.nodes.get(node_id)
    if node is None or not node.is_worker:
        raise InvalidUpdate(f"'{node_id}' is not a worker node")
    if node.state != NodeState.OFF:
        raise InvalidUpdate(f"'{node_id}' is {node.state.value}, only off nodes can be added")

    usage = record.site_usage()
    if target_site is None:
        ranked = rank_sites(record.template.site_preferences, list(record.sites.values()), 1, usage)
        candidates = [s.site_id for s in ranked]
    else:
        if target_site not in record.sites:
            raise NoEligibleSite(f"unknown site '{target_site}'")
        candidates = [target_site]

    chosen = None
    for site_id in candidates:
        needed = 1 + (1 if _needs_vrouter(record, site_id) else 0)
        if record.sites[site_id].max_instances - usage.get(site_id, 0) >= needed:
            chosen = site_id
            break
    if chosen is None:
        raise QuotaExceeded(f"no quota left at {', '.join(candidates)}")

    launching = [node_id]
    if _needs_vrouter(record, chosen):
        router = vrouter_name(chosen)
        if router not in record.nodes:
            record.nodes[router] = VMInstance(router, chosen, NodeRole.VROUTER, state_since=clock)
        launching.append(router)

    record.nodes[node_id] = replace(node, site_id=chosen)
    for launched in launching:
        record.set_state(launched, NodeState.POWERING_ON, clock)
    op = UpdateOperation(
        op_id=record._next_op_id(),
        kind=UpdateKind.ADD_NODE,
        target_site=chosen,
        node_ids=tuple(launching),
        started_at=clock,
        schedule=_provisioning_schedule([record.sites[chosen].provisioning_phase_durations], clock),
    )
    record.active_updates.append(op)
    record.replan_topology()
    record.journal.append({**op.to_dict(), "kind": "update_started", "t": clock})
    logger.info(f"{op.op_id}: adding {node_id} at {chosen}" + (" with its vRouter" if len(launching) > 1 else ""))
    return op


def _start_remove(record: DeploymentRecord, clock: float, node_id: Optional[str]) -> UpdateOperation:
    node = record.nodes.get(node_id) if node_id else None
    if node is None:
        raise InvalidUpdate(f"unknown node '{node_id}'")
    if node.state not in (NodeState.POWEROFF_SCHEDULED, NodeState.FAILED):
        raise InvalidUpdate(f"'{node_id}' is {node.state.value}; only scheduled or failed nodes are deprovisioned")
    site = record.sites[node.site_id]
    record.set_state(node_id, NodeState.POWERING_OFF, clock)
    op = UpdateOperation(
        op_id=record._next_op_id(),
        kind=UpdateKind.REMOVE_NODE,
        target_site=site.site_id,
        node_ids=(node_id,),
        started_at=clock,
        schedule=((Phase.DEPROVISION, clock + site.deprovision_duration),),
    )
    record.active_updates.append(op)
    record.journal.append({**op.to_dict(), "kind": "update_started", "t": clock})
    logger.info(f"{op.op_id}: removing {node_id} from {site.site_id}")
    return op


def _start_destroy(record: DeploymentRecord, clock: float) -> UpdateOperation:
    live = [n for n in record.nodes.values() if n.state != NodeState.OFF]
    blocking = [n.node_id for n in live if n.state in (NodeState.USED, NodeState.POWERING_ON)]
    if blocking:
        raise InvalidUpdate(f"cannot destroy while {', '.join(blocking)} are busy or booting")
    ordered = sorted((n.node_id for n in live), key=node_sort_key)
    duration = max((record.sites[record.nodes[n].site_id].deprovision_duration for n in ordered), default=0.0)
    for node_id in ordered:
        if record.nodes[node_id].state == NodeState.IDLE:
            record.set_state(node_id, NodeState.POWEROFF_SCHEDULED, clock)
        record.set_state(node_id, NodeState.POWERING_OFF, clock)
    op = UpdateOperation(
        op_id=record._next_op_id(),
        kind=UpdateKind.DESTROY,
        target_site=record.template.front_end_site,
        node_ids=tuple(ordered),
        started_at=clock,
        schedule=((Phase.DEPROVISION, clock + duration),),
    )
    record.active_updates.append(op)
    record.journal.append({**op.to_dict(), "kind": "update_started", "t": clock})
    logger.info(f"{op.op_id}: destroying deployment ({len(ordered)} VMs)")
    return op


def step_workflow(record: DeploymentRecord, now: float) -> List[dict]:
    """Advance every in-flight update whose current phase has ended by `now`"""
    events: List[dict] = []
    for op in list(record.active_updates):
        while op.phase != Phase.DONE and op.schedule[op.phase_index][1] <= now:
            phase, ended = op.schedule[op.phase_index]
            op.phase_index += 1
            events.append({"kind": "phase_done", "op_id": op.op_id, "phase": phase.value,
                           "node": op.node_ids[0], "t": ended})
        if op.phase != Phase.DONE:
            continue

        if op.kind in (UpdateKind.INITIAL_DEPLOY, UpdateKind.ADD_NODE):
            for node_id in op.node_ids:
                if record.nodes[node_id].state == NodeState.POWERING_ON:
                    record.set_state(node_id, NodeState.IDLE, now)
        else:
            for node_id in op.node_ids:
                if record.nodes[node_id].state == NodeState.POWERING_OFF:
                    record.set_state(node_id, NodeState.OFF, now)
        record.active_updates.remove(op)
        record.history.append(op)
        if op.kind == UpdateKind.REMOVE_NODE:
            record.replan_topology()
        events.append({"kind": "update_done", "op_id": op.op_id, "op_kind": op.kind.value,
                       "nodes": list(op.node_ids), "node": op.node_ids[0], "t": now})
        logger.debug(f"{op.op_id} ({op.kind.value}) completed at t={now}")
    return events
