"""
Discrete-event engine: replays a scenario's workload against the
orchestrator and the elasticity policy, and records what every node did.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional

from src.domain.errors import Busy, InvalidUpdate, NoEligibleSite, NonTermination, QuotaExceeded, UnknownNode
from src.domain.models import FaultSpec, Job, NodeState, Scenario
from src.domain.validation import validate_scenario
from src.elasticity.policy import (
    Action,
    ActionKind,
    ElasticityPolicy,
    LrmsReport,
    QueueView,
    after_failed_poweroff,
    evaluate,
    on_lrms_report,
)
from src.orchestrator.workflow import (
    DeploymentRecord,
    UpdateKind,
    UpdateOperation,
    request_update,
    step_workflow,
    submit_deployment,
)
from src.overlay.topology import apply_cipher_profile, compute_routes, trace_path
from src.sim.events import Event, EventKind, EventQueue, RandomStream
from src.sim.lrms import JobCostModel, LrmsModel, lrms_step, sample_processing
from src.sim.metrics import MetricsTimeline, summarize

logger = logging.getLogger("hybrid_cluster.sim")

# orchestrator refusals the policy simply retries on a later tick
RETRYABLE = (Busy, QuotaExceeded, NoEligibleSite)


class Simulation:
    def __init__(self, scenario: Scenario, seed: Optional[int] = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.settings = scenario.simulation
        self.policy = ElasticityPolicy.from_scenario(scenario)
        self.random = RandomStream(self.seed)
        self.queue = EventQueue()
        self.lrms = LrmsModel()
        self.job_cost = JobCostModel(setup_duration=self.settings.setup_duration)
        self.timeline = MetricsTimeline()
        self.record: Optional[DeploymentRecord] = None
        self.now = 0.0

        self.next_block = 0
        self.block_remaining: Dict[int, int] = {}
        self.removal_backlog: List[str] = []
        self.reprovision_backlog: List[str] = []
        self.failed_nodes: set = set()
        self.boot_deadlines: Dict[str, float] = {}
        self.paid_since: Dict[str, float] = {}
        self.teardown_started = False
        self.finished = False
        self._routes = None
        self._routes_for = None

    # ---- driver ----

    def run(self) -> MetricsTimeline:
        scenario = self.scenario
        logger.info(f"Starting simulation: {len(scenario.sites)} sites, "
                    f"{sum(b.job_count for b in scenario.workload)} jobs, seed={self.seed}")
        self.record = submit_deployment(
            scenario.template,
            scenario.sites,
            0.0,
            overlay=scenario.overlay,
            parallel_provisioning=self.settings.parallel_provisioning,
        )
        self._track_update(self.record.in_flight)
        self._drain_journal()

        self.queue.push(0.0, EventKind.POLICY_TICK)
        if scenario.workload:
            self.queue.push(scenario.workload[0].inter_block_gap, EventKind.JOB_ARRIVAL, block=0)
        for fault in scenario.faults:
            if fault.after_block is None:
                self.queue.push(fault.at, EventKind.FAULT_INJECTION, fault.node_id)

        while self.queue and not self.finished:
            event = self.queue.pop()
            if event.time > self.settings.max_simulated_time:
                raise NonTermination(
                    f"simulation still running at t={event.time} (limit {self.settings.max_simulated_time})")
            self.now = event.time
            self._handle(event)
            self._dispatch()
            self._drain_journal()

        self._close()
        return self.timeline

    def _handle(self, event: Event) -> None:
        handlers = {
            EventKind.JOB_ARRIVAL: self._on_job_arrival,
            EventKind.PHASE_DONE: self._on_phase_done,
            EventKind.JOB_DONE: self._on_job_done,
            EventKind.POLICY_TICK: self._on_policy_tick,
            EventKind.LRMS_REPORT: self._on_lrms_report,
            EventKind.FAULT_INJECTION: self._on_fault,
            EventKind.POWEROFF_GRACE_ELAPSED: self._on_grace_elapsed,
        }
        handlers[event.kind](event)

    # ---- workload and LRMS ----

    def _on_job_arrival(self, event: Event) -> None:
        index = event.payload["block"]
        block = self.scenario.workload[index]
        dist = block.duration_distribution
        for i in range(block.job_count):
            self.lrms.submit(Job(
                job_id=f"job-{index + 1}-{i + 1}",
                submit_time=self.now,
                processing_duration=sample_processing(self.random, dist.min, dist.max),
                block=index,
                transfer_seconds=block.transfer_seconds,
            ))
        self.block_remaining[index] = block.job_count
        for fault in self.scenario.faults:
            if fault.after_block == index + 1:
                self.queue.push(self.now + fault.at, EventKind.FAULT_INJECTION, fault.node_id)
        self.timeline.jobs_arrived += block.job_count
        self.next_block = index + 1
        self.timeline.log(self.now, EventKind.JOB_ARRIVAL.value, None, block=index + 1, jobs=block.job_count)
        logger.info(f"t={self.now:.0f}: block {index + 1} submitted ({block.job_count} jobs)")
        if block.job_count == 0:
            self._block_drained(index)

    def _block_drained(self, index: int) -> None:
        nxt = index + 1
        if nxt < len(self.scenario.workload):
            self.queue.push(self.now + self.scenario.workload[nxt].inter_block_gap, EventKind.JOB_ARRIVAL, block=nxt)

    def _transfer_time(self, job: Job, node_id: str) -> float:
        if job.transfer_seconds <= 0:
            return 0.0
        topology = self.record.topology
        if self.record.nodes[node_id].site_id == topology.front_end_site:
            return job.transfer_seconds
        if self._routes_for is not topology:
            self._routes = compute_routes(topology)
            self._routes_for = topology
        hops = len(trace_path(self._routes, topology, topology.front_end_node, node_id)) - 1
        return apply_cipher_profile(topology.cipher, job.transfer_seconds, hops)

    def _dispatch(self) -> None:
        for dispatch in lrms_step(self.lrms, self.record.nodes, self.now, self.job_cost, self._transfer_time):
            if self.record.nodes[dispatch.node_id].state == NodeState.IDLE:
                self.record.set_state(dispatch.node_id, NodeState.USED, self.now)
            self.queue.push(dispatch.finishes_at, EventKind.JOB_DONE, dispatch.node_id,
                            job=dispatch.job.job_id, block=dispatch.job.block)
            self.timeline.log(self.now, EventKind.LRMS_DISPATCH.value, dispatch.node_id,
                              job=dispatch.job.job_id, cold=dispatch.cold_start, until=dispatch.finishes_at)

    def _on_job_done(self, event: Event) -> None:
        node_id = event.node
        self.lrms.complete(node_id, event.payload["job"], self.now)
        self.timeline.jobs_done += 1
        self.timeline.log(self.now, EventKind.JOB_DONE.value, node_id, job=event.payload["job"])
        if self.lrms.running_on(node_id) == 0 and self.record.nodes[node_id].state == NodeState.USED:
            self.record.set_state(node_id, NodeState.IDLE, self.now)
        block = event.payload["block"]
        self.block_remaining[block] -= 1
        if self.block_remaining[block] == 0:
            logger.info(f"t={self.now:.0f}: block {block + 1} drained")
            self._block_drained(block)

    # ---- orchestrator ----

    def _track_update(self, op: UpdateOperation) -> None:
        for phase, ends in op.schedule:
            self.queue.push(ends, EventKind.PHASE_DONE, op.node_ids[0], op_id=op.op_id, phase=phase.value)
        if op.kind in (UpdateKind.INITIAL_DEPLOY, UpdateKind.ADD_NODE):
            for node_id in op.node_ids:
                self.boot_deadlines[node_id] = op.finishes_at

    def _request(self, kind: UpdateKind, node_id: Optional[str] = None, site: Optional[str] = None) -> Optional[UpdateOperation]:
        try:
            op = request_update(self.record, kind, site, self.now, node_id=node_id)
        except RETRYABLE as e:
            logger.debug(f"t={self.now:.0f}: {kind.value} {node_id or ''} deferred: {e}")
            return None
        self._track_update(op)
        return op

    def _on_phase_done(self, event: Event) -> None:
        for done in step_workflow(self.record, self.now):
            detail = {k: v for k, v in done.items() if k not in ("kind", "node", "t")}
            self.timeline.log(done["t"], done["kind"], done["node"], **detail)
            if done["kind"] == "update_done":
                self._on_update_done(UpdateKind(done["op_kind"]), done["nodes"])

    def _on_update_done(self, kind: UpdateKind, node_ids: List[str]) -> None:
        if kind == UpdateKind.DESTROY:
            self.finished = True
            return
        for node_id in node_ids:
            node = self.record.nodes[node_id]
            if kind == UpdateKind.REMOVE_NODE and node_id in self.failed_nodes:
                self.failed_nodes.discard(node_id)
                queue = QueueView(len(self.lrms.pending), self.lrms.running_count)
                for action in after_failed_poweroff(node, queue, self.policy, self.now):
                    self.reprovision_backlog.append(action.node_id)
            elif node.state == NodeState.IDLE and node.is_worker:
                self.lrms.power_cycle(node_id, node.slots)
            self.boot_deadlines.pop(node_id, None)

    # ---- elasticity ----

    def _log_action(self, action: Action) -> None:
        detail = action.to_dict()
        node = detail.pop("node", None)
        self.timeline.log(self.now, "action", node, **detail)

    def _on_policy_tick(self, event: Event) -> None:
        if not self.teardown_started:
            self._retry_removals()
            self._retry_reprovisions()
            self._try_teardown()
        if not self.teardown_started:
            queue = QueueView(len(self.lrms.pending), self.lrms.running_count)
            for action in evaluate(queue, self.record.workers(), self.policy, self.now, self.record.sites):
                self._apply(action)
        self.queue.push(self.now + self.settings.policy_tick, EventKind.POLICY_TICK)

    def _apply(self, action: Action) -> None:
        if action.kind == ActionKind.POWER_ON:
            op = self._request(UpdateKind.ADD_NODE)
            if op is not None:
                self._log_action(Action(action.kind, self.now, op.node_ids[0], op.target_site))
        elif action.kind == ActionKind.SCHEDULE_POWEROFF:
            self.record.set_state(action.node_id, NodeState.POWEROFF_SCHEDULED, self.now)
            self.queue.push(self.now + action.grace, EventKind.POWEROFF_GRACE_ELAPSED, action.node_id,
                            since=self.now)
            self._log_action(action)
        elif action.kind == ActionKind.CANCEL_POWEROFF:
            self.record.set_state(action.node_id, NodeState.IDLE, self.now)
            if action.node_id in self.removal_backlog:
                self.removal_backlog.remove(action.node_id)
            self._log_action(action)

    def _on_grace_elapsed(self, event: Event) -> None:
        node = self.record.nodes[event.node]
        if node.state != NodeState.POWEROFF_SCHEDULED or node.state_since != event.payload["since"]:
            return
        self.timeline.log(self.now, EventKind.POWEROFF_GRACE_ELAPSED.value, event.node)
        if self.lrms.pending or self._request(UpdateKind.REMOVE_NODE, event.node) is None:
            self.removal_backlog.append(event.node)

    def _retry_removals(self) -> None:
        backlog = [n for n in self.removal_backlog
                   if self.record.nodes[n].state in (NodeState.POWEROFF_SCHEDULED, NodeState.FAILED)]
        backlog.sort(key=lambda n: n not in self.failed_nodes)
        self.removal_backlog = []
        for position, node_id in enumerate(backlog):
            failed = node_id in self.failed_nodes
            if (not failed and self.lrms.pending) or self._request(UpdateKind.REMOVE_NODE, node_id) is None:
                self.removal_backlog.append(node_id)
            elif self.record.active_updates:
                self.removal_backlog.extend(backlog[position + 1:])
                return

    def _retry_reprovisions(self) -> None:
        backlog, self.reprovision_backlog = self.reprovision_backlog, []
        for node_id in backlog:
            node = self.record.nodes[node_id]
            if not self.lrms.pending or node.state != NodeState.OFF:
                continue
            try:
                op = request_update(self.record, UpdateKind.ADD_NODE, node.site_id, self.now, node_id=node_id)
            except RETRYABLE as e:
                logger.debug(f"t={self.now:.0f}: reprovision of {node_id} deferred: {e}")
                self.reprovision_backlog.append(node_id)
                continue
            self._track_update(op)
            self._log_action(Action(ActionKind.REPROVISION, self.now, node_id, op.target_site))

    def _try_teardown(self) -> None:
        workload_done = (
            self.next_block >= len(self.scenario.workload)
            and all(remaining == 0 for remaining in self.block_remaining.values())
            and not self.lrms.pending
            and not self.lrms.running_count
        )
        if not workload_done or self.record.active_updates:
            return
        try:
            op = request_update(self.record, UpdateKind.DESTROY, None, self.now)
        except (Busy, InvalidUpdate) as e:
            logger.debug(f"t={self.now:.0f}: teardown deferred: {e}")
            return
        self.teardown_started = True
        self.removal_backlog.clear()
        self.reprovision_backlog.clear()
        self._track_update(op)
        logger.info(f"t={self.now:.0f}: workload finished, destroying the deployment")

    # ---- faults ----

    def _on_fault(self, event: Event) -> None:
        if event.node not in self.record.nodes:
            raise UnknownNode(f"fault targets unknown node '{event.node}'")
        self.timeline.log(self.now, EventKind.FAULT_INJECTION.value, event.node)
        self.queue.push(self.now, EventKind.LRMS_REPORT, event.node, status=LrmsReport.OFF.value)

    def _on_lrms_report(self, event: Event) -> None:
        node = self.record.nodes[event.node]
        status = LrmsReport(event.payload["status"])
        self.timeline.log(self.now, EventKind.LRMS_REPORT.value, event.node, status=status.value)
        actions = on_lrms_report(node, status, self.now, self.policy, self.boot_deadlines.get(event.node))
        for action in actions:
            self._log_action(action)
            if action.kind == ActionKind.MARK_FAILED:
                self.record.set_state(action.node_id, NodeState.FAILED, self.now)
                self.lrms.drain(action.node_id)
                self.failed_nodes.add(action.node_id)
            elif action.kind == ActionKind.SCHEDULE_POWEROFF:
                self.removal_backlog.insert(0, action.node_id)
                if self._request(UpdateKind.REMOVE_NODE, action.node_id) is not None:
                    self.removal_backlog.remove(action.node_id)

    # ---- bookkeeping ----

    def _drain_journal(self) -> None:
        for entry in self.record.journal:
            if entry["kind"] != "state_change":
                detail = {k: v for k, v in entry.items() if k not in ("kind", "t")}
                self.timeline.log(entry["t"], entry["kind"], None, **detail)
                continue
            node_id, t = entry["node"], entry["t"]
            new_state = NodeState(entry["to"])
            node = self.record.nodes[node_id]
            self.timeline.log(t, "state_change", node_id, **{"from": entry["from"], "to": entry["to"]})
            self.timeline.enter_state(node_id, new_state, t)
            if new_state == NodeState.POWERING_ON and entry["from"] == NodeState.OFF.value:
                self._open_session(node_id, t)
            elif new_state == NodeState.OFF:
                self._close_session(node_id, t)
        self.record.journal.clear()

    def _open_session(self, node_id: str, t: float) -> None:
        node = self.record.nodes[node_id]
        site = self.record.sites[node.site_id]
        self.paid_since[node_id] = t
        self.timeline.node_sites[node_id] = node.site_id
        if node.is_worker:
            self.timeline.workers.add(node_id)
            if site.rate_for(node.role).per_hour > 0:
                self.timeline.pay_per_use.add(node_id)

    def _close_session(self, node_id: str, t: float) -> None:
        start = self.paid_since.pop(node_id, None)
        if start is None:
            return
        node = self.record.nodes[node_id]
        site = self.record.sites[node.site_id]
        self.timeline.costs.log_session(node_id, node.site_id, node.role.value, start, t, site.rate_for(node.role))

    def _close(self) -> None:
        for node_id in sorted(self.paid_since):
            self._close_session(node_id, self.now)
        self.timeline.close(self.now)
        summary = summarize(self.timeline)
        utilization = summary["utilization"]
        logger.info(
            f"Simulation finished at t={self.now:.0f}s: {summary['jobs_done']}/{summary['jobs_arrived']} jobs, "
            f"cost {summary['total_cost']:.4f}, utilization "
            + (f"{utilization:.2%}" if utilization is not None else "n/a")
        )


def run_scenario(scenario: Scenario, seed: Optional[int] = None) -> MetricsTimeline:
    """Validate and replay a scenario; identical (scenario, seed) gives identical output"""
    validate_scenario(scenario)
    return Simulation(scenario, seed).run()


def inject_fault(scenario: Scenario, node_id: str, at: float, after_block: Optional[int] = None) -> Scenario:
    """Copy of the scenario with an LRMS 'off' report for node_id at time `at`

    With after_block, `at` counts from the arrival of that (1-based) block.
    """
    fault = FaultSpec(node_id=node_id, at=at, after_block=after_block)
    return scenario.model_copy(update={"faults": [*scenario.faults, fault]})


def compare_scenarios(a: Scenario, b: Scenario, seed: Optional[int] = None) -> dict:
    """Run both scenarios with the same seed; deltas are b minus a"""
    seed = a.seed if seed is None else seed
    with ThreadPoolExecutor(max_workers=2) as pool:
        futures = [pool.submit(run_scenario, scenario, seed) for scenario in (a, b)]
        summary_a, summary_b = (summarize(f.result()) for f in futures)

    util_a, util_b = summary_a["utilization"], summary_b["utilization"]
    return {
        "makespan_delta": summary_b["makespan_s"] - summary_a["makespan_s"],
        "cost_delta": summary_b["total_cost"] - summary_a["total_cost"],
        "utilization_delta": None if util_a is None or util_b is None else util_b - util_a,
        "a": summary_a,
        "b": summary_b,
    }
