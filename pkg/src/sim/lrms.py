"""
Minimal FIFO batch scheduler standing in for the cluster's LRMS
"""

import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Deque, Dict, List, Mapping, Optional, Set

from config.settings import JOB_SETUP_SECONDS
from src.domain.models import Job, JobState, NodeState, VMInstance, node_sort_key
from src.sim.events import RandomStream

logger = logging.getLogger("hybrid_cluster.sim")

JOB_DURATION_STREAM = "job_durations"


@dataclass(frozen=True)
class JobCostModel:
    setup_duration: float = JOB_SETUP_SECONDS


@dataclass(frozen=True)
class Dispatch:
    job: Job
    node_id: str
    started_at: float
    finishes_at: float
    cold_start: bool


def sample_processing(stream: RandomStream, low: float = 15.0, high: float = 20.0) -> float:
    """Uniform processing time from the job-duration sub-stream, millisecond resolution"""
    value = round(stream.uniform(JOB_DURATION_STREAM, low, high), 3)
    return min(max(value, low), high)


class LrmsModel:
    def __init__(self):
        self.pending: Deque[Job] = deque()
        self.running: Dict[str, Dict[str, Job]] = {}
        self.slots: Dict[str, int] = {}
        self.cold_nodes: Set[str] = set()
        self.drained: Set[str] = set()
        self.done: List[Job] = []

    def submit(self, job: Job) -> None:
        self.pending.append(job)

    def power_cycle(self, node_id: str, slots: int) -> None:
        """A node joined the cluster: its first job pays the setup cost again"""
        self.slots[node_id] = slots
        self.cold_nodes.add(node_id)
        self.drained.discard(node_id)

    def drain(self, node_id: str) -> None:
        """Stop dispatching to a node; jobs already running may finish"""
        self.drained.add(node_id)

    def running_on(self, node_id: str) -> int:
        return len(self.running.get(node_id, {}))

    @property
    def running_count(self) -> int:
        return sum(len(jobs) for jobs in self.running.values())

    def complete(self, node_id: str, job_id: str, now: float) -> Job:
        job = self.running[node_id].pop(job_id)
        finished = replace(job, state=JobState.DONE)
        self.done.append(finished)
        return finished


def lrms_step(
    model: LrmsModel,
    nodes: Mapping[str, VMInstance],
    now: float,
    cost: JobCostModel,
    transfer_time: Optional[Callable[[Job, str], float]] = None,
) -> List[Dispatch]:
    """Dispatch pending jobs FIFO onto the lowest-id nodes with a free slot"""
    dispatches: List[Dispatch] = []
    if not model.pending:
        return dispatches

    ready = sorted(
        (n for n in nodes.values()
         if n.is_worker and n.state in (NodeState.IDLE, NodeState.USED) and n.node_id not in model.drained),
        key=lambda n: node_sort_key(n.node_id),
    )
    for node in ready:
        free = model.slots.get(node.node_id, node.slots) - model.running_on(node.node_id)
        while free > 0 and model.pending:
            job = model.pending.popleft()
            cold = node.node_id in model.cold_nodes
            model.cold_nodes.discard(node.node_id)
            duration = job.processing_duration + (cost.setup_duration if cold else 0.0)
            if transfer_time is not None:
                duration += transfer_time(job, node.node_id)
            running = replace(job, state=JobState.RUNNING, assigned_node=node.node_id)
            model.running.setdefault(node.node_id, {})[job.job_id] = running
            dispatches.append(Dispatch(running, node.node_id, now, now + duration, cold))
            free -= 1
        if not model.pending:
            break
    if dispatches:
        logger.debug(f"t={now}: dispatched {len(dispatches)} job(s), {len(model.pending)} pending")
    return dispatches
