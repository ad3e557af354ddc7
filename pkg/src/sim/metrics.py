"""
Per-node state timelines, utilization and the run's output files
"""

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set, Union

from src.domain.models import NodeState, node_sort_key
from src.sim.billing import CostTracker


@dataclass
class StateInterval:
    state: NodeState
    enter: float
    exit: Optional[float] = None

    @property
    def duration(self) -> float:
        return (self.exit if self.exit is not None else self.enter) - self.enter


@dataclass
class MetricsTimeline:
    intervals: Dict[str, List[StateInterval]] = field(default_factory=lambda: defaultdict(list))
    node_sites: Dict[str, str] = field(default_factory=dict)
    workers: Set[str] = field(default_factory=set)
    pay_per_use: Set[str] = field(default_factory=set)
    costs: CostTracker = field(default_factory=CostTracker)
    events: List[dict] = field(default_factory=list)
    jobs_arrived: int = 0
    jobs_done: int = 0
    makespan: float = 0.0

    def log(self, t: float, kind: str, node: Optional[str] = None, **detail) -> None:
        self.events.append({"t": t, "seq": len(self.events), "kind": kind, "node": node, "detail": detail})

    def enter_state(self, node_id: str, state: NodeState, t: float) -> None:
        history = self.intervals[node_id]
        if history and history[-1].exit is None:
            history[-1].exit = t
        history.append(StateInterval(state, t))

    def close(self, end: float) -> None:
        for history in self.intervals.values():
            if history and history[-1].exit is None:
                history[-1].exit = end
        self.makespan = end

    def _seconds_in(self, node_id: str, states) -> float:
        return sum(i.duration for i in self.intervals.get(node_id, []) if i.state in states)

    def paid_seconds(self, node_id: str) -> float:
        return self._seconds_in(node_id, set(NodeState) - {NodeState.OFF})

    def used_seconds(self, node_id: str) -> float:
        return self._seconds_in(node_id, {NodeState.USED})

    def nodes(self) -> List[str]:
        return sorted(self.intervals, key=node_sort_key)


def summarize(timeline: MetricsTimeline) -> dict:
    """Makespan, busy time, per-site cost and effective utilization of pay-per-use workers"""
    busy_by_site: Dict[str, float] = defaultdict(float)
    paid_by_site: Dict[str, float] = defaultdict(float)
    for node_id in timeline.nodes():
        site = timeline.node_sites.get(node_id)
        if site is None:
            continue
        paid_by_site[site] += timeline.paid_seconds(node_id)
        if node_id in timeline.workers:
            busy_by_site[site] += timeline.used_seconds(node_id)

    paid = sum(timeline.paid_seconds(n) for n in timeline.pay_per_use)
    used = sum(timeline.used_seconds(n) for n in timeline.pay_per_use)
    utilization = used / paid if timeline.jobs_done and paid > 0 else None

    cost_by_site = {site: timeline.costs.cost_by_site.get(site, 0.0) for site in sorted(paid_by_site)}
    return {
        "makespan_s": timeline.makespan,
        "busy_s": sum(busy_by_site.values()),
        "paid_s_by_site": dict(sorted(paid_by_site.items())),
        "cost_by_site": cost_by_site,
        "utilization": utilization,
        "total_cost": sum(cost_by_site.values()),
        "busy_s_by_site": dict(sorted(busy_by_site.items())),
        "jobs_arrived": timeline.jobs_arrived,
        "jobs_done": timeline.jobs_done,
    }


def write_events(timeline: MetricsTimeline, path: Union[str, Path]) -> None:
    with open(path, "w") as f:
        for entry in timeline.events:
            f.write(json.dumps(entry) + "\n")


def write_timeline_csv(timeline: MetricsTimeline, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["node", "state", "enter_s", "exit_s"])
        for node_id in timeline.nodes():
            for interval in timeline.intervals[node_id]:
                writer.writerow([node_id, interval.state.value, interval.enter, interval.exit])


def write_summary(summary: dict, path: Union[str, Path]) -> None:
    with open(path, "w") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
