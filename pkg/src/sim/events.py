"""
Event queue and seeded random sub-streams for the discrete-event engine
"""

import heapq
import itertools
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np


class EventKind(str, Enum):
    JOB_ARRIVAL = "job_arrival"
    PHASE_DONE = "phase_done"
    LRMS_DISPATCH = "lrms_dispatch"
    JOB_DONE = "job_done"
    POLICY_TICK = "policy_tick"
    LRMS_REPORT = "lrms_report"
    FAULT_INJECTION = "fault_injection"
    POWEROFF_GRACE_ELAPSED = "poweroff_grace_elapsed"


@dataclass(frozen=True, order=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    node: Optional[str] = field(default=None, compare=False)
    payload: Dict[str, Any] = field(default_factory=dict, compare=False)


class EventQueue:
    """Min-heap ordered by (time, seq); seq is assigned at push time"""

    def __init__(self):
        self._heap: List[Event] = []
        self._seq = itertools.count()

    def push(self, time: float, kind: EventKind, node: Optional[str] = None, **payload) -> Event:
        event = Event(time, next(self._seq), EventKind(kind), node, payload)
        heapq.heappush(self._heap, event)
        return event

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


class RandomStream:
    """
    Independent named generators derived from one seed.

    Each name hashes to its own spawn key, so adding draws on one stream never
    shifts another stream's sequence.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            sequence = np.random.SeedSequence(self.seed, spawn_key=(zlib.crc32(name.encode()),))
            self._streams[name] = np.random.default_rng(sequence)
        return self._streams[name]

    def uniform(self, name: str, low: float, high: float) -> float:
        if low == high:
            return float(low)
        return float(self.stream(name).uniform(low, high))
