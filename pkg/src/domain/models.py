"""
Shared vocabulary: scenario schema (strict pydantic models) and the runtime
value objects passed between the overlay, orchestrator, elasticity and sim
modules.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.settings import (
    DEFAULT_BASE_PREFIX,
    DEFAULT_IDLE_TIMEOUT,
    DEFAULT_POWEROFF_GRACE,
    FAILURE_DETECTION_SECONDS,
    JOB_SETUP_SECONDS,
    MAX_SIMULATED_SECONDS,
    POLICY_TICK_SECONDS,
)


class SiteKind(str, Enum):
    ON_PREMISES = "on_premises"
    PUBLIC = "public"


class NodeRole(str, Enum):
    FRONT_END = "front_end"
    WORKER = "worker"
    VROUTER = "vrouter"
    CENTRAL_POINT = "central_point"
    STAND_ALONE_CLIENT = "stand_alone_client"


class NodeState(str, Enum):
    OFF = "off"
    POWERING_ON = "powering_on"
    IDLE = "idle"
    USED = "used"
    POWEROFF_SCHEDULED = "poweroff_scheduled"
    POWERING_OFF = "powering_off"
    FAILED = "failed"


class JobState(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"


class CipherMode(str, Enum):
    NONE = "none"
    LIGHT = "light"
    FULL = "full"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# Scenario schema

class CostRate(StrictModel):
    per_hour: float = Field(ge=0)
    billing_granularity: int = Field(default=1, ge=1)


class PhaseDurations(StrictModel):
    network_create: float = Field(ge=0)
    vm_create: float = Field(ge=0)
    tunnel_setup: float = Field(ge=0)
    contextualize: float = Field(ge=0)

    @property
    def total(self) -> float:
        """Phase-sum of the provisioning pipeline"""
        return self.network_create + self.vm_create + self.tunnel_setup + self.contextualize


class CloudSite(StrictModel):
    site_id: str
    kind: SiteKind
    max_instances: int = Field(ge=0)
    max_public_ips: int = Field(ge=0)
    supports_private_networks: bool = True
    provisioning_phase_durations: PhaseDurations
    deprovision_duration: float = Field(ge=0)
    billing: CostRate
    vrouter_billing: Optional[CostRate] = None
    availability: float = Field(default=1.0, ge=0, le=1)

    def rate_for(self, role: "NodeRole") -> CostRate:
        if role == NodeRole.VROUTER and self.vrouter_billing is not None:
            return self.vrouter_billing
        return self.billing


class SLA(StrictModel):
    site_id: str
    priority: int = Field(ge=1)


class ClusterTemplate(StrictModel):
    front_end_site: str
    initial_workers: List[Tuple[str, int]] = Field(default_factory=list)
    max_workers: int = Field(ge=0)
    worker_slots: int = Field(default=1, ge=1)
    idle_timeout: float = Field(default=DEFAULT_IDLE_TIMEOUT, ge=0)
    poweroff_grace: float = Field(default=DEFAULT_POWEROFF_GRACE, ge=0)
    site_preferences: List[SLA] = Field(default_factory=list)
    min_workers: Optional[int] = Field(default=None, ge=0)

    @property
    def initial_worker_count(self) -> int:
        return sum(count for _, count in self.initial_workers)

    @property
    def worker_floor(self) -> int:
        if self.min_workers is not None:
            return self.min_workers
        return self.initial_worker_count


class DurationRange(StrictModel):
    min: float = Field(gt=0)
    max: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.min > self.max:
            raise ValueError(f"duration min {self.min} exceeds max {self.max}")
        return self


class WorkloadBlock(StrictModel):
    job_count: int = Field(ge=0)
    inter_block_gap: float = Field(ge=0)
    duration_distribution: DurationRange = DurationRange(min=15.0, max=20.0)
    transfer_seconds: float = Field(default=0.0, ge=0)


class CipherProfile(StrictModel):
    mode: CipherMode = CipherMode.NONE
    throughput_factor: float = Field(default=1.0, gt=0, le=1)
    latency_penalty: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _plain_is_free(self):
        if self.mode == CipherMode.NONE and (self.throughput_factor != 1.0 or self.latency_penalty != 0.0):
            raise ValueError("cipher mode 'none' requires throughput_factor=1 and latency_penalty=0")
        return self


class OverlaySpec(StrictModel):
    base_prefix: str = DEFAULT_BASE_PREFIX
    backup_cp_sites: List[str] = Field(default_factory=list)
    cipher: CipherProfile = CipherProfile()
    manual_subnets: Dict[str, str] = Field(default_factory=dict)


class FaultSpec(StrictModel):
    node_id: str
    at: float = Field(ge=0)
    # 1-based block; when set, `at` counts from that block's arrival
    after_block: Optional[int] = Field(default=None, ge=1)


class SimulationSettings(StrictModel):
    policy_tick: float = Field(default=POLICY_TICK_SECONDS, gt=0)
    max_simulated_time: float = Field(default=MAX_SIMULATED_SECONDS, gt=0)
    setup_duration: float = Field(default=JOB_SETUP_SECONDS, ge=0)
    failure_detection_delay: float = Field(default=FAILURE_DETECTION_SECONDS, ge=0)
    parallel_provisioning: bool = False
    reprovision_failed: bool = True


class Scenario(StrictModel):
    sites: List[CloudSite]
    template: ClusterTemplate
    workload: List[WorkloadBlock]
    overlay: OverlaySpec
    seed: int = 0
    faults: List[FaultSpec] = Field(default_factory=list)
    simulation: SimulationSettings = SimulationSettings()

    def site_map(self) -> Dict[str, CloudSite]:
        return {site.site_id: site for site in self.sites}


# Runtime value objects

@dataclass(frozen=True)
class VMInstance:
    node_id: str
    site_id: Optional[str]
    role: NodeRole
    state: NodeState = NodeState.OFF
    has_public_ip: bool = False
    private_address: Optional[str] = None
    slots: int = 0
    state_since: float = 0.0
    paid_seconds: float = 0.0

    @property
    def is_worker(self) -> bool:
        return self.role in (NodeRole.WORKER, NodeRole.STAND_ALONE_CLIENT)


@dataclass(frozen=True)
class Job:
    job_id: str
    submit_time: float
    processing_duration: float
    state: JobState = JobState.PENDING
    assigned_node: Optional[str] = None
    block: int = 0
    transfer_seconds: float = 0.0


FRONT_END_NODE = "front-end"


def worker_name(index: int) -> str:
    return f"vnode-{index}"


def vrouter_name(site_id: str) -> str:
    return f"vrouter-{site_id}"


def backup_cp_name(site_id: str) -> str:
    return f"cp-{site_id}"


def node_sort_key(node_id: str):
    """Natural ordering so that vnode-2 sorts before vnode-10"""
    head, _, tail = node_id.rpartition("-")
    if tail.isdigit():
        return (head, int(tail), "")
    return (node_id, -1, "")
