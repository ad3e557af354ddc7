"""
Cost tracking for simulated cloud usage
"""

import logging
import math
from collections import defaultdict
from typing import Dict, List

from src.domain.models import CostRate

logger = logging.getLogger("hybrid_cluster.sim")

SECONDS_PER_HOUR = 3600.0


def accrue_cost(interval: float, rate: CostRate) -> float:
    """Price a paid interval, rounded up to the billing granularity"""
    if interval <= 0 or rate.per_hour == 0:
        return 0.0
    gran = rate.billing_granularity
    billed = math.ceil(interval / gran) * gran
    return billed * rate.per_hour / SECONDS_PER_HOUR


class CostTracker:
    """One billing session per contiguous paid span of a node"""

    def __init__(self):
        self.sessions: List[dict] = []
        self.cost_by_site: Dict[str, float] = defaultdict(float)
        self.paid_by_site: Dict[str, float] = defaultdict(float)
        self.total_cost = 0.0

    def log_session(self, node_id: str, site_id: str, role: str, start: float, end: float, rate: CostRate) -> float:
        interval = end - start
        session_cost = accrue_cost(interval, rate)
        self.sessions.append({
            "node": node_id,
            "site": site_id,
            "role": role,
            "start_s": start,
            "end_s": end,
            "per_hour": rate.per_hour,
            "session_cost": session_cost,
        })
        self.cost_by_site[site_id] += session_cost
        self.paid_by_site[site_id] += interval
        self.total_cost += session_cost
        logger.debug(f"{node_id}@{site_id}: {interval:.0f}s billed {session_cost:.4f}")
        return session_cost

    def get_summary(self) -> dict:
        return {
            "total_cost": self.total_cost,
            "cost_by_site": dict(sorted(self.cost_by_site.items())),
            "paid_s_by_site": dict(sorted(self.paid_by_site.items())),
            "session_count": len(self.sessions),
        }
