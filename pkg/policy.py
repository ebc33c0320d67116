"""
Firm-deadline enforcement and slack management.

Slack is what is left of the deadline once the estimated remaining work is
taken off: slack = DT - now - remaining_work. Two regimes act on it at every
scan. DynamicRedistribution pools a fraction of the positive slack and hands
it to the cheapest-to-rescue negative-slack transactions. IntelligentAgent
re-applies the deadline formula with a boosted slack factor to transactions
that are only slightly late, within a global budget.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Tuple

from errors import InvariantViolation
from sim_config import SlackPolicyConfig, WorkloadConfig

logger = logging.getLogger(__name__)


class Decision(Enum):
    KEEP = "Keep"
    KILL = "Kill"


class Grant(NamedTuple):
    txn_id: int
    new_deadline: int


def forced_writes_to_decision(t):
    """Forced writes up to and including the master's commit record"""
    return 1 if t.centralized else len(t.cohorts) + 1


def remaining_work(t, wcfg: WorkloadConfig):
    page_cost = wcfg.page_cpu + wcfg.page_disk
    pages_left = sum(c.remaining_pages for c in t.cohorts)
    writes_left = max(0, forced_writes_to_decision(t) - t.decision_writes_done)
    return pages_left * page_cost + writes_left * wcfg.page_disk


def compute_slack(t, now, wcfg: WorkloadConfig):
    return t.deadline - now - remaining_work(t, wcfg)


@dataclass
class SlackLedger:
    """Per-run accounting of pools and grants"""

    scans: int = 0
    pool_total: int = 0
    granted_total: int = 0
    grants_issued: int = 0
    agent_grants: int = 0
    pool_history: List[int] = field(default_factory=list)
    # (grants before, generated so far) at each agent grant
    agent_history: List[Tuple[int, int]] = field(default_factory=list)

    def record_scan(self, pool, granted):
        if pool < 0:
            raise InvariantViolation(f"negative slack pool {pool}")
        if granted > pool:
            raise InvariantViolation(f"granted {granted} exceeds pool {pool} in scan {self.scans}")
        self.scans += 1
        self.pool_total += pool
        self.granted_total += granted
        self.pool_history.append(pool)


def redistribute_slack(active, now, wcfg: WorkloadConfig, pcfg: SlackPolicyConfig,
                       ledger: SlackLedger) -> List[Grant]:
    """Move part of the positive slack to negative-slack transactions.

    Donor deadlines are left alone; the pool is accounting only.
    """
    slacks = [(compute_slack(t, now, wcfg), t) for t in active]
    surplus = sum(s for s, _ in slacks if s > 0)
    pool = int(pcfg.donation_fraction * surplus)
    available = pool

    needy = sorted(((-s, t.id, t) for s, t in slacks if s < 0), key=lambda x: (x[0], x[1]))
    grants = []
    for deficit, _, t in needy:
        if t.grants >= pcfg.max_grants_per_txn:
            continue
        extension = deficit + pcfg.grant_margin
        if extension > available:
            # later candidates have larger deficits
            break
        available -= extension
        grants.append(Grant(t.id, t.deadline + extension))

    ledger.record_scan(pool, pool - available)
    ledger.grants_issued += len(grants)
    if grants:
        logger.debug(f"redistribution at {now}: pool {pool}, {len(grants)} grants")
    return grants


def agent_scan(active, now, wcfg: WorkloadConfig, pcfg: SlackPolicyConfig,
               ledger: SlackLedger, generated_so_far) -> List[Grant]:
    """Boost the slack factor of transactions just past the feasible point"""
    candidates = []
    for t in active:
        slack = compute_slack(t, now, wcfg)
        if -pcfg.agent_threshold * t.resource_time <= slack < 0:
            candidates.append((-slack, t.id, t))
    candidates.sort(key=lambda x: (x[0], x[1]))

    grants = []
    for _, _, t in candidates:
        if t.grants >= pcfg.max_grants_per_txn:
            continue
        if ledger.agent_grants >= pcfg.agent_budget * generated_so_far:
            break
        boosted = wcfg.slack_factor + (t.grants + 1) * pcfg.agent_delta_sf
        new_deadline = t.arrival_time + int(round(boosted * t.resource_time))
        if new_deadline <= t.deadline:
            continue
        ledger.agent_history.append((ledger.agent_grants, generated_so_far))
        ledger.agent_grants += 1
        grants.append(Grant(t.id, new_deadline))

    ledger.record_scan(0, 0)
    ledger.grants_issued += len(grants)
    if grants:
        logger.debug(f"agent at {now}: {len(grants)} grants ({ledger.agent_grants} total)")
    return grants


def enforce_deadline(t, now):
    """Firm deadline check run when DT has passed"""
    if t.commit_time is not None and t.commit_time <= t.deadline:
        return Decision.KEEP
    return Decision.KILL
