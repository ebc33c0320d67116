"""
Transaction source: arrival processes, master/cohort construction and
firm deadlines (DT = AT + SF * RT).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, List, Optional, Tuple

from commit import commit_cost
from engine import TICKS_PER_SECOND, RngStream, RngStreams, draw_exponential, draw_uniform
from errors import InvariantViolation, WorkloadError
from sim_config import ArrivalProcess, WorkloadConfig, WorkloadMode
from topology import FileMap, cohort_sites, select_execution_sites

logger = logging.getLogger(__name__)


class TxnState(Enum):
    GENERATED = "Generated"
    EXECUTING = "Executing"
    COMMITTING = "Committing"
    COMMITTED = "Committed"
    MISSED = "Missed"


_NEXT_STATES = {
    TxnState.GENERATED: {TxnState.EXECUTING},
    TxnState.EXECUTING: {TxnState.COMMITTING, TxnState.MISSED},
    TxnState.COMMITTING: {TxnState.COMMITTED, TxnState.MISSED},
    TxnState.COMMITTED: set(),
    TxnState.MISSED: set(),
}


@dataclass(eq=False)
class Cohort:
    """Work of one transaction at one site"""

    txn_id: int
    index: int
    site: int
    pages: List[Tuple[int, bool]]           # (page id, is_write)
    pages_done: int = 0
    started: bool = False
    cstate: Any = None                      # commit.CohortState

    @property
    def remaining_pages(self):
        return len(self.pages) - self.pages_done

    @property
    def writes(self):
        return sum(1 for _, is_write in self.pages if is_write)


@dataclass(eq=False)
class Transaction:
    """Master record of one transaction plus its run-time bookkeeping"""

    id: int
    origin: int
    arrival_time: int
    cohorts: List[Cohort]
    centralized: bool = False
    resource_time: int = 0
    deadline: int = 0
    base_deadline: int = 0
    state: TxnState = TxnState.GENERATED
    grants: int = 0
    counted: bool = True
    terminal: Optional[int] = None

    master: Any = None                      # commit.MasterState
    commit_time: Optional[int] = None
    all_work_done_at: Optional[int] = None
    decision_writes_done: int = 0           # prepared records + master commit record
    served_time: int = 0
    forced_writes: int = 0
    messages: int = 0
    killed: bool = False
    vetoed: bool = False
    finished: bool = False

    @property
    def pages_total(self):
        return sum(len(c.pages) for c in self.cohorts)

    @property
    def has_write(self):
        return any(c.writes for c in self.cohorts)

    @property
    def decided(self):
        return self.state in (TxnState.COMMITTED, TxnState.MISSED)

    def advance(self, new_state: TxnState):
        if new_state not in _NEXT_STATES[self.state]:
            raise InvariantViolation(
                f"txn {self.id}: illegal transition {self.state.value} -> {new_state.value}"
            )
        self.state = new_state


@dataclass
class SiteStreams:
    """The random streams one origin site draws its workload from"""

    arrivals: RngStream
    placement: RngStream
    page_selection: RngStream
    write_coin: RngStream
    think_time: RngStream

    @classmethod
    def for_site(cls, streams: RngStreams, site):
        return cls(
            arrivals=streams.stream(f"arrivals:{site}"),
            placement=streams.stream(f"placement:{site}"),
            page_selection=streams.stream(f"page-selection:{site}"),
            write_coin=streams.stream(f"write-coin:{site}"),
            think_time=streams.stream(f"think-time:{site}"),
        )


def generate_arrivals(cfg: WorkloadConfig, site, horizon, rng: RngStream):
    """Yield arrival instants at one site, strictly before horizon"""
    if horizon <= 0:
        return
    if cfg.arrival_process is ArrivalProcess.EXPONENTIAL:
        mean_gap = TICKS_PER_SECOND / cfg.arrival_rate
        t = 0
        while True:
            t += draw_exponential(rng, mean_gap)
            if t >= horizon:
                return
            yield t
    else:
        # one Poisson-sized batch at every whole second
        for k in range(math.ceil(horizon / TICKS_PER_SECOND)):
            at = k * TICKS_PER_SECOND
            for _ in range(rng.poisson(cfg.arrival_rate)):
                yield at


def _cohort_page_count(cfg, rng):
    scale = draw_uniform(rng, 0.5, 1.5, integer=False)
    return max(1, int(round(scale * cfg.cohort_size)))


def build_transaction(cfg: WorkloadConfig, txn_id, origin, at, fmap: FileMap,
                      streams: SiteStreams) -> Transaction:
    """Pick files, cohort sites and page lists, then stamp RT and DT"""
    if cfg.dist_degree > fmap.num_files:
        raise WorkloadError(
            f"DistDegree {cfg.dist_degree} exceeds the {fmap.num_files} available files"
        )
    files = streams.placement.sample(list(range(fmap.num_files)), cfg.dist_degree)
    chosen = select_execution_sites(origin, files, fmap, streams.placement)

    cohorts = []
    for index, site in enumerate(cohort_sites(chosen)):
        pool = []
        for f, s in zip(files, chosen):
            if s == site:
                pool.extend(fmap.pages_of(f))
        pool.sort()
        count = min(_cohort_page_count(cfg, streams.page_selection), len(pool))
        picked = streams.page_selection.sample(pool, count)
        pages = [(page, streams.write_coin.random() < cfg.write_prob) for page in picked]
        cohorts.append(Cohort(txn_id=txn_id, index=index, site=site, pages=pages))

    t = Transaction(
        id=txn_id,
        origin=origin,
        arrival_time=at,
        cohorts=cohorts,
        centralized=fmap.num_sites == 1,
    )
    t.resource_time = estimate_resource_time(t, cfg)
    t.deadline = assign_deadline(at, cfg.slack_factor, t.resource_time)
    t.base_deadline = t.deadline
    return t


def estimate_resource_time(t: Transaction, cfg: WorkloadConfig):
    """RT: page service demand, plus forced log writes when enabled"""
    rt = t.pages_total * (cfg.page_cpu + cfg.page_disk)
    if cfg.include_commit_cost:
        rt += commit_cost(t).forced_writes * cfg.page_disk
    return rt


def assign_deadline(at, sf, rt):
    if sf <= 0:
        raise WorkloadError(f"slack factor must be > 0, got {sf}")
    if rt <= 0:
        raise WorkloadError(f"resource time must be > 0, got {rt}")
    return at + int(round(sf * rt))


def terminal_resubmit(cfg: WorkloadConfig, completion, rng: RngStream):
    """Next submission time of a closed-workload terminal"""
    if cfg.mode is not WorkloadMode.CLOSED:
        raise WorkloadError("terminal_resubmit is only defined for the Closed workload")
    return completion + draw_uniform(rng, 0, cfg.terminal_think_max)
