"""
Statistics sink: per-run counters, MissPercent, throughput and replication
merging.
"""

import logging
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import List, Optional

import numpy as np
from scipy.stats import binomtest

from engine import to_ms, to_seconds
from errors import InvariantViolation
from sim_config import NORMAL_LOAD_MAX_PERCENT

logger = logging.getLogger(__name__)


class LoadClass(Enum):
    NORMAL = "Normal"
    HEAVY = "Heavy"
    NO_DATA = "NoData"


_PER_SITE = ("site_generated", "site_committed", "site_missed", "cpu_busy", "disk_busy")
_MAXED = ("max_cpu_queue", "max_disk_queue")
_LISTS = ("response_times", "commit_phase_times", "seeds")


@dataclass
class RunStats:
    """Counters of one run, or of several merged runs"""

    fingerprint: Optional[str] = None
    num_sites: int = 0
    generated: int = 0
    committed_in_time: int = 0
    missed: int = 0
    vetoed: int = 0
    in_flight: int = 0
    response_sum: int = 0
    response_sumsq: int = 0
    grants_issued: int = 0
    agent_grants: int = 0
    wasted_service_time: int = 0
    sim_duration: int = 0                   # measured window, ticks
    elapsed: int = 0                        # whole run, ticks
    write_transactions: int = 0
    read_transactions: int = 0
    pages_read: int = 0
    pages_written: int = 0
    protocol_messages: int = 0
    work_done_messages: int = 0
    forced_writes: int = 0
    end_records: int = 0
    purged_requests: int = 0
    site_generated: List[int] = field(default_factory=list)
    site_committed: List[int] = field(default_factory=list)
    site_missed: List[int] = field(default_factory=list)
    cpu_busy: List[int] = field(default_factory=list)
    disk_busy: List[int] = field(default_factory=list)
    max_cpu_queue: List[int] = field(default_factory=list)
    max_disk_queue: List[int] = field(default_factory=list)
    response_times: List[int] = field(default_factory=list)
    commit_phase_times: List[int] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)

    @classmethod
    def for_sites(cls, num_sites, fingerprint=None):
        zeros = lambda: [0] * num_sites  # noqa: E731
        return cls(fingerprint=fingerprint, num_sites=num_sites,
                   site_generated=zeros(), site_committed=zeros(), site_missed=zeros(),
                   cpu_busy=zeros(), disk_busy=zeros(),
                   max_cpu_queue=zeros(), max_disk_queue=zeros())

    @property
    def finished(self):
        return self.committed_in_time + self.missed

    @property
    def empty(self):
        return self.fingerprint is None and self.generated == 0 and not self.seeds

    def record_commit(self, site, response):
        self.committed_in_time += 1
        self.site_committed[site] += 1
        self.response_sum += response
        self.response_sumsq += response * response
        self.response_times.append(response)

    def record_miss(self, site, vetoed=False):
        self.missed += 1
        self.site_missed[site] += 1
        if vetoed:
            self.vetoed += 1


def miss_percent(s: RunStats):
    """(percent, load class); percent is None when nothing finished"""
    if s.finished == 0:
        return None, LoadClass.NO_DATA
    percent = 100.0 * s.missed / s.finished
    load = LoadClass.NORMAL if percent <= NORMAL_LOAD_MAX_PERCENT else LoadClass.HEAVY
    return percent, load


def throughput(s: RunStats):
    """In-time commits per simulated second of the measured window"""
    if s.sim_duration <= 0:
        return 0.0
    return s.committed_in_time / to_seconds(s.sim_duration)


def mean_response_ms(s: RunStats):
    if s.committed_in_time == 0:
        return None
    return to_ms(s.response_sum / s.committed_in_time)


def p95_response_ms(s: RunStats):
    if not s.response_times:
        return None
    return to_ms(float(np.percentile(np.asarray(s.response_times), 95)))


def mean_commit_phase_ms(s: RunStats):
    if not s.commit_phase_times:
        return None
    return to_ms(float(np.mean(s.commit_phase_times)))


def response_variance_ms2(s: RunStats):
    n = s.committed_in_time
    if n < 2:
        return None
    mean = s.response_sum / n
    var = (s.response_sumsq - n * mean * mean) / (n - 1)
    return max(0.0, var) / 1e6


def utilization(s: RunStats):
    """Per-site (cpu, disk) busy fractions over the run"""
    if s.elapsed <= 0:
        return [(0.0, 0.0)] * s.num_sites
    return [(c / s.elapsed, d / s.elapsed) for c, d in zip(s.cpu_busy, s.disk_busy)]


def merge(a: RunStats, b: RunStats) -> RunStats:
    """Counter-wise sum of two results of the same configuration"""
    if a.empty:
        return _copy(b)
    if b.empty:
        return _copy(a)
    if a.fingerprint != b.fingerprint:
        raise InvariantViolation(
            f"cannot merge stats of different configs ({a.fingerprint} vs {b.fingerprint})"
        )
    out = RunStats(fingerprint=a.fingerprint, num_sites=a.num_sites)
    for f in fields(RunStats):
        name = f.name
        if name in ("fingerprint", "num_sites"):
            continue
        x, y = getattr(a, name), getattr(b, name)
        if name in _PER_SITE:
            setattr(out, name, [i + j for i, j in zip(x, y)])
        elif name in _MAXED:
            setattr(out, name, [max(i, j) for i, j in zip(x, y)])
        elif name in _LISTS:
            setattr(out, name, list(x) + list(y))
        else:
            setattr(out, name, x + y)
    return out


def _copy(s: RunStats):
    out = RunStats()
    for f in fields(RunStats):
        value = getattr(s, f.name)
        setattr(out, f.name, list(value) if isinstance(value, list) else value)
    return out


def merge_all(results):
    total = RunStats()
    for r in results:
        total = merge(total, r)
    return total


def check_conservation(s: RunStats):
    if s.generated != s.committed_in_time + s.missed + s.in_flight:
        raise InvariantViolation(
            f"conservation failed: generated {s.generated} != committed {s.committed_in_time}"
            f" + missed {s.missed} + in-flight {s.in_flight}"
        )
    if sum(s.site_generated) != s.generated:
        raise InvariantViolation("per-site generated counts do not add up")


def paired_wins(a, b):
    """(wins, losses) of a over b where smaller is better; ties dropped"""
    wins = sum(1 for x, y in zip(a, b) if x < y)
    losses = sum(1 for x, y in zip(a, b) if x > y)
    return wins, losses


def sign_test(wins, losses):
    """One-sided sign test p-value for 'wins happen more often'"""
    n = wins + losses
    if n == 0:
        return 1.0
    return float(binomtest(wins, n, 0.5, alternative="greater").pvalue)


def to_row(s: RunStats):
    """Aggregate CSV columns of one result, as formatted strings"""
    percent, _ = miss_percent(s)
    mean_rt = mean_response_ms(s)
    p95 = p95_response_ms(s)
    return {
        "seed_count": str(len(s.seeds)),
        "generated": str(s.generated),
        "committed_in_time": str(s.committed_in_time),
        "missed": str(s.missed),
        "miss_percent": _fmt(percent),
        "throughput_tps": _fmt(throughput(s)),
        "mean_response_ms": _fmt(mean_rt),
        "p95_response_ms": _fmt(p95),
        "grants_issued": str(s.grants_issued),
        "wasted_ms": _fmt(to_ms(s.wasted_service_time)),
    }


def per_site_rows(s: RunStats):
    rows = []
    for site, (cpu, disk) in enumerate(utilization(s)):
        finished = s.site_committed[site] + s.site_missed[site]
        percent = 100.0 * s.site_missed[site] / finished if finished else None
        rows.append({
            "site": str(site),
            "generated": str(s.site_generated[site]),
            "committed_in_time": str(s.site_committed[site]),
            "missed": str(s.site_missed[site]),
            "miss_percent": _fmt(percent),
            "cpu_util": _fmt(cpu),
            "disk_util": _fmt(disk),
        })
    return rows


def _fmt(value):
    if value is None:
        return ""
    return f"{value:.4f}"


def summary_line(s: RunStats):
    percent, load = miss_percent(s)
    shown = "n/a" if percent is None else f"{percent:.2f}%"
    phase = mean_commit_phase_ms(s)
    line = (
        f"generated={s.generated} committed={s.committed_in_time} missed={s.missed} "
        f"in_flight={s.in_flight} MissPercent={shown} ({load.value}) "
        f"throughput={throughput(s):.3f} tps"
    )
    if phase is not None:
        line += f" commit_phase={phase:.1f} ms"
    return line
