"""
Deterministic event core of the simulator.

Simulation time is an integer count of microseconds (ticks) since the start
of the run. Events are ordered by (fire_at, seq); seq is the insertion
counter, so equal-time events come out in the order they were scheduled.
Random numbers come from named streams derived from one master seed, so
drawing more from one stream never shifts another.
"""

import heapq
import logging
import math
import zlib
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

import numpy as np

from errors import CausalityError

logger = logging.getLogger(__name__)

TICKS_PER_MS = 1_000
TICKS_PER_SECOND = 1_000_000


def ms(value):
    """Milliseconds to ticks"""
    return int(round(value * TICKS_PER_MS))


def seconds(value):
    """Seconds to ticks"""
    return int(round(value * TICKS_PER_SECOND))


def to_ms(ticks):
    return ticks / TICKS_PER_MS


def to_seconds(ticks):
    return ticks / TICKS_PER_SECOND


class EventKind(Enum):
    ARRIVAL = "Arrival"
    SERVICE_DONE = "ServiceDone"
    MESSAGE_DELIVERY = "MessageDelivery"
    DEADLINE_EXPIRY = "DeadlineExpiry"
    POLICY_SCAN = "PolicyScan"
    TERMINAL_SUBMIT = "TerminalSubmit"


@dataclass(frozen=True)
class SimEvent:
    fire_at: int
    seq: int
    kind: EventKind
    payload: Any = None


class EventQueue:
    """Future event list with an integer clock"""

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = 0
        self.delivered = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, fire_at, kind, payload=None):
        """Schedule an event at absolute time fire_at and return it"""
        if fire_at < self.now:
            raise CausalityError(
                f"cannot schedule {kind.value} at {fire_at} (now={self.now})"
            )
        event = SimEvent(int(fire_at), self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, (event.fire_at, event.seq, event))
        return event

    def schedule_after(self, delay, kind, payload=None):
        return self.schedule(self.now + delay, kind, payload)

    def peek_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    def next_event(self) -> Optional[SimEvent]:
        """Pop the minimal (fire_at, seq) event and advance the clock to it"""
        if not self._heap:
            return None
        fire_at, _, event = heapq.heappop(self._heap)
        self.now = fire_at
        self.delivered += 1
        return event


def _stream_key(label):
    return zlib.crc32(label.encode("utf-8"))


class RngStream:
    """One named random stream: state derived from (master seed, stream id)"""

    def __init__(self, master_seed, stream_id):
        self.stream_id = stream_id
        seed_seq = np.random.SeedSequence(
            entropy=int(master_seed), spawn_key=(_stream_key(stream_id),)
        )
        self._gen = np.random.default_rng(seed_seq)

    def random(self):
        """Uniform real in [0, 1)"""
        return float(self._gen.random())

    def integers(self, lo, hi):
        """Uniform integer in [lo, hi], both ends inclusive"""
        return int(self._gen.integers(lo, hi, endpoint=True))

    def poisson(self, mean):
        return int(self._gen.poisson(mean))

    def sample(self, population, k):
        """k distinct items of population, uniformly, in draw order"""
        idx = self._gen.choice(len(population), size=k, replace=False)
        return [population[i] for i in idx]


class RngStreams:
    """Factory for the per-purpose streams of one run"""

    def __init__(self, master_seed):
        self.master_seed = int(master_seed)
        self._streams = {}

    def stream(self, stream_id) -> RngStream:
        if stream_id not in self._streams:
            self._streams[stream_id] = RngStream(self.master_seed, stream_id)
        return self._streams[stream_id]


def draw_exponential(s: RngStream, mean):
    """Exponential duration with the given mean (ticks), by inverse CDF"""
    if mean <= 0:
        raise ValueError(f"exponential mean must be positive, got {mean}")
    u = s.random()
    return max(1, int(round(-mean * math.log1p(-u))))


def draw_uniform(s: RngStream, lo, hi, integer=True):
    """Uniform draw in [lo, hi]; the integer variant is inclusive at both ends"""
    if lo > hi:
        raise ValueError(f"inverted bounds: lo={lo} > hi={hi}")
    if integer:
        return s.integers(lo, hi)
    if lo == hi:
        return lo
    return lo + (hi - lo) * s.random()
