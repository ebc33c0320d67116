"""
Per-site CPU and disk servers.

Each server is non-preemptive and serves one request at a time. EDF orders
the waiting line by the owning transaction's deadline (ties by submission
order); FCFS by submission order only.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Optional

from engine import EventKind, EventQueue
from errors import InvariantViolation
from sim_config import Discipline

logger = logging.getLogger(__name__)


class RequestKind(Enum):
    PAGE_CPU = "PageCPU"
    PAGE_DISK = "PageDisk"
    FORCED_LOG_WRITE = "ForcedLogWrite"
    MESSAGE_CPU = "MessageCPU"


CPU_KINDS = (RequestKind.PAGE_CPU, RequestKind.MESSAGE_CPU)


@dataclass(eq=False)
class ServiceRequest:
    """One unit of work for a CPU or a disk"""

    txn: Any                                # workload.Transaction
    site: int
    kind: RequestKind
    service_time: int
    priority_key: int
    on_done: Optional[Callable[[], None]] = None
    seq: int = -1
    cancelled: bool = False
    started_at: Optional[int] = None

    @property
    def txn_id(self):
        return self.txn.id if self.txn is not None else None


class Server:
    """A single-slot server with its waiting line"""

    def __init__(self, name, discipline: Discipline):
        self.name = name
        self.discipline = discipline
        self.queue = []
        self.in_service: Optional[ServiceRequest] = None
        self.busy_time = 0
        self.max_queue = 0
        self.completed = 0

    @property
    def idle(self):
        return self.in_service is None

    def pick_next(self):
        if not self.queue:
            return None
        if self.discipline is Discipline.EDF:
            idx = min(range(len(self.queue)),
                      key=lambda i: (self.queue[i].priority_key, self.queue[i].seq))
        else:
            idx = 0
        return self.queue.pop(idx)


class SiteResources:
    """One CPU and one disk at a site"""

    def __init__(self, site, discipline: Discipline, events: EventQueue, horizon=None):
        self.site = site
        self.events = events
        self.horizon = horizon
        self.cpu = Server("cpu", discipline)
        self.disk = Server("disk", discipline)
        self._seq = 0

    def server_for(self, kind: RequestKind) -> Server:
        return self.cpu if kind in CPU_KINDS else self.disk

    def server(self, name) -> Server:
        return self.cpu if name == "cpu" else self.disk

    def submit(self, r: ServiceRequest):
        """Start r now if its server is idle, otherwise queue it"""
        if r.site != self.site:
            raise InvariantViolation(f"request for site {r.site} submitted to site {self.site}")
        if r.service_time <= 0:
            raise InvariantViolation(f"{r.kind.value} request with service time {r.service_time}")
        r.seq = self._seq
        self._seq += 1
        server = self.server_for(r.kind)
        if server.idle:
            self._start(server, r)
        else:
            server.queue.append(r)
            server.max_queue = max(server.max_queue, len(server.queue))

    def _start(self, server: Server, r: ServiceRequest):
        now = self.events.now
        server.in_service = r
        r.started_at = now
        if self.horizon is None:
            server.busy_time += r.service_time
        else:
            server.busy_time += max(0, min(r.service_time, self.horizon - now))
        self.events.schedule(now + r.service_time, EventKind.SERVICE_DONE,
                             (self.site, server.name))

    def on_service_done(self, name) -> ServiceRequest:
        """Release the finished request and start the next one"""
        server = self.server(name)
        finished = server.in_service
        if finished is None:
            raise InvariantViolation(f"site {self.site} {name}: completion with nothing in service")
        server.in_service = None
        server.completed += 1
        nxt = server.pick_next()
        if nxt is not None:
            self._start(server, nxt)
        return finished

    def purge(self, txn_id):
        """Drop every queued request of txn_id; flag its in-service slots"""
        removed = 0
        for server in (self.cpu, self.disk):
            keep = [r for r in server.queue if r.txn_id != txn_id]
            removed += len(server.queue) - len(keep)
            server.queue = keep
            if server.in_service is not None and server.in_service.txn_id == txn_id:
                server.in_service.cancelled = True
        if removed:
            logger.debug(f"site {self.site}: purged {removed} requests of txn {txn_id}")
        return removed

    def rekey(self, txn_id, priority_key):
        """New EDF key for the queued requests of txn_id"""
        for server in (self.cpu, self.disk):
            for r in server.queue:
                if r.txn_id == txn_id:
                    r.priority_key = priority_key
            if server.in_service is not None and server.in_service.txn_id == txn_id:
                server.in_service.priority_key = priority_key

    def queued(self, txn_id=None):
        items = self.cpu.queue + self.disk.queue
        if txn_id is None:
            return len(items)
        return sum(1 for r in items if r.txn_id == txn_id)
