"""
One simulation run.

Simulation wires the transaction manager (masters and cohorts), the network
manager (message CPU cost, zero wire time), the per-site resources and the
slack policy around a single event queue, and feeds outcomes to RunStats.
"""

import logging
from functools import partial
from typing import Optional

from commit import (
    AllWorkDone,
    CohortPhase,
    CohortState,
    Decide,
    Discard,
    Finish,
    ForceWrite,
    Kill,
    LogForced,
    LogRecord,
    MasterPhase,
    MasterState,
    MessageKind,
    NotifyMaster,
    Outcome,
    PagesComplete,
    ProtocolMessage,
    ProtocolTrace,
    Send,
    Start,
    StartCohort,
    WriteEnd,
    cohort_on_event,
    event_label,
    master_on_event,
)
from engine import EventKind, EventQueue, RngStreams, draw_uniform
from errors import InvariantViolation, SimulationError
from metrics import RunStats, check_conservation, summary_line
from policy import Decision, SlackLedger, agent_scan, enforce_deadline, redistribute_slack
from resources import RequestKind, ServiceRequest, SiteResources
from sim_config import ExecMode, ExperimentConfig, PolicyRegime, WorkloadMode
from topology import place_files
from workload import (
    SiteStreams,
    Transaction,
    TxnState,
    build_transaction,
    generate_arrivals,
    terminal_resubmit,
)

logger = logging.getLogger(__name__)

_TO_MASTER = (MessageKind.WORK_DONE, MessageKind.VOTE_YES, MessageKind.VOTE_NO, MessageKind.ACK)


class Simulation:
    """A single deterministic run of one configuration"""

    def __init__(self, cfg: ExperimentConfig, trace: Optional[ProtocolTrace] = None,
                 keep_transactions=False, transactions=None):
        self.cfg = cfg
        self.wcfg = cfg.workload()
        self.pcfg = cfg.policy()
        self.trace = trace
        self.keep_transactions = keep_transactions

        self.events = EventQueue()
        self.streams = RngStreams(cfg.seed)
        self.horizon = cfg.horizon
        self.warmup_end = int(round(cfg.warmup_fraction * self.horizon))
        self.msg_cpu = cfg.msg_cpu
        self.sequential = cfg.exec_mode is ExecMode.SEQUENTIAL

        self.fmap = place_files(cfg.dbsize, cfg.num_sites, cfg.files_per_site,
                                cfg.replication, self.streams.stream("topology"))
        self.sites = [SiteResources(s, cfg.discipline, self.events, self.horizon)
                      for s in range(cfg.num_sites)]
        self.site_streams = [SiteStreams.for_site(self.streams, s)
                             for s in range(cfg.num_sites)]
        self.vote_stream = self.streams.stream("vote")

        self.ledger = SlackLedger()
        self.stats = RunStats.for_sites(cfg.num_sites, cfg.fingerprint())
        self.stats.seeds = [cfg.seed]

        self.active = {}
        self.transactions = []
        self.generated_total = 0
        self._next_id = 0
        self._arrivals = {}
        self._injected = list(transactions) if transactions is not None else None
        self._ran = False

        self._handlers = {
            EventKind.ARRIVAL: self._on_arrival,
            EventKind.TERMINAL_SUBMIT: self._on_terminal_submit,
            EventKind.SERVICE_DONE: self._on_service_done,
            EventKind.MESSAGE_DELIVERY: self._on_message_delivery,
            EventKind.DEADLINE_EXPIRY: self._on_deadline_expiry,
            EventKind.POLICY_SCAN: self._on_policy_scan,
        }

    @property
    def now(self):
        return self.events.now

    def run(self) -> RunStats:
        if self._ran:
            raise SimulationError("a Simulation instance runs only once")
        self._ran = True
        logger.debug(f"Run start: seed={self.cfg.seed} fingerprint={self.stats.fingerprint}")

        self._seed_sources()
        if self.pcfg.regime is not PolicyRegime.STATIC and self.pcfg.scan_period <= self.horizon:
            self.events.schedule(self.pcfg.scan_period, EventKind.POLICY_SCAN)

        while True:
            nxt = self.events.peek_time()
            if nxt is None or nxt > self.horizon:
                break
            ev = self.events.next_event()
            self._handlers[ev.kind](ev)

        self._finalize()
        return self.stats

    # sources

    def _seed_sources(self):
        if self._injected is not None:
            for t in sorted(self._injected, key=lambda x: (x.arrival_time, x.id)):
                self._next_id = max(self._next_id, t.id + 1)
                self.events.schedule(t.arrival_time, EventKind.ARRIVAL, t)
            return
        if self.wcfg.mode is WorkloadMode.OPEN:
            for site in range(self.cfg.num_sites):
                self._arrivals[site] = generate_arrivals(
                    self.wcfg, site, self.horizon, self.site_streams[site].arrivals
                )
                self._schedule_next_arrival(site)
            return
        for site in range(self.cfg.num_sites):
            for k in range(self.wcfg.num_terminals):
                first = draw_uniform(self.site_streams[site].think_time, 0,
                                     self.wcfg.terminal_think_max)
                if first < self.horizon:
                    terminal = site * self.wcfg.num_terminals + k
                    self.events.schedule(first, EventKind.TERMINAL_SUBMIT, (site, terminal))

    def _schedule_next_arrival(self, site):
        at = next(self._arrivals[site], None)
        if at is not None:
            self.events.schedule(at, EventKind.ARRIVAL, site)

    def _on_arrival(self, ev):
        if isinstance(ev.payload, Transaction):
            self._start_transaction(ev.payload)
            return
        site = ev.payload
        self._admit(site)
        self._schedule_next_arrival(site)

    def _on_terminal_submit(self, ev):
        site, terminal = ev.payload
        self._admit(site, terminal)

    def _admit(self, site, terminal=None):
        t = build_transaction(self.wcfg, self._next_id, site, self.now, self.fmap,
                              self.site_streams[site])
        self._next_id += 1
        t.terminal = terminal
        self._start_transaction(t)

    def _start_transaction(self, t: Transaction):
        t.counted = t.arrival_time >= self.warmup_end
        self.generated_total += 1
        if t.counted:
            s = self.stats
            s.generated += 1
            s.site_generated[t.origin] += 1
            if t.has_write:
                s.write_transactions += 1
            else:
                s.read_transactions += 1
            s.pages_read += t.pages_total
            s.pages_written += sum(c.writes for c in t.cohorts)
        if self.keep_transactions:
            self.transactions.append(t)

        self.active[t.id] = t
        t.master = MasterState.new(t.id, t.origin, len(t.cohorts),
                                   centralized=t.centralized, sequential=self.sequential)
        for c in t.cohorts:
            c.cstate = CohortState(t.id, c.site, c.index, centralized=t.centralized)
        t.advance(TxnState.EXECUTING)
        self.events.schedule(t.deadline + 1, EventKind.DEADLINE_EXPIRY, (t.id, t.deadline))
        self._master_event(t, Start())

    # state machine plumbing

    def _trace(self, t, site, role, before, after, event):
        if self.trace is not None:
            self.trace.record(self.now, t.id, site, role, before.value, after.value, event)

    def _master_event(self, t: Transaction, ev):
        old = t.master
        new, actions = master_on_event(old, ev)
        t.master = new
        self._trace(t, t.origin, "master", old.phase, new.phase, event_label(ev))
        if old.phase is MasterPhase.COHORTS_EXECUTING and new.phase in (
            MasterPhase.WAITING_VOTES, MasterPhase.COMMITTING
        ):
            t.all_work_done_at = self.now
            t.advance(TxnState.COMMITTING)
        for a in actions:
            self._master_action(t, a)

    def _master_action(self, t: Transaction, a):
        if isinstance(a, StartCohort):
            c = t.cohorts[a.cohort]
            c.started = True
            self._next_page(t, c)
        elif isinstance(a, Send):
            c = t.cohorts[a.cohort]
            msg = ProtocolMessage(a.kind, t.id, t.origin, c.site, a.cohort)
            if t.killed:
                # a discarded transaction's ABORT costs nothing and logs nothing
                self._cohort_event(t, c, msg, discard=True)
            else:
                self._send(t, msg, "master", t.master.phase)
        elif isinstance(a, ForceWrite):
            then = (partial(self._on_master_commit_forced, t) if a.record is LogRecord.COMMIT
                    else partial(self._master_event, t, LogForced(a.record)))
            self._force(t, t.origin, "master", a.record, then)
        elif isinstance(a, Decide):
            if a.outcome is Outcome.COMMITTED:
                self._record_commit(t)
            else:
                self._record_miss(t, vetoed=True)
        elif isinstance(a, WriteEnd):
            if t.counted:
                self.stats.end_records += 1
        elif isinstance(a, Finish):
            t.finished = True
            self.active.pop(t.id, None)

    def _cohort_event(self, t: Transaction, c, ev, willing=True, discard=False):
        old = c.cstate
        new, actions = cohort_on_event(old, ev, willing=willing, discard=discard)
        c.cstate = new
        role = f"cohort{c.index}"
        self._trace(t, c.site, role, old.phase, new.phase, event_label(ev))
        if new.outcome is Outcome.COMMITTED and t.state is not TxnState.COMMITTED:
            raise InvariantViolation(f"txn {t.id}: cohort {c.index} commits an uncommitted txn")
        if new.outcome is Outcome.ABORTED and t.state is TxnState.COMMITTED:
            raise InvariantViolation(f"txn {t.id}: cohort {c.index} aborts a committed txn")
        for a in actions:
            if isinstance(a, Send):
                msg = ProtocolMessage(a.kind, t.id, c.site, t.origin, c.index)
                self._send(t, msg, role, new.phase)
            elif isinstance(a, ForceWrite):
                self._force(t, c.site, role, a.record,
                            partial(self._on_cohort_forced, t, c, a.record))
            elif isinstance(a, NotifyMaster):
                self._master_event(t, AllWorkDone())

    def _on_cohort_forced(self, t, c, record):
        if record is LogRecord.PREPARED:
            t.decision_writes_done += 1
        self._cohort_event(t, c, LogForced(record))

    def _on_master_commit_forced(self, t):
        if self.now > t.deadline:
            self._kill(t)
            return
        t.decision_writes_done += 1
        self._master_event(t, LogForced(LogRecord.COMMIT))

    # resources and network

    def _submit(self, t, site, kind, service_time, then):
        self.sites[site].submit(ServiceRequest(
            txn=t, site=site, kind=kind, service_time=service_time,
            priority_key=t.deadline, on_done=then,
        ))

    def _next_page(self, t: Transaction, c):
        if c.pages_done == len(c.pages):
            self._cohort_event(t, c, PagesComplete())
            return
        self._submit(t, c.site, RequestKind.PAGE_CPU, self.wcfg.page_cpu,
                     partial(self._submit, t, c.site, RequestKind.PAGE_DISK,
                             self.wcfg.page_disk, partial(self._page_done, t, c)))

    def _page_done(self, t, c):
        c.pages_done += 1
        self._next_page(t, c)

    def _force(self, t, site, role, record, then):
        def forced():
            t.forced_writes += 1
            if t.counted:
                self.stats.forced_writes += 1
            if self.trace is not None:
                phase = t.master.phase if role == "master" else t.cohorts[int(role[6:])].cstate.phase
                self._trace(t, site, role, phase, phase, f"force:{record.value}")
            then()

        self._submit(t, site, RequestKind.FORCED_LOG_WRITE, self.wcfg.page_disk, forced)

    def _send(self, t, msg: ProtocolMessage, role, phase):
        if msg.kind is MessageKind.WORK_DONE:
            if t.counted:
                self.stats.work_done_messages += 1
        else:
            t.messages += 1
            if t.counted:
                self.stats.protocol_messages += 1
        self._trace(t, msg.src, role, phase, phase, f"send:{msg.kind.value}")
        deliver = partial(self.events.schedule_after, 0, EventKind.MESSAGE_DELIVERY, (t, msg))
        if self.msg_cpu > 0:
            self._submit(t, msg.src, RequestKind.MESSAGE_CPU, self.msg_cpu, deliver)
        else:
            deliver()

    def _on_message_delivery(self, ev):
        t, msg = ev.payload
        if t.killed:
            return
        if self.msg_cpu > 0:
            self._submit(t, msg.dst, RequestKind.MESSAGE_CPU, self.msg_cpu,
                         partial(self._receive, t, msg))
        else:
            self._receive(t, msg)

    def _receive(self, t: Transaction, msg: ProtocolMessage):
        if msg.kind in _TO_MASTER:
            self._master_event(t, msg)
            return
        c = t.cohorts[msg.cohort]
        willing = True
        if msg.kind is MessageKind.PREPARE and self.cfg.voluntary_abort_prob > 0:
            willing = self.vote_stream.random() >= self.cfg.voluntary_abort_prob
        self._cohort_event(t, c, msg, willing=willing)

    def _on_service_done(self, ev):
        site, name = ev.payload
        req = self.sites[site].on_service_done(name)
        t = req.txn
        t.served_time += req.service_time
        if t.state is TxnState.MISSED and t.counted:
            self.stats.wasted_service_time += req.service_time
        if req.cancelled or t.killed:
            return
        if req.on_done is not None:
            req.on_done()

    # outcomes

    def _record_commit(self, t: Transaction):
        t.commit_time = self.now
        t.advance(TxnState.COMMITTED)
        if t.counted:
            self.stats.record_commit(t.origin, self.now - t.arrival_time)
            self.stats.commit_phase_times.append(self.now - t.all_work_done_at)
        logger.debug(f"txn {t.id} committed at {self.now} (deadline {t.deadline})")
        self._terminal_done(t)

    def _record_miss(self, t: Transaction, vetoed=False):
        t.advance(TxnState.MISSED)
        t.vetoed = vetoed
        if t.counted:
            self.stats.record_miss(t.origin, vetoed=vetoed)
            self.stats.wasted_service_time += t.served_time
        logger.debug(f"txn {t.id} missed at {self.now} ({'veto' if vetoed else 'deadline'})")
        self._terminal_done(t)

    def _terminal_done(self, t: Transaction):
        if t.terminal is None or self.wcfg.mode is not WorkloadMode.CLOSED:
            return
        nxt = terminal_resubmit(self.wcfg, self.now, self.site_streams[t.origin].think_time)
        if nxt < self.horizon:
            self.events.schedule(nxt, EventKind.TERMINAL_SUBMIT, (t.origin, t.terminal))

    def _kill(self, t: Transaction):
        t.killed = True
        purged = sum(site.purge(t.id) for site in self.sites)
        if t.counted:
            self.stats.purged_requests += purged
        self._record_miss(t)
        self._master_event(t, Kill())
        for c in t.cohorts:
            phase = c.cstate.phase
            if phase is CohortPhase.DONE:
                continue
            if phase is CohortPhase.PREPARED:
                abort = ProtocolMessage(MessageKind.ABORT, t.id, t.origin, c.site, c.index)
                self._cohort_event(t, c, abort, discard=True)
            else:
                self._cohort_event(t, c, Discard())

    def _on_deadline_expiry(self, ev):
        txn_id, deadline = ev.payload
        t = self.active.get(txn_id)
        if t is None or t.decided or t.killed or deadline != t.deadline:
            return
        if enforce_deadline(t, self.now) is Decision.KILL:
            self._kill(t)

    # slack policy

    def _on_policy_scan(self, ev):
        candidates = [t for t in self.active.values() if not t.decided and not t.killed]
        if self.pcfg.regime is PolicyRegime.DYNAMIC_REDISTRIBUTION:
            grants = redistribute_slack(candidates, self.now, self.wcfg, self.pcfg, self.ledger)
        else:
            grants = agent_scan(candidates, self.now, self.wcfg, self.pcfg, self.ledger,
                                self.generated_total)
        for g in grants:
            self._extend_deadline(self.active[g.txn_id], g.new_deadline)
        nxt = self.now + self.pcfg.scan_period
        if nxt <= self.horizon:
            self.events.schedule(nxt, EventKind.POLICY_SCAN)

    def _extend_deadline(self, t: Transaction, new_deadline):
        if new_deadline <= t.deadline:
            raise InvariantViolation(f"txn {t.id}: deadline may only grow ({t.deadline} -> {new_deadline})")
        t.deadline = new_deadline
        t.grants += 1
        if t.counted:
            self.stats.grants_issued += 1
            if self.pcfg.regime is PolicyRegime.INTELLIGENT_AGENT:
                self.stats.agent_grants += 1
        self.events.schedule(new_deadline + 1, EventKind.DEADLINE_EXPIRY, (t.id, new_deadline))
        for site in {t.origin, *(c.site for c in t.cohorts)}:
            self.sites[site].rekey(t.id, new_deadline)

    # wrap-up

    def _finalize(self):
        s = self.stats
        s.in_flight = sum(1 for t in self.active.values() if t.counted and not t.decided)
        s.sim_duration = self.horizon - self.warmup_end
        s.elapsed = self.horizon
        for site in self.sites:
            s.cpu_busy[site.site] = site.cpu.busy_time
            s.disk_busy[site.site] = site.disk.busy_time
            s.max_cpu_queue[site.site] = site.cpu.max_queue
            s.max_disk_queue[site.site] = site.disk.max_queue
        check_conservation(s)
        logger.debug(f"Run finished after {self.events.delivered} events: {summary_line(s)}")
