"""
Two-phase commit as pure state machines.

master_on_event and cohort_on_event map (state, event) to (new state,
actions). They never touch resources or the clock; the simulator turns
ForceWrite into a disk request, Send into message CPU work, and feeds the
completions back in as events.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Optional, Tuple

from errors import OutputError, ProtocolViolation

logger = logging.getLogger(__name__)


class MasterPhase(Enum):
    SETUP = "Setup"
    COHORTS_EXECUTING = "CohortsExecuting"
    WAITING_VOTES = "WaitingVotes"
    COMMITTING = "Committing"
    ABORTING = "Aborting"
    DONE = "Done"


class CohortPhase(Enum):
    EXECUTING = "Executing"
    WORK_DONE = "WorkDone"
    PREPARED = "Prepared"
    COMMITTING = "Committing"
    ABORTING = "Aborting"
    DONE = "Done"


class Vote(Enum):
    YES = "YES"
    NO = "NO"


class MessageKind(Enum):
    PREPARE = "PREPARE"
    VOTE_YES = "VOTE_YES"
    VOTE_NO = "VOTE_NO"
    COMMIT = "COMMIT"
    ABORT = "ABORT"
    ACK = "ACK"
    WORK_DONE = "WORK_DONE"


class LogRecord(Enum):
    PREPARED = "PREPARED"
    COMMIT = "COMMIT"
    ABORT = "ABORT"
    END = "END"


class Outcome(Enum):
    COMMITTED = "Committed"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    txn_id: int
    src: int
    dst: int
    cohort: int


# Events other than messages

@dataclass(frozen=True)
class Start:
    pass


@dataclass(frozen=True)
class AllWorkDone:
    pass


@dataclass(frozen=True)
class PagesComplete:
    pass


@dataclass(frozen=True)
class LogForced:
    record: LogRecord


@dataclass(frozen=True)
class Kill:
    pass


@dataclass(frozen=True)
class Discard:
    pass


# Actions

@dataclass(frozen=True)
class ForceWrite:
    record: LogRecord


@dataclass(frozen=True)
class Send:
    kind: MessageKind
    cohort: int


@dataclass(frozen=True)
class StartCohort:
    cohort: int


@dataclass(frozen=True)
class NotifyMaster:
    pass


@dataclass(frozen=True)
class Decide:
    outcome: Outcome


@dataclass(frozen=True)
class WriteEnd:
    pass


@dataclass(frozen=True)
class Finish:
    pass


@dataclass(frozen=True)
class MasterState:
    txn_id: int
    site: int
    n: int
    centralized: bool = False
    sequential: bool = False
    phase: MasterPhase = MasterPhase.SETUP
    votes: Tuple[Optional[Vote], ...] = ()
    acks: Tuple[bool, ...] = ()
    work_done: Tuple[bool, ...] = ()
    exec_cursor: int = 0
    decision: Optional[Outcome] = None
    record_forced: bool = False
    discarded: bool = False

    @classmethod
    def new(cls, txn_id, site, n, centralized=False, sequential=False):
        return cls(txn_id=txn_id, site=site, n=n, centralized=centralized,
                   sequential=sequential, votes=(None,) * n, acks=(False,) * n,
                   work_done=(False,) * n)

    def yes_voters(self):
        return [i for i, v in enumerate(self.votes) if v is Vote.YES]


@dataclass(frozen=True)
class CohortState:
    txn_id: int
    site: int
    index: int
    centralized: bool = False
    phase: CohortPhase = CohortPhase.EXECUTING
    pending: Optional[LogRecord] = None
    vote: Optional[Vote] = None
    forced_writes: int = 0
    outcome: Optional[Outcome] = None


def event_label(ev):
    """Name of an event as it appears in protocol traces"""
    if isinstance(ev, ProtocolMessage):
        return f"recv:{ev.kind.value}"
    if isinstance(ev, LogForced):
        return f"logged:{ev.record.value}"
    return type(ev).__name__


def _set(seq, i, value):
    items = list(seq)
    items[i] = value
    return tuple(items)


def _master_violation(m: MasterState, ev):
    return ProtocolViolation(m.txn_id, m.site, "master", m.phase.value, event_label(ev))


def _all_work_done(m: MasterState):
    m = replace(m, work_done=(True,) * m.n)
    if m.centralized:
        return replace(m, phase=MasterPhase.COMMITTING), [ForceWrite(LogRecord.COMMIT)]
    return (replace(m, phase=MasterPhase.WAITING_VOTES),
            [Send(MessageKind.PREPARE, i) for i in range(m.n)])


def _finish_if_aborted(m: MasterState, actions):
    if not m.record_forced or any(v is None for v in m.votes):
        return m, actions
    if any(not m.acks[i] for i in m.yes_voters()):
        return m, actions
    return replace(m, phase=MasterPhase.DONE), actions + [WriteEnd(), Finish()]


def master_on_event(m: MasterState, ev):
    """One master transition: returns (new state, list of actions)"""
    phase = m.phase

    if isinstance(ev, Kill):
        if m.decision is not None or phase in (MasterPhase.SETUP, MasterPhase.DONE):
            raise _master_violation(m, ev)
        sends = [Send(MessageKind.ABORT, i) for i in m.yes_voters()]
        m = replace(m, phase=MasterPhase.ABORTING, decision=Outcome.ABORTED, discarded=True)
        return m, sends + [Finish()]

    if m.discarded:
        raise _master_violation(m, ev)

    if phase is MasterPhase.SETUP and isinstance(ev, Start):
        m = replace(m, phase=MasterPhase.COHORTS_EXECUTING, exec_cursor=0)
        if m.sequential:
            return m, [StartCohort(0)]
        return m, [StartCohort(i) for i in range(m.n)]

    if phase is MasterPhase.COHORTS_EXECUTING:
        if isinstance(ev, AllWorkDone):
            return _all_work_done(m)
        if (isinstance(ev, ProtocolMessage) and ev.kind is MessageKind.WORK_DONE
                and not m.centralized and 0 <= ev.cohort < m.n
                and not m.work_done[ev.cohort]
                and (not m.sequential or ev.cohort == m.exec_cursor)):
            m = replace(m, work_done=_set(m.work_done, ev.cohort, True))
            if all(m.work_done):
                return _all_work_done(m)
            if m.sequential:
                nxt = m.exec_cursor + 1
                return replace(m, exec_cursor=nxt), [StartCohort(nxt)]
            return m, []
        raise _master_violation(m, ev)

    if isinstance(ev, ProtocolMessage) and not 0 <= ev.cohort < m.n:
        raise _master_violation(m, ev)

    if phase is MasterPhase.WAITING_VOTES and isinstance(ev, ProtocolMessage):
        if ev.kind is MessageKind.VOTE_YES and m.votes[ev.cohort] is None:
            m = replace(m, votes=_set(m.votes, ev.cohort, Vote.YES))
            if all(v is Vote.YES for v in m.votes):
                return replace(m, phase=MasterPhase.COMMITTING), [ForceWrite(LogRecord.COMMIT)]
            return m, []
        if ev.kind is MessageKind.VOTE_NO and m.votes[ev.cohort] is None:
            # veto: decide at once, other votes are not awaited
            m = replace(m, votes=_set(m.votes, ev.cohort, Vote.NO),
                        phase=MasterPhase.ABORTING, decision=Outcome.ABORTED)
            return m, [Decide(Outcome.ABORTED), ForceWrite(LogRecord.ABORT)]
        raise _master_violation(m, ev)

    if phase is MasterPhase.COMMITTING:
        if ev == LogForced(LogRecord.COMMIT) and not m.record_forced:
            m = replace(m, record_forced=True, decision=Outcome.COMMITTED)
            if m.centralized:
                return (replace(m, phase=MasterPhase.DONE),
                        [Decide(Outcome.COMMITTED), WriteEnd(), Finish()])
            return m, [Decide(Outcome.COMMITTED)] + [
                Send(MessageKind.COMMIT, i) for i in range(m.n)
            ]
        if (isinstance(ev, ProtocolMessage) and ev.kind is MessageKind.ACK
                and m.record_forced and not m.acks[ev.cohort]):
            m = replace(m, acks=_set(m.acks, ev.cohort, True))
            if all(m.acks):
                return replace(m, phase=MasterPhase.DONE), [WriteEnd(), Finish()]
            return m, []
        raise _master_violation(m, ev)

    if phase is MasterPhase.ABORTING:
        if ev == LogForced(LogRecord.ABORT) and not m.record_forced:
            m = replace(m, record_forced=True)
            sends = [Send(MessageKind.ABORT, i) for i in m.yes_voters()]
            return _finish_if_aborted(m, sends)
        if isinstance(ev, ProtocolMessage):
            i = ev.cohort
            if ev.kind is MessageKind.VOTE_YES and m.votes[i] is None:
                # PREPARE was already in flight when the veto arrived
                m = replace(m, votes=_set(m.votes, i, Vote.YES))
                sends = [Send(MessageKind.ABORT, i)] if m.record_forced else []
                return _finish_if_aborted(m, sends)
            if ev.kind is MessageKind.VOTE_NO and m.votes[i] is None:
                m = replace(m, votes=_set(m.votes, i, Vote.NO))
                return _finish_if_aborted(m, [])
            if (ev.kind is MessageKind.ACK and m.votes[i] is Vote.YES
                    and m.record_forced and not m.acks[i]):
                m = replace(m, acks=_set(m.acks, i, True))
                return _finish_if_aborted(m, [])
        raise _master_violation(m, ev)

    raise _master_violation(m, ev)


def _cohort_violation(c: CohortState, ev):
    return ProtocolViolation(c.txn_id, c.site, f"cohort{c.index}", c.phase.value,
                             event_label(ev))


def cohort_on_event(c: CohortState, ev, willing=True, discard=False):
    """One cohort transition: returns (new state, list of actions).

    willing is the cohort's answer to PREPARE; discard marks the ABORT a
    killed transaction sends, which ends the cohort without a log write.
    """
    phase = c.phase
    msg = ev.kind if isinstance(ev, ProtocolMessage) else None

    if isinstance(ev, Discard):
        if phase in (CohortPhase.EXECUTING, CohortPhase.WORK_DONE, CohortPhase.ABORTING):
            return replace(c, phase=CohortPhase.DONE, pending=None,
                           outcome=Outcome.ABORTED), []
        raise _cohort_violation(c, ev)

    if phase is CohortPhase.EXECUTING and isinstance(ev, PagesComplete):
        c = replace(c, phase=CohortPhase.WORK_DONE)
        if c.centralized:
            return c, [NotifyMaster()]
        return c, [Send(MessageKind.WORK_DONE, c.index)]

    if phase is CohortPhase.WORK_DONE:
        if msg is MessageKind.PREPARE and not c.centralized and c.pending is None:
            if willing:
                return replace(c, pending=LogRecord.PREPARED), [ForceWrite(LogRecord.PREPARED)]
            # unilateral abort is allowed before the prepared record exists
            return (replace(c, phase=CohortPhase.ABORTING, pending=LogRecord.ABORT, vote=Vote.NO),
                    [ForceWrite(LogRecord.ABORT)])
        if ev == LogForced(LogRecord.PREPARED) and c.pending is LogRecord.PREPARED:
            c = replace(c, phase=CohortPhase.PREPARED, pending=None, vote=Vote.YES,
                        forced_writes=c.forced_writes + 1)
            return c, [Send(MessageKind.VOTE_YES, c.index)]
        raise _cohort_violation(c, ev)

    if phase is CohortPhase.PREPARED:
        if msg is MessageKind.COMMIT:
            return (replace(c, phase=CohortPhase.COMMITTING, pending=LogRecord.COMMIT,
                            outcome=Outcome.COMMITTED),
                    [ForceWrite(LogRecord.COMMIT)])
        if msg is MessageKind.ABORT:
            if discard:
                return replace(c, phase=CohortPhase.DONE, outcome=Outcome.ABORTED), []
            return (replace(c, phase=CohortPhase.ABORTING, pending=LogRecord.ABORT,
                            outcome=Outcome.ABORTED),
                    [ForceWrite(LogRecord.ABORT)])
        raise _cohort_violation(c, ev)

    if phase is CohortPhase.COMMITTING and ev == LogForced(LogRecord.COMMIT):
        c = replace(c, phase=CohortPhase.DONE, pending=None, forced_writes=c.forced_writes + 1)
        return c, [Send(MessageKind.ACK, c.index)]

    if phase is CohortPhase.ABORTING and ev == LogForced(LogRecord.ABORT):
        c = replace(c, phase=CohortPhase.DONE, pending=None, outcome=Outcome.ABORTED,
                    forced_writes=c.forced_writes + 1)
        if c.vote is Vote.NO:
            return c, [Send(MessageKind.VOTE_NO, c.index)]
        return c, [Send(MessageKind.ACK, c.index)]

    raise _cohort_violation(c, ev)


class CommitCost(NamedTuple):
    forced_writes: int
    messages: int


def commit_cost(t):
    """Forced writes and protocol messages of a clean all-YES commit"""
    if t.centralized:
        return CommitCost(forced_writes=1, messages=0)
    n = len(t.cohorts)
    return CommitCost(forced_writes=2 * n + 1, messages=4 * n)


class ProtocolTrace:
    """Plain-text record of every protocol transition"""

    def __init__(self):
        self.lines = []

    def __len__(self):
        return len(self.lines)

    def record(self, time, txn_id, site, role, phase_from, phase_to, event):
        self.lines.append(f"{time} {txn_id} {site} {role} {phase_from} {phase_to} {event}")

    def write(self, path):
        try:
            with open(Path(path), "w", encoding="utf-8", newline="\n") as f:
                for line in self.lines:
                    f.write(line + "\n")
        except OSError as e:
            raise OutputError(f"cannot write trace {path}: {e}") from None
        logger.info(f"Protocol trace written to {path} ({len(self.lines)} lines)")


def parse_trace_line(line):
    """Split a trace line into (time, txn, site, role, from, to, event)"""
    time, txn, site, role, phase_from, phase_to, event = line.split(" ")
    return int(time), int(txn), int(site), role, phase_from, phase_to, event
