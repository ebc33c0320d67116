# Simulator configuration
#
# Defaults follow the simulation parameter tables (NumSites 8, PageCPU 10ms,
# PageDisk 20ms, Slackfactor 4, WriteProb 0.5, ArrivalRate 6 to 8 job/sec,
# TerminalThink 0 to 0.5 sec, DistDegree 3, Dbsize up to 2400). Everything
# else below is a model choice and is exposed as a config key.

import hashlib
import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from engine import ms, seconds
from errors import ConfigError

logger = logging.getLogger(__name__)

# Database and sites
NUM_SITES = 8
DBSIZE = 2400
FILES_PER_SITE = 4
REPLICATION = 1

# Workload
ARRIVAL_RATE = 6.0          # transactions/second/site
AGGREGATE_ARRIVAL_RATE = 0.0  # transactions/second over all sites, 0 = use ArrivalRate
SLACK_FACTOR = 4.0
DIST_DEGREE = 3             # files (and so execution sites) per transaction
COHORT_SIZE = 6             # mean pages per cohort
WRITE_PROB = 0.5
TERMINAL_THINK = 0.5        # seconds, upper bound of the think-time draw
NUM_TERMINALS = 4           # per site, closed workload only

# Service times
PAGE_CPU = 10               # ms
PAGE_DISK = 20              # ms
MSG_CPU = 1                 # ms, charged at sender and receiver

# Commit protocol
VOLUNTARY_ABORT_PROB = 0.0

# Slack policy
SCAN_PERIOD = 50            # ms
DONATION_FRACTION = 0.5
GRANT_MARGIN = 10           # ms
MAX_GRANTS_PER_TXN = 1
AGENT_THRESHOLD = 0.25      # fraction of RT
AGENT_DELTA_SF = 1.0
AGENT_BUDGET = 0.10         # fraction of generated transactions

# Run control
SEED = 42
SIM_DURATION = 200.0        # seconds
REPLICATIONS = 20
WARMUP_FRACTION = 0.1

# Load classes of the MissPercent metric
NORMAL_LOAD_MAX_PERCENT = 20.0


class ArrivalProcess(Enum):
    EXPONENTIAL = "Exponential"
    POISSON_BATCH = "PoissonBatch"


class WorkloadMode(Enum):
    OPEN = "Open"
    CLOSED = "Closed"


class Discipline(Enum):
    FCFS = "FCFS"
    EDF = "EDF"


class ExecMode(Enum):
    PARALLEL = "Parallel"
    SEQUENTIAL = "Sequential"


class PolicyRegime(Enum):
    STATIC = "Static"
    DYNAMIC_REDISTRIBUTION = "DynamicRedistribution"
    INTELLIGENT_AGENT = "IntelligentAgent"


@dataclass(frozen=True)
class WorkloadConfig:
    """Workload knobs, durations in ticks"""

    arrival_rate: float = ARRIVAL_RATE
    slack_factor: float = SLACK_FACTOR
    dist_degree: int = DIST_DEGREE
    cohort_size: int = COHORT_SIZE
    write_prob: float = WRITE_PROB
    terminal_think_max: int = seconds(TERMINAL_THINK)
    arrival_process: ArrivalProcess = ArrivalProcess.EXPONENTIAL
    mode: WorkloadMode = WorkloadMode.OPEN
    num_terminals: int = NUM_TERMINALS
    page_cpu: int = ms(PAGE_CPU)
    page_disk: int = ms(PAGE_DISK)
    include_commit_cost: bool = True

    def __post_init__(self):
        if not self.arrival_rate > 0:
            raise ConfigError("ArrivalRate", f"must be > 0, got {self.arrival_rate}")
        if not self.slack_factor > 0:
            raise ConfigError("Slackfactor", f"must be > 0, got {self.slack_factor}")
        if not 0.0 <= self.write_prob <= 1.0:
            raise ConfigError("WriteProb", f"must be in [0, 1], got {self.write_prob}")
        if self.dist_degree < 1:
            raise ConfigError("DistDegree", f"must be >= 1, got {self.dist_degree}")
        if self.cohort_size < 1:
            raise ConfigError("CohortSize", f"must be >= 1, got {self.cohort_size}")
        if self.terminal_think_max < 0:
            raise ConfigError("TerminalThink", "must be >= 0")
        if self.page_cpu <= 0 or self.page_disk <= 0:
            raise ConfigError("PageCPU/PageDisk", "service times must be > 0")


@dataclass(frozen=True)
class SlackPolicyConfig:
    """Slack policy knobs, durations in ticks"""

    regime: PolicyRegime = PolicyRegime.STATIC
    scan_period: int = ms(SCAN_PERIOD)
    donation_fraction: float = DONATION_FRACTION
    grant_margin: int = ms(GRANT_MARGIN)
    max_grants_per_txn: int = MAX_GRANTS_PER_TXN
    agent_threshold: float = AGENT_THRESHOLD
    agent_delta_sf: float = AGENT_DELTA_SF
    agent_budget: float = AGENT_BUDGET

    def __post_init__(self):
        for key, value in (
            ("DonationFraction", self.donation_fraction),
            ("AgentThreshold", self.agent_threshold),
            ("AgentBudget", self.agent_budget),
        ):
            if not 0.0 <= value <= 1.0:
                raise ConfigError(key, f"must be in [0, 1], got {value}")
        if self.scan_period <= 0:
            raise ConfigError("ScanPeriod", "must be > 0")
        if self.grant_margin < 0:
            raise ConfigError("GrantMargin", "must be >= 0")
        if self.max_grants_per_txn < 0:
            raise ConfigError("MaxGrantsPerTxn", "must be >= 0")
        if self.agent_delta_sf < 0:
            raise ConfigError("AgentDeltaSF", "must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of one run; field names mirror the config keys"""

    num_sites: int = NUM_SITES
    dbsize: int = DBSIZE
    files_per_site: int = FILES_PER_SITE
    replication: int = REPLICATION
    arrival_rate: float = ARRIVAL_RATE
    aggregate_arrival_rate: float = AGGREGATE_ARRIVAL_RATE
    slack_factor: float = SLACK_FACTOR
    dist_degree: int = DIST_DEGREE
    cohort_size: int = COHORT_SIZE
    write_prob: float = WRITE_PROB
    page_cpu_ms: float = PAGE_CPU
    page_disk_ms: float = PAGE_DISK
    msg_cpu_ms: float = MSG_CPU
    terminal_think_s: float = TERMINAL_THINK
    arrival_process: ArrivalProcess = ArrivalProcess.EXPONENTIAL
    workload_mode: WorkloadMode = WorkloadMode.OPEN
    num_terminals: int = NUM_TERMINALS
    discipline: Discipline = Discipline.EDF
    exec_mode: ExecMode = ExecMode.PARALLEL
    include_commit_cost: bool = True
    voluntary_abort_prob: float = VOLUNTARY_ABORT_PROB
    policy_regime: PolicyRegime = PolicyRegime.STATIC
    scan_period_ms: float = SCAN_PERIOD
    donation_fraction: float = DONATION_FRACTION
    grant_margin_ms: float = GRANT_MARGIN
    max_grants_per_txn: int = MAX_GRANTS_PER_TXN
    agent_threshold: float = AGENT_THRESHOLD
    agent_delta_sf: float = AGENT_DELTA_SF
    agent_budget: float = AGENT_BUDGET
    seed: int = SEED
    sim_duration_s: float = SIM_DURATION
    replications: int = REPLICATIONS
    warmup_fraction: float = WARMUP_FRACTION

    def __post_init__(self):
        if self.num_sites < 1:
            raise ConfigError("NumSites", f"must be >= 1, got {self.num_sites}")
        if self.dbsize < self.num_sites:
            raise ConfigError("Dbsize", f"must be >= NumSites ({self.num_sites})")
        if self.files_per_site < 1:
            raise ConfigError("FilesPerSite", "must be >= 1")
        if self.replication < 1:
            raise ConfigError("Replication", "must be >= 1")
        if self.num_sites > 1 and self.replication > self.num_sites:
            raise ConfigError("Replication", f"must be <= NumSites ({self.num_sites})")
        if self.aggregate_arrival_rate < 0:
            raise ConfigError("AggregateArrivalRate", "must be >= 0")
        if self.msg_cpu_ms < 0:
            raise ConfigError("MsgCpu", "must be >= 0")
        if not 0.0 <= self.voluntary_abort_prob <= 1.0:
            raise ConfigError("VoluntaryAbortProb", "must be in [0, 1]")
        if self.sim_duration_s <= 0:
            raise ConfigError("SimDuration", "must be > 0")
        if self.replications < 1:
            raise ConfigError("Replications", "must be >= 1")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("WarmupFraction", "must be in [0, 1)")
        if self.workload_mode is WorkloadMode.CLOSED and self.num_terminals < 1:
            raise ConfigError("NumTerminals", "closed workload needs >= 1 terminal")
        # surfaces workload/policy range errors at construction time
        self.workload()
        self.policy()

    def workload(self) -> WorkloadConfig:
        return WorkloadConfig(
            arrival_rate=self.site_arrival_rate,
            slack_factor=self.slack_factor,
            dist_degree=self.dist_degree,
            cohort_size=self.cohort_size,
            write_prob=self.write_prob,
            terminal_think_max=seconds(self.terminal_think_s),
            arrival_process=self.arrival_process,
            mode=self.workload_mode,
            num_terminals=self.num_terminals,
            page_cpu=ms(self.page_cpu_ms),
            page_disk=ms(self.page_disk_ms),
            include_commit_cost=self.include_commit_cost,
        )

    def policy(self) -> SlackPolicyConfig:
        return SlackPolicyConfig(
            regime=self.policy_regime,
            scan_period=ms(self.scan_period_ms),
            donation_fraction=self.donation_fraction,
            grant_margin=ms(self.grant_margin_ms),
            max_grants_per_txn=self.max_grants_per_txn,
            agent_threshold=self.agent_threshold,
            agent_delta_sf=self.agent_delta_sf,
            agent_budget=self.agent_budget,
        )

    @property
    def site_arrival_rate(self):
        """Per-site rate; an aggregate rate is split evenly over the sites"""
        if self.aggregate_arrival_rate > 0:
            return self.aggregate_arrival_rate / self.num_sites
        return self.arrival_rate

    @property
    def msg_cpu(self):
        return ms(self.msg_cpu_ms)

    @property
    def horizon(self):
        return seconds(self.sim_duration_s)

    def fingerprint(self):
        """Stable digest of every setting except the seed and replication count"""
        parts = []
        for key, (name, _) in CONFIG_KEYS.items():
            if name in ("seed", "replications"):
                continue
            parts.append(f"{key}={format_value(getattr(self, name))}")
        return hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()[:16]

    def with_values(self, changes):
        """Copy with config-key changes applied; values may be strings"""
        updates = {}
        for key, value in changes.items():
            name, parser = lookup_key(key)
            updates[name] = parse_value(key, parser, value) if isinstance(value, str) else value
        return replace(self, **updates)


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _enum_parser(enum_cls):
    def parse(text):
        for member in enum_cls:
            if member.value == text.strip():
                return member
        choices = ", ".join(m.value for m in enum_cls)
        raise ValueError(f"expected one of {choices}, got {text!r}")
    return parse


# Config file keys -> (ExperimentConfig field, parser)
CONFIG_KEYS = {
    "NumSites": ("num_sites", int),
    "Dbsize": ("dbsize", int),
    "FilesPerSite": ("files_per_site", int),
    "Replication": ("replication", int),
    "ArrivalRate": ("arrival_rate", float),
    "AggregateArrivalRate": ("aggregate_arrival_rate", float),
    "Slackfactor": ("slack_factor", float),
    "DistDegree": ("dist_degree", int),
    "CohortSize": ("cohort_size", int),
    "WriteProb": ("write_prob", float),
    "PageCPU": ("page_cpu_ms", float),
    "PageDisk": ("page_disk_ms", float),
    "MsgCpu": ("msg_cpu_ms", float),
    "TerminalThink": ("terminal_think_s", float),
    "ArrivalProcess": ("arrival_process", _enum_parser(ArrivalProcess)),
    "WorkloadMode": ("workload_mode", _enum_parser(WorkloadMode)),
    "NumTerminals": ("num_terminals", int),
    "Discipline": ("discipline", _enum_parser(Discipline)),
    "ExecMode": ("exec_mode", _enum_parser(ExecMode)),
    "IncludeCommitCost": ("include_commit_cost", _parse_bool),
    "VoluntaryAbortProb": ("voluntary_abort_prob", float),
    "PolicyRegime": ("policy_regime", _enum_parser(PolicyRegime)),
    "ScanPeriod": ("scan_period_ms", float),
    "DonationFraction": ("donation_fraction", float),
    "GrantMargin": ("grant_margin_ms", float),
    "MaxGrantsPerTxn": ("max_grants_per_txn", int),
    "AgentThreshold": ("agent_threshold", float),
    "AgentDeltaSF": ("agent_delta_sf", float),
    "AgentBudget": ("agent_budget", float),
    "Seed": ("seed", int),
    "SimDuration": ("sim_duration_s", float),
    "Replications": ("replications", int),
    "WarmupFraction": ("warmup_fraction", float),
}

# Alternative spellings seen in the parameter tables
KEY_ALIASES = {
    "FileSelectionTime": "DistDegree",
    "Selectfile": "NumSites",
}


def lookup_key(key):
    canonical = KEY_ALIASES.get(key, key)
    if canonical not in CONFIG_KEYS:
        raise ConfigError(key, "unknown config key")
    return CONFIG_KEYS[canonical]


def parse_value(key, parser, text):
    try:
        return parser(text.strip())
    except ValueError as e:
        raise ConfigError(key, f"bad value {text.strip()!r} ({e})") from None


def format_value(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def parse_config_text(text, base=None):
    """Parse `key = value` lines over the defaults (or over base)"""
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}", "missing key")
        canonical = KEY_ALIASES.get(key, key)
        lookup_key(key)
        if canonical in changes:
            raise ConfigError(key, f"duplicate key (line {lineno})")
        changes[canonical] = value
    return (base or ExperimentConfig()).with_values(changes)


def load_config(path):
    """Read and validate a config file"""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config file ({e})") from None
    cfg = parse_config_text(text)
    logger.debug(f"Loaded config {path} (fingerprint {cfg.fingerprint()})")
    return cfg

