"""
Exception hierarchy for the simulator and the exit codes the CLI maps them to.
"""

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_INVARIANT_VIOLATION = 3


class SimulationError(Exception):
    """Base class for every error raised by the simulator"""

    exit_code = EXIT_INVARIANT_VIOLATION


class ConfigError(SimulationError, ValueError):
    """Invalid configuration value, key or file"""

    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")

    def __reduce__(self):
        return type(self), (self.key, self.reason)


class OutputError(SimulationError):
    """Result file could not be written"""

    exit_code = EXIT_CONFIG_ERROR


class CausalityError(SimulationError):
    """An event was scheduled before the current simulation time"""


class TopologyError(SimulationError, ValueError):
    """Invalid site/file layout or an unknown file id"""

    exit_code = EXIT_CONFIG_ERROR


class WorkloadError(SimulationError, ValueError):
    """Invalid workload request (wrong mode, impossible transaction shape)"""

    exit_code = EXIT_CONFIG_ERROR


class ProtocolViolation(SimulationError):
    """A commit state machine received an event that is illegal in its phase.

    This always indicates a simulator bug, never modeled behavior.
    """

    def __init__(self, txn_id, site, role, phase, event):
        self.txn_id = txn_id
        self.site = site
        self.role = role
        self.phase = phase
        self.event = event
        super().__init__(
            f"txn {txn_id} {role}@site{site}: event {event} illegal in phase {phase}"
        )

    # worker processes send errors back pickled
    def __reduce__(self):
        return type(self), (self.txn_id, self.site, self.role, self.phase, self.event)


class InvariantViolation(SimulationError):
    """A run-level invariant (conservation, pool ledger, atomicity) failed"""
