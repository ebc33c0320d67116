#!/usr/bin/env python3
"""
Tests for the error types: exit codes and surviving a trip through a worker process
"""

import pickle
import sys
from concurrent.futures import ProcessPoolExecutor

from commit import CohortPhase
from errors import (
    EXIT_CONFIG_ERROR,
    EXIT_INVARIANT_VIOLATION,
    CausalityError,
    ConfigError,
    InvariantViolation,
    OutputError,
    ProtocolViolation,
    SimulationError,
    TopologyError,
    WorkloadError,
)

SAMPLES = [
    ConfigError("ArrivalRate", "must be > 0, got -1"),
    OutputError("cannot write /nowhere/x.csv"),
    CausalityError("event at 5 scheduled at now=10"),
    TopologyError("replication 5 exceeds num_sites 4"),
    WorkloadError("terminal_resubmit called in Open mode"),
    ProtocolViolation(7, 2, "cohort1", CohortPhase.PREPARED, "PagesComplete"),
    InvariantViolation("grants exceed the pool"),
]


def raise_in_worker(index):
    raise SAMPLES[index]


def test_exit_codes():
    print("\nTesting exit codes...")
    codes = {type(e).__name__: e.exit_code for e in SAMPLES}
    assert codes["ConfigError"] == codes["OutputError"] == EXIT_CONFIG_ERROR
    assert codes["TopologyError"] == codes["WorkloadError"] == EXIT_CONFIG_ERROR
    assert codes["ProtocolViolation"] == codes["InvariantViolation"] == EXIT_INVARIANT_VIOLATION
    assert codes["CausalityError"] == EXIT_INVARIANT_VIOLATION
    assert isinstance(SAMPLES[0], ValueError)
    print("✓ Config and output faults map to 2, invariant faults to 3")


def test_pickle_round_trip():
    print("\nTesting pickling of every error type...")
    for err in SAMPLES:
        back = pickle.loads(pickle.dumps(err))
        assert type(back) is type(err)
        assert str(back) == str(err)
        assert back.exit_code == err.exit_code
    key_err = pickle.loads(pickle.dumps(SAMPLES[0]))
    assert (key_err.key, key_err.reason) == ("ArrivalRate", "must be > 0, got -1")
    violation = pickle.loads(pickle.dumps(SAMPLES[5]))
    assert (violation.txn_id, violation.site, violation.role) == (7, 2, "cohort1")
    assert violation.phase is CohortPhase.PREPARED and violation.event == "PagesComplete"
    print(f"✓ {len(SAMPLES)} error types survive pickle with their fields")


def test_worker_errors():
    print("\nTesting errors raised in worker processes...")
    with ProcessPoolExecutor(max_workers=2) as pool:
        for index in (0, 5):
            future = pool.submit(raise_in_worker, index)
            try:
                future.result()
            except SimulationError as e:
                assert type(e) is type(SAMPLES[index])
                assert e.exit_code == SAMPLES[index].exit_code
            else:
                raise AssertionError("worker error was not propagated")
    print("✓ ConfigError and ProtocolViolation reach the parent intact")


def main():
    tests = [
        ("Exit Codes", test_exit_codes),
        ("Pickle Round Trip", test_pickle_round_trip),
        ("Worker Errors", test_worker_errors),
    ]
    passed = 0
    for name, func in tests:
        print(f"\n--- {name} ---")
        try:
            func()
            passed += 1
            print(f"✓ {name} PASSED")
        except Exception as e:
            print(f"✗ {name} FAILED: {e}")
    print(f"\n=== Test Results ===\nPassed: {passed}/{len(tests)}")
    return 0 if passed == len(tests) else 1


if __name__ == "__main__":
    sys.exit(main())
