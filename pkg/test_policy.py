#!/usr/bin/env python3
"""
Tests for slack computation, redistribution and the agent regime
"""

import sys

from engine import ms
from errors import InvariantViolation
from policy import (
    Decision,
    Grant,
    SlackLedger,
    agent_scan,
    compute_slack,
    enforce_deadline,
    redistribute_slack,
    remaining_work,
)
from sim_config import PolicyRegime, SlackPolicyConfig, WorkloadConfig
from workload import Cohort, Transaction

WCFG = WorkloadConfig()


def txn(txn_id, deadline, pages=1, n_cohorts=1, centralized=True, arrival=0, rt=None):
    cohorts = [Cohort(txn_id=txn_id, index=i, site=i, pages=[(p, False) for p in range(pages)])
               for i in range(n_cohorts)]
    t = Transaction(id=txn_id, origin=0, arrival_time=arrival, cohorts=cohorts,
                    centralized=centralized, deadline=deadline, base_deadline=deadline)
    t.resource_time = rt if rt is not None else pages * n_cohorts * ms(30) + ms(20)
    return t


def test_remaining_work():
    print("\nTesting remaining work...")
    t = txn(1, ms(5000), pages=6, n_cohorts=3, centralized=False)
    assert remaining_work(t, WCFG) == 18 * ms(30) + 4 * ms(20)
    for c in t.cohorts:
        c.pages_done = len(c.pages)
    t.decision_writes_done = 2
    assert remaining_work(t, WCFG) == 2 * ms(20)
    t.decision_writes_done = 4
    assert remaining_work(t, WCFG) == 0
    print("✓ Pages left plus forced writes left up to the decision")

    t = txn(2, ms(1000))
    assert compute_slack(t, ms(200), WCFG) == ms(1000) - ms(200) - ms(50)
    print("✓ slack = DT - now - remaining work")


def test_redistribution():
    print("\nTesting slack redistribution...")
    pcfg = SlackPolicyConfig(regime=PolicyRegime.DYNAMIC_REDISTRIBUTION,
                             donation_fraction=0.5, grant_margin=ms(10))
    now = ms(1000)
    donor = txn(1, ms(2050))             # slack +1000 ms
    small = txn(2, ms(1000))             # slack -50 ms
    medium = txn(3, ms(700))             # slack -350 ms
    large = txn(4, ms(500))              # slack -550 ms
    ledger = SlackLedger()
    grants = redistribute_slack([large, donor, medium, small], now, WCFG, pcfg, ledger)
    assert grants == [Grant(2, ms(1060)), Grant(3, ms(1060))]
    assert ledger.pool_history == [ms(500)]
    assert ledger.granted_total == ms(420) and ledger.grants_issued == 2
    assert donor.deadline == ms(2050)
    print("✓ Smallest deficits first; the first one too big for the pool stops the scan")

    small.grants = 1
    grants = redistribute_slack([large, donor, medium, small], now, WCFG, pcfg, ledger)
    assert grants == [Grant(3, ms(1060))]
    print("✓ Transactions at the grant cap are skipped")

    ledger = SlackLedger()
    assert redistribute_slack([medium, large], now, WCFG, pcfg, ledger) == []
    assert ledger.scans == 1 and ledger.pool_total == 0
    print("✓ No donors, no pool, no grants")


def test_ledger():
    print("\nTesting the slack ledger...")
    ledger = SlackLedger()
    ledger.record_scan(100, 100)
    for pool, granted in ((50, 51), (-1, 0)):
        try:
            ledger.record_scan(pool, granted)
        except InvariantViolation:
            pass
        else:
            raise AssertionError(f"scan ({pool}, {granted}) accepted")
    assert ledger.scans == 1
    print("✓ Grants never exceed the pool")


def test_agent():
    print("\nTesting the agent regime...")
    pcfg = SlackPolicyConfig(regime=PolicyRegime.INTELLIGENT_AGENT, agent_threshold=1.0,
                             agent_budget=1.0, agent_delta_sf=1.0)
    wcfg = WorkloadConfig(slack_factor=1.0)
    late = txn(1, ms(150), pages=6, rt=ms(200))      # slack -100 ms at 50 ms
    ledger = SlackLedger()
    grants = agent_scan([late], ms(50), wcfg, pcfg, ledger, generated_so_far=1)
    assert grants == [Grant(1, ms(400))]
    assert ledger.agent_grants == 1 and ledger.pool_total == 0
    print("✓ DT re-derived with SF + dSF: 400 ms")

    narrow = SlackPolicyConfig(regime=PolicyRegime.INTELLIGENT_AGENT, agent_threshold=0.25,
                               agent_budget=1.0)
    assert agent_scan([late], ms(50), wcfg, narrow, SlackLedger(), 1) == []
    print("✓ Transactions beyond the rescue window are left alone")

    ahead = txn(2, ms(1000), pages=6, rt=ms(200))
    assert agent_scan([ahead], ms(50), wcfg, pcfg, SlackLedger(), 1) == []
    print("✓ Non-negative slack needs no help")

    budget = SlackPolicyConfig(regime=PolicyRegime.INTELLIGENT_AGENT, agent_threshold=1.0,
                               agent_budget=0.1)
    crowd = [txn(i, ms(150), pages=6, rt=ms(200)) for i in range(5)]
    ledger = SlackLedger()
    grants = agent_scan(crowd, ms(50), wcfg, budget, ledger, generated_so_far=10)
    assert len(grants) == 1 and ledger.agent_grants == 1
    assert agent_scan(crowd[1:], ms(50), wcfg, budget, ledger, generated_so_far=10) == []
    assert ledger.agent_history == [(0, 10)]
    print("✓ Grants stop at AgentBudget x generated")


def test_enforcement():
    print("\nTesting firm-deadline enforcement...")
    t = txn(1, ms(100))
    assert enforce_deadline(t, ms(100) + 1) is Decision.KILL
    t.commit_time = ms(100)
    assert enforce_deadline(t, ms(100) + 1) is Decision.KEEP
    t.commit_time = ms(100) + 1
    assert enforce_deadline(t, ms(100) + 1) is Decision.KILL
    print("✓ Committed by DT is kept, anything later is killed")


def main():
    tests = [
        ("Remaining Work", test_remaining_work),
        ("Redistribution", test_redistribution),
        ("Ledger", test_ledger),
        ("Agent", test_agent),
        ("Enforcement", test_enforcement),
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
