#!/usr/bin/env python3
"""
Tests for arrivals, transaction construction and deadline assignment
"""

import sys

import numpy as np

from engine import RngStream, RngStreams, TICKS_PER_SECOND, ms, seconds
from errors import WorkloadError
from sim_config import ArrivalProcess, WorkloadConfig, WorkloadMode
from topology import place_files
from workload import (
    Cohort,
    SiteStreams,
    Transaction,
    assign_deadline,
    build_transaction,
    estimate_resource_time,
    generate_arrivals,
    terminal_resubmit,
)


def make_txn(pages_per_cohort, n_cohorts, centralized=False):
    cohorts = [
        Cohort(txn_id=0, index=i, site=i, pages=[(p, False) for p in range(pages_per_cohort)])
        for i in range(n_cohorts)
    ]
    return Transaction(id=0, origin=0, arrival_time=0, cohorts=cohorts, centralized=centralized)


def test_exponential_arrivals():
    print("\nTesting exponential arrivals...")
    cfg = WorkloadConfig(arrival_rate=6.0)
    counts = []
    for seed in range(20):
        times = list(generate_arrivals(cfg, 0, seconds(100), RngStream(seed, "arrivals:0")))
        assert times == sorted(times) and all(0 < t < seconds(100) for t in times)
        counts.append(len(times))
    mean = float(np.mean(counts))
    assert abs(mean - 600) / 600 < 0.05
    print(f"✓ Mean count {mean:.1f} over 20 seeds (expected 600)")

    assert list(generate_arrivals(cfg, 0, 0, RngStream(1, "arrivals:0"))) == []
    print("✓ Zero horizon gives no arrivals")


def test_batch_arrivals():
    print("\nTesting Poisson-batch arrivals...")
    cfg = WorkloadConfig(arrival_rate=6.0, arrival_process=ArrivalProcess.POISSON_BATCH)
    times = list(generate_arrivals(cfg, 0, seconds(1000), RngStream(2, "arrivals:0")))
    assert all(t % TICKS_PER_SECOND == 0 for t in times)
    mean_batch = len(times) / 1000
    assert abs(mean_batch - 6.0) < 0.3
    print(f"✓ Batches land on whole seconds with mean size {mean_batch:.2f}")


def test_burstiness_ordering():
    """Per-window count variance: batches are burstier than a smooth stream"""
    print("\nTesting burstiness ordering...")
    horizon = seconds(100)
    window = ms(100)
    for seed in range(5):
        variances = {}
        for process in ArrivalProcess:
            cfg = WorkloadConfig(arrival_rate=6.0, arrival_process=process)
            times = np.array(list(generate_arrivals(cfg, 0, horizon, RngStream(seed, "arrivals:0"))))
            counts = np.bincount(times // window, minlength=horizon // window)
            variances[process] = counts.var()
        assert variances[ArrivalProcess.POISSON_BATCH] >= variances[ArrivalProcess.EXPONENTIAL]
    print("✓ PoissonBatch window variance >= Exponential on every seed")


def test_build_transaction():
    print("\nTesting transaction construction...")
    cfg = WorkloadConfig(cohort_size=6, write_prob=0.5, dist_degree=3)
    fmap = place_files(2400, 8, 4)
    streams = SiteStreams.for_site(RngStreams(42), 0)
    writes = total = 0
    for i in range(1000):
        t = build_transaction(cfg, i, 0, ms(i), fmap, streams)
        assert 1 <= len(t.cohorts) <= 3
        assert [c.site for c in t.cohorts] == sorted({c.site for c in t.cohorts})
        for c in t.cohorts:
            assert 3 <= len(c.pages) <= 9
            pages = [p for p, _ in c.pages]
            assert len(set(pages)) == len(pages)
            for p in pages:
                holder = next(f for f in range(fmap.num_files) if p in fmap.pages_of(f))
                assert fmap.holds(c.site, holder)
            writes += c.writes
            total += len(c.pages)
    share = writes / total
    assert abs(share - 0.5) < 0.02
    print(f"✓ Page counts in [3, 9], pages resident, write share {share:.3f}")

    cfg0 = WorkloadConfig(write_prob=0.0)
    t = build_transaction(cfg0, 0, 1, 0, fmap, SiteStreams.for_site(RngStreams(1), 1))
    assert not t.has_write
    print("✓ WriteProb 0 gives read-only transactions")

    try:
        build_transaction(WorkloadConfig(dist_degree=40), 0, 0, 0, fmap, streams)
    except WorkloadError:
        print("✓ DistDegree beyond the file count is rejected")
    else:
        raise AssertionError("dist_degree > files accepted")


def test_resource_time():
    print("\nTesting resource-time estimates...")
    off = WorkloadConfig(include_commit_cost=False)
    on = WorkloadConfig(include_commit_cost=True)
    assert estimate_resource_time(make_txn(6, 3), off) == ms(540)
    assert estimate_resource_time(make_txn(6, 3), on) == ms(680)
    assert estimate_resource_time(make_txn(1, 1), off) == ms(30)
    assert estimate_resource_time(make_txn(6, 1, centralized=True), on) == ms(200)
    print("✓ 540 ms, 680 ms with commit cost, 30 ms for one page")


def test_deadlines():
    print("\nTesting deadline assignment...")
    assert assign_deadline(seconds(10), 4, ms(180)) == seconds(10.72)
    assert assign_deadline(0, 4, ms(680)) == seconds(2.72)
    for bad_sf in (0, -1):
        try:
            assign_deadline(0, bad_sf, ms(100))
        except WorkloadError:
            pass
        else:
            raise AssertionError("non-positive slack factor accepted")
    print("✓ DT = AT + SF x RT; SF must be positive")

    cfg = WorkloadConfig(slack_factor=4.0)
    fmap = place_files(2400, 8, 4)
    streams = [SiteStreams.for_site(RngStreams(7), s) for s in range(8)]
    for i in range(10_000):
        site = i % 8
        t = build_transaction(cfg, i, site, ms(i * 3), fmap, streams[site])
        assert abs((t.deadline - t.arrival_time) - 4 * t.resource_time) <= 1
        assert t.deadline == t.base_deadline
    print("✓ DT - AT = 4 x RT within one tick over 10^4 transactions")


def test_terminal_resubmit():
    print("\nTesting terminal resubmission...")
    zero = WorkloadConfig(mode=WorkloadMode.CLOSED, terminal_think_max=0)
    rng = RngStream(4, "think-time:0")
    assert terminal_resubmit(zero, ms(123), rng) == ms(123)
    print("✓ Zero think time resubmits immediately")

    cfg = WorkloadConfig(mode=WorkloadMode.CLOSED, terminal_think_max=seconds(0.5))
    delays = np.array([terminal_resubmit(cfg, 0, rng) for _ in range(10_000)])
    assert delays.min() >= 0 and delays.max() <= seconds(0.5)
    assert abs(delays.mean() - ms(250)) / ms(250) < 0.02
    print(f"✓ Delays within [0, 0.5 s], mean {delays.mean() / 1000:.1f} ms")

    try:
        terminal_resubmit(WorkloadConfig(), 0, rng)
    except WorkloadError:
        print("✓ Open workload refuses terminal resubmission")
    else:
        raise AssertionError("resubmission in Open mode accepted")


def main():
    tests = [
        ("Exponential Arrivals", test_exponential_arrivals),
        ("Batch Arrivals", test_batch_arrivals),
        ("Burstiness Ordering", test_burstiness_ordering),
        ("Build Transaction", test_build_transaction),
        ("Resource Time", test_resource_time),
        ("Deadlines", test_deadlines),
        ("Terminal Resubmit", test_terminal_resubmit),
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
