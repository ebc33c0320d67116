#!/usr/bin/env python3
"""
Directional checks of the canned experiments over paired seeds.

Horizons are reduced so the whole file runs in a few minutes; the loads
are those of the presets, chosen so the effects are not masked by disk
saturation.
"""

import logging
import sys

import numpy as np

from engine import RngStreams
from harness import SweepSpec, preset_config, sweep
from metrics import (
    LoadClass,
    mean_commit_phase_ms,
    mean_response_ms,
    miss_percent,
    paired_wins,
    sign_test,
    throughput,
)
from sim_config import ExperimentConfig, PolicyRegime
from simulator import Simulation
from topology import place_files
from workload import SiteStreams, build_transaction

logging.basicConfig(level=logging.WARNING)

SEEDS = 20


def per_seed_miss(result, **values):
    return [miss_percent(s)[0] for s in result.per_seed(**values)]


def preset_sweep(name, seeds=SEEDS, **changes):
    cfg, spec = preset_config(name)
    return sweep(cfg.with_values(changes), spec, seeds, preset=name)


def test_deadline_formula():
    print("\nTesting DT - AT = SF x RT on generated transactions...")
    cfg = ExperimentConfig()
    wcfg = cfg.workload()
    streams = RngStreams(cfg.seed)
    fmap = place_files(cfg.dbsize, cfg.num_sites, cfg.files_per_site)
    per_site = [SiteStreams.for_site(streams, s) for s in range(cfg.num_sites)]
    for i in range(10_000):
        site = i % cfg.num_sites
        t = build_transaction(wcfg, i, site, i * 137, fmap, per_site[site])
        assert abs((t.deadline - t.arrival_time) - 4 * t.resource_time) <= 1
    print("✓ 10^4 transactions, all within one tick")


def test_centralized_vs_distributed():
    print("\nTesting centralized vs distributed MissPercent at equal aggregate load...")
    result = preset_sweep("fig1", SimDuration="60")
    cfg, _ = preset_config("fig1")
    assert cfg.slack_factor == 4.0
    assert cfg.with_values({"NumSites": 1}).site_arrival_rate == 4.0
    assert cfg.with_values({"NumSites": 8}).site_arrival_rate == 0.5
    central = per_seed_miss(result, NumSites=1)
    distributed = per_seed_miss(result, NumSites=8)
    wins = sum(1 for c, d in zip(central, distributed) if d > c)
    assert wins >= 18, (wins, central, distributed)
    print(f"✓ 4 tps over 1 or 8 sites, 100 ms per message: distributed misses more "
          f"in {wins}/20 paired seeds ({np.mean(distributed):.1f}% vs {np.mean(central):.1f}%)")

    # with 1 ms messages the eight sites simply share the load and the order flips
    cheap = preset_sweep("fig1", MsgCpu="1", AggregateArrivalRate="8", SimDuration="20")
    central = per_seed_miss(cheap, NumSites=1)
    distributed = per_seed_miss(cheap, NumSites=8)
    fewer = sum(1 for c, d in zip(central, distributed) if d < c)
    assert fewer >= 18, (fewer, central, distributed)
    print(f"✓ 8 tps with 1 ms messages: distributed misses less in {fewer}/20 seeds "
          f"({np.mean(distributed):.1f}% vs {np.mean(central):.1f}%)")


def test_parallel_vs_sequential():
    print("\nTesting parallel vs sequential execution...")
    result = preset_sweep("fig2", SimDuration="20")
    par = result.per_seed(ExecMode="Parallel")
    seq = result.per_seed(ExecMode="Sequential")
    wins, _ = paired_wins([mean_response_ms(s) for s in par], [mean_response_ms(s) for s in seq])
    assert wins >= 18, wins
    mp = np.mean([miss_percent(s)[0] for s in par])
    ms_ = np.mean([miss_percent(s)[0] for s in seq])
    assert mp <= ms_, (mp, ms_)
    print(f"✓ Parallel responds faster in {wins}/20 seeds; MissPercent {mp:.2f} <= {ms_:.2f}")

    phases = [mean_commit_phase_ms(result.stats_for(ExecMode=m)) for m in ("Parallel", "Sequential")]
    assert all(p is not None and p > 0 for p in phases), phases
    print(f"✓ Mean commit phase: {phases[0]:.1f} ms parallel, {phases[1]:.1f} ms sequential")


def test_arrival_burstiness():
    print("\nTesting Poisson-batch vs exponential arrivals...")
    result = preset_sweep("dist-compare", SimDuration="30")
    expo = per_seed_miss(result, ArrivalProcess="Exponential")
    batch = per_seed_miss(result, ArrivalProcess="PoissonBatch")
    wins, losses = paired_wins([-b for b in batch], [-e for e in expo])
    p = sign_test(wins, losses)
    assert np.mean(batch) > np.mean(expo)
    assert p < 0.05, (wins, losses, p)
    print(f"✓ Batches miss more: {np.mean(batch):.2f}% vs {np.mean(expo):.2f}% (p={p:.4f})")


def test_slack_factor_throughput():
    print("\nTesting throughput against slack factor...")
    cfg, spec = preset_config("fig3")
    factors = dict(spec.params)["Slackfactor"]
    assert factors == ["1", "2", "4", "8"]
    moderate = cfg.with_values({"ArrivalRate": "1.8", "SimDuration": "30"})
    result = sweep(moderate, SweepSpec([("Slackfactor", factors)]), SEEDS, preset="fig3")
    tps = [throughput(result.stats_for(Slackfactor=sf)) for sf in factors]
    assert tps[0] < tps[1] <= tps[2], tps
    print(f"✓ Throughput at SF 1, 2, 4, 8: {', '.join(f'{x:.3f}' for x in tps)} tps "
          f"(nondecreasing up to SF 4)")

    heavy = sweep(cfg.with_values({"ArrivalRate": "12", "SimDuration": "10"}), SweepSpec(), 1)
    percent, load = miss_percent(heavy.aggregate[0][1])
    assert percent > 50 and load is LoadClass.HEAVY
    print(f"✓ ArrivalRate 12 is overloaded: MissPercent {percent:.1f}")


def test_intelligent_agent():
    print("\nTesting the intelligent agent against static slack...")
    result = preset_sweep("fig4", SimDuration="30")
    static = per_seed_miss(result, PolicyRegime="Static")
    agent = per_seed_miss(result, PolicyRegime="IntelligentAgent")
    wins, losses = paired_wins(agent, static)
    p = sign_test(wins, losses)
    assert np.mean(agent) < np.mean(static)
    assert p < 0.05, (wins, losses, p)
    print(f"✓ Agent {np.mean(agent):.2f}% < static {np.mean(static):.2f}% (p={p:.4f})")

    cfg, _ = preset_config("fig4")
    cfg = cfg.with_values({"SimDuration": "30", "PolicyRegime": "IntelligentAgent"})
    for seed in range(3):
        sim = Simulation(cfg.with_values({"Seed": seed}))
        sim.run()
        ledger = sim.ledger
        assert len(ledger.agent_history) == ledger.agent_grants > 0
        for granted_before, generated in ledger.agent_history:
            assert granted_before < cfg.agent_budget * generated
    print("✓ Every agent grant was issued while grants < AgentBudget x generated")


def test_dynamic_redistribution():
    print("\nTesting dynamic slack redistribution against static slack...")
    result = preset_sweep("fig5", SimDuration="30")
    static = per_seed_miss(result, PolicyRegime="Static")
    dynamic = per_seed_miss(result, PolicyRegime="DynamicRedistribution")
    wins, losses = paired_wins(dynamic, static)
    p = sign_test(wins, losses)
    assert np.mean(dynamic) < np.mean(static)
    assert p < 0.05, (wins, losses, p)
    print(f"✓ Redistribution {np.mean(dynamic):.2f}% < static {np.mean(static):.2f}% (p={p:.4f})")

    cfg, _ = preset_config("fig5")
    cfg = cfg.with_values({"SimDuration": "30", "PolicyRegime": "DynamicRedistribution"})
    sim = Simulation(cfg)
    sim.run()
    ledger = sim.ledger
    assert ledger.scans > 0 and ledger.granted_total <= ledger.pool_total
    assert ledger.pool_history and min(ledger.pool_history) >= 0
    assert cfg.policy_regime is PolicyRegime.DYNAMIC_REDISTRIBUTION
    print(f"✓ {ledger.scans} scans, granted {ledger.granted_total} <= pooled {ledger.pool_total}")


def main():
    tests = [
        ("Deadline Formula", test_deadline_formula),
        ("Centralized vs Distributed", test_centralized_vs_distributed),
        ("Parallel vs Sequential", test_parallel_vs_sequential),
        ("Arrival Burstiness", test_arrival_burstiness),
        ("Slack Factor Throughput", test_slack_factor_throughput),
        ("Intelligent Agent", test_intelligent_agent),
        ("Dynamic Redistribution", test_dynamic_redistribution),
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
