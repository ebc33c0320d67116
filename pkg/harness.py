#!/usr/bin/env python3
"""
Experiment runner for the distributed firm-deadline transaction simulator.

Subcommands:
- run     one configuration, one seed
- sweep   full-factorial parameter sweep over paired seeds
- preset  one of the canned experiments (fig1..fig5, dist-compare)
"""

import argparse
import csv
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from commit import ProtocolTrace
from errors import EXIT_OK, ConfigError, OutputError, SimulationError
from metrics import (
    RunStats,
    check_conservation,
    merge_all,
    miss_percent,
    per_site_rows,
    summary_line,
    to_row,
)
from sim_config import ExperimentConfig, format_value, load_config, lookup_key
from simulator import Simulation

logger = logging.getLogger(__name__)

AGGREGATE_COLUMNS = [
    "preset", "param_values", "seed_count", "generated", "committed_in_time", "missed",
    "miss_percent", "throughput_tps", "mean_response_ms", "p95_response_ms",
    "grants_issued", "wasted_ms",
]
DETAIL_COLUMNS = AGGREGATE_COLUMNS[:2] + ["seed"] + AGGREGATE_COLUMNS[2:]
PER_SITE_COLUMNS = [
    "site", "generated", "committed_in_time", "missed", "miss_percent", "cpu_util", "disk_util",
]

Combo = Tuple[Tuple[str, str], ...]


def run_experiment(cfg: ExperimentConfig, trace: Optional[ProtocolTrace] = None) -> RunStats:
    """One complete run; conservation is checked before returning"""
    stats = Simulation(cfg, trace=trace).run()
    check_conservation(stats)
    percent, _ = miss_percent(stats)
    if percent is None:
        logger.warning(f"seed {cfg.seed}: no transaction finished, MissPercent undefined")
    return stats


def _run_config(cfg):
    return run_experiment(cfg)


@dataclass
class SweepSpec:
    """Swept keys and their values; combinations are the full product"""

    params: List[Tuple[str, List[str]]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for key, values in self.params:
            lookup_key(key)
            if key in seen:
                raise ConfigError(key, "swept twice")
            if not values:
                raise ConfigError(key, "no values to sweep")
            seen.add(key)

    @classmethod
    def parse(cls, items):
        """From CLI items of the form KEY=v1,v2,..."""
        params = []
        for item in items:
            if "=" not in item:
                raise ConfigError(item, "expected KEY=v1,v2,...")
            key, values = item.split("=", 1)
            params.append((key.strip(), [v.strip() for v in values.split(",") if v.strip()]))
        return cls(params)

    @property
    def keys(self):
        return [key for key, _ in self.params]

    def combinations(self) -> List[Combo]:
        if not self.params:
            return [()]
        product = itertools.product(*[[(k, v) for v in values] for k, values in self.params])
        return [tuple(combo) for combo in product]


@dataclass
class SweepResult:
    preset: str
    keys: List[str]
    detail: List[Tuple[Combo, int, RunStats]] = field(default_factory=list)
    aggregate: List[Tuple[Combo, RunStats]] = field(default_factory=list)

    def stats_for(self, **values) -> RunStats:
        """Aggregate of the combination with the given key values"""
        wanted = {k: str(v) for k, v in values.items()}
        for combo, stats in self.aggregate:
            if all(dict(combo).get(k) == v for k, v in wanted.items()):
                return stats
        raise KeyError(f"no combination matches {wanted}")

    def per_seed(self, **values) -> List[RunStats]:
        wanted = {k: str(v) for k, v in values.items()}
        return [s for combo, _, s in self.detail
                if all(dict(combo).get(k) == v for k, v in wanted.items())]


def param_values(combo: Combo):
    return ";".join(f"{k}={v}" for k, v in combo)


def sweep(cfg: ExperimentConfig, spec: SweepSpec, replications, preset="sweep",
          workers=1) -> SweepResult:
    """Every combination over seeds base..base+replications-1 (paired)"""
    if replications < 1:
        raise ConfigError("Replications", f"must be >= 1, got {replications}")
    combos = spec.combinations()
    tasks = []
    for combo in combos:
        ccfg = cfg.with_values(dict(combo))
        for r in range(replications):
            tasks.append((combo, ccfg.seed + r, ccfg.with_values({"Seed": ccfg.seed + r})))

    logger.info(f"Sweep '{preset}': {len(combos)} combinations x {replications} seeds")
    configs = [t[2] for t in tasks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_config, configs))
    else:
        results = []
        for i, c in enumerate(configs):
            results.append(_run_config(c))
            if (i + 1) % replications == 0:
                logger.info(f"  {param_values(tasks[i][0]) or 'base'}: done")

    out = SweepResult(preset=preset, keys=spec.keys)
    for (combo, seed, _), stats in zip(tasks, results):
        out.detail.append((combo, seed, stats))
    for combo in combos:
        merged = merge_all(s for c, _, s in out.detail if c == combo)
        out.aggregate.append((combo, merged))
        logger.info(f"  {param_values(combo) or 'base'}: {summary_line(merged)}")
    return out


def _write_csv(path, columns, rows):
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            raise OutputError(f"directory {path.parent} does not exist")
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from None
    logger.info(f"Wrote {path}")


def detail_path(path):
    path = Path(path)
    return path.with_name(f"{path.stem}_detail{path.suffix or '.csv'}")


def emit(results: SweepResult, fmt, path, metric="miss_percent"):
    """Write aggregate rows (and a _detail file) as CSV, or a line plot as SVG"""
    if not results.aggregate:
        raise OutputError("nothing to emit")
    if fmt == "csv":
        rows = []
        for combo, stats in results.aggregate:
            rows.append({"preset": results.preset, "param_values": param_values(combo),
                         **to_row(stats)})
        _write_csv(path, AGGREGATE_COLUMNS, rows)
        detail = []
        for combo, seed, stats in results.detail:
            detail.append({"preset": results.preset, "param_values": param_values(combo),
                           "seed": str(seed), **to_row(stats)})
        _write_csv(detail_path(path), DETAIL_COLUMNS, detail)
    elif fmt == "svg":
        _plot_svg(results, path, metric)
    else:
        raise OutputError(f"unknown output format {fmt!r}")


def _as_number(text):
    try:
        return float(text)
    except ValueError:
        return None


def _plot_svg(results: SweepResult, path, metric):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "rtdb-sim"
    x_key = results.keys[0] if results.keys else None
    series: Dict[str, List[Tuple[str, float]]] = {}
    for combo, stats in results.aggregate:
        values = dict(combo)
        x = values.get(x_key, "base")
        label = param_values(tuple((k, v) for k, v in combo if k != x_key)) or metric
        y = _fmt_metric(to_row(stats)[metric])
        series.setdefault(label, []).append((x, y))

    numeric = all(_as_number(x) is not None for pts in series.values() for x, _ in pts)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, points in series.items():
        if numeric:
            xs = [float(x) for x, _ in points]
        else:
            xs = [x for x, _ in points]
        ax.plot(xs, [y for _, y in points], marker="o", label=label)
    ax.set_xlabel(x_key or "")
    ax.set_ylabel(metric)
    ax.set_title(results.preset)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from None
    finally:
        plt.close(fig)
    logger.info(f"Wrote {path}")


def _fmt_metric(text):
    return float(text) if text else float("nan")


# Canned experiments. Each is (description, base overrides, swept keys).
# Overrides put the comparisons in the load region where they are visible
# (see LOAD_ANALYSIS.md); SimDuration and Replications keep their defaults.
PRESETS = {
    "fig1": (
        "centralized (1 site) vs distributed (8 sites) MissPercent, equal aggregate load",
        {"AggregateArrivalRate": "4", "MsgCpu": "100"},
        [("NumSites", ["1", "8"])],
    ),
    "fig2": (
        "parallel vs sequential cohort execution",
        {"ArrivalRate": "1"},
        [("ExecMode", ["Parallel", "Sequential"])],
    ),
    "fig3": (
        "slack factor vs throughput",
        {},
        [("Slackfactor", ["1", "2", "4", "8"]), ("ArrivalRate", ["1", "1.8", "6", "12"])],
    ),
    "fig4": (
        "intelligent agent vs static slack",
        {"ArrivalRate": "1.8"},
        [("PolicyRegime", ["Static", "IntelligentAgent"])],
    ),
    "fig5": (
        "dynamic slack redistribution vs static slack",
        {"ArrivalRate": "1.8", "GrantMargin": "100", "MaxGrantsPerTxn": "2"},
        [("PolicyRegime", ["Static", "DynamicRedistribution"])],
    ),
    "dist-compare": (
        "exponential vs Poisson-batch arrivals",
        {"ArrivalRate": "1.5", "Slackfactor": "2"},
        [("ArrivalProcess", ["Exponential", "PoissonBatch"])],
    ),
}


def preset_config(name, base: Optional[ExperimentConfig] = None) -> Tuple[ExperimentConfig, SweepSpec]:
    if name not in PRESETS:
        raise ConfigError(name, f"unknown preset (have {', '.join(PRESETS)})")
    _, overrides, params = PRESETS[name]
    cfg = (base or ExperimentConfig()).with_values(overrides)
    return cfg, SweepSpec([(k, list(v)) for k, v in params])


def run_preset(name, replications=None, duration=None, overrides=None, workers=1) -> SweepResult:
    cfg, spec = preset_config(name)
    changes = dict(overrides or {})
    if duration is not None:
        changes["SimDuration"] = duration
    if changes:
        cfg = cfg.with_values(changes)
    reps = replications if replications is not None else cfg.replications
    return sweep(cfg, spec, reps, preset=name, workers=workers)


def build_parser():
    parser = argparse.ArgumentParser(
        description="Distributed firm-deadline real-time transaction simulator"
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configuration")
    p_run.add_argument("--config", help="key = value config file (defaults if omitted)")
    p_run.add_argument("--seed", type=int, help="override Seed")
    p_run.add_argument("--out", help="one-row CSV summary")
    p_run.add_argument("--per-site", dest="per_site", help="per-site CSV breakdown")
    p_run.add_argument("--trace", help="protocol trace file")

    p_sweep = sub.add_parser("sweep", help="full-factorial sweep over paired seeds")
    p_sweep.add_argument("--config", help="key = value config file (defaults if omitted)")
    p_sweep.add_argument("--vary", action="append", default=[], metavar="KEY=v1,v2,...")
    p_sweep.add_argument("--reps", type=int, help="replications (default: Replications)")
    p_sweep.add_argument("--out", required=True, help="aggregate CSV path")
    p_sweep.add_argument("--plot", help="SVG plot path")
    p_sweep.add_argument("--workers", type=int, default=1, help="worker processes")

    p_preset = sub.add_parser("preset", help="run a canned experiment")
    p_preset.add_argument("name", choices=sorted(PRESETS))
    p_preset.add_argument("--out", help="aggregate CSV path")
    p_preset.add_argument("--reps", type=int, help="replications")
    p_preset.add_argument("--duration", type=float, help="SimDuration in seconds")
    p_preset.add_argument("--set", dest="settings", action="append", default=[],
                          metavar="KEY=VALUE", help="override a preset setting")
    p_preset.add_argument("--plot", help="SVG plot path")
    p_preset.add_argument("--workers", type=int, default=1, help="worker processes")
    return parser


def _cmd_run(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_values({"Seed": args.seed})
    trace = ProtocolTrace() if args.trace else None
    logger.info(f"Running seed {cfg.seed} for {format_value(cfg.sim_duration_s)} s")
    stats = run_experiment(cfg, trace)
    logger.info(summary_line(stats))
    if trace is not None:
        trace.write(args.trace)
    if args.out:
        row = {"preset": "run", "param_values": "", **to_row(stats)}
        _write_csv(args.out, AGGREGATE_COLUMNS, [row])
    if args.per_site:
        _write_csv(args.per_site, PER_SITE_COLUMNS, per_site_rows(stats))


def _cmd_sweep(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    spec = SweepSpec.parse(args.vary)
    reps = args.reps if args.reps is not None else cfg.replications
    results = sweep(cfg, spec, reps, workers=args.workers)
    emit(results, "csv", args.out)
    if args.plot:
        emit(results, "svg", args.plot)


def parse_settings(items):
    """KEY=VALUE strings to a config-change dict"""
    changes, seen = {}, set()
    for item in items:
        key, sep, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(item, "expected KEY=VALUE")
        name, _ = lookup_key(key)
        if name in seen:
            raise ConfigError(key, "set twice")
        seen.add(name)
        changes[key] = value
    return changes


def _cmd_preset(args):
    results = run_preset(args.name, replications=args.reps, duration=args.duration,
                         overrides=parse_settings(args.settings), workers=args.workers)
    if args.out:
        emit(results, "csv", args.out)
    if args.plot:
        emit(results, "svg", args.plot)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    commands = {"run": _cmd_run, "sweep": _cmd_sweep, "preset": _cmd_preset}
    try:
        commands[args.command](args)
    except SimulationError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
