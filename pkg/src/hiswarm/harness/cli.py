"""Command line: ``hiswarm plan <instance> --config cfg.yaml --out dir``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .audit import sample_report_positions
from .config import ROUTERS, ParseError, SchemaError, SimConfig, load_config, load_instance
from .fixtures import FIXTURES, load_fixture
from .sim import PartitionFailed, RoutingUnsolvable, run_simulation

log = logging.getLogger("hiswarm")


def _instance(arg: str):
    if arg in FIXTURES and not Path(arg).exists():
        return load_fixture(arg)
    return load_instance(arg)


def write_trajectories_csv(report, path, rate: float = 20.0):
    times, pos = sample_report_positions(report, rate)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["robot", "t", "x", "y", "z"])
        for rid in sorted(pos):
            for t, p in zip(times, pos[rid]):
                w.writerow([rid, f"{t:.4f}", f"{p[0]:.6f}", f"{p[1]:.6f}", f"{p[2]:.6f}"])


def metrics_rows(report) -> list:
    """(metric, value) pairs; stage totals are sums of the recorded per-cycle spans."""
    tm = report.timings
    rows = [
        ("robots", len(report.robots)),
        ("success_rate", report.success_rate),
        ("makespan_s", report.makespan),
        ("ticks", report.ticks),
        ("collision_events", len(report.collisions)),
        ("relaxed_fallbacks", report.relaxed_fallbacks),
        ("reduced_joints", report.reduced_joints),
        ("mapf_fallbacks", report.mapf_fallbacks),
        ("n_max", max(report.n_max.values(), default=0)),
        ("max_influx", max((r["max_influx"] for r in report.routing), default=0)),
    ]
    for stage in ("build", "route", "discrete", "trajectory", "cycle"):
        v = np.asarray(tm.get(stage, []), float)
        rows.append((f"t_{stage}_total_s", float(v.sum())))
        rows.append((f"t_{stage}_max_s", float(v.max()) if v.size else 0.0))
        if stage not in ("build",):
            rows.append((f"t_{stage}_mean_s", float(v.mean()) if v.size else 0.0))
    return rows


def write_outputs(report, inst, out: Path, figures: bool = True) -> list:
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "report.json", out / "trajectories.csv", out / "metrics.csv", out / "timings.json"]
    files[0].write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    write_trajectories_csv(report, files[1])
    with open(files[2], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        w.writerows(metrics_rows(report))
    files[3].write_text(json.dumps(report.timings, indent=1) + "\n")
    written = [str(p) for p in files]
    if figures:
        from .plots import render_all

        written += render_all(report, inst, out)
    return written


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hiswarm", description="Hierarchical multi-robot planning on desk-scale instances.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("plan", help="run the replanning simulation on an instance")
    p.add_argument("instance", help=f"instance YAML path or a shipped fixture ({', '.join(FIXTURES)})")
    p.add_argument("--config", help="simulator config YAML (defaults when omitted)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--router", choices=sorted(ROUTERS))
    p.add_argument("--cells", type=int, metavar="Q")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        inst = _instance(args.instance)
        cfg = load_config(args.config) if args.config else SimConfig()
        over = {k: v for k, v in (("seed", args.seed), ("router", args.router), ("Q", args.cells)) if v is not None}
        if over:
            cfg = dataclasses.replace(cfg, **over)
    except (OSError, ParseError, SchemaError) as e:
        print(f"hiswarm: input error: {e}", file=sys.stderr)
        return 2
    log.info("instance %s: %d robots, Q=%d, router=%s", inst.name, len(inst.robots), cfg.Q, cfg.router)
    try:
        report = run_simulation(inst, cfg)
    except (PartitionFailed, RoutingUnsolvable) as e:
        print(f"hiswarm: {e}", file=sys.stderr)
        return 3
    for f in write_outputs(report, inst, Path(args.out), not args.no_figures):
        log.info("wrote %s", f)
    print(
        f"{inst.name}: success {report.success_rate:.0%}, makespan {report.makespan:.2f} s, "
        f"{len(report.collisions)} collision events, {report.relaxed_fallbacks} relaxed fallbacks"
    )
    return 0 if report.success_rate == 1.0 else 1


if __name__ == "__main__":
    sys.exit(main())
