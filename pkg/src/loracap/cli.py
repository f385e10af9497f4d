"""Command-line front end.

Verbs: ``model`` (analytic sweep), ``simulate`` (simulator sweep),
``validate`` (cross-check the two below capacity) and ``capacity`` (print the
load bound and its per-rate breakdown).  All verbs read a YAML scenario file;
exit codes are 0 on success, 2 for configuration errors, 3 for numerical
failures and 4 for a failed validation.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import Scenario, load_scenario
from .errors import ConfigError, NumericalError
from .model import capacity, evaluate
from .sweep import merge_rows, run_model_sweep, run_sim_sweep, validate, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VALIDATION = 4


def _write_output(rows, scenario: Scenario, out_path: str | None) -> None:
    path = out_path or scenario.output
    if path:
        with open(path, "w") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, sys.stdout)


def cmd_model(args) -> int:
    scenario = load_scenario(args.scenario)
    rows = run_model_sweep(scenario)
    _write_output(rows, scenario, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seeds:
        scenario = replace(scenario, seeds=tuple(args.seeds))
    trace_fh = open(args.trace, "w") if args.trace else None
    try:
        if trace_fh:
            trace_fh.write("time,entity,event,channel,rate,outcome\n")
        rows = run_sim_sweep(scenario, jobs=args.jobs, trace=trace_fh)
    finally:
        if trace_fh:
            trace_fh.close()
    _write_output(rows, scenario, args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seeds:
        scenario = replace(scenario, seeds=tuple(args.seeds))
    report = validate(scenario, tolerance_abs=args.tolerance, jobs=args.jobs)
    _write_output(list(report.rows), scenario, args.out)
    print(report.summary(), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_capacity(args) -> int:
    scenario = load_scenario(args.scenario)
    network = scenario.network
    cap = capacity(network)
    t_ack0 = network.plan.rings[0].airtime.ack_s
    print(f"capacity_fps {cap:.9g}")
    for i, ring in enumerate(network.plan.rings):
        cycle = (
            ring.airtime.data_frame_s
            + network.ack_delay_2_s
            + t_ack0
            + 1.0
            + network.retry_window_s / 2.0
        )
        print(
            f"rate {i}: usage_prob {ring.usage_prob:.9g} "
            f"cycle_s {cycle:.9g} contribution_s {ring.usage_prob * cycle:.9g}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loracap",
        description="Uplink PER analysis and simulation for capture-aware LoRaWAN cells",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, doc in (
        ("model", cmd_model, "analytic PER sweep"),
        ("simulate", cmd_simulate, "simulator PER sweep"),
        ("validate", cmd_validate, "cross-validate model against simulation"),
        ("capacity", cmd_capacity, "print the capacity bound"),
    ):
        cmd = sub.add_parser(name, help=doc)
        cmd.add_argument("--scenario", required=True, help="path to the YAML scenario file")
        cmd.add_argument("--out", help="write the sweep CSV here instead of stdout")
        cmd.set_defaults(handler=handler)
        if name in ("simulate", "validate"):
            cmd.add_argument("--seeds", type=int, nargs="+", help="override the scenario's seed list")
            cmd.add_argument("--jobs", type=int, default=1, help="worker processes for simulation runs")
        if name == "simulate":
            cmd.add_argument("--trace", help="write a per-event CSV trace of the first run")
        if name == "validate":
            cmd.add_argument("--tolerance", type=float, help="absolute PER tolerance override")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
