"""Command-line front end: simulate / verify / plot.

Exit code 0 means the requested run completed and the safety report came
back clean; any violation, abort or error exits non-zero.  The only
environment variable honoured is ``SAFECROSS_LOG`` (log verbosity).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .outputs import emit_outputs, plot_cbf_values, plot_states_inputs
from .scenario import ScenarioError, load_scenario
from .simulate import SimTrace, SimulationAborted, run
from .verification import verify_invariants

log = logging.getLogger("safecross")


def _setup_logging() -> None:
    level = os.environ.get("SAFECROSS_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(message)s")


def _cmd_simulate(args) -> int:
    try:
        cfg = load_scenario(args.config)
    except ScenarioError as exc:
        log.error("invalid scenario: %s", exc)
        return 2
    if args.duration is not None:
        cfg = cfg.with_duration(args.duration)
    if args.seed is not None:
        log.info("seed %d accepted (reserved; the run is deterministic)",
                 args.seed)
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir)

    log.info("running %s: %d agents, %d steps at %.0f ms",
             cfg.name, cfg.n_agents, cfg.n_steps, cfg.ts_s * 1e3)
    try:
        trace = run(cfg)
    except SimulationAborted as exc:
        log.error("run aborted: %s", exc.reason)
        report = verify_invariants(exc.trace, cfg)
        written = emit_outputs(exc.trace, report, out_dir,
                               csv_only=args.csv_only)
        for name, path in written.items():
            log.info("wrote %s: %s", name, path)
        return 3

    report = verify_invariants(trace, cfg)
    written = emit_outputs(trace, report, out_dir, csv_only=args.csv_only)
    for name, path in written.items():
        log.info("wrote %s: %s", name, path)
    _summarize(report)
    return 0 if report.clean else 1


def _cmd_verify(args) -> int:
    try:
        cfg = load_scenario(args.config)
    except ScenarioError as exc:
        log.error("invalid scenario: %s", exc)
        return 2
    try:
        trace = SimTrace.from_csv(args.trace)
    except (OSError, ValueError) as exc:
        log.error("cannot read trace: %s", exc)
        return 2
    report = verify_invariants(trace, cfg)
    _summarize(report)
    return 0 if report.clean else 1


def _cmd_plot(args) -> int:
    try:
        trace = SimTrace.from_csv(args.trace)
    except (OSError, ValueError) as exc:
        log.error("cannot read trace: %s", exc)
        return 2
    out_dir = Path(args.out) if args.out else Path(args.trace).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    states = out_dir / "states_inputs.svg"
    cbf = out_dir / "cbf_values.svg"
    plot_states_inputs(trace, states)
    plot_cbf_values(trace, cbf)
    log.info("wrote %s and %s", states, cbf)
    return 0


def _summarize(report) -> None:
    verdict = "CLEAN" if report.clean else "VIOLATIONS"
    log.info("safety report: %s (%d steps)", verdict, report.n_steps)
    if report.cbf_min:
        worst = min(report.cbf_min.items(), key=lambda kv: kv[1])
        log.info("  min barrier value: %s = %.6g", worst[0], worst[1])
    if report.qp_time_mean_s is not None:
        log.info("  qp solve time: mean %.3f ms, max %.3f ms",
                 report.qp_time_mean_s * 1e3, report.qp_time_max_s * 1e3)
    for name, step, value in report.cbf_floor_violations:
        log.warning("  barrier floor violated: %s = %.6g at step %d",
                    name, value, step)
    for name, step, margin in report.comparison_violations[:10]:
        log.warning("  decay margin violated: %s margin %.6g at step %d",
                    name, margin, step)
    for step, agent, value in report.input_violations[:10]:
        log.warning("  input bound violated: u_%d = %.6g at step %d",
                    agent + 1, value, step)
    for step, i, j in report.obb_overlaps[:10]:
        log.warning("  footprint overlap: agents %d/%d at step %d",
                    i + 1, j + 1, step)
    if report.qp_failure_count:
        log.warning("  qp failures: %d", report.qp_failure_count)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safecross",
        description="Barrier-filtered intersection coordination simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and emit outputs")
    sim.add_argument("config", help="scenario TOML file")
    sim.add_argument("--out", help="output directory (default from scenario)")
    sim.add_argument("--csv-only", action="store_true",
                     help="skip SVG plot emission")
    sim.add_argument("--duration", type=float, default=None,
                     help="override run duration [s]")
    sim.add_argument("--seed", type=int, default=None,
                     help="random seed (reserved, unused by default)")
    sim.set_defaults(func=_cmd_simulate)

    ver = sub.add_parser("verify", help="re-verify an existing trace CSV")
    ver.add_argument("trace", help="trace CSV file")
    ver.add_argument("config", help="scenario TOML the trace came from")
    ver.set_defaults(func=_cmd_verify)

    plo = sub.add_parser("plot", help="render SVG plots from a trace CSV")
    plo.add_argument("trace", help="trace CSV file")
    plo.add_argument("--out", help="output directory (default: trace's)")
    plo.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
