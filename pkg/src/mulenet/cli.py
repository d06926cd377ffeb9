"""Command-line surface: validate scenarios, run simulations, render reports.

Exit codes: 0 success, 1 validation (or parse) failure, 2 I/O failure.
Output files are pure functions of (scenario, seed): metrics.json,
transfers.csv (time,from,to,item,action) and events.csv.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from .simkit import (
    METRICS_FIELDS,
    AuditError,
    RunResult,
    ScenarioParseError,
    load_scenario_file,
    run,
    validate_scenario,
)

TRANSFERS_HEADER = "time,from,to,item,action"
EVENTS_HEADER = "event_id,event_type,severity,area_x,area_y,area_radius,detected_at,evidence"


@dataclass
class RunConfig:
    scenario_path: str
    seed: int | None = None
    out_dir: str = "out"
    audit: bool = False
    report_format: str = "summary"


def _fmt_time(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(t)


def render_metrics(metrics_dict: dict) -> str:
    return json.dumps(metrics_dict, indent=2) + "\n"


def render_transfers(result: RunResult) -> str:
    lines = [TRANSFERS_HEADER]
    for log in result.transfers:
        lines.append(
            f"{_fmt_time(log.time)},{log.from_id},{log.to_id},{log.item},{log.action.value}"
        )
    return "\n".join(lines) + "\n"


def render_events(result: RunResult) -> str:
    lines = [EVENTS_HEADER]
    for ev in result.events:
        evidence = ";".join(ev.evidence)
        lines.append(
            f"{ev.event_id},{ev.event_type},{ev.severity.value},"
            f"{ev.area.centre[0]:g},{ev.area.centre[1]:g},{ev.area.radius:g},"
            f"{_fmt_time(ev.detected_at)},{evidence}"
        )
    return "\n".join(lines) + "\n"


def write_outputs(result: RunResult, out_dir: str) -> None:
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(render_metrics(result.metrics.to_dict()))
    with open(os.path.join(out_dir, "transfers.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(render_transfers(result))
    with open(os.path.join(out_dir, "events.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(render_events(result))


def validate_command(path: str, out=None, err=None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    try:
        scenario = load_scenario_file(path)
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=err)
        return 1
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=err)
        return 1
    diagnostics = validate_scenario(scenario)
    if diagnostics:
        for diag in diagnostics:
            print(str(diag), file=err)
        return 1
    print("ok", file=out)
    return 0


def run_command(config: RunConfig, out=None, err=None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    try:
        scenario = load_scenario_file(config.scenario_path)
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=err)
        return 1
    except ScenarioParseError as exc:
        print(f"parse error: {exc}", file=err)
        return 1
    if config.seed is not None:
        scenario.seed = config.seed
    diagnostics = validate_scenario(scenario)
    if diagnostics:
        for diag in diagnostics:
            print(str(diag), file=err)
        return 1
    try:
        os.makedirs(config.out_dir, exist_ok=True)
        if not os.access(config.out_dir, os.W_OK):
            raise OSError(f"output directory {config.out_dir!r} is not writable")
    except OSError as exc:
        print(str(exc), file=err)
        return 2
    try:
        result = run(scenario, audit=config.audit)
    except AuditError as exc:
        print(f"audit failure: {exc}", file=err)
        return 1
    try:
        write_outputs(result, config.out_dir)
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=err)
        return 2
    m = result.metrics
    print(
        f"generated={m.generated} delivered={m.delivered} "
        f"delivery_ratio={m.delivery_ratio:g}",
        file=out,
    )
    return 0


def render_report(metrics_dict: dict, fmt: str) -> str:
    if fmt == "summary":
        width = max((len(k) for k in metrics_dict), default=0)
        return "\n".join(
            f"{key.ljust(width)} {json.dumps(value)}" for key, value in metrics_dict.items()
        ) + "\n"
    if fmt == "csv":
        header = ",".join(metrics_dict)
        row = ",".join(json.dumps(v) for v in metrics_dict.values())
        return f"{header}\n{row}\n"
    if fmt == "json":
        return json.dumps(metrics_dict, indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def report_command(path: str, fmt: str, out=None, err=None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    try:
        with open(path, "r", encoding="utf-8") as fh:
            metrics_dict = json.load(fh)
    except OSError as exc:
        print(f"cannot read metrics: {exc}", file=err)
        return 1
    except json.JSONDecodeError as exc:
        print(f"parse error: line {exc.lineno}, column {exc.colno}: {exc.msg}", file=err)
        return 1
    if not isinstance(metrics_dict, dict):
        print("parse error: metrics file must hold a JSON object", file=err)
        return 1
    out.write(render_report(metrics_dict, fmt))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mulenet",
        description="Simulate store-and-forward disaster messaging scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a scenario file")
    p_validate.add_argument("scenario", help="scenario JSON file")

    p_run = sub.add_parser("run", help="run a scenario and write reports")
    p_run.add_argument("scenario", help="scenario JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--out", default="out", help="output directory (default: out)")
    p_run.add_argument(
        "--audit", action="store_true", help="check conservation and priority every tick"
    )

    p_report = sub.add_parser("report", help="render a metrics file")
    p_report.add_argument("metrics", help="metrics.json produced by run")
    p_report.add_argument(
        "--format", choices=("summary", "csv", "json"), default="summary"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return validate_command(args.scenario)
    if args.command == "run":
        return run_command(
            RunConfig(
                scenario_path=args.scenario,
                seed=args.seed,
                out_dir=args.out,
                audit=args.audit,
            )
        )
    return report_command(args.metrics, args.format)


if __name__ == "__main__":
    sys.exit(main())
