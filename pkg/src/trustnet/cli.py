"""Command-line entry point: simulate, replay, sweep and report."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import sys
from pathlib import Path
from typing import Sequence

from .config import ScenarioConfig, load_config
from .errors import ConfigError, FieldError
from .metrics import MetricsReport, build_report, emit_report
from .replay import TraceError, read_trace, run_replay, write_trace
from .runlog import RunLog, atomic_write
from .sim import Simulation
from .sweep import GridError, parse_grid, run_scale_sweep, run_sensitivity_sweep

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

log = logging.getLogger("trustnet")


class UsageError(Exception):
    pass


def _fmt(v: float | None, unit: str = "", digits: int = 2) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}{unit}"


def summary(report: MetricsReport) -> str:
    tp = report.throughput
    lines = [
        f"detection rate    {_fmt(report.detection_rate, '%')}",
        f"false positives   {_fmt(report.false_positive_rate, '%')}",
        f"mean latency      {_fmt(report.mean_detection_latency, ' s', 1)}"
        + (f"  ({report.not_detected} not detected)" if report.not_detected else ""),
        f"throughput Mbps   before {_fmt(tp.before, '', 3)}  during {_fmt(tp.during, '', 3)}  after {_fmt(tp.after, '', 3)}",
    ]
    for a in report.attacks:
        state = f"isolated at {a['detected_at']:.0f} s" if a["detected"] else "not detected"
        lines.append(f"  attack {a['index']} {a['kind']} from {a['attacker']}: {state}")
    return "\n".join(lines)


def _write_outputs(out: Path, runlog: RunLog, report: MetricsReport) -> None:
    runlog.write(out / "runlog.jsonl")
    atomic_write(out / "report.json", emit_report(report, "json"))
    atomic_write(out / "report.csv", emit_report(report, "csv"))


def _load(path: str, overrides: Sequence[str]) -> ScenarioConfig:
    if not Path(path).is_file():
        raise ConfigError("", f"config file {path} not found")
    return load_config(path, list(overrides))


# --------------------------------------------------------------- commands


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load(args.config, args.override)
    out = Path(args.out or cfg.output_dir)
    sim = Simulation(cfg, tuple(args.override))
    runlog = sim.run()
    report = build_report(runlog)
    _write_outputs(out, runlog, report)
    if args.trace:
        write_trace(sim, out / "trace.csv")
    print(summary(report))
    print(f"{sim.stats.events} events in {sim.stats.wall_seconds:.2f} s; outputs in {out}")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    cfg = _load(args.config, args.override)
    if not Path(args.trace).is_file():
        raise UsageError(f"trace file {args.trace} not found")
    parsed = read_trace(args.trace)
    if parsed.errors:
        log.warning("skipped %d malformed trace rows; first: %s", len(parsed.errors), parsed.errors[0])
    runlog = run_replay(parsed.records, cfg, tuple(args.override))
    report = build_report(runlog)
    out = Path(args.out or cfg.output_dir)
    _write_outputs(out, runlog, report)
    print(summary(report))
    print(f"replayed {len(parsed.records)} trace rows; outputs in {out}")
    return EXIT_OK


def _parse_sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--scale expects comma-separated integers, got {text!r}") from None
    if not sizes:
        raise UsageError("--scale needs at least one size")
    return sizes


def _parse_seeds(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        if "-" in text:
            lo, hi = (int(s) for s in text.split("-", 1))
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"--seeds expects a range like 1-5 or a list like 1,2,3, got {text!r}") from None


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args.config, args.override)
    out = Path(args.out or cfg.output_dir) / "sweep"
    seeds = _parse_seeds(args.seeds)
    if args.scale is not None:
        sizes = _parse_sizes(args.scale)
        points = run_scale_sweep(cfg, sizes, seeds)
        rows, perf = [], []
        for p in points:
            r = p.report
            atomic_write(out / f"size{p.size}_seed{p.seed}.json", emit_report(r, "json"))
            rows.append((p.size, p.seed, r.detection_rate, r.false_positive_rate, r.mean_detection_latency,
                         r.not_detected, p.stats.events))
            perf.append((p.size, p.seed, p.stats.events, p.stats.wall_seconds, p.stats.events_per_second))
            print(f"size {p.size:>4} seed {p.seed:>3}: detection {_fmt(r.detection_rate, '%')}  "
                  f"fpr {_fmt(r.false_positive_rate, '%')}  {p.stats.events_per_second / 1e6:.2f} M events/s")
        atomic_write(out / "aggregate.csv", _csv_text(
            ("size", "seed", "detection_rate", "false_positive_rate", "mean_latency", "not_detected", "events"), rows))
        # wall-clock figures vary run to run, so they stay out of the aggregate
        atomic_write(out / "perf.csv", _csv_text(("size", "seed", "events", "wall_seconds", "events_per_second"), perf))
    else:
        scenarios = [cfg] if seeds is None else [dataclasses.replace(cfg, seed=s) for s in seeds]
        grid = parse_grid(args.sensitivity)
        result = run_sensitivity_sweep(scenarios, grid)
        if not result:
            raise UsageError("no grid point satisfies the weight simplex constraints")
        names = sorted({k for r in result for k in r.params})
        rows = []
        for k, r in enumerate(result):
            for sc, rep in zip(scenarios, r.reports):
                atomic_write(out / f"point{k:03d}_seed{sc.seed}.json", emit_report(rep, "json"))
            rows.append([k, *(r.params.get(n) for n in names), r.accuracy, r.fpr])
            params = " ".join(f"{n}={r.params[n]:g}" for n in names if n in r.params)
            print(f"{params}: accuracy {r.accuracy:.3f}%  fpr {r.fpr:.2f}%")
        atomic_write(out / "aggregate.csv", _csv_text(("point", *names, "accuracy", "false_positive_rate"), rows))
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        runlog = RunLog.read(args.runlog)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read run log {args.runlog}: {exc}") from None
    text = emit_report(build_report(runlog), args.format)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trustnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config key path override, may repeat")
        p.add_argument("--out", help="output directory (default: the config's output_dir)")

    p = sub.add_parser("simulate", help="run a scenario and write its run log and report")
    p.add_argument("config")
    common(p)
    p.add_argument("--trace", action="store_true", help="also export the hub capture as trace.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="run the trust engine over a captured trace")
    p.add_argument("trace")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("sweep", help="scale or weight-sensitivity sweep")
    p.add_argument("config")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--scale", metavar="N,N,...", help="device counts, e.g. 8,20,30,50")
    mode.add_argument("--sensitivity", metavar="GRID", help="e.g. gamma=0.1:0.9:0.05 or delta=..;theta=..;mu=..")
    p.add_argument("--seeds", help="seed range 1-5 or list 1,2,3 (default: the config seed)")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="recompute the metrics report from a run log")
    p.add_argument("runlog")
    p.add_argument("--format", default="json", choices=("json", "csv"))
    p.add_argument("--out", help="write to this file instead of stdout")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FieldError, GridError, TraceError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
