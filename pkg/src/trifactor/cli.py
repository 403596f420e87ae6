"""Command-line interface.

    trifactor run <scenario> [--out DIR] [--seeds N] [--override key=value ...]
    trifactor compare <scenario>
    trifactor trace <scenario> --seed S
    trifactor validate <scenario>

Exit status: 0 on success, 2 on usage/parse/validation errors, 1 on a
runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from typing import Optional

from .harness import (MODES, ScenarioError, execute, parse_scenario, run_experiment,
                      summarize, run_rows)
from .metrics import MetricsReport
from .network import simulate

log = logging.getLogger("trifactor")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse already exits 2; keep the message on stderr and be explicit
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trifactor", description="Trust-aware MANET routing experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("scenario", help="scenario file, or the name of a bundled one")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override, e.g. trust.alpha=0.7 (repeatable)")

    sp = sub.add_parser("run", help="run every (protocol, mode, seed) of a scenario")
    common(sp)
    sp.add_argument("--out", default="out", help="output directory (default: out)")
    sp.add_argument("--seeds", type=int, metavar="N", help="use seeds 1..N")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")

    sp = sub.add_parser("compare", help="Baseline vs TripleFactor table of mean±sd")
    common(sp)
    sp.add_argument("--seeds", type=int, metavar="N", help="use seeds 1..N")
    sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("trace", help="dump the event, metrics and trust logs of one run")
    common(sp)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--protocol", help="protocol (default: first listed)")
    sp.add_argument("--mode", choices=MODES, help="security mode (default: first listed)")

    sp = sub.add_parser("validate", help="parse and validate only")
    common(sp)
    return p


def _load(args):
    cfg = parse_scenario(args.scenario, tuple(args.override))
    seeds = getattr(args, "seeds", None)
    if seeds is not None:
        if seeds < 1:
            raise ScenarioError("--seeds must be >= 1")
        cfg.seeds = list(range(1, seeds + 1))
    return cfg


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf"
    return f"{x:.4g}"


def cmd_run(args) -> int:
    cfg = _load(args)
    summary, results = run_experiment(cfg, args.out, jobs=args.jobs)
    for (protocol, mode), metrics in summary.groups.items():
        st = metrics["pdr"]
        print(f"{protocol:5s} {mode:13s} n={st.n:3d} pdr={_fmt(st.mean)}±{_fmt(st.sd)}")
    print(f"wrote {len(results)} runs to {args.out}")
    return EXIT_OK


def compare_table(summary) -> str:
    groups = sorted(summary.groups)
    header = ["metric"] + [f"{p}/{m}" for p, m in groups]
    rows = []
    for metric in MetricsReport.columns():
        cells = []
        for key in groups:
            st = summary.groups[key][metric]
            cells.append(f"{_fmt(st.mean)} ± {_fmt(st.sd)}")
        rows.append([metric] + cells)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def cmd_compare(args) -> int:
    cfg = _load(args)
    cfg.security_modes = list(MODES)
    summary = summarize(run_rows(execute(cfg, args.jobs)))
    print(f"{cfg.name}: {summary.seed_count} seeds")
    print(compare_table(summary))
    return EXIT_OK


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def cmd_trace(args) -> int:
    cfg = _load(args)
    protocol = args.protocol or cfg.protocols[0]
    mode = args.mode or cfg.security_modes[0]
    result = simulate(cfg.run_spec(protocol, mode), args.seed, trace=True)
    out = sys.stdout
    head = {"type": "run", "seed": args.seed, "protocol": protocol, "security_mode": mode,
            "trace_hash": result.trace_hash}
    out.write(json.dumps(head) + "\n")
    for fire_at, seq, kind in result.trace:
        out.write(json.dumps({"type": "event", "time": fire_at, "seq": seq, "kind": kind}) + "\n")
    for time, name, *rest in result.metrics_log:
        out.write(json.dumps({"type": "metric", "time": time, "name": name,
                              "args": _jsonable(list(rest))}) + "\n")
    for e in result.trust_log:
        row = {k: _jsonable(v) for k, v in dataclasses.asdict(e).items()}
        out.write(json.dumps({"type": "trust", **row}) + "\n")
    report = {c: _jsonable(v) for c, v in zip(MetricsReport.columns(), result.report.values())}
    out.write(json.dumps({"type": "report", **report}) + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    _load(args)
    print("OK")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "trace": cmd_trace,
            "validate": cmd_validate}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        # output piped into e.g. head; silence the flush at interpreter exit
        import os
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except (ScenarioError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001 - report any simulation failure as exit 1
        log.exception("run failed")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
