"""Command-line surface.

Exit codes: 0 success, 1 scenario problem, 2 solver failure, 64 usage.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import (
    ConfigurationError,
    InfeasibleAllocationError,
    InvalidGeometryError,
    OracleBoundsError,
    ScenarioError,
    SolverError,
)
from .framework import ALGORITHMS, config_from_scenario, metrics_row, run_framework, run_sweep
from .oracle import GAP_COLUMNS, gap_rows, tiny_scenario
from .scenario import (
    ResultsBundle,
    Scenario,
    build_network,
    canonical_text,
    emit_results,
    format_table,
    load_scenario,
    render_run_log,
    scenario_hash,
)

EXIT_OK = 0
EXIT_SCENARIO = 1
EXIT_SOLVER = 2
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse wants to sys.exit(2) on bad flags; we want 64 with usage text
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_common(sub: argparse.ArgumentParser, with_algorithm: bool = False) -> None:
    sub.add_argument("--scenario", metavar="PATH",
                     help="scenario file; omitted means the stock setup")
    sub.add_argument("--out", metavar="DIR", default="results",
                     help="output directory (default: %(default)s)")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the scenario's seed list with one seed")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker threads; reserved, runs are single-threaded")
    if with_algorithm:
        sub.add_argument("--algorithm", choices=ALGORITHMS, default="proposal")


def build_parser() -> _Parser:
    parser = _Parser(prog="leobeam",
                     description="Beam pointing, subchannel, and power planning "
                                 "for a multi-satellite downlink.")
    commands = parser.add_subparsers(dest="command", required=True,
                                     parser_class=_Parser)
    run = commands.add_parser("run", help="single optimization run")
    _add_common(run, with_algorithm=True)
    sweep = commands.add_parser("sweep", help="all algorithms over the scenario's sweep axes")
    _add_common(sweep)
    validate = commands.add_parser("validate", help="check a scenario file and exit")
    validate.add_argument("--scenario", metavar="PATH",
                          help="scenario file; omitted means the stock setup")
    oracle_cmd = commands.add_parser("oracle",
                                     help="brute-force gap report on a tiny instance")
    _add_common(oracle_cmd)
    return parser


def _load(path: str | None) -> Scenario:
    return load_scenario(path) if path else Scenario()


def _cmd_run(args) -> int:
    sc = _load(args.scenario)
    seed = args.seed if args.seed is not None else sc.seeds[0]
    built = build_network(sc, seed)
    _, record = run_framework(built, config_from_scenario(sc, args.algorithm))
    bundle = ResultsBundle(
        rows=[metrics_row(sc, record, built.scenario_hash)],
        run_log=render_run_log([record], built.scenario_hash),
        scenario_text=canonical_text(sc),
    )
    for path in emit_results(bundle, args.out):
        print(path)
    m = record.metrics
    print(f"{args.algorithm} seed={seed}: sum_rate_bps={m.sum_rate_bps!r} "
          f"served={m.served_users} utility={m.sum_alpha_utility!r} "
          f"outer={record.converged_after}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    sc = _load(args.scenario)
    if args.seed is not None:
        from dataclasses import replace
        sc = replace(sc, seeds=(args.seed,))
    rows, records = run_sweep(sc, config_from_scenario(sc))
    bundle = ResultsBundle(
        rows=rows,
        run_log=render_run_log(records, scenario_hash(sc)),
        scenario_text=canonical_text(sc),
    )
    for path in emit_results(bundle, args.out):
        print(path)
    print(f"{len(rows)} rows")
    return EXIT_OK


def _cmd_validate(args) -> int:
    sc = _load(args.scenario)
    print(f"scenario OK, hash {scenario_hash(sc)}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    sc = load_scenario(args.scenario) if args.scenario else tiny_scenario()
    seed = args.seed if args.seed is not None else sc.seeds[0]
    built = build_network(sc, seed)
    rows = gap_rows(built)
    table = format_table(GAP_COLUMNS, rows)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "oracle_gaps.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(table)
    sys.stdout.write(table)
    print(path)
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
    "oracle": _cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioError, ConfigurationError, InvalidGeometryError,
            OracleBoundsError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except (SolverError, InfeasibleAllocationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
