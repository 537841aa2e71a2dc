"""Command-line entry point: ``cellfree-ris {run,overhead,validate}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checks import run_checks
from .config import ConfigError, load_config
from .experiments import (
    Experiment,
    ExperimentKind,
    default_sweep,
    emit_plot_data,
    git_revision,
    overhead_table,
    run_experiment,
    write_overhead_csv,
    write_rows_csv,
)
from .orchestrator import Scheme

DESK_REALIZATIONS = 20
PAPER_REALIZATIONS = 50
PAPER_M = 100


def _schemes(text):
    try:
        return tuple(Scheme(s.strip()) for s in text.split(",") if s.strip())
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"{err}; choose from {', '.join(s.value for s in Scheme)}")


def _values(text):
    try:
        return tuple(sorted(float(v) for v in text.split(",") if v.strip()))
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err))


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellfree-ris", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo experiment and write CSV files")
    run.add_argument("--config", type=Path, help="TOML scenario file (defaults if omitted)")
    run.add_argument("--experiment", required=True, choices=[k.value for k in ExperimentKind])
    run.add_argument("--schemes", type=_schemes,
                     help="comma-separated list, e.g. distributed,centralized,lmmse "
                          "(default: distributed; distributed,centralized for overhead_table)")
    run.add_argument("--realizations", type=int, help=f"default {DESK_REALIZATIONS} ({PAPER_REALIZATIONS} with --paper-scale)")
    run.add_argument("--out", type=Path, default=Path("results"))
    run.add_argument("--seed", type=_seed, help="overrides the config seed")
    run.add_argument("--paper-scale", action="store_true", help=f"M={PAPER_M} and {PAPER_REALIZATIONS} realizations")
    run.add_argument("--sweep", type=_values, help="comma-separated sweep values (default per experiment)")
    run.add_argument("--iterations", type=int, help="outer iterations (overrides the config)")
    run.add_argument("--workers", type=int, default=1)

    ov = sub.add_parser("overhead", help="print the backhaul signaling overhead table")
    ov.add_argument("--config", type=Path)
    ov.add_argument("--iterations", type=_values, help="comma-separated I_o values")
    ov.add_argument("--schemes", type=_schemes, default=(Scheme.DISTRIBUTED, Scheme.CENTRALIZED))
    ov.add_argument("--paper-scale", action="store_true")
    ov.add_argument("--out", type=Path, help="also write the table as CSV")

    val = sub.add_parser("validate", help="run the invariant suite on random instances")
    val.add_argument("--instances", type=int, default=50)
    val.add_argument("--seed", type=_seed, default=0)
    return parser


def _load(args):
    overrides = {}
    if getattr(args, "paper_scale", False):
        overrides["dims.M"] = PAPER_M
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def cmd_run(args) -> int:
    rc = _load(args)
    kind = ExperimentKind(args.experiment)
    realizations = args.realizations or (PAPER_REALIZATIONS if args.paper_scale else DESK_REALIZATIONS)
    header = {
        "experiment": kind.value,
        "config_sha256": rc.digest,
        "git_revision": git_revision(),
        "seed": rc.scenario.seed,
    }
    args.out.mkdir(parents=True, exist_ok=True)
    if kind is ExperimentKind.OVERHEAD_TABLE:
        schemes = args.schemes or (Scheme.DISTRIBUTED, Scheme.CENTRALIZED)
        iterations = args.sweep or default_sweep(kind, args.paper_scale)
        records = overhead_table(rc.scenario.dims, [int(v) for v in iterations], schemes)
        path = write_overhead_csv(records, args.out / "overhead_table.csv", header)
        print(path)
        return 0

    exp = Experiment(
        kind=kind,
        sweep_values=args.sweep or default_sweep(kind, args.paper_scale),
        realizations=realizations,
        schemes=args.schemes or (Scheme.DISTRIBUTED,),
        base_config=rc.scenario,
        iterations=args.iterations or rc.iterations,
        conv_tol=rc.conv_tol,
        settings=rc.settings,
    )
    header["iterations"] = exp.iterations
    header["realizations"] = realizations
    rows = run_experiment(exp, workers=args.workers)
    paths = [write_rows_csv(rows, args.out / f"rows_{kind.value}.csv", header)]
    paths += emit_plot_data(rows, args.out, kind.value, header)
    failed = sum(r.status != "ok" for r in rows)
    for p in paths:
        print(p)
    if failed:
        print(f"warning: {failed} run(s) failed; see the status column", file=sys.stderr)
    return 0


def cmd_overhead(args) -> int:
    rc = _load(args)
    iterations = args.iterations or default_sweep(ExperimentKind.OVERHEAD_TABLE)
    records = overhead_table(rc.scenario.dims, [int(v) for v in iterations], args.schemes)
    d = rc.scenario.dims
    print(f"L={d.L} K={d.K} Nt={d.Nt} Nr={d.Nr} RM={d.RM}")
    print(f"{'scheme':<14}{'I_o':>6}{'csi':>10}{'per_iter':>10}{'total':>10}")
    for r in records:
        print(f"{r['scheme']:<14}{r['I_o']:>6}{r['backhaul_csi_symbols']:>10}"
              f"{r['per_iteration_symbols']:>10}{r['total_symbols']:>10}")
    if args.out:
        write_overhead_csv(records, args.out, {"config_sha256": rc.digest})
    return 0


def cmd_validate(args) -> int:
    results = run_checks(args.instances, args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<22} {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"run": cmd_run, "overhead": cmd_overhead, "validate": cmd_validate}[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
