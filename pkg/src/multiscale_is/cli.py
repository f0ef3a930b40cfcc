"""Command line entry point.

Exit codes: 0 success, 1 error, 2 refused because the step budget is exceeded.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import experiment as ex

log = logging.getLogger("multiscale_is")


def _seed_from_env():
    raw = os.environ.get(ex.SEED_ENV_VAR)
    return int(raw) if raw else None


def _workers(value):
    if value == "auto":
        return value
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1 or 'auto'")
    return n


def _rows(value):
    return [int(v) for v in value.split(",") if v.strip()]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help=f"master seed (default: ${ex.SEED_ENV_VAR} or the config's)")
    common.add_argument("--workers", type=_workers, help="worker processes, or 'auto'")
    common.add_argument("--out", help="CSV output path")
    common.add_argument("--plot-data", help="write a long-format plotting table here")
    common.add_argument("--n-paths", type=int, help="override the number of trajectories")
    common.add_argument("--dump-config", action="store_true", help="print the resolved config(s) and exit")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="multiscale-is", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run an experiment from a config file")
    run.add_argument("--config", required=True)

    pre = sub.add_parser("preset", parents=[common], help="run rows of one of the benchmark tables")
    pre.add_argument("--table", type=int, choices=(1, 2, 3), required=True)
    pre.add_argument("--row", type=_rows, required=True, help="row number, or comma-separated rows")
    pre.add_argument("--scale-n", type=float, default=1e-3, help="n_paths = 1e7 * scale_n (default 1e-3)")
    return parser


def _resolve_specs(args):
    if args.command == "run":
        specs = [ex.load_config(args.config)]
    else:
        specs = [ex.preset(args.table, r, args.scale_n) for r in args.row]
    seed = args.seed if args.seed is not None else _seed_from_env()
    return [
        ex.with_overrides(s, master_seed=seed, workers=args.workers, n_paths=args.n_paths, output=args.out)
        for s in specs
    ]


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        specs = _resolve_specs(args)
        if args.dump_config:
            for spec in specs:
                sys.stdout.write(ex.serialize_config(spec))
            return 0
        for spec in specs:
            steps = ex.estimated_steps(spec)
            if steps > spec.step_ceiling:
                raise ex.BudgetExceeded(steps, spec.step_ceiling)
        rows = []
        for spec in specs:
            result = ex.run_experiment(spec)
            log.info("%s\n", result.format())
            rows.extend(result.rows)
        out = specs[0].output
        if out:
            ex.write_csv(rows, out)
            log.info("wrote %d rows to %s", len(rows), out)
        elif not args.quiet:
            sys.stdout.write(ex.write_csv(rows))
        if args.plot_data:
            ex.emit_plot_data(rows, args.plot_data)
        return 0
    except ex.BudgetExceeded as exc:
        log.error("refused: %s", exc)
        return 2
    except (ex.ConfigError, OSError, ValueError) as exc:
        log.error("error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
