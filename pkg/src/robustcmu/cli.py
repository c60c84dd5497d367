"""Command-line entry point: ``robustcmu {validate,limit,prelimit,study} <config> ...``.

Exit codes: 0 on success, 2 on a configuration error, 3 on a runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from importlib import resources

from .config import STUDY_KINDS, parse_config
from .errors import ConfigError
from .limit_game import default_step, estimate_game_cost
from .prelimit import Policy, estimate_qcp_cost, simulate_system
from .studies import (
    dump_event_log,
    dump_trajectory,
    limit_columns,
    limit_row,
    prelimit_columns,
    prelimit_row,
    run_study,
    write_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def packaged_config(name: str) -> str:
    """Path of a configuration shipped with the package (``reference``, ``asymmetric``, ``single_class``)."""
    return str(resources.files("robustcmu") / "data" / f"{name}.cfg")


def _resolve(path: str) -> str:
    if path.startswith("@"):
        return packaged_config(path[1:])
    return path


def _print_rows(columns, rows):
    writer = csv.writer(sys.stdout)
    writer.writerow(columns)
    for row in rows:
        writer.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in row])


def cmd_validate(args) -> int:
    bundle = parse_config(_resolve(args.config))
    cfg = bundle.config
    print(f"ok: {cfg.classes} classes, sum(rho) = {cfg.rho.sum():.12g}, m_hat = {cfg.m_hat.tolist()}")
    print(f"horizon {bundle.horizon:g}, adversary {bundle.adversary.label}, family of {len(bundle.family)}")
    return EXIT_OK


def cmd_limit(args) -> int:
    bundle = parse_config(_resolve(args.config))
    seed = bundle.study.seed if args.seed is None else args.seed
    reps = bundle.study.limit_reps if args.reps is None else args.reps
    step = args.step or bundle.sim.step or default_step(bundle.horizon)
    est = estimate_game_cost(
        bundle.config, bundle.cost, bundle.divergence, bundle.discount, bundle.adversary,
        reps, step, bundle.horizon, seed,
    )
    rows = [limit_row(est, step, bundle.horizon, seed)]
    columns = limit_columns(bundle.config.classes)
    _print_rows(columns, rows)
    if args.out:
        write_csv(args.out, columns, rows)
    return EXIT_OK


def cmd_prelimit(args) -> int:
    bundle = parse_config(_resolve(args.config))
    size = bundle.config.classes
    policy = Policy.parse(args.policy, size)
    seed = bundle.study.seed if args.seed is None else args.seed
    reps = bundle.study.reps if args.reps is None else args.reps
    est = estimate_qcp_cost(
        bundle.config, bundle.cost, args.n, policy, bundle.adversary, bundle.discount, bundle.divergence,
        reps, bundle.horizon, seed, bundle.sim.grid_points,
    )
    rows = [prelimit_row(est, args.n, policy.label, bundle.horizon, seed)]
    columns = prelimit_columns(size)
    _print_rows(columns, rows)
    if args.out:
        write_csv(args.out, columns, rows)
    if args.events or args.trajectory:
        events, traj = simulate_system(
            bundle.config, bundle.cost, args.n, policy, bundle.adversary, bundle.horizon, seed, 0,
            bundle.sim.grid_points, record_events=bool(args.events),
        )
        if args.events:
            dump_event_log(args.events, events, size)
        if args.trajectory:
            dump_trajectory(args.trajectory, traj, size)
    return EXIT_OK


def cmd_study(args) -> int:
    bundle = parse_config(_resolve(args.config))
    kind = args.kind or bundle.study.kind
    bundle = replace(bundle, study=replace(bundle.study, kind=kind))
    out = args.out or bundle.study.out
    if out is None:
        raise ConfigError("no output path: pass --out or set study.out")
    run_study(bundle, kind, out)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustcmu", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    config_help = "configuration file, or @reference / @asymmetric / @single_class for a shipped one"

    p = sub.add_parser("validate", help="parse and validate a configuration")
    p.add_argument("config", help=config_help)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("limit", help="estimate the limit-game cost of the configured adversary")
    p.add_argument("config", help=config_help)
    p.add_argument("--reps", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="also write the row as CSV")
    p.set_defaults(func=cmd_limit)

    p = sub.add_parser("prelimit", help="estimate the robust cost of a policy in the n-th system")
    p.add_argument("config", help=config_help)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--policy", required=True, help="cmu_preemptive, cmu_nonpreemptive, fixed_fraction, static_priority:2,1")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="also write the row as CSV")
    p.add_argument("--events", help="write the event log of replication 0 as CSV")
    p.add_argument("--trajectory", help="write the scaled trajectory of replication 0 as CSV")
    p.set_defaults(func=cmd_prelimit)

    p = sub.add_parser("study", help="run a study and write its table as CSV")
    p.add_argument("config", help=config_help)
    p.add_argument("--kind", choices=STUDY_KINDS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
