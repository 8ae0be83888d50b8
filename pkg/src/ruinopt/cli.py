"""Command line front end: ``solve``, ``simulate``, ``validate`` and ``sweep``.

Exit codes: 0 success, 1 a validation check failed, 2 usage, configuration or
I/O error.  ``RUINOPT_WORKERS`` caps the worker count unless ``--workers``
is given.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .config import RunConfig, load_config, parse_policy, with_override
from .errors import ConfigError, DomainError, NumericalError
from .hjb import interpolate_value, solve
from .model import State, TablePolicy, evaluate_policy
from .outputs import diagnostics_dict, header_line, read_value_csv, write_json, write_summary_csv, write_value_csv
from .rng import PathStream
from .simulator import estimate_survival, simulate_path, write_path_log
from .validation import all_passed, run_suite

__all__ = ["main", "build_parser", "run_solve", "run_simulate", "run_validate", "run_sweep"]

logger = logging.getLogger("ruinopt")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _out_dir(config: RunConfig, out) -> Path:
    path = Path(out if out is not None else config.output.directory)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _solve(config: RunConfig, workers, n_s=None, n_x=None):
    sv = config.solver
    t0 = time.perf_counter()
    result = solve(config.model, n_s or sv.n_s, n_x or sv.n_x, sv.n_q, sv.n_quad, workers=workers)
    logger.info("solve %dx%d took %.2fs", n_s or sv.n_s, n_x or sv.n_x, time.perf_counter() - t0)
    return result


def run_solve(config: RunConfig, out=None, workers=None) -> list[Path]:
    """Solve and write ``value.csv`` and/or ``diagnostics.json``."""
    out = _out_dir(config, out)
    V, Q, diag = _solve(config, workers)
    files = []
    if "csv" in config.output.formats:
        files.append(write_value_csv(out / "value.csv", V, Q, config.hash))
    if "json" in config.output.formats:
        files.append(write_json(out / "diagnostics.json", diagnostics_dict(diag, V), config.hash))
    return files


def _policy(config: RunConfig, workers):
    chosen = parse_policy(config.simulate.policy)
    if chosen != "table":
        return chosen, config.simulate.policy
    if config.simulate.table_file:
        _, table = read_value_csv(config.simulate.table_file)
    else:
        _, Q, _ = _solve(config, workers)
        table = TablePolicy.from_field(Q)
    return table, "table"


def run_simulate(config: RunConfig, out=None, workers=None) -> list[Path]:
    """Estimate survival at every configured point; optionally dump the first paths."""
    out = _out_dir(config, out)
    sim = config.simulate
    policy, label = _policy(config, workers)
    rows = []
    for pt in sim.points:
        est = estimate_survival(config.model, policy, State(*pt), sim.n_paths, sim.seed,
                                workers=workers, substeps=sim.substeps)
        rows.append((pt, label, est))
    files = []
    if "csv" in config.output.formats:
        files.append(write_summary_csv(out / "simulate.csv", rows, config.hash))
    if "json" in config.output.formats:
        payload = {"estimates": [
            {"state": list(pt), "policy": lab, "mean": e.mean, "std_error": e.std_error,
             "n_paths": e.n_paths, "seed": e.seed}
            for pt, lab, e in rows
        ]}
        files.append(write_json(out / "simulate.json", payload, config.hash))
    if sim.dump_paths > 0:
        for n_pt, pt in enumerate(sim.points):
            records = [
                simulate_path(config.model, policy, State(*pt), PathStream(sim.seed, n), substeps=sim.substeps)
                for n in range(sim.dump_paths)
            ]
            name = "paths.csv" if len(sim.points) == 1 else f"paths_{n_pt}.csv"
            write_path_log(out / name, records, header=header_line(config.hash, point=",".join(map(repr, pt))))
            files.append(out / name)
    return files


def run_validate(config: RunConfig, out=None, workers=None) -> tuple[list[Path], int]:
    """Run the check suite; writes ``report.json`` and returns the exit code."""
    out = _out_dir(config, out)
    val = config.validate
    V, Q, _ = _solve(config, workers)
    coarse = None
    sv = config.solver
    if val.continuity and sv.n_s % 2 == 0 and sv.n_x % 2 == 0 and sv.n_s >= 4 and sv.n_x >= 4:
        coarse, _, _ = _solve(config, workers, sv.n_s // 2, sv.n_x // 2)
    reports = run_suite(
        V, Q, config.model,
        coarse=coarse,
        points=val.points or None,
        dpp_point=val.dpp_point,
        dpp_h=val.dpp_h,
        n_paths=val.n_paths,
        seed=val.seed,
        eps_grid=val.eps_grid,
        workers=workers,
    )
    ok = all_passed(reports)
    for r in reports:
        logger.info("%-22s %-7s violation=%.3g tolerance=%.3g", r.name, r.status, r.violation, r.tolerance)
    payload = {"passed": ok, "checks": [r.to_dict() for r in reports]}
    path = write_json(out / "report.json", payload, config.hash)
    return [path], EXIT_OK if ok else EXIT_FAILED


def run_sweep(config: RunConfig, axis: str, values, out=None, workers=None) -> list[Path]:
    """Solve once per value of ``axis``; tabulate ``V`` and ``q*`` at the simulate points."""
    out = _out_dir(config, out)
    configs = [with_override(config, axis, v) for v in values]
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        fh.write(header_line(config.hash, axis=axis) + "\n")
        fh.write("axis,value,s,x,w,V,q_star\n")
        for v, cfg in zip(values, configs):
            V, Q, _ = _solve(cfg, workers)
            table = TablePolicy.from_field(Q)
            for pt in cfg.simulate.points:
                s, x, w = pt
                state = State(s, x, w)
                fields = [axis, repr(float(v))] + [format(c, ".17g") for c in (
                    s, x, w, interpolate_value(V, s, x, w), evaluate_policy(table, state),
                )]
                fh.write(",".join(fields) + "\n")
    return [path]


def _values(text: str) -> list[float]:
    try:
        out = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("at least one value is required")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ruinopt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve for the value function and optimal retention"),
        ("simulate", "Monte Carlo survival estimates"),
        ("validate", "run the property and cross-check suite"),
        ("sweep", "solve over a list of values of one model parameter"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="INI configuration file")
        cmd.add_argument("--out", help="output directory (default: [output] directory)")
        cmd.add_argument("--workers", type=int, help="worker threads (default: RUINOPT_WORKERS or 1)")
        if name == "sweep":
            cmd.add_argument("--axis", required=True, help="p, eta, T, hazard.<param> or claims.<param>")
            cmd.add_argument("--values", required=True, type=_values, help="comma separated values")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = load_config(args.config)
        if args.command == "solve":
            files, code = run_solve(config, args.out, args.workers), EXIT_OK
        elif args.command == "simulate":
            files, code = run_simulate(config, args.out, args.workers), EXIT_OK
        elif args.command == "validate":
            files, code = run_validate(config, args.out, args.workers)
        else:
            files, code = run_sweep(config, args.axis, args.values, args.out, args.workers), EXIT_OK
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for f in files:
        print(f)
    return code


if __name__ == "__main__":
    sys.exit(main())
