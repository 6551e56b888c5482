"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 input validation, 3 numerical failure,
4 I/O.  Z-learning that runs out of iterations is not an error; it is
reported as ``"converged": false`` in the run document.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import date
from pathlib import Path

import numpy as np

from . import io
from .dispatch import energy_cost_utility, evaluate_objective, expected_power, propagate_occupancy
from .ingest import (
    discretize,
    estimate_matrix,
    perturb_ensemble,
    read_trace_csv,
    synthesize_neighborhood,
    synthetic_hvac_trace,
    write_trace_csv,
)
from .model import ControlConfig, HarmonicSchedule
from .solver import backward_z, compute_policy
from .zlearn import run_zlearning

log = logging.getLogger("ensemble_lsmdp")

EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
SEED_ENV = "ENSEMBLE_LSMDP_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def cmd_estimate(args) -> int:
    if args.states < 2:
        raise UsageError("--states must be at least 2")
    trace = read_trace_csv(args.trace, args.season_from, args.season_to)
    space, seq = discretize(trace, args.states)
    P = estimate_matrix(seq, args.states, args.smoothing)
    io.write_json(io.matrix_document(space, P), args.out)
    log.info("wrote %d-state matrix from %d samples to %s", args.states, len(trace), args.out)
    return 0


def cmd_solve(args) -> int:
    space, P = io.load_matrix(args.matrix)
    U = io.read_utility_csv(args.utility, space.n_states)
    table = backward_z(P, U, args.gamma)
    policy = compute_policy(P, table)
    io.write_json(io.policy_document(policy, args.gamma, "lsmdp", space), args.policy_out)
    io.write_values_csv(table, args.values_out)
    return 0


def cmd_learn(args) -> int:
    if args.ensemble < 1 or args.sigma < 0 or args.max_iters < 0 or args.eps <= 0:
        raise UsageError("need --ensemble >= 1, --sigma >= 0, --max-iters >= 0, --eps > 0")
    seed = _default_seed() if args.seed is None else args.seed
    space, P = io.load_matrix(args.matrix)
    U = io.read_utility_csv(args.utility, space.n_states)
    if args.reference is not None:
        reference = io.read_values_csv(args.reference, args.gamma)
    else:
        reference = backward_z(P, U, args.gamma)

    sampler = P
    if args.sigma > 0 or args.ensemble > 1:
        sampler = perturb_ensemble(P, args.ensemble, args.sigma, seed=seed)
    config = ControlConfig(
        gamma=args.gamma,
        horizon_length=U.shape[0],
        convergence_eps=args.eps,
        learning_rate=HarmonicSchedule(args.learning_rate_scale),
        max_iterations=args.max_iters,
        rng_seed=seed,
    )
    run = run_zlearning(sampler, U, config, reference)
    policy = compute_policy(P, run.z_hat)
    doc = {
        "schema_version": io.SCHEMA_VERSION,
        "kind": "zlearn_run",
        "converged": run.converged,
        "iterations": run.iterations,
        "iterations_to_10pct": run.iterations_to(0.10),
        "final_error": run.error_history[-1].tolist() if len(run.error_history) else None,
        "config": {
            "gamma": config.gamma,
            "convergence_eps": config.convergence_eps,
            "max_iterations": config.max_iterations,
            "learning_rate": config.learning_rate.to_dict(),
            "rng_seed": seed,
            "sigma": args.sigma,
            "ensemble": args.ensemble,
        },
        "log_z": run.z_hat.log_z.tolist(),
        "phi": run.z_hat.phi.tolist(),
        "policy": io.policy_document(policy, args.gamma, "zlearning", space),
    }
    io.write_json(doc, args.run_out)
    io.write_error_curve_csv(run.error_history, args.curve_out)
    if not run.converged:
        log.warning("Z-learning stopped at %d iterations without converging", run.iterations)
    return 0


def cmd_dispatch(args) -> int:
    space, P = io.load_matrix(args.matrix)
    n = space.n_states
    rho0 = io.read_rho_csv(args.initial, n) if args.initial else np.full(n, 1.0 / n)
    policies = {Path(p).stem: io.load_policy(p) for p in args.policy}
    horizons = {pol.shape[0] for pol in policies.values()}
    if len(horizons) != 1:
        raise ValueError("all policies must share one horizon")
    if args.include_passive:
        policies["passive"] = np.repeat(P[None], horizons.pop(), axis=0)

    columns, header = [], ["t"]
    summary = {"schema_version": io.SCHEMA_VERSION, "kind": "dispatch_summary", "policies": {}}
    U = io.read_utility_csv(args.utility, n) if args.utility else None
    if U is not None and args.gamma is None:
        raise UsageError("--utility requires --gamma")
    for label, pol in policies.items():
        if pol.shape[1] != n:
            raise ValueError(f"policy {label!r} has {pol.shape[1]} states, matrix has {n}")
        rho = propagate_occupancy(rho0, pol)
        power = expected_power(rho, space)
        header += [f"power_{label}"] + [f"{label}_rho_{i}" for i in range(n)]
        columns.append(np.column_stack([power, rho]))
        entry = {"peak_kw": float(power.max())}
        if U is not None:
            try:
                entry["objective"] = evaluate_objective(pol, P, U, args.gamma, rho0)
            except ValueError as exc:
                if "KL" not in str(exc):
                    raise
                log.warning("policy %r leaves the passive support; objective is infinite", label)
                entry["objective"] = None
        summary["policies"][label] = entry
    if U is not None:
        passive = np.repeat(P[None], U.shape[0] - 1, axis=0)
        summary["passive_objective"] = evaluate_objective(passive, P, U, args.gamma, rho0)

    table = np.column_stack([np.arange(1, columns[0].shape[0] + 1)] + columns)
    with open(args.out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join([str(int(row[0]))] + [repr(float(v)) for v in row[1:]]) + "\n")
    text = io.dumps(summary)
    if args.summary:
        Path(args.summary).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth(args) -> int:
    seed = _default_seed() if args.seed is None else args.seed
    base = synthetic_hvac_trace(args.days, args.season, args.start, seed=seed)
    hood = synthesize_neighborhood(base, args.houses, args.noise_frac, seed=seed + 1)
    write_trace_csv(hood, args.out)
    return 0


def cmd_utility(args) -> int:
    space, _ = io.load_matrix(args.matrix)
    prices = [float(p) for p in args.prices.split(",") if p.strip()]
    if len(prices) < 2:
        raise UsageError("--prices needs at least two comma-separated values")
    io.write_utility_csv(energy_cost_utility(prices, space, args.dt_hours), args.out)
    return 0


def _date(s: str) -> date:
    try:
        return date.fromisoformat(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ensemble-lsmdp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("estimate", parents=[common], help="estimate passive dynamics from a power trace")
    e.add_argument("trace", help="CSV with columns timestamp,power_kw")
    e.add_argument("--states", type=int, default=12)
    e.add_argument("--smoothing", type=float, default=0.0)
    e.add_argument("--season-from", type=_date)
    e.add_argument("--season-to", type=_date)
    e.add_argument("-o", "--out", default="matrix.json")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("solve", parents=[common], help="exact LS-MDP solution")
    s.add_argument("matrix")
    s.add_argument("utility")
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--policy-out", default="policy.json")
    s.add_argument("--values-out", default="values.csv")
    s.set_defaults(func=cmd_solve)

    ln = sub.add_parser("learn", parents=[common], help="Z-learning from passive samples")
    ln.add_argument("matrix")
    ln.add_argument("utility")
    ln.add_argument("--gamma", type=float, required=True)
    ln.add_argument("--sigma", type=float, default=0.0)
    ln.add_argument("--ensemble", type=int, default=1)
    ln.add_argument("--eps", type=float, default=1e-6)
    ln.add_argument("--max-iters", type=int, default=10_000)
    ln.add_argument("--learning-rate-scale", type=float, default=1000.0)
    ln.add_argument("--seed", type=int, default=None, help=f"default from ${SEED_ENV} or 0")
    ln.add_argument("--reference", help="values.csv from `solve`; computed from the matrix if omitted")
    ln.add_argument("--run-out", default="zlearn_run.json")
    ln.add_argument("--curve-out", default="error_curve.csv")
    ln.set_defaults(func=cmd_learn)

    d = sub.add_parser("dispatch", parents=[common], help="occupancy and expected power under policies")
    d.add_argument("policy", nargs="+")
    d.add_argument("--matrix", required=True, help="matrix.json supplying the state space")
    d.add_argument("--initial", help="rho.csv with columns state,rho (uniform if omitted)")
    d.add_argument("--utility", help="utility.csv; adds objectives to the summary")
    d.add_argument("--gamma", type=float)
    d.add_argument("--include-passive", action="store_true")
    d.add_argument("-o", "--out", default="dispatch.csv")
    d.add_argument("--summary", help="write the JSON summary here instead of stdout")
    d.set_defaults(func=cmd_dispatch)

    y = sub.add_parser("synth", parents=[common], help="synthetic 100-house HVAC trace")
    y.add_argument("--season", choices=["summer", "winter"], default="summer")
    y.add_argument("--days", type=int, default=92)
    y.add_argument("--start", default="2013-07-01")
    y.add_argument("--houses", type=int, default=100)
    y.add_argument("--noise-frac", type=float, default=0.2)
    y.add_argument("--seed", type=int, default=None)
    y.add_argument("-o", "--out", default="trace.csv")
    y.set_defaults(func=cmd_synth)

    u = sub.add_parser("utility", parents=[common], help="utility.csv from hourly energy prices")
    u.add_argument("matrix")
    u.add_argument("--prices", required=True, help="comma-separated price per kWh, one per period")
    u.add_argument("--dt-hours", type=float, default=1.0)
    u.add_argument("-o", "--out", default="utility.csv")
    u.set_defaults(func=cmd_utility)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
