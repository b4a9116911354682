"""Command-line entry point: solve, sweep, certify, validate."""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .equilibrium import clearing_price, sensitivity
from .errors import Diverged, ParseError, ValidationError
from .experiments import (DEFAULT_A_GRID, DEFAULT_ALPHA_GRID, PARAM_A_BUDGET,
                          PARAM_ALPHA, SweepSpec, emit_csv, run_sweep)
from .game import (GRADIENT_CONSISTENT, expected_costs, monotonicity_certificate,
                   potential_value, utility_gaps)
from .model import collect_violations, data_dir, load_instance
from .privacy import privacy_prices
from .solver import (DETERMINISTIC, STOCHASTIC, SolverOptions,
                     solve_coordinated, solve_ve_datp, truthful_baseline)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGED = 2
EXIT_IO = 3


def _resolve_instance_path(raw: str) -> Path:
    path = Path(raw)
    if path.exists():
        return path
    for name in (raw, raw + ".json"):
        bundled = data_dir() / name
        if bundled.exists():
            return bundled
    return path


def _solver_options(args) -> SolverOptions:
    return SolverOptions(
        step_mu=args.mu,
        penalty_r=args.penalty_r,
        max_iters=args.max_iters,
        tol_step=args.tol,
        mode=args.mode,
        seed=args.seed,
    )


def _add_solver_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--mu", type=float, default=0.003,
                        help="gradient step size (default 0.003)")
    parser.add_argument("--penalty-r", type=float, default=700.0, dest="penalty_r",
                        help="penalty weight (default 700)")
    parser.add_argument("--max-iters", type=int, default=1_000_000, dest="max_iters")
    parser.add_argument("--tol", type=float, default=1e-6,
                        help="stop when the report step sup-norm drops below this")
    parser.add_argument("--mode", choices=(STOCHASTIC, DETERMINISTIC),
                        default=DETERMINISTIC)
    parser.add_argument("--seed", type=int, default=0)


def _cmd_validate(args) -> int:
    instance = load_instance(_resolve_instance_path(args.instance), validate=False)
    violations = collect_violations(instance)
    if violations:
        for violation in violations:
            print(f"invalid: {violation}")
        return EXIT_VALIDATION
    sens = sensitivity(instance)
    prices = instance.topology.prices
    capacitated = sum(1 for (pair, kappa) in instance.topology.edges
                      if 0 not in pair and math.isfinite(kappa))
    print(f"valid: {instance.n_agents} agents, "
          f"{capacitated} capacitated links, "
          f"{prices.mode} prices")
    print(f"price sensitivity B = {sens.total:.6g}")
    lam = clearing_price(instance, instance.truthful_reports())
    print(f"truthful clearing price = {lam:.6g}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    instance = load_instance(_resolve_instance_path(args.instance))
    opts = _solver_options(args)
    if args.mechanism == "truthful":
        profile = truthful_baseline(instance)
        y_hat, variance = profile.y_hat, profile.variance
        converged, iterations, residual = True, 0, 0.0
    elif args.mechanism == "coordinated":
        result = solve_coordinated(instance, opts)
        y_hat, variance = result.y_hat, result.variance
        converged, iterations = result.converged, result.iterations
        residual = result.kkt_residual_norm
    else:
        result = solve_ve_datp(instance, opts)
        y_hat, variance = result.y_hat, result.variance
        converged, iterations = result.converged, result.iterations
        residual = result.kkt_residual_norm
    lam = clearing_price(instance, y_hat)
    gaps = utility_gaps(instance, y_hat, variance)
    betas = privacy_prices(sensitivity(instance), instance.truthful_reports(), y_hat)
    print(f"clearing price = {lam:.10g}")
    print(f"{'agent':>5} {'y_hat':>14} {'variance':>14} {'gap':>14} {'beta_sum':>14}")
    for n in range(instance.n_agents):
        print(f"{n:>5} {y_hat[n]:>14.6g} {variance[n]:>14.6g} "
              f"{gaps[n]:>14.6g} {betas[n]:>14.6g}")
    print(f"converged = {str(converged).lower()}, iterations = {iterations}, "
          f"kkt residual = {residual:.6g}")
    payload = {
        "mechanism": args.mechanism,
        "clearing_price": lam,
        "y_hat": list(map(float, y_hat)),
        "variance": list(map(float, variance)),
        "utility_gap": list(map(float, gaps)),
        "beta_sum": list(map(float, betas)),
        "converged": converged,
        "iterations": iterations,
        "kkt_residual_norm": residual,
    }
    out = Path(args.out)
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    if args.verbose:
        print(f"result written to {out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    instance = load_instance(_resolve_instance_path(args.instance))
    default_grid = DEFAULT_A_GRID if args.param == PARAM_A_BUDGET else DEFAULT_ALPHA_GRID
    grid = tuple(float(v) for v in args.grid.split(",")) if args.grid else default_grid
    seeds = tuple(int(s) for s in args.seeds.split(","))
    mechanism = {"p2p": "PeerToPeer", "coordinated": "Coordinated",
                 "truthful": "Truthful"}[args.mechanism]
    spec = SweepSpec(parameter=args.param, grid=grid, fixed_other=args.fixed_other,
                     seeds=seeds, mechanism=mechanism)
    opts = _solver_options(args)
    result = run_sweep(instance, spec, opts)
    emit_csv(result, args.out)
    if args.verbose:
        print(f"{len(result.rows)} rows written to {args.out}")
    return EXIT_OK


def _equal_sensitivity_variant(instance):
    """Companion instance with every agent given agent 0's cost curvatures,
    so the per-agent price sensitivities coincide and the potential's
    two-point identity is exact."""
    first = instance.agents[0]
    agents = tuple(dataclasses.replace(agent, a=first.a, a_tilde=first.a_tilde)
                   for agent in instance.agents)
    return dataclasses.replace(instance, agents=agents)


def _cmd_certify(args) -> int:
    instance = load_instance(_resolve_instance_path(args.instance))
    report = monotonicity_certificate(instance, n_samples=args.samples,
                                      rng=np.random.default_rng(args.seed))
    print(f"symmetrized jacobian min eigenvalue = {report.min_eigenvalue:.6e}")
    print(f"operator spectrum min = {report.operator_spectrum_min:.6e}")
    print(f"min sampled quadratic form (admissible cone) = "
          f"{report.min_quadratic_form:.6e}")
    print(f"max lower-bound excess over quadratic form = "
          f"{report.bound_max_excess:.6e}")

    equal = _equal_sensitivity_variant(instance)
    rng = np.random.default_rng(args.seed)
    y = equal.truthful_reports()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(equal.n_agents))
        y_hat = y + rng.normal(0.0, 1.0, equal.n_agents)
        variance = np.abs(rng.normal(0.0, 1.0, equal.n_agents))
        x_point, z_point = y_hat.copy(), y_hat.copy()
        x_var, z_var = variance.copy(), variance.copy()
        x_point[n] += rng.normal()
        x_var[n] = abs(rng.normal())
        cost_x = expected_costs(equal, x_point, x_var)[n]
        cost_z = expected_costs(equal, z_point, z_var)[n]
        pot_x = potential_value(equal, x_point, x_var, GRADIENT_CONSISTENT)
        pot_z = potential_value(equal, z_point, z_var, GRADIENT_CONSISTENT)
        worst = max(worst, abs((cost_x - cost_z) - (pot_x - pot_z)))
    status = "PASS" if worst < 1e-8 else "FAIL"
    print(f"potential identity (equal-sensitivity variant): {status}, "
          f"max two-point error = {worst:.3e}")
    return EXIT_OK if status == "PASS" else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="p2pmarket",
        description="Privacy-aware peer-to-peer electricity market toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one instance and print the profile")
    solve.add_argument("instance")
    solve.add_argument("--mechanism", choices=("p2p", "coordinated", "truthful"),
                       default="p2p")
    solve.add_argument("--out", default="solve_result.json")
    _add_solver_flags(solve)

    sweep = sub.add_parser("sweep", help="run a parameter sweep and write CSV")
    sweep.add_argument("instance")
    sweep.add_argument("--param", choices=(PARAM_A_BUDGET, PARAM_ALPHA),
                       required=True)
    sweep.add_argument("--grid", default=None,
                       help="comma-separated ascending positive values")
    sweep.add_argument("--fixed-other", type=float, default=None, dest="fixed_other")
    sweep.add_argument("--seeds", default="0,1,2,3,4")
    sweep.add_argument("--mechanism", choices=("p2p", "coordinated", "truthful"),
                       default="p2p")
    sweep.add_argument("--out", required=True)
    _add_solver_flags(sweep)

    certify = sub.add_parser("certify", help="print the monotonicity certificate")
    certify.add_argument("instance")
    certify.add_argument("--samples", type=int, default=10_000)
    certify.add_argument("--seed", type=int, default=0)

    validate = sub.add_parser("validate", help="check instance invariants")
    validate.add_argument("instance")
    return parser


def run(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "solve": _cmd_solve,
        "sweep": _cmd_sweep,
        "certify": _cmd_certify,
        "validate": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except (ValidationError, ParseError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Diverged as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
