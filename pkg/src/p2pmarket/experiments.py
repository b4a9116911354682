"""Parameter sweeps over the privacy budget and the deviation radius.

Each sweep point overwrites the swept parameter for every agent, solves the
market under the requested mechanism and records per-agent utility gaps,
the social cost and privacy prices in plot-ready rows.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import sensitivity
from .game import social_cost, utility_gaps
from .model import MarketInstance, TradePrices
from .privacy import privacy_prices
from .solver import (SolverOptions, solve_coordinated, solve_ve_datp,
                     truthful_baseline)

PARAM_A_BUDGET = "A_budget"
PARAM_ALPHA = "Alpha"

PEER_TO_PEER = "PeerToPeer"
COORDINATED = "Coordinated"
TRUTHFUL = "Truthful"

DEFAULT_A_GRID = (0.5, 1.0, 2.0, 5.0, 10.0, 20.0)
DEFAULT_ALPHA_GRID = (0.25, 0.5, 1.0, 2.0, 3.0, 5.0)
DEFAULT_ALPHA_FIXED = 3.0
DEFAULT_A_FIXED = 10.0

CSV_HEADER = ("sweep_param", "sweep_value", "seed", "mechanism", "agent",
              "utility_gap", "social_cost", "beta_sum", "converged",
              "iterations")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    grid: tuple = DEFAULT_A_GRID
    fixed_other: float | None = None
    seeds: tuple = (0, 1, 2, 3, 4)
    mechanism: str = PEER_TO_PEER

    def __post_init__(self):
        if self.parameter not in (PARAM_A_BUDGET, PARAM_ALPHA):
            raise ValueError(f"unknown sweep parameter {self.parameter!r}")
        if self.mechanism not in (PEER_TO_PEER, COORDINATED, TRUTHFUL):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        grid = tuple(float(v) for v in self.grid)
        if not grid:
            raise ValueError("sweep grid must be nonempty")
        if any(v <= 0 for v in grid):
            raise ValueError("sweep grid values must be positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("sweep grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        if self.fixed_other is None:
            fixed = (DEFAULT_ALPHA_FIXED if self.parameter == PARAM_A_BUDGET
                     else DEFAULT_A_FIXED)
            object.__setattr__(self, "fixed_other", fixed)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True)
class SweepRow:
    sweep_param: str
    sweep_value: float
    seed: int
    mechanism: str
    agent: int
    utility_gap: float
    social_cost: float
    beta_sum: float
    converged: bool
    iterations: int


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list


def with_overrides(instance: MarketInstance, alpha: float | None = None,
                   a_budget: float | None = None) -> MarketInstance:
    """Copy of the instance with alpha and/or a_budget set for all agents."""
    agents = []
    for agent in instance.agents:
        changes = {}
        if alpha is not None:
            changes["alpha"] = float(alpha)
        if a_budget is not None:
            changes["a_budget"] = float(a_budget)
        agents.append(dataclasses.replace(agent, **changes) if changes else agent)
    return dataclasses.replace(instance, agents=tuple(agents))


def default_sweep_options() -> SolverOptions:
    """Solver settings for sweep points.

    Sweeps target qualitative gap and cost patterns, so the iteration
    budget is cut well below the certification default.
    """
    return SolverOptions(max_iters=200_000, tol_step=1e-6)


def _solve_mechanism(instance: MarketInstance, mechanism: str,
                     opts: SolverOptions, seed: int):
    """Returns (y_hat, variance, converged, iterations) for one mechanism."""
    if mechanism == TRUTHFUL:
        profile = truthful_baseline(instance)
        return profile.y_hat, profile.variance, True, 0
    if mechanism == COORDINATED:
        result = solve_coordinated(instance, opts)
    else:
        result = solve_ve_datp(instance, dataclasses.replace(opts, seed=seed))
    return result.y_hat, result.variance, result.converged, result.iterations


def _instance_at(instance: MarketInstance, spec: SweepSpec, value: float) -> MarketInstance:
    if spec.parameter == PARAM_A_BUDGET:
        return with_overrides(instance, alpha=spec.fixed_other, a_budget=value)
    return with_overrides(instance, alpha=value, a_budget=spec.fixed_other)


def run_sweep(instance: MarketInstance, spec: SweepSpec,
              opts: SolverOptions | None = None) -> SweepResult:
    """Solve every grid point and seed; rows ordered (grid, seed, agent)."""
    if opts is None:
        opts = default_sweep_options()
    rows = []
    for value in spec.grid:
        point = _instance_at(instance, spec, value)
        sens = sensitivity(point)
        y_true = point.truthful_reports()
        solved = None
        for seed in spec.seeds:
            # Deterministic runs ignore the seed, so one solve serves every
            # seed row; stochastic runs resolve per seed.
            if solved is None or opts.mode == "stochastic":
                solved = _solve_mechanism(point, spec.mechanism, opts, seed)
            y_hat, variance, converged, iterations = solved
            gaps = utility_gaps(point, y_hat, variance)
            cost = social_cost(point, y_hat, variance)
            betas = privacy_prices(sens, y_true, y_hat)
            for agent in range(point.n_agents):
                rows.append(SweepRow(
                    sweep_param=spec.parameter,
                    sweep_value=value,
                    seed=seed,
                    mechanism=spec.mechanism,
                    agent=agent,
                    utility_gap=float(gaps[agent]),
                    social_cost=cost,
                    beta_sum=float(betas[agent]),
                    converged=converged,
                    iterations=iterations,
                ))
    return SweepResult(spec=spec, rows=rows)


def aggregate_gaps(result: SweepResult):
    """Mean and standard error of the utility gap per (grid value, agent)."""
    groups = {}
    for row in result.rows:
        groups.setdefault((row.sweep_value, row.agent), []).append(row.utility_gap)
    out = []
    for (value, agent), gaps in sorted(groups.items()):
        mean = math.fsum(gaps) / len(gaps)
        if len(gaps) > 1:
            var = math.fsum((g - mean) ** 2 for g in gaps) / (len(gaps) - 1)
            stderr = math.sqrt(var / len(gaps))
        else:
            stderr = 0.0
        out.append((value, agent, mean, stderr))
    return out


def social_cost_comparison(instance: MarketInstance, spec: SweepSpec,
                           opts: SolverOptions | None = None):
    """Rows (grid value, mechanism, social cost decrease vs truthful).

    All three mechanisms are evaluated regardless of spec.mechanism; the
    decrease is truthful cost minus mechanism cost, so positive numbers
    mean the mechanism lowered the total.
    """
    if opts is None:
        opts = default_sweep_options()
    rows = []
    for value in spec.grid:
        point = _instance_at(instance, spec, value)
        y = point.truthful_reports()
        base = social_cost(point, y, np.zeros_like(y))
        for mechanism in (PEER_TO_PEER, COORDINATED, TRUTHFUL):
            y_hat, variance, _, _ = _solve_mechanism(point, mechanism, opts,
                                                     spec.seeds[0] if spec.seeds else 0)
            rows.append((value, mechanism, base - social_cost(point, y_hat, variance)))
    return rows


def privacy_price_map(instance: MarketInstance, alpha: float = DEFAULT_ALPHA_FIXED,
                      a_budget: float = DEFAULT_A_FIXED,
                      opts: SolverOptions | None = None) -> np.ndarray:
    """Per-agent beta_sum at the peer-to-peer solution for (alpha, a_budget)."""
    point = with_overrides(instance, alpha=alpha, a_budget=a_budget)
    if opts is None:
        opts = default_sweep_options()
    result = solve_ve_datp(point, opts)
    return privacy_prices(sensitivity(point), point.truthful_reports(), result.y_hat)


def heterogeneous_price_variant(instance: MarketInstance, seed: int = 0,
                                low: float = 1.0, high: float = 3.0) -> MarketInstance:
    """Variant of the instance with randomly drawn asymmetric trade prices.

    Root prices keep their original symmetric values; every other ordered
    pair gets an independent uniform draw from [low, high], redrawn on the
    measure-zero event of a tie so every saturation direction is defined.
    """
    rng = np.random.default_rng(seed)
    n = instance.n_agents
    base = instance.topology.prices
    matrix = [[0.0] * n for _ in range(n)]
    for m in range(1, n):
        root = base.price(0, m)
        matrix[0][m] = root
        matrix[m][0] = root
    for i in range(1, n):
        for j in range(i + 1, n):
            forward = float(rng.uniform(low, high))
            backward = float(rng.uniform(low, high))
            while backward == forward:
                backward = float(rng.uniform(low, high))
            matrix[i][j] = forward
            matrix[j][i] = backward
    prices = TradePrices(mode="heterogeneous",
                         matrix=tuple(tuple(row) for row in matrix))
    topology = dataclasses.replace(instance.topology, prices=prices)
    return dataclasses.replace(instance, topology=topology)


def heterogeneous_price_study(instance: MarketInstance, seed: int = 0,
                              opts: SolverOptions | None = None):
    """Peer-to-peer solve under drawn asymmetric prices.

    Returns (variant, result, gaps). Node 0 absorbs the mirrored side of
    every saturated link and faces a sign-flipped aggregate price term,
    which singles its utility gap out from the other agents.
    """
    variant = heterogeneous_price_variant(instance, seed)
    if opts is None:
        opts = default_sweep_options()
    result = solve_ve_datp(variant, opts)
    gaps = utility_gaps(variant, result.y_hat, result.variance)
    return variant, result, gaps


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def emit_csv(result: SweepResult, path) -> None:
    """Write sweep rows as CSV: 12 significant digits, UTF-8, LF endings."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in result.rows:
                writer.writerow([
                    row.sweep_param,
                    _format_value(float(row.sweep_value)),
                    row.seed,
                    row.mechanism,
                    row.agent,
                    _format_value(float(row.utility_gap)),
                    _format_value(float(row.social_cost)),
                    _format_value(float(row.beta_sum)),
                    _format_value(bool(row.converged)),
                    row.iterations,
                ])
    except OSError as exc:
        raise OSError(f"cannot write sweep CSV to {path}: {exc}") from exc
