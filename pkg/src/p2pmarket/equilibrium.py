"""Closed-form market equilibrium given a profile of reported injections.

The clearing price is uniform and fully determined by the aggregate of the
reports, each agent's generation responds to the price through its own cost
slope, and demand responds through the flexibility weight. Reports only
enter through the price; demand and net trade are evaluated at the true
nominal demand and RES infeed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SymmetricPricePair
from .model import MarketInstance


@dataclass(frozen=True)
class Sensitivity:
    """Per-agent price sensitivities B_n = 1/a_n + 1/(2*a_tilde_n) and their sum."""

    per_agent: np.ndarray
    total: float


def sensitivity(instance: MarketInstance) -> Sensitivity:
    per_agent = 1.0 / instance.a_vec + 1.0 / (2.0 * instance.a_tilde_vec)
    return Sensitivity(per_agent=per_agent, total=math.fsum(per_agent))


def clearing_price(instance: MarketInstance, inputs: np.ndarray) -> float:
    """Uniform price (sum(inputs) + sum(b/a)) / B.

    Sums are compensated, so the price depends on the inputs only through
    their exactly rounded sum: profiles with equal compensated sums clear
    at the bit-identical price.
    """
    sens = sensitivity(instance)
    num = math.fsum(inputs) + math.fsum(instance.b_vec / instance.a_vec)
    return num / sens.total


@dataclass
class EquilibriumOutcome:
    price: float
    demand: np.ndarray
    generation: np.ndarray
    trade: np.ndarray
    trade_cost: np.ndarray | None = None


def equilibrium_decisions(instance: MarketInstance, reports: np.ndarray) -> EquilibriumOutcome:
    """Price, demand, generation and net trade cleared at the reports.

    Demand and trade use the true d_star and delta_g; the reports move the
    outcome only through the clearing price. Bounds are not enforced here,
    feasibility is the business of the solver constraints.
    """
    reports = np.asarray(reports, dtype=float)
    sens = sensitivity(instance)
    lam = clearing_price(instance, reports)
    demand = instance.d_star_vec - lam / (2.0 * instance.a_tilde_vec)
    generation = (lam - instance.b_vec) / instance.a_vec
    trade = (instance.d_star_vec + instance.b_vec / instance.a_vec
             - sens.per_agent * lam - instance.delta_g_vec)
    return EquilibriumOutcome(price=lam, demand=demand, generation=generation, trade=trade)


def saturation_sign(c_mn: float, c_nm: float) -> int:
    """Direction of a saturated bilateral trade, sgn(c_mn - c_nm).

    Raises SymmetricPricePair when the prices tie, since then the
    saturation direction between non-root partners is undefined.
    """
    if c_mn > c_nm:
        return 1
    if c_mn < c_nm:
        return -1
    raise SymmetricPricePair(f"tied prices {c_mn} == {c_nm}")


def trade_cost_homogeneous(c: float, trade: np.ndarray) -> np.ndarray:
    """With one shared price every agent simply pays c per unit bought."""
    return c * np.asarray(trade, dtype=float)


def saturation_terms(instance: MarketInstance) -> tuple[np.ndarray, np.ndarray]:
    """Per-agent saturated-volume and fixed-cost sums under heterogeneous prices.

    For agent n >= 1, sat[n] = sum over non-root partners m of
    kappa_nm * sgn(c_mn - c_nm) and fix[n] = sum of c_nm * kappa_nm *
    sgn(c_mn - c_nm). Node 0 trades at symmetric prices, so sat[0] = fix[0] = 0.
    """
    topo = instance.topology
    prices = topo.prices
    n = instance.n_agents
    sat = np.zeros(n)
    fix = np.zeros(n)
    for i in range(1, n):
        for m in topo.neighbors(i):
            if m == 0:
                continue
            sign = saturation_sign(prices.price(m, i), prices.price(i, m))
            kappa = topo.kappa(i, m)
            sat[i] += kappa * sign
            fix[i] += prices.price(i, m) * kappa * sign
    return sat, fix


def trade_cost_heterogeneous(instance: MarketInstance, trade: np.ndarray) -> np.ndarray:
    """Trading costs when bilateral prices differ within each pair.

    Every capacitated link is saturated toward its cheaper direction; the
    remainder of each agent's net position clears with node 0 at the
    symmetric root price. Node 0 absorbs the mirrored volumes.
    """
    trade = np.asarray(trade, dtype=float)
    prices = instance.topology.prices
    if prices.homogeneous:
        raise ValueError("instance uses homogeneous prices")
    n = instance.n_agents
    sat, fix = saturation_terms(instance)
    root_price = np.array([prices.price(0, m) for m in range(n)])
    cost = np.empty(n)
    cost[1:] = root_price[1:] * (trade[1:] - sat[1:]) + fix[1:]
    cost[0] = float(np.dot(root_price[1:], sat[1:] - trade[1:]))
    return cost


def trade_costs(instance: MarketInstance, trade: np.ndarray) -> np.ndarray:
    """Dispatch on the price mode of the instance."""
    prices = instance.topology.prices
    if prices.homogeneous:
        return trade_cost_homogeneous(prices.c, trade)
    return trade_cost_heterogeneous(instance, trade)


def market_outcome(instance: MarketInstance, reports: np.ndarray) -> EquilibriumOutcome:
    """equilibrium_decisions plus the matching trading costs."""
    out = equilibrium_decisions(instance, reports)
    out.trade_cost = trade_costs(instance, out.trade)
    return out
