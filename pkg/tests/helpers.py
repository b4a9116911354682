"""Shared instance builders for the test suite."""

import math

import numpy as np

import p2pmarket as pm

ROOT = math.inf


def agent_row(**overrides):
    """Baseline agent parameters; override what the test cares about."""
    row = dict(a=1.0, b=0.0, d=0.0, a_tilde=0.5, b_tilde=0.0, d_star=2.0,
               delta_g=1.0, g_min=0.0, g_max=50.0, d_min=-50.0, d_max=50.0,
               omega_g=0.001, omega_d=0.001, alpha=3.0, a_budget=10.0)
    row.update(overrides)
    return row


def build_instance(rows, edges, prices, p0):
    agents = tuple(pm.AgentParams(index=i, **row) for i, row in enumerate(rows))
    topology = pm.NetworkTopology(n_agents=len(agents), edges=tuple(edges),
                                  prices=prices)
    instance = pm.MarketInstance(agents=agents, topology=topology, p0=float(p0))
    violations = pm.collect_violations(instance)
    assert not violations, violations
    return instance


def root_edges(n):
    return [((0, m), ROOT) for m in range(1, n)]


def two_agent_instance():
    """Two symmetric producers with hand-checkable market outcomes.

    B_n = 2 each, B = 4, truthful reports y = (1, 2), clearing price 0.75,
    demand (1.25, 2.25), generation (0.75, 0.75), trade (-0.5, 0.5).
    """
    rows = [agent_row(d_star=2.0), agent_row(d_star=3.0)]
    prices = pm.TradePrices(mode="homogeneous", c=1.0)
    return build_instance(rows, root_edges(2), prices, p0=2.0)


def three_node_heterogeneous():
    """Three agents, one capacitated link with asymmetric prices.

    Truthful reports (0, 4, 2) clear at price 1 with trades (-2, 2, 0);
    the 1-2 link saturates toward agent 1 (its partner price is higher),
    giving trading costs (-4, 5, -3).
    """
    rows = [agent_row(d_star=0.0, delta_g=0.0),
            agent_row(d_star=4.0, delta_g=0.0),
            agent_row(d_star=2.0, delta_g=0.0)]
    matrix = ((0.0, 2.0, 2.0),
              (2.0, 0.0, 3.0),
              (2.0, 5.0, 0.0))
    prices = pm.TradePrices(mode="heterogeneous", matrix=matrix)
    edges = root_edges(3) + [((1, 2), 1.0)]
    return build_instance(rows, edges, prices, p0=2.0)


def random_instance(rng, n_agents=None, heterogeneous=False):
    """Random valid instance with wide decision bounds."""
    n = int(rng.integers(3, 9)) if n_agents is None else int(n_agents)
    rows = []
    for _ in range(n):
        d_star = float(rng.uniform(1.0, 12.0))
        rows.append(agent_row(
            a=float(rng.uniform(0.4, 2.5)),
            b=float(rng.uniform(0.0, 6.0)),
            d=float(rng.uniform(0.0, 20.0)),
            a_tilde=float(rng.uniform(0.3, 4.0)),
            b_tilde=float(rng.uniform(0.0, 10.0)),
            d_star=d_star,
            delta_g=float(rng.uniform(0.0, 8.0)) if rng.random() < 0.5 else 0.0,
            g_max=float(rng.uniform(20.0, 120.0)),
            d_max=d_star + float(rng.uniform(5.0, 30.0)),
            d_min=-(d_star + float(rng.uniform(5.0, 30.0))),
            alpha=float(rng.uniform(0.5, 5.0)),
            a_budget=float(rng.uniform(0.5, 25.0)),
        ))
    edges = root_edges(n)
    for i in range(1, n):
        for j in range(i + 1, n):
            if rng.random() < 0.25:
                edges.append(((i, j), float(rng.uniform(5.0, 60.0))))
    if heterogeneous:
        matrix = [[0.0] * n for _ in range(n)]
        for m in range(1, n):
            root_price = float(rng.uniform(0.5, 3.0))
            matrix[0][m] = matrix[m][0] = root_price
        for i in range(1, n):
            for j in range(i + 1, n):
                forward = float(rng.uniform(0.5, 3.0))
                backward = float(rng.uniform(0.5, 3.0))
                while backward == forward:
                    backward = float(rng.uniform(0.5, 3.0))
                matrix[i][j] = forward
                matrix[j][i] = backward
        prices = pm.TradePrices(mode="heterogeneous",
                                matrix=tuple(tuple(row) for row in matrix))
    else:
        prices = pm.TradePrices(mode="homogeneous", c=float(rng.uniform(0.5, 3.0)))
    return build_instance(rows, edges, prices, p0=float(rng.uniform(0.5, 8.0)))


def equal_sensitivity_instance(rng, n_agents=4):
    """All agents share a and a_tilde, so the per-agent sensitivities match."""
    a = float(rng.uniform(0.5, 2.0))
    a_tilde = float(rng.uniform(0.4, 2.0))
    rows = []
    for _ in range(n_agents):
        rows.append(agent_row(
            a=a,
            a_tilde=a_tilde,
            b=float(rng.uniform(0.0, 4.0)),
            b_tilde=float(rng.uniform(0.0, 5.0)),
            d=float(rng.uniform(0.0, 10.0)),
            d_star=float(rng.uniform(1.0, 10.0)),
            delta_g=float(rng.uniform(0.0, 3.0)),
            g_max=100.0, d_max=60.0, d_min=-60.0,
        ))
    prices = pm.TradePrices(mode="homogeneous", c=float(rng.uniform(0.5, 2.5)))
    return build_instance(rows, root_edges(n_agents), prices,
                          p0=float(rng.uniform(0.5, 6.0)))


def budget_stationary_profile(instance):
    """Report profile whose privacy-price duals exactly close the KKT gap.

    Solving grad_n = -w_n * dev_n / 2 jointly over agents gives
    dev_n = -2 * (S_truth + T - S*_n) with T the aggregate deviation and
    S*_n the aggregate each agent would like to see; at that profile the
    budget multipliers B_n |dev_n| / (2 B^2) cancel the cost gradient.
    """
    sens = pm.sensitivity(instance)
    w = sens.per_agent / sens.total**2
    op = pm.pseudo_gradient(instance, instance.truthful_reports(),
                            np.zeros(instance.n_agents))
    y = instance.truthful_reports()
    s_truth = math.fsum(y) + math.fsum(instance.b_vec / instance.a_vec)
    # grad_n = w_n * S - pw_n - p0/N, so pw_n + p0/N = w_n * S_truth - grad_n(y)
    s_star = (w * s_truth - op.grad_y) / w
    n = instance.n_agents
    t = 2.0 * (math.fsum(s_star) - n * s_truth) / (1.0 + 2.0 * n)
    dev = -2.0 * (s_truth + t - s_star)
    return y + dev
