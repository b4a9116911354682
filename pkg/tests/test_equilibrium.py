"""Closed-form clearing: price, decisions, balance and trading costs."""

import math

import numpy as np
import pytest

import p2pmarket as pm
from helpers import random_instance, three_node_heterogeneous, two_agent_instance


def test_sensitivity_two_agents():
    instance = two_agent_instance()
    sens = pm.sensitivity(instance)
    # 1/a + 1/(2*a_tilde) = 1 + 1 per agent
    assert np.array_equal(sens.per_agent, np.array([2.0, 2.0]))
    assert sens.total == 4.0


def test_clearing_price_hand_value():
    instance = two_agent_instance()
    lam = pm.clearing_price(instance, instance.truthful_reports())
    assert lam == 0.75


def test_equilibrium_decisions_hand_values():
    instance = two_agent_instance()
    out = pm.equilibrium_decisions(instance, instance.truthful_reports())
    assert out.price == 0.75
    assert out.demand == pytest.approx([1.25, 2.25], abs=1e-15)
    assert out.generation == pytest.approx([0.75, 0.75], abs=1e-15)
    assert out.trade == pytest.approx([-0.5, 0.5], abs=1e-15)
    assert out.trade_cost is None


def test_price_depends_on_reports_only_through_their_sum(rng):
    instance = random_instance(rng, n_agents=6)
    reports = rng.normal(5.0, 2.0, 6)
    shuffled = reports[rng.permutation(6)]
    assert pm.clearing_price(instance, reports) == pm.clearing_price(instance, shuffled)


def test_price_shift_per_unit_report(rng):
    instance = random_instance(rng, n_agents=5)
    sens = pm.sensitivity(instance)
    reports = instance.truthful_reports()
    bumped = reports.copy()
    bumped[2] += 1.7
    delta = pm.clearing_price(instance, bumped) - pm.clearing_price(instance, reports)
    assert delta == pytest.approx(1.7 / sens.total, rel=1e-12)


def test_balance_and_truthful_import_on_random_instances(rng):
    """Demand minus generation minus RES equals net trade, and truthful
    profiles have zero aggregate import."""
    for _ in range(50):
        instance = random_instance(rng)
        y = instance.truthful_reports()
        out = pm.equilibrium_decisions(instance, y)
        residual = out.demand - out.generation - instance.delta_g_vec - out.trade
        assert np.max(np.abs(residual)) < 1e-10
        assert abs(math.fsum(out.trade)) < 1e-10
        # off-truth reports keep the per-agent balance but not the aggregate
        skewed = y + rng.normal(0.0, 1.0, instance.n_agents)
        out2 = pm.equilibrium_decisions(instance, skewed)
        residual2 = out2.demand - out2.generation - instance.delta_g_vec - out2.trade
        assert np.max(np.abs(residual2)) < 1e-10


def test_saturation_sign():
    assert pm.saturation_sign(5.0, 3.0) == 1
    assert pm.saturation_sign(3.0, 5.0) == -1
    with pytest.raises(pm.SymmetricPricePair):
        pm.saturation_sign(2.0, 2.0)


def test_saturation_terms_hand_values():
    instance = three_node_heterogeneous()
    sat, fix = pm.saturation_terms(instance)
    # c_21 = 5 > c_12 = 3, so the unit line saturates toward agent 1
    assert sat == pytest.approx([0.0, 1.0, -1.0], abs=0)
    assert fix == pytest.approx([0.0, 3.0, -5.0], abs=0)


def test_trade_cost_heterogeneous_hand_values():
    instance = three_node_heterogeneous()
    out = pm.equilibrium_decisions(instance, instance.truthful_reports())
    assert out.price == pytest.approx(1.0, abs=1e-15)
    assert out.trade == pytest.approx([-2.0, 2.0, 0.0], abs=1e-12)
    cost = pm.trade_cost_heterogeneous(instance, np.array([-2.0, 2.0, 0.0]))
    assert cost == pytest.approx([-4.0, 5.0, -3.0], abs=1e-12)


def test_trade_cost_heterogeneous_rejects_homogeneous_instance():
    instance = two_agent_instance()
    with pytest.raises(ValueError, match="homogeneous"):
        pm.trade_cost_heterogeneous(instance, np.zeros(2))


def test_trade_costs_dispatch():
    homogeneous = two_agent_instance()
    trade = np.array([-0.5, 0.5])
    assert np.array_equal(pm.trade_costs(homogeneous, trade),
                          pm.trade_cost_homogeneous(1.0, trade))
    hetero = three_node_heterogeneous()
    trade3 = np.array([-2.0, 2.0, 0.0])
    assert np.array_equal(pm.trade_costs(hetero, trade3),
                          pm.trade_cost_heterogeneous(hetero, trade3))


def test_trade_cost_homogeneous_is_linear():
    trade = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(pm.trade_cost_homogeneous(2.0, trade), 2.0 * trade)


def test_no_capacitated_links_means_pure_root_trading(rng):
    """Without non-root links all heterogeneous volume clears with node 0."""
    instance = random_instance(rng, n_agents=4, heterogeneous=True)
    import dataclasses
    topo = dataclasses.replace(
        instance.topology,
        edges=tuple(e for e in instance.topology.edges if 0 in e[0]))
    instance = dataclasses.replace(instance, topology=topo)
    sat, fix = pm.saturation_terms(instance)
    assert np.all(sat == 0.0) and np.all(fix == 0.0)
    trade = rng.normal(0.0, 2.0, 4)
    cost = pm.trade_cost_heterogeneous(instance, trade)
    prices = instance.topology.prices
    root = np.array([prices.price(0, m) for m in range(4)])
    assert cost[1:] == pytest.approx(root[1:] * trade[1:], rel=1e-14)
    assert cost[0] == pytest.approx(-float(np.dot(root[1:], trade[1:])), rel=1e-12)


def test_market_outcome_attaches_costs():
    instance = three_node_heterogeneous()
    out = pm.market_outcome(instance, instance.truthful_reports())
    assert out.trade_cost is not None
    assert out.trade_cost == pytest.approx([-4.0, 5.0, -3.0], abs=1e-12)
