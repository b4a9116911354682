"""Instance data model: JSON parsing, validation and serialization."""

import dataclasses
import json
import math
from pathlib import Path

import numpy as np
import pytest

import p2pmarket as pm
from helpers import agent_row, build_instance, random_instance, root_edges, two_agent_instance


def codes(violations):
    return {v.code for v in violations}


# ---------------------------------------------------------------------------
# bundled instance

def test_bundled_instance_shape(ieee):
    assert ieee.n_agents == 13
    assert ieee.p0 == 5.0
    assert ieee.topology.prices.homogeneous
    assert ieee.topology.prices.c == 1.0
    assert not pm.collect_violations(ieee)


def test_bundled_instance_agent_values(ieee):
    # every node shares the generation cost curve
    assert np.all(ieee.a_vec == 0.5)
    assert np.all(ieee.b_vec == 6.0)
    root = ieee.agents[0]
    assert root.a_tilde == 1.5
    assert root.d == 9.0
    assert root.d_star == 0.0
    assert root.g_max == 100.0
    assert root.d_max == 25.0
    eight = ieee.agents[8]
    assert eight.a_tilde == 0.31
    assert eight.b_tilde == 2.75
    assert eight.d_star == 9.42
    assert eight.d_max == 34.5
    # demand can swing negative down to the mirrored bound
    assert np.all(ieee.d_min_vec == -ieee.d_max_vec)
    assert np.all(ieee.alpha_vec == 3.0)
    assert np.all(ieee.a_budget_vec == 10.0)


def test_bundled_instance_topology(ieee):
    topo = ieee.topology
    assert topo.kappa(1, 2) == 36.0
    assert topo.kappa(2, 1) == 36.0
    assert topo.kappa(6, 12) == 12.0
    assert topo.kappa(0, 5) == math.inf
    assert topo.neighbors(6) == (0, 8, 12)
    assert topo.neighbors(0) == tuple(range(1, 13))
    with pytest.raises(KeyError):
        topo.kappa(1, 7)
    with pytest.raises(KeyError):
        topo.kappa(3, 3)


def test_bundled_instance_market_constants(ieee):
    sens = pm.sensitivity(ieee)
    assert sens.total == pytest.approx(31.890463425886928, rel=1e-14)
    y = ieee.truthful_reports()
    assert math.fsum(y) == pytest.approx(45.94, abs=1e-12)
    lam = pm.clearing_price(ieee, y)
    assert lam == pytest.approx(6.332300578488182, rel=1e-14)


def test_truthful_reports_formula(ieee):
    y = ieee.truthful_reports()
    assert np.array_equal(y, ieee.d_star_vec - ieee.delta_g_vec)
    assert ieee.agents[2].truthful_report == pytest.approx(12.55 - 7.5)


# ---------------------------------------------------------------------------
# round trips

def test_serialize_load_round_trip(ieee):
    text = pm.serialize_instance(ieee)
    again = pm.load_instance(text)
    assert again == ieee
    assert pm.serialize_instance(again) == text


def test_round_trip_heterogeneous(rng):
    instance = random_instance(rng, n_agents=4, heterogeneous=True)
    text = pm.serialize_instance(instance)
    assert pm.load_instance(text) == instance


def test_load_accepts_bytes_and_path(tmp_path, ieee):
    text = pm.serialize_instance(ieee)
    assert pm.load_instance(text.encode("utf-8")) == ieee
    path = tmp_path / "inst.json"
    path.write_text(text, encoding="utf-8")
    assert pm.load_instance(path) == ieee


def test_serialize_writes_null_for_root_capacity(ieee):
    doc = json.loads(pm.serialize_instance(ieee))
    root_rows = [e for e in doc["topology"]["edges"] if 0 in e[:2]]
    assert root_rows and all(e[2] is None for e in root_rows)


# ---------------------------------------------------------------------------
# parse errors

def test_load_rejects_invalid_json():
    with pytest.raises(pm.ParseError, match="invalid JSON"):
        pm.load_instance("{not json")


def test_load_rejects_missing_top_level_fields(ieee):
    doc = json.loads(pm.serialize_instance(ieee))
    del doc["p0"]
    with pytest.raises(pm.ParseError, match="p0"):
        pm.load_instance(json.dumps(doc))


def test_load_rejects_missing_agent_field(ieee):
    doc = json.loads(pm.serialize_instance(ieee))
    del doc["agents"][3]["alpha"]
    with pytest.raises(pm.ParseError, match=r"agents\[3\].alpha"):
        pm.load_instance(json.dumps(doc))


def test_load_rejects_non_numeric_values(ieee):
    doc = json.loads(pm.serialize_instance(ieee))
    doc["agents"][0]["a"] = True
    with pytest.raises(pm.ParseError, match="must be a number"):
        pm.load_instance(json.dumps(doc))


def test_load_rejects_malformed_edges(ieee):
    doc = json.loads(pm.serialize_instance(ieee))
    doc["topology"]["edges"][0] = [0, 1]
    with pytest.raises(pm.ParseError, match=r"topology.edges\[0\]"):
        pm.load_instance(json.dumps(doc))


def test_load_ignores_unknown_keys(ieee):
    doc = json.loads(pm.serialize_instance(ieee))
    doc["description"] = "annotation"
    doc["agents"][0]["note"] = "extra"
    assert pm.load_instance(json.dumps(doc)) == ieee


def test_conflicting_duplicate_edges(ieee):
    doc = json.loads(pm.serialize_instance(ieee))
    doc["topology"]["edges"].append([2, 1, 99.0])
    with pytest.raises(pm.ValidationError) as err:
        pm.load_instance(json.dumps(doc))
    assert "AsymmetricCapacity" in codes(err.value.violations)


# ---------------------------------------------------------------------------
# invariant violations

def test_nonpositive_coefficients_flagged():
    instance = two_agent_instance()
    agents = list(instance.agents)
    agents[1] = dataclasses.replace(agents[1], a=-1.0)
    bad = dataclasses.replace(instance, agents=tuple(agents))
    violations = pm.collect_violations(bad)
    assert any(v.code == "NonPositiveCoefficient" and v.path == "agents[1].a"
               for v in violations)
    with pytest.raises(pm.ValidationError):
        pm.validate_instance(bad)


def test_zero_curvature_flagged():
    instance = two_agent_instance()
    agents = list(instance.agents)
    agents[0] = dataclasses.replace(agents[0], a_tilde=0.0)
    bad = dataclasses.replace(instance, agents=tuple(agents))
    assert "NonPositiveCoefficient" in codes(pm.collect_violations(bad))


def test_empty_tightened_interval_flagged():
    instance = two_agent_instance()
    agents = list(instance.agents)
    agents[0] = dataclasses.replace(agents[0], g_min=1.0, g_max=1.0, omega_g=0.5)
    bad = dataclasses.replace(instance, agents=tuple(agents))
    assert "EmptyTightenedInterval" in codes(pm.collect_violations(bad))


def test_missing_root_link_flagged(rng):
    instance = random_instance(rng, n_agents=4)
    edges = tuple(e for e in instance.topology.edges if e[0] != (0, 3))
    topo = dataclasses.replace(instance.topology, edges=edges)
    bad = dataclasses.replace(instance, topology=topo)
    violations = pm.collect_violations(bad)
    assert any(v.code == "MissingRootLink" and "3" in v.path for v in violations)


def test_negative_capacity_flagged(rng):
    instance = random_instance(rng, n_agents=3)
    edges = instance.topology.edges + (((1, 2), -4.0),)
    topo = dataclasses.replace(instance.topology, edges=edges)
    bad = dataclasses.replace(instance, topology=topo)
    assert "NegativeQuantity" in codes(pm.collect_violations(bad))


def test_infinite_non_root_capacity_flagged(rng):
    instance = random_instance(rng, n_agents=3)
    edges = instance.topology.edges + (((1, 2), math.inf),)
    topo = dataclasses.replace(instance.topology, edges=edges)
    bad = dataclasses.replace(instance, topology=topo)
    assert "NonFiniteValue" in codes(pm.collect_violations(bad))


def test_symmetric_price_pair_flagged():
    rows = [agent_row(), agent_row(), agent_row()]
    matrix = ((0.0, 2.0, 2.0),
              (2.0, 0.0, 3.0),
              (2.0, 3.0, 0.0))  # 1-2 pair tied
    prices = pm.TradePrices(mode="heterogeneous", matrix=matrix)
    agents = tuple(pm.AgentParams(index=i, **row) for i, row in enumerate(rows))
    topo = pm.NetworkTopology(n_agents=3, edges=tuple(root_edges(3)), prices=prices)
    bad = pm.MarketInstance(agents=agents, topology=topo, p0=1.0)
    assert "SymmetricPricePair" in codes(pm.collect_violations(bad))


def test_asymmetric_root_price_flagged():
    rows = [agent_row(), agent_row(), agent_row()]
    matrix = ((0.0, 2.0, 2.0),
              (2.5, 0.0, 3.0),
              (2.0, 4.0, 0.0))
    prices = pm.TradePrices(mode="heterogeneous", matrix=matrix)
    agents = tuple(pm.AgentParams(index=i, **row) for i, row in enumerate(rows))
    topo = pm.NetworkTopology(n_agents=3, edges=tuple(root_edges(3)), prices=prices)
    bad = pm.MarketInstance(agents=agents, topology=topo, p0=1.0)
    assert "AsymmetricRootPrice" in codes(pm.collect_violations(bad))


def test_single_agent_rejected():
    agents = (pm.AgentParams(index=0, **agent_row()),)
    prices = pm.TradePrices(mode="homogeneous", c=1.0)
    topo = pm.NetworkTopology(n_agents=1, edges=(), prices=prices)
    bad = pm.MarketInstance(agents=agents, topology=topo, p0=1.0)
    assert "BadShape" in codes(pm.collect_violations(bad))


def test_validation_error_message_counts_violations():
    instance = two_agent_instance()
    agents = tuple(dataclasses.replace(ag, a=-1.0) for ag in instance.agents)
    bad = dataclasses.replace(instance, agents=agents)
    with pytest.raises(pm.ValidationError, match="2 invariant violation"):
        pm.validate_instance(bad)


def test_validate_instance_accepts_dict_and_rejects_garbage(ieee):
    doc = json.loads(pm.serialize_instance(ieee))
    assert pm.validate_instance(doc) == ieee
    with pytest.raises(TypeError):
        pm.validate_instance(42)


# ---------------------------------------------------------------------------
# profiles and data directory

def test_truthful_profile_and_copy(ieee):
    profile = pm.truthful_profile(ieee)
    assert np.array_equal(profile.y_hat, ieee.truthful_reports())
    assert np.all(profile.variance == 0.0)
    clone = profile.copy()
    clone.y_hat[0] += 1.0
    assert profile.y_hat[0] != clone.y_hat[0]


def test_data_dir_override(monkeypatch, tmp_path, ieee):
    target = tmp_path / "bundle"
    target.mkdir()
    (target / "ieee13.json").write_text(pm.serialize_instance(ieee), encoding="utf-8")
    monkeypatch.setenv("P2P_MARKET_DATA", str(target))
    assert pm.data_dir() == target
    assert pm.ieee13_instance() == ieee


def test_random_instances_validate(rng):
    for _ in range(25):
        instance = random_instance(rng, heterogeneous=bool(rng.random() < 0.5))
        assert pm.collect_violations(instance) == []
