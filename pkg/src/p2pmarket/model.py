"""Market instance data model, validation and JSON serialization.

An instance bundles per-agent cost and flexibility parameters, a trading
topology with line capacities and bilateral prices, and the wholesale
penalty price p0. Node 0 is the grid interface; it must be linked to every
other node and those links carry no capacity limit.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError, Violation

_AGENT_FIELDS = (
    "a", "b", "d", "a_tilde", "b_tilde", "d_star", "delta_g",
    "g_min", "g_max", "d_min", "d_max", "omega_g", "omega_d",
    "alpha", "a_budget",
)


@dataclass(frozen=True)
class AgentParams:
    """Parameters of one prosumer.

    Generation cost is a*g^2/2 + b*g + d, demand utility is
    -a_tilde*(D - d_star)^2 + b_tilde, and the privately known injection
    is y = d_star - delta_g. alpha bounds the report deviation |y_hat - y|
    and a_budget bounds the expected privacy loss.
    """

    index: int
    a: float
    b: float
    d: float
    a_tilde: float
    b_tilde: float
    d_star: float
    delta_g: float
    g_min: float
    g_max: float
    d_min: float
    d_max: float
    omega_g: float
    omega_d: float
    alpha: float
    a_budget: float

    @property
    def truthful_report(self) -> float:
        return self.d_star - self.delta_g


@dataclass(frozen=True)
class TradePrices:
    """Bilateral trade prices, either one shared c or a full matrix.

    In heterogeneous mode matrix[n][m] is the price agent n pays agent m
    per unit bought; root prices must be symmetric (c_0n == c_n0) while
    every other pair must be strictly asymmetric so that the saturation
    direction of the trade is defined.
    """

    mode: str  # "homogeneous" or "heterogeneous"
    c: float | None = None
    matrix: tuple[tuple[float, ...], ...] | None = None

    @property
    def homogeneous(self) -> bool:
        return self.mode == "homogeneous"

    @cached_property
    def matrix_array(self) -> np.ndarray:
        if self.matrix is None:
            raise ValueError("no price matrix in homogeneous mode")
        return np.asarray(self.matrix, dtype=float)

    def price(self, n: int, m: int) -> float:
        if self.homogeneous:
            return float(self.c)
        return float(self.matrix[n][m])


@dataclass(frozen=True)
class NetworkTopology:
    """Undirected trading graph over agents 0..n_agents-1.

    edges maps an ordered pair (min, max) to the line capacity kappa.
    Links to node 0 are mandatory and always treated as uncapacitated,
    whatever capacity value the config lists for them.
    """

    n_agents: int
    edges: tuple[tuple[tuple[int, int], float], ...]
    prices: TradePrices

    @cached_property
    def _edge_map(self) -> dict[tuple[int, int], float]:
        return dict(self.edges)

    def kappa(self, n: int, m: int) -> float:
        if n == m:
            raise KeyError("no self edge")
        if n == 0 or m == 0:
            return math.inf
        key = (min(n, m), max(n, m))
        return self._edge_map[key]

    def neighbors(self, n: int) -> tuple[int, ...]:
        """Trading partners of n. Node 0 is linked to everybody."""
        if n == 0:
            return tuple(range(1, self.n_agents))
        out = {0}
        for (i, j) in self._edge_map:
            if i == n and j != 0:
                out.add(j)
            elif j == n and i != 0:
                out.add(i)
        return tuple(sorted(out))


@dataclass(frozen=True)
class MarketInstance:
    agents: tuple[AgentParams, ...]
    topology: NetworkTopology
    p0: float

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def _vec(self, name: str) -> np.ndarray:
        return np.array([getattr(ag, name) for ag in self.agents], dtype=float)

    @cached_property
    def a_vec(self) -> np.ndarray:
        return self._vec("a")

    @cached_property
    def b_vec(self) -> np.ndarray:
        return self._vec("b")

    @cached_property
    def a_tilde_vec(self) -> np.ndarray:
        return self._vec("a_tilde")

    @cached_property
    def b_tilde_vec(self) -> np.ndarray:
        return self._vec("b_tilde")

    @cached_property
    def d_fixed_vec(self) -> np.ndarray:
        return self._vec("d")

    @cached_property
    def d_star_vec(self) -> np.ndarray:
        return self._vec("d_star")

    @cached_property
    def delta_g_vec(self) -> np.ndarray:
        return self._vec("delta_g")

    @cached_property
    def alpha_vec(self) -> np.ndarray:
        return self._vec("alpha")

    @cached_property
    def a_budget_vec(self) -> np.ndarray:
        return self._vec("a_budget")

    @cached_property
    def g_min_vec(self) -> np.ndarray:
        return self._vec("g_min")

    @cached_property
    def g_max_vec(self) -> np.ndarray:
        return self._vec("g_max")

    @cached_property
    def d_min_vec(self) -> np.ndarray:
        return self._vec("d_min")

    @cached_property
    def d_max_vec(self) -> np.ndarray:
        return self._vec("d_max")

    @cached_property
    def omega_g_vec(self) -> np.ndarray:
        return self._vec("omega_g")

    @cached_property
    def omega_d_vec(self) -> np.ndarray:
        return self._vec("omega_d")

    def truthful_reports(self) -> np.ndarray:
        """Private injections y_n = d_star_n - delta_g_n."""
        return self.d_star_vec - self.delta_g_vec


@dataclass
class ReportProfile:
    """A report profile: deterministic parts y_hat and noise variances."""

    y_hat: np.ndarray
    variance: np.ndarray

    def copy(self) -> "ReportProfile":
        return ReportProfile(self.y_hat.copy(), self.variance.copy())


def truthful_profile(instance: MarketInstance) -> ReportProfile:
    y = instance.truthful_reports()
    return ReportProfile(y_hat=y, variance=np.zeros_like(y))


# ---------------------------------------------------------------------------
# validation

def _check_finite(value, path, violations) -> bool:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        violations.append(Violation("BadShape", path, f"expected a number, got {value!r}"))
        return False
    if not math.isfinite(value):
        violations.append(Violation("NonFiniteValue", path, f"value {value!r} is not finite"))
        return False
    return True


def collect_violations(instance: MarketInstance) -> list[Violation]:
    """Every violated invariant of the instance, with field paths."""
    out: list[Violation] = []
    n = instance.n_agents
    if n < 2:
        out.append(Violation("BadShape", "agents", f"need at least 2 agents, got {n}"))

    for i, ag in enumerate(instance.agents):
        base = f"agents[{i}]"
        for name in _AGENT_FIELDS:
            _check_finite(getattr(ag, name), f"{base}.{name}", out)
        # strict positivity keeps the market sensitivity B_n well defined
        if ag.a <= 0:
            out.append(Violation("NonPositiveCoefficient", f"{base}.a", f"a = {ag.a}"))
        if ag.a_tilde <= 0:
            out.append(Violation("NonPositiveCoefficient", f"{base}.a_tilde", f"a_tilde = {ag.a_tilde}"))
        if ag.a_budget <= 0:
            out.append(Violation("NonPositiveCoefficient", f"{base}.a_budget", f"a_budget = {ag.a_budget}"))
        for name in ("alpha", "omega_g", "omega_d", "delta_g"):
            v = getattr(ag, name)
            if isinstance(v, (int, float)) and v < 0:
                out.append(Violation("NegativeQuantity", f"{base}.{name}", f"{name} = {v}"))
        # tightened operating intervals must stay nonempty
        if ag.g_min + ag.omega_g > ag.g_max - ag.omega_g:
            out.append(Violation(
                "EmptyTightenedInterval", f"{base}.g_min",
                f"[{ag.g_min}+{ag.omega_g}, {ag.g_max}-{ag.omega_g}] is empty"))
        if ag.d_min + ag.omega_d > ag.d_max - ag.omega_d:
            out.append(Violation(
                "EmptyTightenedInterval", f"{base}.d_min",
                f"[{ag.d_min}+{ag.omega_d}, {ag.d_max}-{ag.omega_d}] is empty"))

    topo = instance.topology
    if topo.n_agents != n:
        out.append(Violation("BadShape", "topology.n_agents",
                             f"topology declares {topo.n_agents} agents, instance has {n}"))

    linked_to_root = set()
    for (i, j), kappa in topo.edges:
        path = f"topology.edges[{i},{j}]"
        if not (0 <= i < n and 0 <= j < n) or i == j:
            out.append(Violation("BadShape", path, "edge endpoints out of range"))
            continue
        if i == 0 or j == 0:
            linked_to_root.add(max(i, j))
            continue  # capacity of root links is ignored
        if not math.isfinite(kappa):
            out.append(Violation("NonFiniteValue", path, f"kappa = {kappa}"))
        elif kappa < 0:
            out.append(Violation("NegativeQuantity", path, f"kappa = {kappa}"))
    for m in range(1, n):
        if m not in linked_to_root:
            out.append(Violation("MissingRootLink", f"topology.edges[0,{m}]",
                                 f"node {m} has no link to node 0"))

    prices = topo.prices
    if prices.mode not in ("homogeneous", "heterogeneous"):
        out.append(Violation("BadShape", "topology.prices.mode", f"unknown mode {prices.mode!r}"))
    elif prices.homogeneous:
        if prices.c is None or not _check_finite(prices.c, "topology.prices.c", out):
            pass
        elif prices.c < 0:
            out.append(Violation("NegativeQuantity", "topology.prices.c", f"c = {prices.c}"))
    else:
        mat = prices.matrix
        if mat is None or len(mat) != n or any(len(row) != n for row in mat):
            out.append(Violation("BadShape", "topology.prices.matrix", f"need a {n}x{n} matrix"))
        else:
            for i in range(n):
                for j in range(n):
                    if i != j:
                        _check_finite(mat[i][j], f"topology.prices.matrix[{i}][{j}]", out)
            for m in range(1, n):
                if mat[0][m] != mat[m][0]:
                    out.append(Violation(
                        "AsymmetricRootPrice", f"topology.prices.matrix[0][{m}]",
                        f"c_0{m} = {mat[0][m]} differs from c_{m}0 = {mat[m][0]}"))
            for i in range(1, n):
                for j in range(i + 1, n):
                    if mat[i][j] == mat[j][i]:
                        out.append(Violation(
                            "SymmetricPricePair", f"topology.prices.matrix[{i}][{j}]",
                            f"c_{i}{j} == c_{j}{i} == {mat[i][j]}; saturation direction undefined"))

    if not _check_finite(instance.p0, "p0", out):
        pass
    elif instance.p0 < 0:
        out.append(Violation("NegativeQuantity", "p0", f"p0 = {instance.p0}"))
    return out


def validate_instance(obj) -> MarketInstance:
    """Validate a MarketInstance (or raw config dict) and return it.

    Raises ValidationError listing every violated invariant. Duplicate edge
    entries with conflicting capacities surface as AsymmetricCapacity.
    """
    if isinstance(obj, dict):
        instance = _instance_from_dict(obj)
    elif isinstance(obj, MarketInstance):
        instance = obj
    else:
        raise TypeError(f"cannot validate {type(obj).__name__}")
    violations = collect_violations(instance)
    if violations:
        raise ValidationError(violations)
    return instance


# ---------------------------------------------------------------------------
# JSON config handling

def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ParseError(f"missing required field '{path}.{key}'" if path else
                         f"missing required field '{key}'")
    return mapping[key]


def _instance_from_dict(doc: dict) -> MarketInstance:
    if not isinstance(doc, dict):
        raise ParseError("top level config must be a JSON object")
    raw_agents = _require(doc, "agents", "")
    if not isinstance(raw_agents, list):
        raise ParseError("'agents' must be an array")
    agents = []
    duplicates: list[Violation] = []
    for i, entry in enumerate(raw_agents):
        if not isinstance(entry, dict):
            raise ParseError(f"agents[{i}] must be an object")
        kwargs = {}
        for name in _AGENT_FIELDS:
            kwargs[name] = _require(entry, name, f"agents[{i}]")
        agents.append(AgentParams(index=i, **{k: _coerce_num(v, f"agents[{i}].{k}")
                                              for k, v in kwargs.items()}))

    topo_doc = _require(doc, "topology", "")
    raw_edges = _require(topo_doc, "edges", "topology")
    edge_map: dict[tuple[int, int], float] = {}
    for k, item in enumerate(raw_edges):
        if not (isinstance(item, list) and len(item) == 3):
            raise ParseError(f"topology.edges[{k}] must be [n, m, kappa]")
        i, j, kappa = item
        if not isinstance(i, int) or not isinstance(j, int):
            raise ParseError(f"topology.edges[{k}] endpoints must be integers")
        kappa = math.inf if kappa is None else _coerce_num(kappa, f"topology.edges[{k}][2]")
        key = (min(i, j), max(i, j))
        if key in edge_map and edge_map[key] != kappa:
            duplicates.append(Violation(
                "AsymmetricCapacity", f"topology.edges[{key[0]},{key[1]}]",
                f"capacities {edge_map[key]} and {kappa} given for the same pair"))
        edge_map[key] = kappa

    prices_doc = _require(topo_doc, "prices", "topology")
    mode = _require(prices_doc, "mode", "topology.prices")
    if mode == "homogeneous":
        prices = TradePrices(mode="homogeneous",
                             c=_coerce_num(_require(prices_doc, "c", "topology.prices"),
                                           "topology.prices.c"))
    elif mode == "heterogeneous":
        mat = _require(prices_doc, "matrix", "topology.prices")
        if not isinstance(mat, list):
            raise ParseError("topology.prices.matrix must be an array of arrays")
        prices = TradePrices(
            mode="heterogeneous",
            matrix=tuple(tuple(_coerce_num(v, f"topology.prices.matrix[{r}][{c}]")
                               for c, v in enumerate(row)) for r, row in enumerate(mat)))
    else:
        raise ParseError(f"topology.prices.mode must be 'homogeneous' or 'heterogeneous', got {mode!r}")

    topology = NetworkTopology(
        n_agents=len(agents),
        edges=tuple(sorted(edge_map.items())),
        prices=prices,
    )
    instance = MarketInstance(
        agents=tuple(agents),
        topology=topology,
        p0=_coerce_num(_require(doc, "p0", ""), "p0"),
    )
    if duplicates:
        raise ValidationError(duplicates + collect_violations(instance))
    return instance


def _coerce_num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"'{path}' must be a number, got {value!r}")
    return float(value)


def load_instance(source: str | bytes | os.PathLike,
                  validate: bool = True) -> MarketInstance:
    """Parse a JSON config, validating invariants unless validate=False.

    Accepts raw JSON text/bytes, or a path-like pointing at a file.
    Unknown keys are ignored so configs can carry annotations. Skipping
    validation parses structurally sound configs whose numbers break the
    model invariants, so callers can inspect the violations themselves.
    """
    if isinstance(source, os.PathLike):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.decode("utf-8") if isinstance(source, bytes) else source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    instance = _instance_from_dict(doc)
    return validate_instance(instance) if validate else instance


def serialize_instance(instance: MarketInstance) -> str:
    """Serialize to the JSON config schema; load(serialize(x)) == x bit for bit."""
    doc = {
        "p0": instance.p0,
        "agents": [
            {name: getattr(ag, name) for name in _AGENT_FIELDS}
            for ag in instance.agents
        ],
        "topology": {
            "edges": [[i, j, (None if math.isinf(k) else k)]
                      for (i, j), k in instance.topology.edges],
            "prices": (
                {"mode": "homogeneous", "c": instance.topology.prices.c}
                if instance.topology.prices.homogeneous else
                {"mode": "heterogeneous",
                 "matrix": [list(row) for row in instance.topology.prices.matrix]}
            ),
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def data_dir() -> Path:
    """Directory holding bundled instance files; P2P_MARKET_DATA overrides it."""
    override = os.environ.get("P2P_MARKET_DATA")
    if override:
        return Path(override)
    return Path(__file__).parent / "data"


def ieee13_instance() -> MarketInstance:
    """The bundled 13-node test system used by all reference experiments."""
    return load_instance(data_dir() / "ieee13.json")
