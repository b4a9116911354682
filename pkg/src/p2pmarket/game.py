"""Expected costs, game operators and equilibrium diagnostics.

All quantities here are expectations over the Gaussian report noise, taken
in closed form: the noise enters an agent's cost only through the clearing
price, quadratically, so only the sum of variances survives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import saturation_terms, sensitivity
from .model import MarketInstance

COST_GRADIENT = "cost_gradient"
VARIANCE_SCALED = "variance_scaled"

GRADIENT_CONSISTENT = "gradient_consistent"
PER_AGENT_SUM = "per_agent_sum"


def mo_penalty(instance: MarketInstance, y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """Per-agent penalty (p0/N) * sum(y - y_hat) charged by the operator.

    The same value is charged to every agent; it is negative (a
    reimbursement) when the aggregate report overshoots the truth.
    """
    gap = math.fsum(np.asarray(y, dtype=float) - np.asarray(y_hat, dtype=float))
    value = instance.p0 / instance.n_agents * gap
    return np.full(instance.n_agents, value)


def _aggregate_terms(instance: MarketInstance, y_hat, variance):
    sens = sensitivity(instance)
    agg = math.fsum(y_hat) + math.fsum(instance.b_vec / instance.a_vec)
    sum_v = math.fsum(variance)
    return sens, agg, sum_v


def _expected_trade_terms(instance: MarketInstance, sens, agg) -> np.ndarray:
    """Expected trading cost of each agent at mean clearing price agg/B."""
    lam_bar = agg / sens.total
    y = instance.truthful_reports()
    q_bar = y + instance.b_vec / instance.a_vec - sens.per_agent * lam_bar
    prices = instance.topology.prices
    if prices.homogeneous:
        return prices.c * q_bar
    sat, fix = saturation_terms(instance)
    n = instance.n_agents
    root_price = np.array([prices.price(0, m) for m in range(n)])
    out = np.empty(n)
    out[1:] = root_price[1:] * (q_bar[1:] - sat[1:]) + fix[1:]
    out[0] = float(np.dot(root_price[1:], sat[1:] - q_bar[1:]))
    return out


def expected_costs(instance: MarketInstance, y_hat: np.ndarray, variance: np.ndarray) -> np.ndarray:
    """Closed-form expected cost of every agent at the given profile."""
    y_hat = np.asarray(y_hat, dtype=float)
    variance = np.asarray(variance, dtype=float)
    sens, agg, sum_v = _aggregate_terms(instance, y_hat, variance)
    y = instance.truthful_reports()
    price_term = sens.per_agent / (2.0 * sens.total**2) * (agg**2 + sum_v)
    trade = _expected_trade_terms(instance, sens, agg)
    penalty = mo_penalty(instance, y, y_hat)
    fixed = (instance.d_fixed_vec - instance.b_tilde_vec
             - instance.b_vec**2 / (2.0 * instance.a_vec))
    return price_term + trade + penalty + fixed


def expected_cost(instance: MarketInstance, n: int, y_hat: np.ndarray, variance: np.ndarray) -> float:
    return float(expected_costs(instance, y_hat, variance)[n])


@dataclass(frozen=True)
class GameOperatorPoint:
    """Stacked partial derivatives (per agent, own report and own variance)."""

    grad_y: np.ndarray
    grad_v: np.ndarray
    variant: str


def _price_weights(instance: MarketInstance, sens) -> np.ndarray:
    """The c_n B_n / B term of the report gradient, per price mode.

    Under heterogeneous prices the root pays the others' root prices, so its
    term enters with opposite sign and aggregates over all partners.
    """
    prices = instance.topology.prices
    b = sens.per_agent
    bt = sens.total
    if prices.homogeneous:
        return prices.c * b / bt
    n = instance.n_agents
    root_price = np.array([prices.price(0, m) for m in range(n)])
    out = root_price * b / bt
    out[0] = -float(np.dot(root_price[1:], b[1:])) / bt
    return out


def pseudo_gradient(instance: MarketInstance, y_hat: np.ndarray, variance: np.ndarray,
                    variant: str = COST_GRADIENT) -> GameOperatorPoint:
    """Stacked gradient of each agent's expected cost in its own variables.

    variant selects the variance component: cost_gradient is the exact
    partial B_n/(2B^2); variance_scaled multiplies the price sensitivity by
    the variance itself (B_n V_n / B^2), which is the constant-Jacobian
    operator analyzed by monotonicity_certificate. Both share the report
    component.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    variance = np.asarray(variance, dtype=float)
    sens, agg, _ = _aggregate_terms(instance, y_hat, variance)
    b, bt = sens.per_agent, sens.total
    grad_y = b / bt**2 * agg - _price_weights(instance, sens) - instance.p0 / instance.n_agents
    if variant == COST_GRADIENT:
        grad_v = b / (2.0 * bt**2) * np.ones_like(variance)
    elif variant == VARIANCE_SCALED:
        grad_v = b / bt**2 * variance
    else:
        raise ValueError(f"unknown operator variant {variant!r}")
    return GameOperatorPoint(grad_y=grad_y, grad_v=grad_v, variant=variant)


@dataclass
class KktDuals:
    """Multipliers for the tightened bounds, the deviation radius and the
    privacy budget, split into lower/upper parts (all nonnegative)."""

    mu_lo: np.ndarray
    mu_hi: np.ndarray
    nu_lo: np.ndarray
    nu_hi: np.ndarray
    gamma_lo: np.ndarray
    gamma_hi: np.ndarray
    beta_lo: np.ndarray
    beta_hi: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "KktDuals":
        return cls(*(np.zeros(n) for _ in range(8)))


def kkt_residual(instance: MarketInstance, y_hat: np.ndarray, duals: KktDuals,
                 variance: np.ndarray | None = None) -> np.ndarray:
    """Stationarity residual of each agent's report at the given duals.

    The generation bound duals enter through 1/(a_n B), the demand bound
    duals through 1/(2 a_tilde_n B) with flipped orientation, and the
    deviation radius and privacy budget duals enter with unit weight.
    Zero duals reduce this to the report component of the pseudo-gradient.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    if variance is None:
        variance = np.zeros_like(y_hat)
    sens = sensitivity(instance)
    op = pseudo_gradient(instance, y_hat, variance)
    res = op.grad_y.copy()
    res += (duals.mu_hi - duals.mu_lo) / (instance.a_vec * sens.total)
    res += (duals.nu_lo - duals.nu_hi) / (2.0 * instance.a_tilde_vec * sens.total)
    res += duals.gamma_hi - duals.gamma_lo
    res += duals.beta_hi - duals.beta_lo
    return res


def duals_from_privacy_prices(instance: MarketInstance, y_hat: np.ndarray,
                              variance: np.ndarray | None = None) -> KktDuals:
    """Duals with only the privacy budget multipliers set.

    beta_hi + beta_lo equals the privacy price B_n |y_hat_n - y_n| / (2 B^2);
    the upper part is active when the unconstrained gradient pushes the
    report above the truth (negative report gradient), the lower part
    otherwise.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    if variance is None:
        variance = np.zeros_like(y_hat)
    sens = sensitivity(instance)
    y = instance.truthful_reports()
    beta = sens.per_agent * np.abs(y_hat - y) / (2.0 * sens.total**2)
    grad = pseudo_gradient(instance, y_hat, variance).grad_y
    duals = KktDuals.zeros(instance.n_agents)
    up = grad < 0
    duals.beta_hi[up] = beta[up]
    duals.beta_lo[~up] = beta[~up]
    return duals


@dataclass
class MonotonicityReport:
    """Spectral and sampled positivity diagnostics of the variance_scaled
    operator's constant Jacobian.

    min_eigenvalue is the smallest eigenvalue of the symmetrized Jacobian,
    which is negative whenever the B_n differ; operator_spectrum_min is the
    smallest eigenvalue of the Jacobian itself, nonnegative always;
    min_quadratic_form is sampled over the admissible cone.
    """

    min_eigenvalue: float
    operator_spectrum_min: float
    min_quadratic_form: float
    bound_max_excess: float
    n_samples: int


def _operator_jacobian(instance: MarketInstance) -> np.ndarray:
    """Constant Jacobian of the variance_scaled operator in (y_hat, V).

    Row n of the report block is B_n/B^2 in every column because each
    agent's gradient sees the reports only through their sum; the variance
    block is diagonal with the same entries.
    """
    sens = sensitivity(instance)
    n = instance.n_agents
    w = sens.per_agent / sens.total**2
    jac = np.zeros((2 * n, 2 * n))
    jac[:n, :n] = np.tile(w[:, None], (1, n))
    jac[n:, n:] = np.diag(w)
    return jac


def monotonicity_certificate(instance: MarketInstance, n_samples: int = 10_000,
                             rng: np.random.Generator | None = None) -> MonotonicityReport:
    """Positivity certificate for the variance_scaled operator Jacobian J.

    Reports the minimum eigenvalue of (J + J')/2, the minimum eigenvalue of
    J itself (real and nonnegative for this structure), and the minimum of
    the quadratic form z'(J + J')z/2 over random unit directions drawn from
    the admissible cone: nonnegative variance directions and sign-aligned
    report directions. On that cone the closed-form lower bound
    (sum sqrt(B_i) z_y_i)^2/B^2 + sum B_i z_v_i^2 / B^2 holds because every
    pairwise product in the cross term is nonnegative; bound_max_excess
    records the largest observed bound minus quadratic form (at most
    rounding noise). Outside the cone the symmetrized matrix is indefinite
    whenever the B_n differ, which min_eigenvalue reports honestly.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    jac = _operator_jacobian(instance)
    sym = 0.5 * (jac + jac.T)
    sym_eigs = np.linalg.eigvalsh(sym)
    op_eigs = np.linalg.eigvals(jac)
    n = instance.n_agents
    sens = sensitivity(instance)
    w = sens.per_agent / sens.total**2

    z = np.abs(rng.standard_normal((n_samples, 2 * n)))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    zy, zv = z[:, :n], z[:, n:]
    quad = (zy @ w) * zy.sum(axis=1) + zv**2 @ w
    bound = (zy @ np.sqrt(sens.per_agent))**2 / sens.total**2 + zv**2 @ w
    return MonotonicityReport(
        min_eigenvalue=float(sym_eigs[0]),
        operator_spectrum_min=float(np.min(op_eigs.real)),
        min_quadratic_form=float(np.min(quad)),
        bound_max_excess=float(np.max(bound - quad)),
        n_samples=n_samples,
    )


def potential_value(instance: MarketInstance, y_hat: np.ndarray, variance: np.ndarray,
                    variant: str = GRADIENT_CONSISTENT) -> float:
    """Scalar potential of the report game with weight H = B_0/B.

    gradient_consistent is chosen so that its partials match the
    cost_gradient operator whenever all B_n equal B_0; per_agent_sum keeps
    the potential as a sum of per-agent contributions with a half-weighted
    self term. The two differ by a constant and by documented coefficients
    on the price and variance terms.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    variance = np.asarray(variance, dtype=float)
    sens = sensitivity(instance)
    h = sens.per_agent[0] / sens.total
    s = math.fsum(y_hat)
    sba = math.fsum(instance.b_vec / instance.a_vec)
    sum_v = math.fsum(variance)
    p0_over_n = instance.p0 / instance.n_agents
    c = instance.topology.prices.c
    if c is None:
        raise ValueError("potential_value requires homogeneous prices")
    if variant == GRADIENT_CONSISTENT:
        return (h / (2.0 * sens.total) * (s + sba)**2
                - (c * h + p0_over_n) * s
                + h / (2.0 * sens.total) * sum_v)
    if variant == PER_AGENT_SUM:
        return float(math.fsum(
            h * y_hat / sens.total * (0.5 * s + sba)
            - p0_over_n * y_hat
            - c * h * y_hat / sens.total
            + h / sens.total * variance))
    raise ValueError(f"unknown potential variant {variant!r}")


def utility_gap(instance: MarketInstance, n: int, y_hat: np.ndarray, variance: np.ndarray) -> float:
    """Truthful expected cost minus expected cost at the profile, agent n.

    Positive values mean agent n is better off under the profile than under
    truthful zero-noise reporting.
    """
    return float(utility_gaps(instance, y_hat, variance)[n])


def utility_gaps(instance: MarketInstance, y_hat: np.ndarray, variance: np.ndarray) -> np.ndarray:
    y = instance.truthful_reports()
    truthful = expected_costs(instance, y, np.zeros_like(y))
    return truthful - expected_costs(instance, y_hat, variance)


def social_cost(instance: MarketInstance, y_hat: np.ndarray, variance: np.ndarray) -> float:
    """Sum of all agents' expected costs."""
    return math.fsum(expected_costs(instance, y_hat, variance))
