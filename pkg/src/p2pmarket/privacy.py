"""Gaussian report mechanism: noise, privacy loss and privacy pricing.

A report is drawn as y_hat_n plus zero-mean Gaussian noise with variance
V_n. The privacy loss of an observer who must tell the reported signal from
the truthful one is itself Gaussian over the noise draw; its mean eta and
variance 2*eta are the KL statistics used for budgeting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import Sensitivity
from .errors import DegenerateMechanism, NegativeVariance

# Variances between 0 and this floor are clamped up before dividing, so a
# deviation whose optimal variance underflows does not blow up the loss.
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class PrivacyLossStats:
    """Moments of the privacy loss random variable: mean eta, variance 2*eta."""

    eta: float

    @property
    def mean(self) -> float:
        return self.eta

    @property
    def variance(self) -> float:
        return 2.0 * self.eta


def sample_report(y_hat, variance, rng: np.random.Generator):
    """Draw noisy reports y_hat + N(0, variance), elementwise.

    Zero variance reproduces y_hat exactly; negative variance raises.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0):
        raise NegativeVariance(f"variance must be nonnegative, got {variance}")
    return y_hat + rng.normal(0.0, np.sqrt(variance))


def privacy_loss_stats(y: float, y_hat: float, variance: float,
                       floor: float = VARIANCE_FLOOR) -> PrivacyLossStats:
    """KL statistics of reporting y_hat with noise variance instead of y.

    eta = (y - y_hat)^2 / (2 * variance). Zero variance is legal only when
    the report center is truthful (zero loss); otherwise the mechanism is
    deterministic and fully revealing, which raises DegenerateMechanism.
    """
    if variance < 0:
        raise NegativeVariance(f"variance must be nonnegative, got {variance}")
    dev = y_hat - y
    if variance == 0.0:
        if dev == 0.0:
            return PrivacyLossStats(eta=0.0)
        raise DegenerateMechanism(
            f"zero variance with report offset {dev} reveals the deviation")
    return PrivacyLossStats(eta=dev * dev / (2.0 * max(variance, floor)))


@dataclass(frozen=True)
class BudgetCheck:
    satisfied: bool
    slack: float


def kl_budget_satisfied(y: float, y_hat: float, variance: float,
                        a_budget: float) -> BudgetCheck:
    """Check (y_hat - y)^2 <= 2 * variance * a_budget; slack is the margin."""
    if variance < 0:
        raise NegativeVariance(f"variance must be nonnegative, got {variance}")
    dev = y_hat - y
    slack = 2.0 * variance * a_budget - dev * dev
    return BudgetCheck(satisfied=slack >= 0.0, slack=slack)


def optimal_variance(y, y_hat, a_budget):
    """Smallest variance meeting the budget: (y_hat - y)^2 / (2 * a_budget).

    Accepts scalars or arrays; a_budget must be positive.
    """
    if np.any(np.asarray(a_budget) <= 0):
        raise ValueError("a_budget must be positive")
    dev = np.asarray(y_hat, dtype=float) - np.asarray(y, dtype=float)
    out = dev * dev / (2.0 * np.asarray(a_budget, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PrivacyPrice:
    """Shadow price of agent n's deviation: beta_sum = B_n |y_hat - y| / (2 B^2).

    This is the sum of the two privacy budget multipliers at an optimum with
    an active budget. Inverting the budget at equality recovers the noise
    variance the price corresponds to.
    """

    beta_sum: float
    b_n: float
    b_total: float

    def consistent_variance(self, a_budget: float) -> float:
        """Variance implied by the price: 2 B^4 beta_sum^2 / (a_budget B_n^2)."""
        if a_budget <= 0:
            raise ValueError("a_budget must be positive")
        return 2.0 * self.b_total**4 * self.beta_sum**2 / (a_budget * self.b_n**2)


def privacy_price(sens: Sensitivity, n: int, y: float, y_hat: float) -> PrivacyPrice:
    b_n = sens.per_agent[n]
    beta = b_n * abs(y_hat - y) / (2.0 * sens.total**2)
    return PrivacyPrice(beta_sum=float(beta), b_n=float(b_n), b_total=sens.total)


def privacy_prices(sens: Sensitivity, y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """Vector of beta_sum values for all agents."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    return sens.per_agent * np.abs(y_hat - y) / (2.0 * sens.total**2)
