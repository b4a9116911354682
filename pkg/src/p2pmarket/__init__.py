"""Privacy-aware peer-to-peer electricity market game toolkit.

Agents trade energy bilaterally, report noisy versions of their net
positions to protect privacy, and the market clears at a closed-form
uniform price. The package provides the market closed forms, the privacy
accounting, the game-theoretic diagnostics, iterative equilibrium solvers
and a sweep/CLI layer.
"""

from .errors import (DegenerateMechanism, Diverged, MarketError,
                     NegativeVariance, ParseError, SymmetricPricePair,
                     ValidationError, Violation)
from .model import (AgentParams, MarketInstance, NetworkTopology,
                    ReportProfile, TradePrices, collect_violations, data_dir,
                    ieee13_instance, load_instance, serialize_instance,
                    truthful_profile, validate_instance)
from .equilibrium import (EquilibriumOutcome, Sensitivity, clearing_price,
                          equilibrium_decisions, market_outcome,
                          saturation_sign, saturation_terms, sensitivity,
                          trade_cost_heterogeneous, trade_cost_homogeneous,
                          trade_costs)
from .privacy import (VARIANCE_FLOOR, BudgetCheck, PrivacyLossStats,
                      PrivacyPrice, kl_budget_satisfied, optimal_variance,
                      privacy_loss_stats, privacy_price, privacy_prices,
                      sample_report)
from .game import (COST_GRADIENT, GRADIENT_CONSISTENT, PER_AGENT_SUM,
                   VARIANCE_SCALED, GameOperatorPoint, KktDuals,
                   MonotonicityReport, duals_from_privacy_prices,
                   expected_cost, expected_costs, kkt_residual, mo_penalty,
                   monotonicity_certificate, potential_value,
                   pseudo_gradient, social_cost, utility_gap, utility_gaps)
from .solver import (DETERMINISTIC, STOCHASTIC, PenaltyGradient,
                     SolverOptions, SolverResult, constraint_violation,
                     implied_duals, penalty_gradient, solve_coordinated,
                     solve_ve_datp, truthful_baseline)
from .experiments import (COORDINATED, DEFAULT_A_GRID, DEFAULT_ALPHA_GRID,
                          PARAM_A_BUDGET, PARAM_ALPHA, PEER_TO_PEER,
                          TRUTHFUL, SweepResult, SweepRow, SweepSpec,
                          aggregate_gaps, emit_csv, heterogeneous_price_study,
                          heterogeneous_price_variant, privacy_price_map,
                          run_sweep, social_cost_comparison, with_overrides)

__version__ = "0.1.0"

__all__ = [
    "AgentParams", "BudgetCheck", "COORDINATED", "COST_GRADIENT",
    "DEFAULT_A_GRID", "DEFAULT_ALPHA_GRID", "DETERMINISTIC",
    "DegenerateMechanism", "Diverged", "EquilibriumOutcome",
    "GRADIENT_CONSISTENT", "GameOperatorPoint", "KktDuals", "MarketError",
    "MarketInstance", "MonotonicityReport", "NegativeVariance",
    "NetworkTopology", "PARAM_ALPHA", "PARAM_A_BUDGET", "PEER_TO_PEER",
    "PER_AGENT_SUM", "ParseError", "PenaltyGradient", "PrivacyLossStats",
    "PrivacyPrice", "ReportProfile", "Sensitivity", "SolverOptions",
    "SolverResult", "STOCHASTIC", "SweepResult", "SweepRow", "SweepSpec",
    "SymmetricPricePair", "TRUTHFUL", "TradePrices", "VARIANCE_FLOOR",
    "VARIANCE_SCALED", "ValidationError", "Violation", "aggregate_gaps",
    "clearing_price", "collect_violations", "constraint_violation", "data_dir",
    "duals_from_privacy_prices", "emit_csv", "equilibrium_decisions",
    "expected_cost", "expected_costs", "heterogeneous_price_study",
    "heterogeneous_price_variant", "ieee13_instance", "implied_duals",
    "kkt_residual", "kl_budget_satisfied", "load_instance", "market_outcome",
    "mo_penalty", "monotonicity_certificate", "optimal_variance",
    "penalty_gradient", "potential_value", "privacy_loss_stats",
    "privacy_price", "privacy_price_map", "privacy_prices",
    "pseudo_gradient", "run_sweep", "sample_report", "saturation_sign",
    "saturation_terms", "sensitivity", "serialize_instance", "social_cost",
    "social_cost_comparison", "solve_coordinated", "solve_ve_datp",
    "trade_cost_heterogeneous", "trade_cost_homogeneous", "trade_costs",
    "truthful_baseline", "truthful_profile", "utility_gap", "utility_gaps",
    "validate_instance", "with_overrides",
]
