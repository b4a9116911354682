"""Penalized gradient dynamics for the report game, plus baselines.

solve_ve_datp iterates the two-step scheme: an adapt step on each agent's
own expected-cost gradient, then a penalty step on that agent's constraint
violations. All agents update synchronously. solve_coordinated minimizes
the social cost over the fixed-aggregate hyperplane, and truthful_baseline
returns the no-communication profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged
from .game import KktDuals, kkt_residual
from .model import MarketInstance, ReportProfile
from .equilibrium import sensitivity

DETERMINISTIC = "deterministic"
STOCHASTIC = "stochastic"


@dataclass
class SolverOptions:
    """Tuning knobs for the iterative solvers.

    The penalty step is locally expansive whenever step_mu * penalty_r *
    4 * alpha^2 exceeds 2, which makes the iteration orbit the deviation
    walls instead of settling on them. settle_fraction and settle_step
    therefore switch to a small stabilizing step late in the run: the
    iterate then contracts onto the penalized stationary point, where the
    penalty gradients reproduce the KKT multipliers. settle_step defaults
    to a value just below the stability threshold of the stiffest penalty.
    """

    step_mu: float = 0.003
    penalty_r: float = 700.0
    max_iters: int = 1_000_000
    tol_step: float = 1e-6
    mode: str = DETERMINISTIC
    eliminate_variance: bool = True
    seed: int | None = None
    settle_fraction: float = 0.75
    settle_step: float | None = None
    divergence_guard: float = 1e9
    keep_iterates: bool = False

    def __post_init__(self):
        if self.step_mu <= 0:
            raise ValueError("step_mu must be positive")
        if self.penalty_r < 0:
            raise ValueError("penalty_r must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol_step <= 0:
            raise ValueError("tol_step must be positive")
        if self.mode not in (DETERMINISTIC, STOCHASTIC):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 <= self.settle_fraction <= 1.0:
            raise ValueError("settle_fraction must lie in [0, 1]")


@dataclass
class SolverResult:
    y_hat: np.ndarray
    variance: np.ndarray
    iterations: int
    converged: bool
    trace: np.ndarray
    kkt_residual_norm: float
    # Penalty evaluation point of the last iteration; the implied KKT
    # multipliers live at psi, not at y_hat.
    psi: np.ndarray | None = None
    iterates: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class PenaltyGradient:
    """Own-variable penalty gradients and the total penalty value."""

    grad_y: np.ndarray
    grad_v: np.ndarray
    value: float


class _Workspace:
    """Per-solve precomputed constants shared by the hot loop and the
    public penalty_gradient, so both routes evaluate the same expressions."""

    def __init__(self, instance: MarketInstance):
        self.instance = instance
        sens = sensitivity(instance)
        self.b_sens = sens.per_agent
        self.b_total = sens.total
        self.w = self.b_sens / self.b_total**2
        self.sba = float(np.sum(instance.b_vec / instance.a_vec))
        self.y = instance.truthful_reports()
        self.alpha2 = instance.alpha_vec**2
        self.a_budget = instance.a_budget_vec
        self.two_a_budget = 2.0 * self.a_budget
        self.inv_two_a_budget = 1.0 / self.two_a_budget
        # Tightened decision bounds (7b)-(7c).
        self.g_lo = instance.g_min_vec + instance.omega_g_vec
        self.g_hi = instance.g_max_vec - instance.omega_g_vec
        self.d_lo = instance.d_min_vec + instance.omega_d_vec
        self.d_hi = instance.d_max_vec - instance.omega_d_vec
        self.dg_dy = 1.0 / (instance.a_vec * self.b_total)
        self.dd_dy = -1.0 / (2.0 * instance.a_tilde_vec * self.b_total)
        self.p0_over_n = instance.p0 / instance.n_agents
        prices = instance.topology.prices
        if prices.homogeneous:
            self.price_weight = prices.c * self.b_sens / self.b_total
        else:
            n = instance.n_agents
            root_price = np.array([prices.price(0, m) for m in range(n)])
            pw = root_price * self.b_sens / self.b_total
            pw[0] = -float(np.dot(root_price[1:], self.b_sens[1:])) / self.b_total
            self.price_weight = pw
        self.pw_p0 = self.price_weight + self.p0_over_n
        # Price window on which every generation and demand bound is slack.
        # The cleared quantities are monotone in the scalar price, so a
        # single interval check replaces the four bound families; inside it
        # only the deviation and budget penalties can be active.
        half = 0.5 / instance.a_tilde_vec
        self.lam_lo = max(
            float(np.max(instance.a_vec * self.g_lo + instance.b_vec)),
            float(np.max((instance.d_star_vec - self.d_hi) / half)),
        )
        self.lam_hi = min(
            float(np.min(instance.a_vec * self.g_hi + instance.b_vec)),
            float(np.min((instance.d_star_vec - self.d_lo) / half)),
        )

    def cost_grad_y(self, agg: float) -> np.ndarray:
        return self.w * agg - self.price_weight - self.p0_over_n

    def penalty_terms(self, y_hat: np.ndarray, variance: np.ndarray,
                      include_budget: bool):
        """Violations g+ of (7b)-(7e) at the profile and the own-variable
        penalty gradients. The budget family (7e) is skipped when the
        variance is eliminated, since it is then identically tight."""
        inst = self.instance
        lam = (np.sum(y_hat) + self.sba) / self.b_total
        e_gen = (lam - inst.b_vec) / inst.a_vec
        e_dem = inst.d_star_vec - lam / (2.0 * inst.a_tilde_vec)
        dev = y_hat - self.y
        g_mu_lo = np.maximum(self.g_lo - e_gen, 0.0)
        g_mu_hi = np.maximum(e_gen - self.g_hi, 0.0)
        g_nu_lo = np.maximum(self.d_lo - e_dem, 0.0)
        g_nu_hi = np.maximum(e_dem - self.d_hi, 0.0)
        g_gamma = np.maximum(dev**2 - self.alpha2, 0.0)
        grad_y = ((g_mu_hi - g_mu_lo) * self.dg_dy
                  + (g_nu_hi - g_nu_lo) * self.dd_dy
                  + g_gamma * 2.0 * dev)
        grad_v = np.zeros_like(variance)
        if include_budget:
            g_beta = np.maximum(dev**2 - 2.0 * variance * self.a_budget, 0.0)
            grad_y += g_beta * 2.0 * dev
            grad_v += g_beta * (-2.0 * self.a_budget)
        else:
            g_beta = np.zeros_like(dev)
        value = 0.5 * float(np.sum(g_mu_lo**2) + np.sum(g_mu_hi**2)
                            + np.sum(g_nu_lo**2) + np.sum(g_nu_hi**2)
                            + np.sum(g_gamma**2) + np.sum(g_beta**2))
        return grad_y, grad_v, value, (g_mu_lo, g_mu_hi, g_nu_lo, g_nu_hi,
                                       g_gamma, g_beta, dev)


def penalty_gradient(instance: MarketInstance, y_hat: np.ndarray,
                     v: np.ndarray) -> PenaltyGradient:
    """Gradient of each agent's constraint penalty in its own variables.

    The penalty is the sum over the tightened generation and demand bounds,
    the deviation radius and the privacy budget of half the squared
    violation. Bound constraints reach the report through the clearing
    price, whose derivative in any single report is 1/B.
    """
    ws = _Workspace(instance)
    y_hat = np.asarray(y_hat, dtype=float)
    v = np.asarray(v, dtype=float)
    grad_y, grad_v, value, _ = ws.penalty_terms(y_hat, v, include_budget=True)
    return PenaltyGradient(grad_y=grad_y, grad_v=grad_v, value=value)


def implied_duals(instance: MarketInstance, psi: np.ndarray, variance: np.ndarray,
                  penalty_r: float, eliminated: bool = True) -> KktDuals:
    """KKT multiplier estimates R * g+ read off the penalty state at psi.

    The quadratic deviation and budget constraints are converted to the
    two-sided linear form the residual expects by weighting with 2 * dev,
    signed by the deviation direction.
    """
    ws = _Workspace(instance)
    psi = np.asarray(psi, dtype=float)
    variance = np.asarray(variance, dtype=float)
    _, _, _, parts = ws.penalty_terms(psi, variance, include_budget=not eliminated)
    g_mu_lo, g_mu_hi, g_nu_lo, g_nu_hi, g_gamma, g_beta, dev = parts
    duals = KktDuals.zeros(instance.n_agents)
    duals.mu_lo = penalty_r * g_mu_lo
    duals.mu_hi = penalty_r * g_mu_hi
    duals.nu_lo = penalty_r * g_nu_lo
    duals.nu_hi = penalty_r * g_nu_hi
    gamma = penalty_r * g_gamma * 2.0 * dev
    duals.gamma_hi = np.maximum(gamma, 0.0)
    duals.gamma_lo = np.maximum(-gamma, 0.0)
    beta = penalty_r * g_beta * 2.0 * dev
    duals.beta_hi = np.maximum(beta, 0.0)
    duals.beta_lo = np.maximum(-beta, 0.0)
    return duals


def constraint_violation(instance: MarketInstance, y_hat: np.ndarray,
                         variance: np.ndarray) -> float:
    """Largest violation across every constraint family at the profile.

    Covers the tightened generation and demand bounds, the deviation
    radius and the privacy budget; zero means the profile is feasible.
    """
    ws = _Workspace(instance)
    y_hat = np.asarray(y_hat, dtype=float)
    variance = np.asarray(variance, dtype=float)
    _, _, _, parts = ws.penalty_terms(y_hat, variance, include_budget=True)
    return max(float(np.max(g)) for g in parts[:6])


def _auto_settle_step(opts: SolverOptions, instance: MarketInstance) -> float:
    if opts.settle_step is not None:
        return opts.settle_step
    if opts.penalty_r == 0.0:
        return opts.step_mu
    stiffness = float(np.max(4.0 * instance.alpha_vec**2))
    if not opts.eliminate_variance:
        stiffness = max(stiffness, float(np.max(4.0 * instance.a_budget_vec**2)))
    stiffness = max(stiffness, 1e-9)
    return min(opts.step_mu, 0.45 / (opts.penalty_r * stiffness))


class _Trace:
    def __init__(self, capacity_hint: int):
        self._buf = np.empty((min(capacity_hint, 2_000_000), 2))
        self._n = 0

    def append(self, step: float, penalty: float):
        if self._n == len(self._buf):
            self._buf = np.concatenate([self._buf, np.empty_like(self._buf)])
        self._buf[self._n, 0] = step
        self._buf[self._n, 1] = penalty
        self._n += 1

    def array(self) -> np.ndarray:
        return self._buf[:self._n].copy()


def truthful_baseline(instance: MarketInstance) -> ReportProfile:
    """No-communication profile: reports equal the truth, zero noise."""
    y = instance.truthful_reports()
    return ReportProfile(y_hat=y, variance=np.zeros_like(y))


def solve_ve_datp(instance: MarketInstance, opts: SolverOptions | None = None) -> SolverResult:
    """Two-step penalized gradient iteration for the report game.

    Each iteration first takes the adapt step psi = y_hat - mu * grad of
    every agent's own expected cost, then the penalty step y_hat = psi -
    mu * R * penalty_gradient(psi). Stochastic mode draws one shared noise
    vector per iteration and evaluates each agent's gradient at the others'
    noisy reports. With eliminate_variance the noise variance is pinned to
    its budget-optimal closed form after every iteration and the budget
    penalty is skipped as identically tight; otherwise the variance is a
    gradient-updated variable clamped to stay nonnegative.

    Stops when the report step sup-norm falls below tol_step. The reported
    kkt_residual_norm is evaluated with multipliers implied by the final
    penalty state; it settles near tol_step / settle_step, so tighten
    tol_step when a small residual certificate is needed.
    """
    if opts is None:
        opts = SolverOptions()
    ws = _Workspace(instance)
    rng = np.random.default_rng(opts.seed)
    n = instance.n_agents
    y_hat = ws.y.copy()
    variance = np.zeros(n)
    trace = _Trace(opts.max_iters)
    iterates = [] if opts.keep_iterates else None
    settle_at = int(opts.settle_fraction * opts.max_iters)
    settle_step = _auto_settle_step(opts, instance)
    stochastic = opts.mode == STOCHASTIC
    include_budget = not opts.eliminate_variance
    converged = False
    iterations = 0
    # Reused buffers; at a dozen agents the loop cost is allocation
    # overhead, not arithmetic, so every op below writes in place.
    grad = np.empty(n)
    psi = np.empty(n)
    dev = np.empty(n)
    dev2 = np.empty(n)
    g_gamma = np.empty(n)
    g_beta = np.empty(n)
    scratch = np.empty(n)
    new_y = np.empty(n)
    eps = np.empty(n)
    mu = opts.step_mu if settle_at > 0 else settle_step
    mu_r = mu * opts.penalty_r
    for k in range(opts.max_iters):
        if k == settle_at:
            mu = settle_step
            mu_r = mu * opts.penalty_r
        agg = float(y_hat.sum()) + ws.sba
        if stochastic:
            rng.standard_normal(out=eps)
            np.sqrt(variance, out=scratch)
            eps *= scratch
            np.subtract(agg + float(eps.sum()), eps, out=grad)
            grad *= ws.w
            grad -= ws.pw_p0
        else:
            np.multiply(ws.w, agg, out=grad)
            grad -= ws.pw_p0
        np.multiply(grad, -mu, out=psi)
        psi += y_hat
        lam = (float(psi.sum()) + ws.sba) / ws.b_total
        if ws.lam_lo <= lam <= ws.lam_hi:
            np.subtract(psi, ws.y, out=dev)
            np.multiply(dev, dev, out=dev2)
            np.subtract(dev2, ws.alpha2, out=g_gamma)
            np.maximum(g_gamma, 0.0, out=g_gamma)
            if include_budget:
                np.multiply(ws.two_a_budget, variance, out=g_beta)
                np.subtract(dev2, g_beta, out=g_beta)
                np.maximum(g_beta, 0.0, out=g_beta)
                pen_value = 0.5 * (float(g_gamma @ g_gamma)
                                   + float(g_beta @ g_beta))
                np.add(g_gamma, g_beta, out=scratch)
                scratch *= dev
            else:
                pen_value = 0.5 * float(g_gamma @ g_gamma)
                np.multiply(g_gamma, dev, out=scratch)
            np.multiply(scratch, -2.0 * mu_r, out=new_y)
            new_y += psi
            if include_budget:
                # pen_v = -2A * g_beta, so the penalty pushes V upward.
                variance -= (0.5 * mu) * ws.w
                g_beta *= mu_r * ws.two_a_budget
                variance += g_beta
                np.maximum(variance, 0.0, out=variance)
        else:
            pen_y, pen_v, pen_value, _ = ws.penalty_terms(
                psi, variance, include_budget=include_budget)
            np.multiply(pen_y, -mu_r, out=new_y)
            new_y += psi
            if include_budget:
                variance -= (0.5 * mu) * ws.w
                variance -= mu_r * pen_v
                np.maximum(variance, 0.0, out=variance)
        np.subtract(new_y, y_hat, out=scratch)
        np.abs(scratch, out=scratch)
        step = float(scratch.max())
        y_hat, new_y = new_y, y_hat
        if stochastic and opts.eliminate_variance:
            np.subtract(y_hat, ws.y, out=dev)
            np.multiply(dev, dev, out=variance)
            variance *= ws.inv_two_a_budget
        iterations = k + 1
        trace.append(step, pen_value)
        if iterates is not None:
            iterates.append(y_hat.copy())
        if not math.isfinite(step) or ((k & 1023) == 0
                                       and float(np.abs(y_hat).max()) > opts.divergence_guard):
            raise Diverged(f"iterate norm exceeded {opts.divergence_guard:g} "
                           f"at iteration {iterations}")
        if step < opts.tol_step:
            converged = True
            break
    if opts.eliminate_variance:
        np.subtract(y_hat, ws.y, out=dev)
        np.multiply(dev, dev, out=variance)
        variance *= ws.inv_two_a_budget
    duals = implied_duals(instance, psi, variance, opts.penalty_r,
                          eliminated=opts.eliminate_variance)
    residual = kkt_residual(instance, y_hat, duals, variance)
    return SolverResult(
        y_hat=y_hat,
        variance=variance,
        iterations=iterations,
        converged=converged,
        trace=trace.array(),
        kkt_residual_norm=float(np.max(np.abs(residual))),
        psi=psi.copy(),
        iterates=np.array(iterates) if iterates is not None else None,
    )


def _exact_sum_repair(y_hat: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Adjust y_hat so math.fsum(y_hat) equals math.fsum(target) exactly.

    The clearing price is a function of the compensated report sum, so
    bitwise price equality needs bitwise sum equality, not closeness.
    """
    out = y_hat.copy()
    goal = math.fsum(target)
    for idx in range(len(out)):
        for _ in range(60):
            delta = goal - math.fsum(out)
            if delta == 0.0:
                return out
            out[idx] += delta
        # Rounding kept this coordinate from absorbing the residue; nudge
        # by ulps before moving on.
        for _ in range(60):
            current = math.fsum(out)
            if current == goal:
                return out
            out[idx] = math.nextafter(out[idx], math.inf if current < goal else -math.inf)
    return out


def solve_coordinated(instance: MarketInstance, opts: SolverOptions | None = None) -> SolverResult:
    """Social-cost minimizer over profiles with the truthful report sum.

    On the fixed-sum hyperplane the social cost depends on the reports only
    through the noise variances, so the objective reduces to the sum of
    budget-optimal variances. The cleared price is pinned to its truthful
    value on that hyperplane, which makes the operating-window hinges
    constants there; only the deviation-radius hinge can steer the
    iteration, and it runs at a separately capped rate so the curvature
    preconditioner cannot make it expansive. The deviation pull itself
    contracts by (1 - step_mu) per iteration. The result's report sum is
    repaired to match the truthful sum bit-exactly, which makes the
    cleared price identical to the truthful one.
    """
    if opts is None:
        opts = SolverOptions()
    ws = _Workspace(instance)
    n = instance.n_agents
    precond = 2.0 * ws.a_budget * ws.b_total
    stiff = float(np.max(precond * 12.0 * ws.alpha2, initial=0.0))
    mu_pen = min(opts.step_mu, 0.9 / (1.0 + opts.penalty_r * stiff))
    step_cap = 0.25 * (1.0 + instance.alpha_vec)
    # Deterministic in-plane start: alternating half-radius deviations.
    dev = np.where(np.arange(n) % 2 == 0, 0.5, -0.5) * instance.alpha_vec
    dev -= dev.mean()
    converged = False
    iterations = 0
    trace = _Trace(min(opts.max_iters, 100_000))
    for k in range(opts.max_iters):
        g_gamma = np.maximum(dev * dev - ws.alpha2, 0.0)
        pen_value = 0.5 * float(np.sum(g_gamma**2))
        # Preconditioned objective gradient: the variance term contributes
        # dev/(2*A*B); dividing by its curvature leaves dev itself.
        update = (opts.step_mu * dev
                  + mu_pen * opts.penalty_r * precond * (2.0 * g_gamma * dev))
        new_dev = dev - np.clip(update, -step_cap, step_cap)
        new_dev -= new_dev.mean()
        step = float(np.max(np.abs(new_dev - dev)))
        dev = new_dev
        iterations = k + 1
        trace.append(step, pen_value)
        if not np.isfinite(step) or np.max(np.abs(dev)) > opts.divergence_guard:
            raise Diverged(f"iterate norm exceeded {opts.divergence_guard:g} "
                           f"at iteration {iterations}")
        if step < opts.tol_step:
            converged = True
            break
    y_hat = _exact_sum_repair(ws.y + dev, ws.y)
    dev = y_hat - ws.y
    variance = dev**2 / (2.0 * ws.a_budget)
    grad = ws.cost_grad_y(float(np.sum(y_hat)) + ws.sba)
    projected = grad - grad.mean()
    return SolverResult(
        y_hat=y_hat,
        variance=variance,
        iterations=iterations,
        converged=converged,
        trace=trace.array(),
        kkt_residual_norm=float(np.max(np.abs(projected))),
        psi=y_hat.copy(),
    )
