"""Convergence upper bound of the perturbed federated loop and its optimizer.

For a run of m aggregations with the geometric noise schedule, the expected
optimality gap is bounded by

    G(m) = A^m * Theta_gap
         + q L ds^2 ln(1/delta) (theta^m - A^m)(theta - theta^(1-m))
           / (eps^2 (theta - A)(U - 1))
         [+ L_c * H(T/m)]

where A = 1 + 2 rho phi is the per-aggregation amplification factor, phi a
sampling-variance functional of the step size and client heterogeneity, and
H the local-drift gap accumulated between aggregations.  The bracketed term
is the full-horizon form (tau = T/m local steps per aggregation).

The module evaluates G and its exact derivative in m, tests the curvature
predicate associated with a unique interior minimum, and searches for the
optimal aggregation count M* over the integer grid with a bisection
cross-check on the derivative when the predicate holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundParams",
    "Heterogeneity",
    "OptimalSearch",
    "phi",
    "amplification",
    "h_gap",
    "convergence_bound",
    "convexity_holds",
    "bound_derivative",
    "optimal_M",
    "estimate_heterogeneity",
]

# below this |theta - A| the difference quotient switches to its limit
THETA_A_TOL = 1e-9


@dataclass(frozen=True)
class BoundParams:
    """Constants of the convergence bound.

    smoothness: gradient-Lipschitz constant L of the local objectives.
    lipschitz: Lipschitz constant L_c of the objectives themselves.
    step_size: learning rate eta, required <= 1/L.
    pl_constant: gradient-dominance constant rho of the global objective.
    dissimilarity: client-gradient dissimilarity factor B (>= 1).
    divergence: client-gradient divergence bound gamma (>= 0).
    initial_gap: F(omega(0)) - F(omega*), > 0.
    num_users: total client count U (>= 2).
    num_sampled: clients sampled per aggregation K, in [1, U].
    total_iterations: local-iteration horizon T.
    """

    smoothness: float
    lipschitz: float
    step_size: float
    pl_constant: float
    dissimilarity: float
    divergence: float
    initial_gap: float
    num_users: int
    num_sampled: int
    total_iterations: int

    def __post_init__(self):
        if self.smoothness <= 0:
            raise ValueError(f"smoothness must be > 0, got {self.smoothness}")
        if self.lipschitz <= 0:
            raise ValueError(f"lipschitz must be > 0, got {self.lipschitz}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.step_size * self.smoothness > 1.0 + 1e-12:
            raise ValueError(
                f"step_size {self.step_size} exceeds 1/smoothness "
                f"{1.0 / self.smoothness}")
        if self.pl_constant <= 0:
            raise ValueError(
                f"pl_constant must be > 0, got {self.pl_constant}")
        if self.dissimilarity < 1:
            raise ValueError(
                f"dissimilarity must be >= 1, got {self.dissimilarity}")
        if self.divergence < 0:
            raise ValueError(
                f"divergence must be >= 0, got {self.divergence}")
        if self.initial_gap <= 0:
            raise ValueError(
                f"initial_gap must be > 0, got {self.initial_gap}")
        if self.num_users < 2:
            raise ValueError(
                f"num_users must be >= 2, got {self.num_users}")
        if not 1 <= self.num_sampled <= self.num_users:
            raise ValueError(
                f"num_sampled must be in [1, {self.num_users}], "
                f"got {self.num_sampled}")
        if self.total_iterations < 1:
            raise ValueError(
                f"total_iterations must be >= 1, got {self.total_iterations}")


@dataclass(frozen=True)
class Heterogeneity:
    """Point estimates of client-gradient dissimilarity and divergence."""

    dissimilarity: float
    divergence: float


@dataclass(frozen=True)
class OptimalSearch:
    """Result of the optimal-aggregation-count search."""

    m_star: int
    g_values: tuple[float, ...]


def phi(params: BoundParams) -> float:
    """Sampling-variance functional of the amplification factor.

    phi = (eta^2 L / 2) * ((U-K) B^2 / (K (U-1)) + (K-1) / (U K (U-1)))
          - eta
    """
    eta = params.step_size
    L = params.smoothness
    U = params.num_users
    K = params.num_sampled
    B = params.dissimilarity
    bracket = (U - K) * B * B / (K * (U - 1)) + (K - 1) / (U * K * (U - 1))
    return (eta * eta * L / 2.0) * bracket - eta


def amplification(params: BoundParams) -> float:
    """Per-aggregation gap amplification A = 1 + 2 rho phi."""
    return 1.0 + 2.0 * params.pl_constant * phi(params)


def h_gap(x: float, gamma: float, eta: float, L: float) -> float:
    """Drift gap H(x) = (gamma/L)((eta L + 1)^x - 1) - eta gamma x.

    H vanishes at x = 0 and x = 1 (returned as exact zeros), is convex in
    x, and is nonnegative and nondecreasing over the integers.  x is the
    number of local iterations per aggregation and may be fractional when
    the bound is evaluated at a continuous aggregation count.
    """
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    if eta <= 0 or L <= 0:
        raise ValueError(f"eta and L must be > 0, got eta={eta}, L={L}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if x == 0.0 or x == 1.0:
        return 0.0
    growth = math.expm1(x * math.log1p(eta * L))
    return (gamma / L) * growth - eta * gamma * x


def _h_slope(x: float, gamma: float, eta: float, L: float) -> float:
    # dH/dx = (gamma/L)(eta L + 1)^x ln(eta L + 1) - eta gamma
    lg = math.log1p(eta * L)
    return (gamma / L) * math.exp(x * lg) * lg - eta * gamma


def _power_ratio(theta: float, a: float, m: float) -> float:
    # (theta^m - a^m) / (theta - a), with the removable singularity at
    # theta = a evaluated as its limit m * a^(m-1)
    if abs(theta - a) < THETA_A_TOL:
        return m * math.pow(a, m - 1.0)
    return (math.pow(theta, m) - math.pow(a, m)) / (theta - a)


def convergence_bound(params: BoundParams, budget, q: float, delta_s: float,
                      theta: float, m: float,
                      include_tau_term: bool = True) -> float:
    """Optimality-gap bound after m aggregations.

    Args:
        params: bound constants; total_iterations supplies T for the
            full-horizon term.
        budget: privacy requirement (epsilon may be math.inf, which zeroes
            the noise term).
        q: subsampling ratio.
        delta_s: upload sensitivity.
        theta: noise-schedule scaling factor, > 0.
        m: aggregation count, real >= 0 (continuous values serve the
            derivative's finite-difference checks; the amplification
            factor must be positive for fractional m).
        include_tau_term: add L_c * H(T/m), the full-horizon drift term;
            requires m > 0.
    """
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if theta <= 0:
        raise ValueError(f"theta must be > 0, got {theta}")
    if include_tau_term and m == 0:
        raise ValueError("tau = T/m is undefined at m = 0")
    a = amplification(params)
    gap = params.initial_gap * math.pow(a, m)
    if m > 0:
        log_term = math.log(1.0 / budget.delta)
        numer = q * params.smoothness * delta_s * delta_s * log_term \
            * _power_ratio(theta, a, m) \
            * (theta - math.pow(theta, 1.0 - m))
        denom = budget.epsilon * budget.epsilon * (params.num_users - 1)
        gap += numer / denom
    if include_tau_term:
        tau = params.total_iterations / m
        gap += params.lipschitz * h_gap(tau, params.divergence,
                                        params.step_size, params.smoothness)
    return gap


def convexity_holds(params: BoundParams, theta: float, tau: float) -> bool:
    """Curvature predicate: theta >= A and tau above its closed-form floor.

    Returns true when theta >= A and
    tau >= ln(eta / ln(eta L + 1)) / ln(eta L + 1), both boundaries
    inclusive.  For theta >= 1 these conditions make the bound convex in
    the aggregation count; below 1 the noise term turns negative and the
    conditions no longer guarantee convexity, so the predicate is a
    necessary screen only there (see the optimum search, which falls back
    to comparing curve values when the bisection candidate disagrees).
    """
    a = amplification(params)
    if theta < a:
        return False
    lg = math.log1p(params.step_size * params.smoothness)
    threshold = math.log(params.step_size / lg) / lg
    return tau >= threshold


def bound_derivative(params: BoundParams, budget, q: float, delta_s: float,
                     theta: float, M: float) -> float:
    """Exact derivative of the full bound with respect to continuous M.

    d/dM of ``convergence_bound(..., m=M, include_tau_term=True)``:

        Theta_gap A^M ln A
        + Q [R'(M) (theta - theta^(1-M)) + R(M) theta^(1-M) ln theta]
        + L_c * (-T/M^2) * H'(T/M)

    with R(M) = (theta^M - A^M)/(theta - A), Q the noise-term prefactor,
    and H' the drift gap's slope.  The removable singularity at theta = A
    uses the limits R -> M A^(M-1), R' -> A^(M-1)(1 + M ln A).
    """
    if M <= 0:
        raise ValueError(f"M must be > 0, got {M}")
    if theta <= 0:
        raise ValueError(f"theta must be > 0, got {theta}")
    a = amplification(params)
    if a <= 0:
        raise ValueError(
            f"amplification factor {a} is not positive; the continuous "
            "derivative is undefined")
    log_a = math.log(a)
    log_t = math.log(theta)
    deriv = params.initial_gap * math.pow(a, M) * log_a

    log_term = math.log(1.0 / budget.delta)
    prefactor = q * params.smoothness * delta_s * delta_s * log_term \
        / (budget.epsilon * budget.epsilon * (params.num_users - 1))
    if abs(theta - a) < THETA_A_TOL:
        ratio = M * math.pow(a, M - 1.0)
        ratio_slope = math.pow(a, M - 1.0) * (1.0 + M * log_a)
    else:
        ratio = (math.pow(theta, M) - math.pow(a, M)) / (theta - a)
        ratio_slope = (math.pow(theta, M) * log_t
                       - math.pow(a, M) * log_a) / (theta - a)
    tail = math.pow(theta, 1.0 - M)
    deriv += prefactor * (ratio_slope * (theta - tail) + ratio * tail * log_t)

    T = params.total_iterations
    slope = _h_slope(T / M, params.divergence, params.step_size,
                     params.smoothness)
    deriv += params.lipschitz * (-T / (M * M)) * slope
    return deriv


def optimal_M(params: BoundParams, budget, q: float, delta_s: float,
              theta: float, T: int) -> OptimalSearch:
    """Minimize the full bound over integer aggregation counts in [1, T].

    Returns the grid argmin and the evaluated curve.  When the convexity
    predicate holds over the whole range (tau = 1 suffices, since
    tau = T/M >= 1 on the grid), a bisection root of the derivative
    cross-checks the argmin; disagreement beyond rounding raises.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    g_values = tuple(
        convergence_bound(params, budget, q, delta_s, theta, m,
                          include_tau_term=True)
        for m in range(1, T + 1))
    m_star = 1 + int(np.argmin(g_values))

    if T > 1 and convexity_holds(params, theta, 1.0):
        root = _derivative_root(params, budget, q, delta_s, theta, T)
        lo = max(1, math.floor(root))
        hi = min(T, math.ceil(root))
        candidates = {lo, hi}
        if m_star not in candidates:
            best = min(candidates, key=lambda m: g_values[m - 1])
            tol = 1e-9 * (abs(g_values[m_star - 1]) + 1.0)
            if g_values[best - 1] - g_values[m_star - 1] > tol:
                raise RuntimeError(
                    f"bisection optimum {root:.6f} disagrees with grid "
                    f"argmin {m_star}")
    return OptimalSearch(m_star=m_star, g_values=g_values)


def _derivative_root(params, budget, q, delta_s, theta, T: int) -> float:
    # bisection on the derivative over [1, T]; under convexity the
    # derivative is nondecreasing, so endpoint signs decide monotone cases
    lo, hi = 1.0, float(T)
    d_lo = bound_derivative(params, budget, q, delta_s, theta, lo)
    d_hi = bound_derivative(params, budget, q, delta_s, theta, hi)
    if d_lo >= 0:
        return lo
    if d_hi <= 0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bound_derivative(params, budget, q, delta_s, theta, mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def estimate_heterogeneity(gradients, weights) -> Heterogeneity:
    """One-shot probe of the dissimilarity and divergence constants.

    Args:
        gradients: per-client gradient vectors at a common model point.
        weights: client weights, summing to 1.

    Returns:
        dissimilarity sqrt(sum w_k ||g_k||^2 / ||g||^2) and divergence
        sum w_k ||g_k - g||, where g is the weighted global gradient.
        Both are point estimates at the given model, not uniform bounds.
    """
    grads = [np.asarray(g, dtype=np.float64) for g in gradients]
    w = np.asarray(weights, dtype=np.float64)
    if len(grads) != len(w):
        raise ValueError(
            f"{len(grads)} gradients but {len(w)} weights")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {w.sum()}")
    stacked = np.stack(grads)
    global_grad = w @ stacked
    global_norm2 = float(global_grad @ global_grad)
    if global_norm2 == 0.0:
        raise ValueError(
            "dissimilarity is undefined where the global gradient vanishes")
    mean_norm2 = float(w @ np.sum(stacked * stacked, axis=1))
    dissimilarity = math.sqrt(mean_norm2 / global_norm2)
    divergence = float(
        w @ np.linalg.norm(stacked - global_grad, axis=1))
    return Heterogeneity(dissimilarity=dissimilarity, divergence=divergence)
