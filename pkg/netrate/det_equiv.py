"""
Deterministic-equivalent approximation of the ergodic achievable rate.

Solves the diagonal fixed-point equation for T_P = T(-L/(KP)), evaluates the
rate functional R_bar(tau) and its closed-form derivative, and provides the
scalar closed form (and curvature) for doubly regular profiles.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import BoundsError, ConvergenceError, DomainError
from .system_model import (
    ProfileKind,
    SystemConfig,
    VarianceProfile,
    effective_profile,
    effective_profile_derivative,
    effective_profile_second_derivative,
)
from .utils import Timer, TimingStats

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000
DAMPING = 0.5
BOUNDS_SLACK = 1e-9
REGULARITY_RTOL = 1e-10

SOLVER_STATS = TimingStats("fixed-point solve")


@dataclass(frozen=True)
class DetEquivSolution:
    """Solution of the fixed-point equation at z = -L/(KP)."""
    t: np.ndarray
    delta: np.ndarray
    residual: float
    iterations: int
    alpha: float
    converged: bool = True
    damped: bool = False

    @property
    def N(self) -> int:
        return self.t.shape[0]

    @property
    def K(self) -> int:
        return self.delta.shape[0]


@dataclass(frozen=True)
class RegularityCheck:
    """Result of the doubly-regular test on an effective profile."""
    is_doubly_regular: bool
    kappa: Optional[float]


@dataclass(frozen=True)
class DetEquivPoint:
    """Everything the deterministic equivalent knows about one training length."""
    tau: float
    v_bar: VarianceProfile
    v_bar_prime: VarianceProfile
    solution: DetEquivSolution
    rate: float
    derivative: float


def _values(profile) -> np.ndarray:
    return profile.values if isinstance(profile, VarianceProfile) else np.asarray(profile, dtype=float)


def _alpha(K: int, P: float, L: int) -> float:
    if not (P > 0) or not math.isfinite(P):
        raise DomainError(f"Deterministic equivalent requires finite P > 0, got P={P}")
    return L / (K * P)


def solve_fixed_point(
    v_bar,
    K: int,
    P: float,
    L: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DetEquivSolution:
    """
    Solve t_i = [ (1/K) sum_j v_ij / (1 + delta_j) + L/(KP) ]^-1 with
    delta_j = (1/K) sum_i v_ij t_i by Picard iteration.

    Args:
        v_bar: Effective variance profile (N x K)
        K: Number of users
        P: Transmit power
        L: Number of sub-carriers
        tol: Relative sup-norm tolerance on the update
        max_iter: Iteration cap

    Returns:
        DetEquivSolution

    Raises:
        DomainError: P <= 0 or profile/K mismatch
        ConvergenceError: tolerance not reached within max_iter
        BoundsError: converged point outside the provable bounds
    """
    v = _values(v_bar)
    alpha = _alpha(K, P, L)
    if v.ndim != 2 or v.shape[1] != K:
        raise DomainError(f"Profile shape {v.shape} does not match K={K}")
    if np.any(v < 0):
        raise DomainError("Effective profile must be nonnegative")

    t = np.full(v.shape[0], 1.0 / alpha)
    omega = 1.0
    residual = math.inf
    previous = math.inf

    with Timer("fixed-point solve", SOLVER_STATS):
        for iteration in range(1, max_iter + 1):
            delta = v.T @ t / K
            t_next = 1.0 / (v @ (1.0 / (1.0 + delta)) / K + alpha)
            residual = float(np.max(np.abs(t_next - t)) / np.max(np.abs(t_next)))
            if omega == 1.0 and residual > previous:
                omega = DAMPING
                logger.debug(f"Residual increased at iteration {iteration}, damping with {DAMPING}")
            t = (1.0 - omega) * t + omega * t_next
            previous = residual
            if residual <= tol:
                break
        else:
            raise ConvergenceError(
                f"Fixed point did not converge in {max_iter} iterations (residual {residual:.3e})",
                residual=residual,
                iterations=max_iter,
            )

    delta = v.T @ t / K
    lower = 1.0 / (alpha + (v.max() if v.size else 0.0))
    upper = 1.0 / alpha
    if np.any(t < lower * (1 - BOUNDS_SLACK)) or np.any(t > upper * (1 + BOUNDS_SLACK)):
        raise BoundsError(
            f"Fixed point outside [{lower:.6g}, {upper:.6g}]: "
            f"min t={t.min():.6g}, max t={t.max():.6g}"
        )

    logger.debug(f"Fixed point converged in {iteration} iterations (residual {residual:.2e})")
    return DetEquivSolution(
        t=t,
        delta=delta,
        residual=residual,
        iterations=iteration,
        alpha=alpha,
        converged=True,
        damped=omega != 1.0,
    )


def _require_converged(sol: DetEquivSolution):
    if not sol.converged:
        raise DomainError("Refusing to evaluate an unconverged fixed-point solution")


def rate_det(v_bar, sol: DetEquivSolution, cfg: SystemConfig) -> float:
    """
    Deterministic-equivalent rate R_bar(tau) in nats/channel use/BS antenna.

    R_bar = (1/N) [ sum_j log(1+delta_j) - sum_i log(L t_i/(KP)) - sum_j delta_j/(1+delta_j) ]

    Args:
        v_bar: Effective profile the solution was computed for
        sol: Converged fixed-point solution
        cfg: System configuration

    Returns:
        R_bar(tau) >= 0
    """
    _require_converged(sol)
    v = _values(v_bar)
    if v.shape != (sol.N, sol.K):
        raise DomainError(f"Profile shape {v.shape} does not match solution ({sol.N}, {sol.K})")

    alpha = _alpha(cfg.K, cfg.P, cfg.L)
    delta = sol.delta
    rate = (
        np.sum(np.log1p(delta))
        - np.sum(np.log(alpha * sol.t))
        - np.sum(delta / (1.0 + delta))
    ) / sol.N
    # Tiny negative values are rounding noise around a zero channel
    return max(float(rate), 0.0)


def rate_det_derivative(v_bar, v_bar_prime, sol: DetEquivSolution) -> float:
    """
    Closed-form derivative R_bar'(tau) = (1/N) sum_j [(1/K) tr D'_j T_P] / [1 + delta_j].

    Args:
        v_bar: Effective profile
        v_bar_prime: Its tau-derivative at the same tau
        sol: Converged fixed-point solution

    Returns:
        R_bar'(tau) in nats per channel use of training
    """
    _require_converged(sol)
    v = _values(v_bar)
    dv = _values(v_bar_prime)
    if v.shape != dv.shape:
        raise DomainError(f"Profile {v.shape} and derivative {dv.shape} shapes differ")
    if v.shape != (sol.N, sol.K):
        raise DomainError(f"Profile shape {v.shape} does not match solution ({sol.N}, {sol.K})")

    numer = dv.T @ sol.t / sol.K
    return float(np.sum(numer / (1.0 + sol.delta)) / sol.N)


def check_regularity(v_bar, rtol: float = REGULARITY_RTOL) -> RegularityCheck:
    """
    Test whether a square profile has all row and column means equal.

    Args:
        v_bar: Effective profile
        rtol: Relative tolerance on the means

    Returns:
        RegularityCheck with the common mean when regular
    """
    v = _values(v_bar)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        return RegularityCheck(False, None)

    means = np.concatenate([v.mean(axis=0), v.mean(axis=1)])
    kappa = float(v.mean())
    scale = max(abs(kappa), np.finfo(float).tiny)
    if np.all(np.abs(means - kappa) <= rtol * scale):
        return RegularityCheck(True, kappa)
    return RegularityCheck(False, None)


def doubly_regular_solution(kappa: float, K: int, P: float, L: int) -> float:
    """
    Closed-form fixed point for a doubly regular profile with common mean kappa.

    t_P = (sqrt(1 + 4 (KP/L) kappa) - 1) / (2 kappa), evaluated in the
    rationalized form 2 (KP/L) / (sqrt(1 + 4 (KP/L) kappa) + 1).

    Args:
        kappa: Common row/column mean of the effective profile
        K: Number of users
        P: Transmit power
        L: Number of sub-carriers

    Returns:
        Scalar t_P > 0
    """
    if not (kappa > 0):
        raise DomainError(f"Common mean must be positive, got kappa={kappa}")
    load = 1.0 / _alpha(K, P, L)
    return 2.0 * load / (math.sqrt(1.0 + 4.0 * load * kappa) + 1.0)


def doubly_regular_rate(kappa: float, K: int, P: float, L: int) -> float:
    """R_bar for a doubly regular profile via the closed-form t_P."""
    t = doubly_regular_solution(kappa, K, P, L)
    alpha = _alpha(K, P, L)
    delta = kappa * t
    return math.log1p(delta) - math.log(alpha * t) - delta / (1.0 + delta)


def doubly_regular_curvature(cfg: SystemConfig, V, sigma2, tau: float) -> float:
    """
    Analytic R_bar''(tau) for a doubly regular effective profile.

    R_bar'' = [t' K' + t K'' (1 + t K) - (t K')^2] / (1 + t K)^2, with K the
    common mean of V_bar(tau) and t the closed-form fixed point.

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        tau: Training length

    Returns:
        R_bar''(tau)

    Raises:
        DomainError: profile not doubly regular (use concavity_diagnostic instead)
    """
    v_bar, _ = effective_profile(cfg, V, sigma2, tau)
    check = check_regularity(v_bar)
    if not check.is_doubly_regular:
        raise DomainError("Effective profile is not doubly regular; use a numerical curvature")

    kappa = check.kappa
    kappa_1 = float(effective_profile_derivative(cfg, V, sigma2, tau).values.mean())
    kappa_2 = float(effective_profile_second_derivative(cfg, V, sigma2, tau).values.mean())

    load = cfg.K * cfg.P / cfg.L
    root = math.sqrt(1.0 + 4.0 * load * kappa)
    t = 2.0 * load / (root + 1.0)
    dt_dkappa = -4.0 * load * load / (root * (root + 1.0) ** 2)
    t_1 = dt_dkappa * kappa_1

    gain = 1.0 + t * kappa
    return (t_1 * kappa_1 + t * kappa_2 * gain - (t * kappa_1) ** 2) / gain ** 2


def evaluate(
    cfg: SystemConfig,
    V,
    sigma2,
    tau: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DetEquivPoint:
    """
    Solve and evaluate the deterministic equivalent at one training length.

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        tau: Training length
        tol: Fixed-point tolerance
        max_iter: Fixed-point iteration cap

    Returns:
        DetEquivPoint with R_bar(tau) and R_bar'(tau)
    """
    v_bar, _ = effective_profile(cfg, V, sigma2, tau)
    v_bar_prime = effective_profile_derivative(cfg, V, sigma2, tau)
    sol = solve_fixed_point(v_bar, cfg.K, cfg.P, cfg.L, tol=tol, max_iter=max_iter)
    return DetEquivPoint(
        tau=tau,
        v_bar=v_bar,
        v_bar_prime=v_bar_prime,
        solution=sol,
        rate=rate_det(v_bar, sol, cfg),
        derivative=rate_det_derivative(v_bar, v_bar_prime, sol),
    )


def rate_at(cfg: SystemConfig, V, sigma2, tau: float) -> float:
    """R_bar(tau) in nats."""
    v_bar, _ = effective_profile(cfg, V, sigma2, tau)
    sol = solve_fixed_point(v_bar, cfg.K, cfg.P, cfg.L)
    return rate_det(v_bar, sol, cfg)


def rate_for_profile(cfg: SystemConfig, v_bar) -> float:
    """R_bar for an arbitrary effective profile (e.g. the perfect-CSI limit)."""
    v = _values(v_bar)
    sol = solve_fixed_point(v, cfg.K, cfg.P, cfg.L)
    return rate_det(VarianceProfile(v, ProfileKind.EFFECTIVE), sol, cfg)


def concavity_diagnostic(cfg: SystemConfig, V, sigma2, taus: Sequence[float]) -> np.ndarray:
    """
    Second differences of R_bar over a uniform tau grid.

    Nonpositive entries are numerical evidence of concavity for general
    (non doubly regular) profiles; this is a diagnostic, never a proof.

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        taus: Uniformly spaced training lengths (at least 3)

    Returns:
        Array of R(tau_{k-1}) - 2 R(tau_k) + R(tau_{k+1})
    """
    grid = np.asarray(taus, dtype=float)
    if grid.size < 3:
        raise DomainError("Concavity diagnostic needs at least three grid points")
    rates = np.array([rate_at(cfg, V, sigma2, float(tau)) for tau in grid])
    return rates[:-2] - 2.0 * rates[1:-1] + rates[2:]
