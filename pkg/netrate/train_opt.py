"""
Optimization of the training length.

tau_bar* maximizes the deterministic net rate (1 - tau/T) R_bar(tau) and is
found by bisection on its derivative; tau* maximizes the Monte Carlo net rate
over a grid. The convergence report compares both as the system grows.
"""

import enum
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import det_equiv
from .exceptions import ConcavityError, DomainError
from .monte_carlo import DEFAULT_SAMPLES, estimate_net_rate
from .system_model import (
    PathLossMatrix,
    SystemConfig,
    build_variance_profile,
    net_rate_factor,
    quantization_noise,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL_TAU = 1e-3
PRECHECK_POINTS = 17
PRECHECK_SLACK = 1e-9
DEFAULT_WINDOW = 10


class ClampStatus(str, enum.Enum):
    """Whether the optimum was pushed onto the feasible interval [K, T]."""
    NONE = "none"
    AT_K = "at_K"
    AT_T = "at_T"


@dataclass(frozen=True)
class TrainingOptimum:
    """Result of a training-length optimization (rates in nats)."""
    tau_star: float
    net_rate: float
    bracket: Tuple[float, float]
    iterations: int
    clamped: ClampStatus
    tau_star_int: Optional[int]
    tau_unclamped: Optional[float] = None
    std_err: Optional[float] = None
    method: str = "det"


@dataclass(frozen=True)
class ConvergenceRow:
    """One line of the large-system convergence report."""
    scale: int
    tau_det: float
    tau_mc: float
    tau_gap: float
    net_rate_det: float
    net_rate_mc: float
    rate_gap: float
    mc_std_err: float


def net_rate_det(cfg: SystemConfig, V, sigma2, tau: float) -> float:
    """Deterministic net rate (1 - tau/T) R_bar(tau) in nats."""
    return net_rate_factor(tau, cfg.T) * det_equiv.rate_at(cfg, V, sigma2, tau)


def net_rate_derivative_det(cfg: SystemConfig, V, sigma2, tau: float) -> float:
    """
    Derivative of the deterministic net rate, (1 - tau/T) R_bar'(tau) - R_bar(tau)/T.

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        tau: Training length in [0, T]

    Returns:
        R_bar_net'(tau)
    """
    point = det_equiv.evaluate(cfg, V, sigma2, tau)
    return net_rate_factor(tau, cfg.T) * point.derivative - point.rate / cfg.T


def _precheck(cfg: SystemConfig, V, sigma2):
    taus = np.linspace(0.0, cfg.T, PRECHECK_POINTS)
    values = np.array([net_rate_derivative_det(cfg, V, sigma2, float(t)) for t in taus])
    slack = PRECHECK_SLACK * float(np.max(np.abs(values)))
    if np.any(np.diff(values) > slack):
        raise ConcavityError(
            "Net-rate derivative is not decreasing on the coarse grid; bisection would be unreliable",
            taus=taus,
            values=values,
        )


def _best_integer(cfg: SystemConfig, V, sigma2, tau: float) -> Optional[int]:
    candidates = {math.floor(tau), math.ceil(tau)}
    feasible = sorted(c for c in candidates if cfg.K <= c <= cfg.T)
    if not feasible:
        return None
    # max() keeps the first (smallest) candidate on ties
    return max(feasible, key=lambda c: net_rate_det(cfg, V, sigma2, float(c)))


def optimize_det(cfg: SystemConfig, V, sigma2, tol_tau: float = DEFAULT_TOL_TAU,
                 precheck: bool = True) -> TrainingOptimum:
    """
    Maximize the deterministic net rate by bisection on its derivative.

    The root is searched on [0, T] and then clamped to [K, T].

    Args:
        cfg: System configuration (T > K)
        V: Raw variance profile
        sigma2: Quantization noise
        tol_tau: Final bracket width
        precheck: Verify on a coarse grid that the derivative decreases

    Returns:
        TrainingOptimum (method "det")
    """
    if not (cfg.T > cfg.K):
        raise DomainError(f"Coherence block T={cfg.T} must exceed the user count K={cfg.K}")
    if not (tol_tau > 0):
        raise DomainError(f"tol_tau must be positive, got {tol_tau}")
    if precheck:
        _precheck(cfg, V, sigma2)

    lo, hi = 0.0, float(cfg.T)
    iterations = 0
    if net_rate_derivative_det(cfg, V, sigma2, hi) >= 0:
        root = hi
    else:
        while hi - lo > tol_tau:
            mid = 0.5 * (lo + hi)
            iterations += 1
            g = net_rate_derivative_det(cfg, V, sigma2, mid)
            if g > 0:
                lo = mid
            elif g < 0:
                hi = mid
            else:
                lo = hi = mid
        root = 0.5 * (lo + hi)

    if root >= cfg.T:
        tau, clamped = float(cfg.T), ClampStatus.AT_T
    elif net_rate_derivative_det(cfg, V, sigma2, float(cfg.K)) <= 0:
        tau, clamped = float(cfg.K), ClampStatus.AT_K
    else:
        # Best of the final bracket, so the result dominates both endpoints
        candidates = [c for c in (root, lo, hi) if cfg.K <= c <= cfg.T]
        tau, clamped = max(candidates, key=lambda c: net_rate_det(cfg, V, sigma2, c)), ClampStatus.NONE
    if clamped is not ClampStatus.NONE:
        logger.info(f"Optimal training length clamped {clamped.value} (unclamped root {root:.4f})")

    return TrainingOptimum(
        tau_star=tau,
        net_rate=net_rate_det(cfg, V, sigma2, tau),
        bracket=(min(max(lo, cfg.K), cfg.T), min(max(hi, cfg.K), cfg.T)),
        iterations=iterations,
        clamped=clamped,
        tau_star_int=_best_integer(cfg, V, sigma2, tau),
        tau_unclamped=root,
        method="det",
    )


def optimize_mc(cfg: SystemConfig, V, sigma2, grid: Sequence[float],
                n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                workers: int = 1) -> TrainingOptimum:
    """
    Exhaustive search of the Monte Carlo net rate over a grid.

    Every grid point uses the same seed (common random numbers); ties go to
    the smallest training length.

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        grid: Candidate training lengths within [K, T]
        n_samples: Samples per grid point
        seed: Master seed shared by all grid points
        workers: Thread count per estimate

    Returns:
        TrainingOptimum (method "mc")
    """
    taus = sorted(float(t) for t in grid)
    if not taus:
        raise DomainError("Monte Carlo search grid is empty")
    if taus[0] < cfg.K or taus[-1] > cfg.T:
        raise DomainError(f"Grid must lie within [K, T] = [{cfg.K}, {cfg.T}]")

    estimates = [estimate_net_rate(cfg, V, sigma2, tau, n_samples, seed, workers) for tau in taus]
    means = np.array([e.mean for e in estimates])
    best = int(np.argmax(means))  # first maximum = smallest tau
    tau = taus[best]

    return TrainingOptimum(
        tau_star=tau,
        net_rate=float(means[best]),
        bracket=(taus[max(best - 1, 0)], taus[min(best + 1, len(taus) - 1)]),
        iterations=len(taus),
        clamped=ClampStatus.NONE,
        tau_star_int=int(round(tau)) if float(tau).is_integer() else None,
        std_err=estimates[best].std_err,
        method="mc",
    )


def window_grid(cfg: SystemConfig, center: float, window: int = DEFAULT_WINDOW,
                step: int = 1) -> List[float]:
    """
    Integer grid of training lengths around a center, clipped to [K, T].

    Args:
        cfg: System configuration
        center: Usually the deterministic optimum
        window: Half-width in channel uses
        step: Grid step

    Returns:
        Sorted grid values
    """
    lo = max(int(math.ceil(cfg.K)), int(math.floor(center)) - window)
    hi = min(int(math.floor(cfg.T)), int(math.ceil(center)) + window)
    return [float(t) for t in range(lo, hi + 1, step)]


def scale_system(cfg: SystemConfig, A, s: int) -> Tuple[SystemConfig, np.ndarray]:
    """
    Grow the system by an integer factor while keeping N/K and L/K fixed.

    A -> kron(1_{s x s}, A)/s, B -> sB, K -> sK, L -> sL, P -> sP, C -> sC, so
    SNR, C/(ML) and the power received per antenna are unchanged.

    Args:
        cfg: Base configuration
        A: B x K path-loss matrix
        s: Scale factor >= 1

    Returns:
        (scaled config, scaled path-loss matrix)
    """
    if s < 1:
        raise DomainError(f"Scale factor must be >= 1, got {s}")
    a = A.values if isinstance(A, PathLossMatrix) else np.asarray(A, dtype=float)
    scaled = np.kron(np.ones((s, s)), a) / s
    if not np.all(np.isfinite(scaled)):
        raise DomainError("Scaled path-loss matrix is not finite")
    new_cfg = cfg.model_copy(update={
        "B": cfg.B * s,
        "K": cfg.K * s,
        "L": cfg.L * s,
        "P": cfg.P * s,
        "C": cfg.C * s,
    })
    return new_cfg, scaled


def convergence_report(cfg: SystemConfig, A, scales: Sequence[int] = (1, 2, 4),
                       n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                       window: int = DEFAULT_WINDOW, workers: int = 1) -> List[ConvergenceRow]:
    """
    Compare tau* and tau_bar* (and their net rates) on growing systems.

    Args:
        cfg: Base configuration
        A: Base path-loss matrix
        scales: Scale factors to evaluate
        n_samples: Monte Carlo samples per grid point
        seed: Master seed
        window: Half-width of the MC grid around tau_bar*
        workers: Thread count per estimate

    Returns:
        One ConvergenceRow per scale
    """
    rows = []
    for s in scales:
        scaled_cfg, scaled_a = scale_system(cfg, A, s)
        V = build_variance_profile(scaled_a, scaled_cfg.M)
        sigma2 = quantization_noise(scaled_cfg, V)

        det = optimize_det(scaled_cfg, V, sigma2)
        grid = window_grid(scaled_cfg, det.tau_star, window)
        mc = optimize_mc(scaled_cfg, V, sigma2, grid, n_samples, seed, workers)

        rows.append(ConvergenceRow(
            scale=s,
            tau_det=det.tau_star,
            tau_mc=mc.tau_star,
            tau_gap=abs(mc.tau_star - det.tau_star),
            net_rate_det=det.net_rate,
            net_rate_mc=mc.net_rate,
            rate_gap=abs(mc.net_rate - det.net_rate),
            mc_std_err=mc.std_err if mc.std_err is not None else math.nan,
        ))
        logger.info(
            f"scale={s}: tau_bar*={det.tau_star:.3f}, tau*={mc.tau_star:.0f}, "
            f"rate gap={rows[-1].rate_gap:.3e}"
        )
    return rows
