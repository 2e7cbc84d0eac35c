"""
netrate: net ergodic rate of a network-MIMO uplink with compressed backhaul.

Deterministic-equivalent and Monte Carlo rate evaluation, and optimization
of the pilot training length.
"""

__version__ = "0.1.0"

from .system_model import SystemConfig, build_variance_profile, quantization_noise, effective_profile
from .det_equiv import solve_fixed_point, rate_det, rate_det_derivative, doubly_regular_curvature
from .monte_carlo import estimate_rate, estimate_net_rate
from .train_opt import optimize_det, optimize_mc, convergence_report

__all__ = [
    "SystemConfig",
    "build_variance_profile",
    "quantization_noise",
    "effective_profile",
    "solve_fixed_point",
    "rate_det",
    "rate_det_derivative",
    "doubly_regular_curvature",
    "estimate_rate",
    "estimate_net_rate",
    "optimize_det",
    "optimize_mc",
    "convergence_report",
]
