"""
System model for the network-MIMO uplink with compressed backhaul.

Holds the scalar system parameters and the deterministic variance algebra:
path-loss matrix -> variance profile -> quantization noise -> MMSE
estimate/error variances -> effective variance profile and its derivatives.

All functions are pure; rates and variances are natural-log based.
"""

import enum
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .exceptions import DomainError
from .utils import db_to_linear

logger = logging.getLogger(__name__)

# Inverse path loss of the 3-BS / 3-user reference snapshot (a = d^-3.6).
REFERENCE_PATH_LOSS = np.array([
    [2.9775, 0.0385, 1.6055],
    [0.2512, 2.7826, 0.1759],
    [0.0615, 0.0492, 1.6376],
])

PATH_LOSS_EXPONENT = 3.6


class SystemConfig(BaseModel):
    """Scalar system parameters."""
    model_config = ConfigDict(frozen=True)

    B: int = Field(3, ge=1, description="Number of base stations (cells)")
    M: int = Field(2, ge=1, description="Antennas per base station")
    K: int = Field(3, ge=1, description="Number of user terminals")
    L: int = Field(1, ge=1, description="Number of sub-carriers")
    T: float = Field(1000.0, gt=0, description="Coherence block length (channel uses)")
    P: float = Field(1.0, ge=0, description="Total transmit power per user (linear)")
    C: float = Field(math.inf, gt=0, description="Backhaul capacity (bits/channel use), may be inf")

    @field_validator('P')
    @classmethod
    def validate_power(cls, v):
        if not math.isfinite(v):
            raise ValueError("P must be finite")
        return v

    @field_validator('T')
    @classmethod
    def validate_block_length(cls, v):
        if not math.isfinite(v):
            raise ValueError("T must be finite")
        return v

    @property
    def N(self) -> int:
        """Total number of receive antennas B*M."""
        return self.B * self.M

    @property
    def snr(self) -> float:
        """Cell-edge SNR P/L (linear)."""
        return self.P / self.L

    @classmethod
    def from_snr_db(cls, snr_db: float, **kwargs) -> "SystemConfig":
        """Build a config whose power gives the requested cell-edge SNR in dB."""
        L = kwargs.get("L", 1)
        return cls(P=L * db_to_linear(snr_db), **kwargs)


class ProfileKind(str, enum.Enum):
    """Which quantity a VarianceProfile describes."""
    RAW = "raw"
    ESTIMATED = "estimated"
    ERROR = "error"
    EFFECTIVE = "effective"
    EFFECTIVE_DERIVATIVE = "effective_derivative"
    EFFECTIVE_SECOND_DERIVATIVE = "effective_second_derivative"


@dataclass(frozen=True)
class PathLossMatrix:
    """B x K matrix of inverse path losses a_bk."""
    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=float)
        if a.ndim != 2 or a.size == 0:
            raise DomainError(f"Path-loss matrix must be a non-empty 2-D array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("Path-loss matrix contains non-finite entries")
        if np.any(a <= 0):
            raise DomainError("Path-loss matrix entries must be strictly positive")
        a.setflags(write=False)
        object.__setattr__(self, "values", a)

    @property
    def B(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class VarianceProfile:
    """N x K matrix of per-link variances, tagged with what it describes."""
    values: np.ndarray
    kind: ProfileKind = ProfileKind.RAW

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DomainError(f"Variance profile must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError(f"{self.kind.value} profile contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class QuantizationNoise:
    """Per-antenna quantization noise variances sigma^2_i (length N)."""
    sigma2: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma2, dtype=float)
        if s.ndim != 1:
            raise DomainError("Quantization noise must be a vector")
        if np.any(s < 0) or np.any(np.isnan(s)):
            raise DomainError("Quantization noise variances must be nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "sigma2", s)


@dataclass(frozen=True)
class NoiseCovarianceDiag:
    """Diagonal of the total-noise covariance K_z(tau) (length N, entries >= 1)."""
    diag: np.ndarray


def profile_values(V) -> np.ndarray:
    """Raw array of a VarianceProfile (or array-like)."""
    return V.values if isinstance(V, VarianceProfile) else np.asarray(V, dtype=float)


def noise_values(sigma2) -> np.ndarray:
    """Raw array of a QuantizationNoise (or array-like)."""
    return sigma2.sigma2 if isinstance(sigma2, QuantizationNoise) else np.asarray(sigma2, dtype=float)


def _check_tau(tau: float):
    if not (tau >= 0):
        raise DomainError(f"Training length must be nonnegative, got tau={tau}")


def _check_shapes(v: np.ndarray, s: np.ndarray):
    if s.shape[0] != v.shape[0]:
        raise DomainError(
            f"Quantization noise has length {s.shape[0]} but profile has {v.shape[0]} rows"
        )


def path_loss_from_distances(distances, exponent: float = PATH_LOSS_EXPONENT) -> PathLossMatrix:
    """
    Inverse path loss a_bk = d_bk^-exponent.

    Args:
        distances: B x K distances normalized to the maximum distance within a cell
        exponent: Path-loss exponent

    Returns:
        PathLossMatrix
    """
    d = np.asarray(distances, dtype=float)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise DomainError("Distances must be positive and finite")
    return PathLossMatrix(d ** (-exponent))


def build_variance_profile(A, M: int) -> VarianceProfile:
    """
    Raw variance profile V = A kron 1_M.

    Args:
        A: PathLossMatrix or B x K array of inverse path losses
        M: Antennas per BS

    Returns:
        (B*M) x K raw profile; row i repeats row ceil(i/M) of A
    """
    if M < 1:
        raise DomainError(f"Antennas per BS must be >= 1, got M={M}")
    a = A if isinstance(A, PathLossMatrix) else PathLossMatrix(A)
    return VarianceProfile(np.kron(a.values, np.ones((M, 1))), ProfileKind.RAW)


def quantization_noise(cfg: SystemConfig, V) -> QuantizationNoise:
    """
    Quantization noise variance induced by backhaul compression.

    sigma^2_i = (1 + (P/L) sum_j v_ij) / (2^(C/(M L)) - 1), zero for C = inf.

    Args:
        cfg: System configuration
        V: Raw variance profile

    Returns:
        QuantizationNoise of length N
    """
    v = profile_values(V)
    if not (cfg.C > 0):
        raise DomainError(f"Backhaul capacity must be positive, got C={cfg.C}")

    if math.isinf(cfg.C):
        return QuantizationNoise(np.zeros(v.shape[0]))

    bits_per_sample = cfg.C / (cfg.M * cfg.L)
    with np.errstate(over='ignore'):
        denom = np.expm1(bits_per_sample * math.log(2.0))
    received_power = 1.0 + cfg.snr * v.sum(axis=1)
    return QuantizationNoise(received_power / denom)


def estimation_variances(
    cfg: SystemConfig,
    V,
    sigma2,
    tau: float
) -> Tuple[VarianceProfile, VarianceProfile]:
    """
    MMSE estimate and error variance profiles after tau training symbols.

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        tau: Training length (channel uses, continuous)

    Returns:
        (V_hat(tau), V_tilde(tau)); V_hat + V_tilde = V
    """
    _check_tau(tau)
    v = profile_values(V)
    s = noise_values(sigma2)
    _check_shapes(v, s)

    noise = (1.0 + s)[:, None]
    gain = tau * cfg.snr * v
    denom = gain + noise
    v_hat = gain * v / denom
    v_tilde = v * noise / denom
    return (
        VarianceProfile(v_hat, ProfileKind.ESTIMATED),
        VarianceProfile(v_tilde, ProfileKind.ERROR),
    )


def _noise_diag(cfg: SystemConfig, v_tilde: np.ndarray, s: np.ndarray) -> np.ndarray:
    return 1.0 + s + cfg.snr * v_tilde.sum(axis=1)


def effective_profile(
    cfg: SystemConfig,
    V,
    sigma2,
    tau: float
) -> Tuple[VarianceProfile, NoiseCovarianceDiag]:
    """
    Variance profile of the whitened channel K_z^-1/2 H_hat.

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        tau: Training length

    Returns:
        (V_bar(tau), diag of K_z(tau))
    """
    v_hat, v_tilde = estimation_variances(cfg, V, sigma2, tau)
    s = noise_values(sigma2)
    kz = _noise_diag(cfg, v_tilde.values, s)
    v_bar = v_hat.values / kz[:, None]
    return VarianceProfile(v_bar, ProfileKind.EFFECTIVE), NoiseCovarianceDiag(kz)


def _derivative_terms(cfg: SystemConfig, V, sigma2, tau: float):
    """Entrywise v_hat and its first two tau-derivatives, plus K_z and its derivatives."""
    _check_tau(tau)
    v = profile_values(V)
    s = noise_values(sigma2)
    _check_shapes(v, s)
    c = cfg.snr

    noise = (1.0 + s)[:, None]
    denom = noise + tau * c * v
    v_hat = tau * c * v * v / denom
    v_tilde = v * noise / denom
    d1_hat = c * v * v * noise / denom ** 2
    d2_hat = -2.0 * c * c * v ** 3 * noise / denom ** 3

    kz = 1.0 + s + c * v_tilde.sum(axis=1)
    # v_tilde' = -v_hat', so K_z moves opposite to the estimate
    d1_kz = -c * d1_hat.sum(axis=1)
    d2_kz = -c * d2_hat.sum(axis=1)
    return v_hat, d1_hat, d2_hat, kz[:, None], d1_kz[:, None], d2_kz[:, None]


def effective_profile_derivative(cfg: SystemConfig, V, sigma2, tau: float) -> VarianceProfile:
    """
    Entrywise tau-derivative of the effective profile (quotient rule).

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        tau: Training length

    Returns:
        V_bar'(tau), entries >= 0
    """
    v_hat, d1_hat, _, kz, d1_kz, _ = _derivative_terms(cfg, V, sigma2, tau)
    d1 = d1_hat / kz - v_hat * d1_kz / kz ** 2
    return VarianceProfile(d1, ProfileKind.EFFECTIVE_DERIVATIVE)


def effective_profile_second_derivative(cfg: SystemConfig, V, sigma2, tau: float) -> VarianceProfile:
    """Entrywise second tau-derivative of the effective profile."""
    v_hat, d1_hat, d2_hat, kz, d1_kz, d2_kz = _derivative_terms(cfg, V, sigma2, tau)
    d2 = (
        d2_hat / kz
        - 2.0 * d1_hat * d1_kz / kz ** 2
        - v_hat * d2_kz / kz ** 2
        + 2.0 * v_hat * d1_kz ** 2 / kz ** 3
    )
    return VarianceProfile(d2, ProfileKind.EFFECTIVE_SECOND_DERIVATIVE)


def perfect_csi_profile(V, sigma2) -> VarianceProfile:
    """
    Effective profile in the tau -> inf limit, v_ij / (1 + sigma^2_i).

    Args:
        V: Raw variance profile
        sigma2: Quantization noise

    Returns:
        Limiting effective profile
    """
    v = profile_values(V)
    s = noise_values(sigma2)
    _check_shapes(v, s)
    return VarianceProfile(v / (1.0 + s)[:, None], ProfileKind.EFFECTIVE)


def net_rate_factor(tau: float, T: float) -> float:
    """
    Fraction of the coherence block left for data, 1 - tau/T.

    Args:
        tau: Training length
        T: Coherence block length

    Returns:
        1 - tau/T in [0, 1]
    """
    _check_tau(tau)
    if tau > T:
        raise DomainError(f"Training length tau={tau} exceeds coherence block T={T}")
    return 1.0 - tau / T
