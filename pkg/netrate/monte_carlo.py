"""
Monte Carlo estimation of the ergodic achievable rate.

Channels are drawn with the given variance profile, pilot observations are
simulated and MMSE-estimated, the estimate is whitened by the total noise
covariance, and log det(I + (P/L) H_bar H_bar^H) is averaged.

Seeding: samples come in blocks of BLOCK_SIZE; block b uses the substream
SeedSequence(seed, spawn_key=(b,)). Results therefore do not depend on the
number of workers, and two runs with the same seed share common random
numbers across training lengths.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .exceptions import DomainError, SamplingError
from .system_model import (
    SystemConfig,
    profile_values,
    noise_values,
    effective_profile,
    net_rate_factor,
)

logger = logging.getLogger(__name__)

BLOCK_SIZE = 256
MAX_REJECTION_RATE = 1e-3
DEFAULT_SAMPLES = 10_000


@dataclass(frozen=True)
class ChannelSample:
    """One (or a batch of) channel draws and the MMSE split."""
    H: np.ndarray
    H_hat: np.ndarray
    H_tilde: np.ndarray
    H_bar: np.ndarray


@dataclass(frozen=True)
class MonteCarloEstimate:
    """
    Sample mean of a rate with its standard error (nats/channel use/BS antenna).

    n_samples counts the accepted draws the mean is taken over; rejected draws
    are reported separately.
    """
    mean: float
    std_err: float
    n_samples: int
    seed: int
    rejected: int = 0

    def scaled(self, factor: float) -> "MonteCarloEstimate":
        """Estimate multiplied by a deterministic factor."""
        return MonteCarloEstimate(
            mean=self.mean * factor,
            std_err=self.std_err * factor,
            n_samples=self.n_samples,
            seed=self.seed,
            rejected=self.rejected,
        )


def block_generator(seed: int, block: int) -> np.random.Generator:
    """Counter-derived generator for one block of samples."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _complex_normal(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian draws."""
    real = rng.standard_normal(shape)
    imag = rng.standard_normal(shape)
    return (real + 1j * imag) / math.sqrt(2.0)


def _draw(cfg: SystemConfig, v: np.ndarray, s: np.ndarray, tau: float,
          rng: np.random.Generator, size: int) -> ChannelSample:
    N, K = v.shape
    shape = (size, N, K)
    c = cfg.snr

    H = np.sqrt(v) * _complex_normal(rng, shape)
    noise_var = (1.0 + s)[:, None]
    pilot_noise = np.sqrt(noise_var) * _complex_normal(rng, shape)

    # r = sqrt(tau P/L) h + s;  h_hat = E[h | r]
    amplitude = math.sqrt(tau * c)
    observation = amplitude * H + pilot_noise
    mmse_gain = amplitude * v / (tau * c * v + noise_var)
    H_hat = mmse_gain * observation
    H_tilde = H - H_hat

    _, kz = effective_profile(cfg, v, s, tau)
    H_bar = H_hat / np.sqrt(kz.diag)[:, None]
    return ChannelSample(H=H, H_hat=H_hat, H_tilde=H_tilde, H_bar=H_bar)


def sample_effective_channel(cfg: SystemConfig, V, sigma2, tau: float,
                             rng: np.random.Generator, size: int = 1) -> ChannelSample:
    """
    Draw channels, simulate pilot observations and form the effective channel.

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        tau: Training length (> 0)
        rng: Random generator
        size: Number of independent draws (leading axis)

    Returns:
        ChannelSample with arrays of shape (size, N, K)
    """
    if not (tau > 0):
        raise DomainError(f"Monte Carlo needs tau > 0 (no observation at tau={tau})")
    v = profile_values(V)
    s = noise_values(sigma2)
    return _draw(cfg, v, s, tau, rng, size)


def log_det_samples(H_bar: np.ndarray, snr: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    log det(I + snr H_bar H_bar^H) for a batch, via Cholesky.

    Sylvester's identity lets the smaller Gram matrix be factored.

    Args:
        H_bar: Array (n, N, K)
        snr: P/L

    Returns:
        (log-dets of accepted samples, boolean mask of accepted samples)
    """
    n, N, K = H_bar.shape
    if K <= N:
        gram = np.conj(np.swapaxes(H_bar, 1, 2)) @ H_bar
        dim = K
    else:
        gram = H_bar @ np.conj(np.swapaxes(H_bar, 1, 2))
        dim = N
    G = np.eye(dim) + snr * gram

    accepted = np.all(np.isfinite(G.reshape(n, -1)), axis=1)
    values = np.full(n, np.nan)
    idx = np.flatnonzero(accepted)
    if idx.size:
        try:
            chol = np.linalg.cholesky(G[idx])
            values[idx] = 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=1, axis2=2))), axis=1)
        except np.linalg.LinAlgError:
            for i in idx:
                try:
                    chol = np.linalg.cholesky(G[i])
                    values[i] = 2.0 * np.sum(np.log(np.real(np.diag(chol))))
                except np.linalg.LinAlgError:
                    accepted[i] = False
    accepted &= np.isfinite(values)
    return values[accepted], accepted


def _block_sizes(n_samples: int) -> List[int]:
    full, rest = divmod(n_samples, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def _run_block(cfg: SystemConfig, v: np.ndarray, s: np.ndarray, tau: float,
               seed: int, block: int, size: int) -> Tuple[np.ndarray, int]:
    sample = _draw(cfg, v, s, tau, block_generator(seed, block), size)
    values, accepted = log_det_samples(sample.H_bar, cfg.snr)
    return values, int(size - accepted.sum())


def estimate_rate(cfg: SystemConfig, V, sigma2, tau: float, n_samples: int = DEFAULT_SAMPLES,
                  seed: int = 0, workers: int = 1) -> MonteCarloEstimate:
    """
    Monte Carlo estimate of R(tau) = (1/N) E[log det(I + (P/L) H_bar H_bar^H)].

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        tau: Training length (> 0)
        n_samples: Number of channel draws
        seed: Master seed
        workers: Thread count for block evaluation

    Returns:
        MonteCarloEstimate in nats/channel use/BS antenna
    """
    if n_samples < 1:
        raise DomainError(f"n_samples must be >= 1, got {n_samples}")
    if not (tau > 0):
        raise DomainError(f"Monte Carlo needs tau > 0 (no observation at tau={tau})")
    v = profile_values(V)
    s = noise_values(sigma2)
    sizes = _block_sizes(n_samples)

    def job(item):
        block, size = item
        return _run_block(cfg, v, s, tau, seed, block, size)

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, enumerate(sizes)))
    else:
        results = [job(item) for item in enumerate(sizes)]

    # Ordered reduction keeps the sum independent of scheduling
    values = np.concatenate([r[0] for r in results])
    rejected = sum(r[1] for r in results)
    if rejected:
        logger.warning(f"Rejected {rejected}/{n_samples} Monte Carlo samples at tau={tau}")
    if rejected > MAX_REJECTION_RATE * n_samples:
        raise SamplingError(
            f"{rejected} of {n_samples} samples rejected (limit {MAX_REJECTION_RATE:.1%})",
            rejected=rejected,
            total=n_samples,
        )

    per_antenna = values / v.shape[0]
    mean = float(np.mean(per_antenna))
    if per_antenna.size > 1:
        std_err = float(np.std(per_antenna, ddof=1) / math.sqrt(per_antenna.size))
    else:
        std_err = math.nan
    return MonteCarloEstimate(mean=mean, std_err=std_err, n_samples=int(per_antenna.size),
                              seed=seed, rejected=rejected)


def estimate_net_rate(cfg: SystemConfig, V, sigma2, tau: float, n_samples: int = DEFAULT_SAMPLES,
                      seed: int = 0, workers: int = 1) -> MonteCarloEstimate:
    """
    Monte Carlo estimate of R_net(tau) = (1 - tau/T) R(tau).

    Args:
        cfg: System configuration
        V: Raw variance profile
        sigma2: Quantization noise
        tau: Training length, 0 < tau <= T
        n_samples: Number of channel draws
        seed: Master seed
        workers: Thread count

    Returns:
        MonteCarloEstimate with mean and std_err scaled by 1 - tau/T
    """
    factor = net_rate_factor(tau, cfg.T)
    return estimate_rate(cfg, V, sigma2, tau, n_samples, seed, workers).scaled(factor)
