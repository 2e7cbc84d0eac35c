"""
Unit tests for the Monte Carlo rate estimator.
"""

import math

import numpy as np
import pytest
from scipy.special import exp1

from netrate import monte_carlo
from netrate.det_equiv import rate_at
from netrate.exceptions import DomainError, SamplingError
from netrate.monte_carlo import (
    BLOCK_SIZE,
    block_generator,
    estimate_net_rate,
    estimate_rate,
    log_det_samples,
    sample_effective_channel,
)
from netrate.system_model import (
    SystemConfig,
    build_variance_profile,
    effective_profile,
    estimation_variances,
    quantization_noise,
)


def test_block_generator_is_deterministic():
    """Test that a (seed, block) pair always gives the same stream."""
    a = block_generator(7, 3).standard_normal(5)
    b = block_generator(7, 3).standard_normal(5)
    c = block_generator(7, 4).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_shapes_and_split(reference_model):
    """Test H = H_hat + H_tilde and output shapes."""
    cfg, V, sigma2 = reference_model
    sample = sample_effective_channel(cfg, V, sigma2, 10.0, np.random.default_rng(0), size=4)

    assert sample.H.shape == (4, 6, 3)
    assert sample.H_bar.shape == (4, 6, 3)
    np.testing.assert_allclose(sample.H_hat + sample.H_tilde, sample.H, atol=1e-12)


def test_sample_second_moments(reference_model):
    """Test empirical variances of estimate, error and effective channel."""
    cfg, V, sigma2 = reference_model
    tau = 5.0
    sample = sample_effective_channel(cfg, V, sigma2, tau, np.random.default_rng(1), size=40_000)
    v_hat, v_tilde = estimation_variances(cfg, V, sigma2, tau)
    v_bar, _ = effective_profile(cfg, V, sigma2, tau)

    np.testing.assert_allclose(np.mean(np.abs(sample.H_hat) ** 2, axis=0), v_hat.values, rtol=0.05)
    np.testing.assert_allclose(np.mean(np.abs(sample.H_tilde) ** 2, axis=0), v_tilde.values, rtol=0.05)
    np.testing.assert_allclose(np.mean(np.abs(sample.H_bar) ** 2, axis=0), v_bar.values, rtol=0.05)

    # MMSE error is orthogonal to the estimate
    cross = np.mean(sample.H_hat * np.conj(sample.H_tilde), axis=0)
    assert np.all(np.abs(cross) < 0.05 * V.values)


def test_sample_rejects_zero_training(reference_model):
    """Test that tau = 0 leaves nothing to observe."""
    cfg, V, sigma2 = reference_model
    with pytest.raises(DomainError, match="tau > 0"):
        sample_effective_channel(cfg, V, sigma2, 0.0, np.random.default_rng(0))


@pytest.mark.parametrize("N,K", [(6, 3), (2, 5), (4, 4)])
def test_log_det_matches_slogdet(N, K):
    """Test the Cholesky log-det on either Gram side against slogdet."""
    rng = np.random.default_rng(N * 10 + K)
    H = (rng.standard_normal((8, N, K)) + 1j * rng.standard_normal((8, N, K))) / math.sqrt(2)
    snr = 3.0

    values, accepted = log_det_samples(H, snr)

    expected = [np.linalg.slogdet(np.eye(N) + snr * h @ h.conj().T)[1] for h in H]
    assert accepted.all()
    np.testing.assert_allclose(values, expected, rtol=1e-12)


def test_log_det_rejects_non_finite():
    """Test that non-finite channels are rejected, not averaged."""
    H = np.ones((3, 2, 2), dtype=complex)
    H[1, 0, 0] = np.nan

    values, accepted = log_det_samples(H, 1.0)

    np.testing.assert_array_equal(accepted, [True, False, True])
    assert values.shape == (2,)


def test_estimate_is_reproducible(reference_model):
    """Test that equal seeds give equal estimates and different seeds differ."""
    cfg, V, sigma2 = reference_model
    a = estimate_rate(cfg, V, sigma2, 40.0, n_samples=600, seed=11)
    b = estimate_rate(cfg, V, sigma2, 40.0, n_samples=600, seed=11)
    c = estimate_rate(cfg, V, sigma2, 40.0, n_samples=600, seed=12)

    assert a == b
    assert a.mean != c.mean


def test_estimate_independent_of_workers(reference_model):
    """Test bit-identical results for any worker count."""
    cfg, V, sigma2 = reference_model
    n = 3 * BLOCK_SIZE + 17
    serial = estimate_rate(cfg, V, sigma2, 40.0, n_samples=n, seed=3, workers=1)
    parallel = estimate_rate(cfg, V, sigma2, 40.0, n_samples=n, seed=3, workers=4)

    assert serial.mean == parallel.mean
    assert serial.std_err == parallel.std_err
    assert serial.n_samples == n


def test_single_sample_has_no_std_err(reference_model):
    """Test that one sample gives a mean but a NaN standard error."""
    cfg, V, sigma2 = reference_model
    est = estimate_rate(cfg, V, sigma2, 40.0, n_samples=1, seed=0)
    assert math.isfinite(est.mean)
    assert math.isnan(est.std_err)


def test_estimate_rejects_bad_arguments(reference_model):
    """Test domain checks on sample count and training length."""
    cfg, V, sigma2 = reference_model
    with pytest.raises(DomainError):
        estimate_rate(cfg, V, sigma2, 40.0, n_samples=0)
    with pytest.raises(DomainError):
        estimate_rate(cfg, V, sigma2, 0.0, n_samples=10)


def test_too_many_rejections_raise(reference_model, monkeypatch):
    """Test that a high rejection rate is a sampling error."""
    cfg, V, sigma2 = reference_model

    def reject_all(H_bar, snr):
        return np.empty(0), np.zeros(H_bar.shape[0], dtype=bool)

    monkeypatch.setattr(monte_carlo, "log_det_samples", reject_all)

    with pytest.raises(SamplingError) as excinfo:
        estimate_rate(cfg, V, sigma2, 40.0, n_samples=100, seed=0)
    assert excinfo.value.rejected == 100
    assert excinfo.value.total == 100


def test_rejected_samples_excluded_from_count(reference_model, monkeypatch):
    """Test that n_samples counts only the draws the mean is taken over."""
    cfg, V, sigma2 = reference_model
    original = monte_carlo.log_det_samples
    dropped = []

    def drop_one(H_bar, snr):
        values, accepted = original(H_bar, snr)
        if dropped:
            return values, accepted
        dropped.append(True)
        accepted = accepted.copy()
        accepted[np.flatnonzero(accepted)[0]] = False
        return values[1:], accepted

    monkeypatch.setattr(monte_carlo, "log_det_samples", drop_one)

    est = estimate_rate(cfg, V, sigma2, 40.0, n_samples=2000, seed=0, workers=1)

    assert est.rejected == 1
    assert est.n_samples == 1999
    assert est.n_samples + est.rejected == 2000


def test_net_rate_scales_by_training_overhead(reference_model):
    """Test R_net = (1 - tau/T) R for the same seed."""
    cfg, V, sigma2 = reference_model
    gross = estimate_rate(cfg, V, sigma2, 100.0, n_samples=300, seed=5)
    net = estimate_net_rate(cfg, V, sigma2, 100.0, n_samples=300, seed=5)

    assert net.mean == pytest.approx(0.9 * gross.mean, rel=1e-14)
    assert net.std_err == pytest.approx(0.9 * gross.std_err, rel=1e-14)


def test_scalar_rayleigh_ergodic_rate():
    """Test E[log(1 + |h|^2)] = e E1(1) for a single unit-variance link."""
    cfg = SystemConfig(B=1, M=1, K=1, L=1, P=1.0)
    V = build_variance_profile(np.ones((1, 1)), 1)
    sigma2 = quantization_noise(cfg, V)

    est = estimate_rate(cfg, V, sigma2, 1e12, n_samples=100_000, seed=2024)

    exact = math.e * exp1(1.0)
    assert exact == pytest.approx(0.596347, abs=1e-6)
    assert abs(est.mean - exact) <= 3 * est.std_err


@pytest.mark.slow
@pytest.mark.parametrize("C", [1.0, 5.0, 10.0])
def test_deterministic_equivalent_accuracy(reference_pathloss, C):
    """Test MC vs deterministic equivalent on the reference setup at tau=40."""
    for snr_db in (-10.0, 0.0, 10.0, 20.0, 30.0):
        cfg = SystemConfig.from_snr_db(snr_db, B=3, M=2, K=3, L=1, T=1000, C=C)
        V = build_variance_profile(reference_pathloss, cfg.M)
        sigma2 = quantization_noise(cfg, V)

        mc = estimate_net_rate(cfg, V, sigma2, 40.0, n_samples=10_000, seed=1)
        det = (1 - 40.0 / cfg.T) * rate_at(cfg, V, sigma2, 40.0)

        assert abs(mc.mean - det) <= max(0.02 * det, 3 * mc.std_err), f"SNR {snr_db} dB"


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
