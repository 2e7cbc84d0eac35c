"""
Pytest configuration and fixtures.
"""

import numpy as np
import pytest

from netrate.system_model import (
    REFERENCE_PATH_LOSS,
    PathLossMatrix,
    SystemConfig,
    build_variance_profile,
    quantization_noise,
)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: figure-scale Monte Carlo runs")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep NETRATE_* overrides from the developer's shell out of the tests."""
    for var in ("NETRATE_SEED", "NETRATE_SAMPLES", "NETRATE_WORKERS", "NETRATE_LOG_LEVEL"):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture
def reference_pathloss():
    """The 3 x 3 reference inverse path-loss matrix."""
    return PathLossMatrix(REFERENCE_PATH_LOSS.copy())


@pytest.fixture
def reference_cfg():
    """B=3, M=2, K=3, L=1, T=1000 at 10 dB SNR with C=5."""
    return SystemConfig.from_snr_db(10.0, B=3, M=2, K=3, L=1, T=1000, C=5)


@pytest.fixture
def reference_model(reference_cfg, reference_pathloss):
    """(cfg, V, sigma2) for the reference setup."""
    V = build_variance_profile(reference_pathloss, reference_cfg.M)
    return reference_cfg, V, quantization_noise(reference_cfg, V)


@pytest.fixture
def rng():
    """Seeded generator for test inputs."""
    return np.random.default_rng(12345)


@pytest.fixture
def random_model(rng):
    """Factory for random (cfg, V, sigma2) instances."""
    def make(C=None):
        B = int(rng.integers(1, 4))
        M = int(rng.integers(1, 4))
        K = int(rng.integers(1, 5))
        C = float(rng.uniform(1.0, 20.0)) if C is None else C
        snr_db = float(rng.uniform(-5.0, 20.0))
        cfg = SystemConfig.from_snr_db(snr_db, B=B, M=M, K=K, L=1, T=1000, C=C)
        A = rng.uniform(0.05, 3.0, size=(B, K))
        V = build_variance_profile(A, M)
        return cfg, V, quantization_noise(cfg, V)
    return make


@pytest.fixture
def circulant(rng):
    """Factory for random positive circulant K x K matrices (all row and column means equal)."""
    def make(K: int) -> np.ndarray:
        first = rng.uniform(0.1, 2.0, size=K)
        return np.array([np.roll(first, i) for i in range(K)])
    return make
