"""
Shared fixtures: small seeded scenarios and channel sets
"""

import numpy as np
import pytest

from starswipt.schemas.design import PrecoderSet, RISProfile
from starswipt.schemas.scenario import ScenarioConfig
from starswipt.services.scenario import complex_gaussian, synthesize_channels


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end optimization runs (deselect with -m 'not slow')")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    """N_T = M = 2, one IR, one UER, short loops"""
    return ScenarioConfig(
        n_tx=2, n_ris=2, n_ir=1, n_uer=1, seed=3,
        max_outer=2, n_max=10, m_max=10, l_max=20,
        n_ball_samples=200, n_realizations=1,
    )


@pytest.fixture
def small_cfg():
    """Two IRs and two UERs so that every interference term is present"""
    return ScenarioConfig(
        n_tx=3, n_ris=3, n_ir=2, n_uer=2, seed=11,
        max_outer=2, n_max=8, m_max=8, l_max=15,
        n_ball_samples=200, n_realizations=1,
    )


@pytest.fixture
def tiny_channels(tiny_cfg):
    return synthesize_channels(tiny_cfg)


@pytest.fixture
def small_channels(small_cfg):
    return synthesize_channels(small_cfg)


def random_precoders(rng, n_tx, n_ir, n_uer, power=1.0):
    streams = complex_gaussian(rng, (1 + n_ir + n_uer, n_tx))
    streams *= np.sqrt(power / np.sum(np.abs(streams) ** 2))
    alpha = rng.uniform(0.1, 1.0, n_ir)
    return PrecoderSet(
        p_c=streams[0], p_k=streams[1:1 + n_ir], f_j=streams[1 + n_ir:], alpha=alpha / alpha.sum(),
    )


def random_profile(rng, n_ris):
    beta_t = rng.uniform(0.1, 0.9, n_ris)
    return RISProfile(
        beta_t=beta_t, beta_r=1.0 - beta_t,
        theta_t=rng.uniform(0.0, 2.0 * np.pi, n_ris), theta_r=rng.uniform(0.0, 2.0 * np.pi, n_ris),
    )
