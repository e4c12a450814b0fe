"""
Exact rate, leakage and energy evaluation of fixed designs
"""

import numpy as np
import pytest

from starswipt.core.exceptions import DimensionError
from starswipt.schemas.design import PrecoderSet, RISProfile
from starswipt.schemas.scenario import ChannelSet
from starswipt.services.rates import (
    bound_leakage,
    combined_channel,
    harvested_energy,
    ir_sinrs,
    reflected_streams,
    uer_sinrs,
    user_channels,
    worst_case_secrecy,
)
from starswipt.services.scenario import complex_gaussian

from tests.conftest import random_precoders, random_profile


def with_radius(channels: ChannelSet, nu: float) -> ChannelSet:
    return ChannelSet(H=channels.H, g_t=channels.g_t, g_r_hat=channels.g_r_hat, nu=nu)


# =============================================================================
# Combined channel
# =============================================================================


def test_combined_channel_picks_one_row():
    rng = np.random.default_rng(0)
    H = complex_gaussian(rng, (3, 2))
    g = np.array([1.0, 0.0, 0.0], dtype=complex)
    assert np.allclose(combined_channel(g, np.ones(3), H), H[0])


def test_combined_channel_zero_amplitude():
    rng = np.random.default_rng(1)
    H = complex_gaussian(rng, (3, 2))
    g = complex_gaussian(rng, 3)
    assert np.allclose(combined_channel(g, np.zeros(3), H), 0.0)


def test_combined_channel_matches_elementwise_sum():
    rng = np.random.default_rng(2)
    H = complex_gaussian(rng, (3, 2))
    g = complex_gaussian(rng, 3)
    theta = np.exp(1j * rng.uniform(0, 2 * np.pi, 3)) * np.sqrt(rng.uniform(0, 1, 3))
    expected = sum(np.conj(g[m]) * theta[m] * H[m] for m in range(3))
    assert np.allclose(combined_channel(g, theta, H), expected, atol=1e-12)
    assert np.allclose(combined_channel(g, np.diag(theta), H), expected, atol=1e-12)


def test_combined_channel_shape_mismatch():
    with pytest.raises(DimensionError):
        combined_channel(np.ones(3), np.ones(2), np.ones((3, 2)))


def test_profile_size_must_match(small_channels):
    with pytest.raises(DimensionError):
        user_channels(small_channels, RISProfile.uniform(small_channels.n_ris + 1))


# =============================================================================
# SINRs and energy
# =============================================================================


def test_zero_precoders_give_zero_sinr():
    pre = PrecoderSet.zeros(2, 2, 1)
    h = np.ones((2, 2), dtype=complex)
    gamma_c, gamma_p = ir_sinrs(pre, h)
    assert np.all(gamma_c == 0.0) and np.all(gamma_p == 0.0)


def test_single_ir_unit_gain():
    pre = PrecoderSet(p_c=np.zeros(2), p_k=[[1.0, 0.0]], f_j=[[0.0, 0.0]], alpha=[1.0])
    gamma_c, gamma_p = ir_sinrs(pre, np.array([[1.0, 0.0]]))
    assert gamma_p[0] == pytest.approx(1.0)
    assert np.log2(1.0 + gamma_p[0]) == pytest.approx(1.0)
    assert gamma_c[0] == 0.0


def test_private_sinr_removes_common_stream():
    rng = np.random.default_rng(3)
    pre = random_precoders(rng, 3, 2, 1, power=10.0)
    h = complex_gaussian(rng, (2, 3))
    gamma_c, gamma_p = ir_sinrs(pre, h)
    for k in range(2):
        powers = [abs(h[k] @ s) ** 2 for s in pre.streams]
        assert gamma_c[k] == pytest.approx(powers[0] / (sum(powers[1:]) + 1.0))
        assert gamma_p[k] == pytest.approx(powers[1 + k] / (sum(powers[1:]) - powers[1 + k] + 1.0))


def test_uer_sinr_keeps_every_stream():
    rng = np.random.default_rng(4)
    pre = random_precoders(rng, 3, 2, 2, power=10.0)
    rows = complex_gaussian(rng, (2, 3))
    common, private = uer_sinrs(pre, rows)
    assert private.shape == (2, 2)
    for j in range(2):
        powers = [abs(rows[j] @ s) ** 2 for s in pre.streams]
        assert common[j] == pytest.approx(powers[0] / (sum(powers) - powers[0] + 1.0))
        assert private[1, j] == pytest.approx(powers[2] / (sum(powers) - powers[2] + 1.0))


def test_harvest_counts_every_stream():
    pre = PrecoderSet(p_c=[1.0, 0, 0, 0], p_k=[[0, 1.0, 0, 0], [0, 0, 1.0, 0]], f_j=[[0, 0, 0, 1.0]],
                      alpha=[0.5, 0.5])
    assert harvested_energy(pre, np.ones((1, 4)))[0] == pytest.approx(4.0)


def test_reflected_streams_shape(small_channels, rng):
    pre = random_precoders(rng, small_channels.n_tx, small_channels.n_ir, small_channels.n_uer)
    primes = reflected_streams(pre, small_channels, RISProfile.uniform(small_channels.n_ris))
    assert primes.shape == (1 + small_channels.n_ir + small_channels.n_uer, small_channels.n_ris)


# =============================================================================
# Worst-case secrecy
# =============================================================================


def test_zero_radius_bound_equals_sampled(small_channels, rng):
    channels = with_radius(small_channels, 0.0)
    pre = random_precoders(rng, channels.n_tx, channels.n_ir, channels.n_uer, power=100.0)
    report = worst_case_secrecy(pre, random_profile(rng, channels.n_ris), channels, 50, seed=0)
    assert np.allclose(report.leak_common_bound, report.leak_common_sampled, atol=1e-9)
    assert np.allclose(report.leak_private_bound, report.leak_private_sampled, atol=1e-9)
    assert report.r_sec == pytest.approx(report.r_sec_sampled, abs=1e-9)


def test_bound_dominates_samples(small_channels, rng):
    nu = 0.05 * float(np.linalg.norm(small_channels.g_r_hat[0]))
    channels = with_radius(small_channels, nu)
    pre = random_precoders(rng, channels.n_tx, channels.n_ir, channels.n_uer, power=100.0)
    report = worst_case_secrecy(pre, random_profile(rng, channels.n_ris), channels, 500, seed=1)
    assert report.bound_dominates
    assert np.all(report.leak_common_sampled <= report.leak_common_bound + 1e-9)
    assert np.all(report.energy_worst_sampled >= report.energy_worst_bound - 1e-9)
    assert report.r_sec <= report.r_sec_sampled + 1e-9


def test_secrecy_totals_are_clamped_at_zero(small_channels, rng):
    channels = with_radius(small_channels, 0.5 * float(np.linalg.norm(small_channels.g_r_hat[0])))
    pre = random_precoders(rng, channels.n_tx, channels.n_ir, channels.n_uer, power=100.0)
    report = worst_case_secrecy(pre, RISProfile.uniform(channels.n_ris), channels, 100)
    assert np.all(report.secrecy_bound >= 0.0)
    assert np.all(report.secrecy_sampled >= 0.0)


def test_common_rate_is_minimum_over_irs(small_channels, rng):
    pre = random_precoders(rng, small_channels.n_tx, small_channels.n_ir, small_channels.n_uer, power=100.0)
    report = worst_case_secrecy(pre, RISProfile.uniform(small_channels.n_ris), small_channels, 10)
    assert report.r_c == pytest.approx(report.r_ck.min())
    assert report.sum_rate == pytest.approx(report.r_c + report.r_k.sum())


def test_secrecy_bound_shrinks_with_radius(small_channels, rng):
    pre = random_precoders(rng, small_channels.n_tx, small_channels.n_ir, small_channels.n_uer, power=100.0)
    ris = random_profile(rng, small_channels.n_ris)
    scale = float(np.linalg.norm(small_channels.g_r_hat[0]))
    values = [
        worst_case_secrecy(pre, ris, with_radius(small_channels, f * scale), 10).r_sec
        for f in (0.0, 0.01, 0.1, 0.3)
    ]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_bound_leakage_floor_is_nonnegative(small_channels, rng):
    pre = random_precoders(rng, small_channels.n_tx, small_channels.n_ir, small_channels.n_uer)
    primes = reflected_streams(pre, small_channels, RISProfile.uniform(small_channels.n_ris))
    common, private, floor = bound_leakage(pre, primes, small_channels.g_r_hat[0], 1.0)
    assert floor >= 0.0
    assert common >= 0.0 and np.all(private >= 0.0)


def test_sample_count_must_be_positive(small_channels):
    pre = PrecoderSet.zeros(small_channels.n_tx, small_channels.n_ir, small_channels.n_uer)
    with pytest.raises(ValueError):
        worst_case_secrecy(pre, RISProfile.uniform(small_channels.n_ris), small_channels, 0)


def test_report_row_matches_header(small_channels, rng):
    pre = random_precoders(rng, small_channels.n_tx, small_channels.n_ir, small_channels.n_uer)
    report = worst_case_secrecy(pre, RISProfile.uniform(small_channels.n_ris), small_channels, 10)
    header = report.csv_header(small_channels.n_ir, small_channels.n_uer)
    assert len(report.to_csv_row()) == len(header)
