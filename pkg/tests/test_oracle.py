"""
Brute-force validators: design certification, tiny grid search and surrogate audit
"""

import numpy as np
import pytest

from starswipt.core.exceptions import DimensionError
from starswipt.schemas.design import PrecoderSet, RISProfile
from starswipt.schemas.scenario import ChannelSet
from starswipt.services.oracle import (
    AUDIT_CHECKS,
    AUDIT_HEADER,
    FULL_GRID_DENSITY,
    certify_design,
    grid_search_tiny,
    surrogate_audit,
)
from starswipt.services.pipeline import alternate
from starswipt.services.rates import worst_case_secrecy
from starswipt.services.scenario import synthesize_channels

from tests.conftest import random_precoders


def without_error(channels: ChannelSet) -> ChannelSet:
    return ChannelSet(H=channels.H, g_t=channels.g_t, g_r_hat=channels.g_r_hat, nu=0.0)


# =============================================================================
# Certification
# =============================================================================


def test_zero_design_fails_only_the_qos_checks(tiny_channels, tiny_cfg):
    cfg = tiny_cfg.with_updates(e_th=0.0)
    pre = PrecoderSet.zeros(tiny_channels.n_tx, 1, 1)
    certificate = certify_design(pre, RISProfile.uniform(tiny_channels.n_ris), tiny_channels, cfg)
    assert certificate.checks["power"]
    assert certificate.checks["simplex"]
    assert certificate.checks["energy"]
    assert not certificate.checks["common_threshold"]
    assert certificate.failed == ["common_threshold"]
    assert not certificate.passed


def test_power_overshoot_fails(tiny_channels, tiny_cfg, rng):
    pre = random_precoders(rng, tiny_channels.n_tx, 1, 1, power=tiny_cfg.pt_linear)
    over = pre.scaled(np.sqrt(1.01))
    certificate = certify_design(over, RISProfile.uniform(tiny_channels.n_ris), tiny_channels, tiny_cfg)
    assert not certificate.checks["power"]
    assert certificate.total_power == pytest.approx(1.01 * tiny_cfg.pt_linear)


def test_relaxed_design_passes(tiny_channels, tiny_cfg, rng):
    cfg = tiny_cfg.with_updates(e_th=0.0, r_c_min=0.0)
    pre = random_precoders(rng, tiny_channels.n_tx, 1, 1, power=cfg.pt_linear)
    certificate = certify_design(pre, RISProfile.uniform(tiny_channels.n_ris), tiny_channels, cfg)
    assert certificate.passed
    assert certificate.r_sec_sampled >= 0.0


def test_certificate_agrees_with_rate_evaluation(small_channels, small_cfg, rng):
    pre = random_precoders(rng, small_channels.n_tx, small_channels.n_ir, small_channels.n_uer, power=50.0)
    ris = RISProfile.uniform(small_channels.n_ris)
    certificate = certify_design(pre, ris, small_channels, small_cfg, n_ball_samples=100, seed=3)
    report = worst_case_secrecy(pre, ris, small_channels, 100, seed=3)
    assert certificate.r_c == pytest.approx(report.r_c, rel=1e-9)
    assert np.allclose(certificate.secrecy_sampled, report.secrecy_sampled, atol=1e-9)
    assert certificate.energy_sampled == pytest.approx(report.energy_worst_sampled.sum(), rel=1e-9)


def test_overallocated_common_rate_fails(tiny_channels, tiny_cfg, rng):
    cfg = tiny_cfg.with_updates(e_th=0.0, r_c_min=0.0)
    pre = random_precoders(rng, tiny_channels.n_tx, 1, 1, power=cfg.pt_linear)
    ris = RISProfile.uniform(tiny_channels.n_ris)
    exact = certify_design(pre, ris, tiny_channels, cfg).r_c
    assert certify_design(pre.with_common_rate(exact), ris, tiny_channels, cfg).checks["common_rate"]
    over = certify_design(pre.with_common_rate(exact + 0.1), ris, tiny_channels, cfg)
    assert not over.checks["common_rate"]
    assert over.failed == ["common_rate"]


def test_threshold_uses_the_allocated_common_rate(tiny_channels, tiny_cfg, rng):
    pre = random_precoders(rng, tiny_channels.n_tx, 1, 1, power=tiny_cfg.pt_linear)
    ris = RISProfile.uniform(tiny_channels.n_ris)
    exact = certify_design(pre, ris, tiny_channels, tiny_cfg.with_updates(e_th=0.0, r_c_min=0.0)).r_c
    cfg = tiny_cfg.with_updates(e_th=0.0, r_c_min=0.5 * exact)
    assert certify_design(pre, ris, tiny_channels, cfg).checks["common_threshold"]
    assert not certify_design(pre.with_common_rate(0.25 * exact), ris, tiny_channels, cfg).checks["common_threshold"]


def test_reported_secrecy_is_checked(small_channels, small_cfg, rng):
    cfg = small_cfg.with_updates(e_th=0.0, r_c_min=0.0)
    pre = random_precoders(rng, small_channels.n_tx, small_channels.n_ir, small_channels.n_uer, power=50.0)
    ris = RISProfile.uniform(small_channels.n_ris)
    report = worst_case_secrecy(pre, ris, small_channels, 100, seed=3)
    honest = certify_design(pre, ris, small_channels, cfg, n_ball_samples=100, seed=3, reported_r_sec=report.r_sec)
    assert honest.checks["secrecy"]
    assert honest.passed
    inflated = certify_design(pre, ris, small_channels, cfg, n_ball_samples=100, seed=3,
                              reported_r_sec=honest.r_sec_sampled + 1.0)
    assert inflated.failed == ["secrecy"]


def test_secrecy_check_only_with_a_report(tiny_channels, tiny_cfg, rng):
    pre = random_precoders(rng, tiny_channels.n_tx, 1, 1, power=tiny_cfg.pt_linear)
    certificate = certify_design(pre, RISProfile.uniform(tiny_channels.n_ris), tiny_channels, tiny_cfg)
    assert "secrecy" not in certificate.checks


def test_certification_checks_dimensions(tiny_channels, tiny_cfg):
    pre = PrecoderSet.zeros(tiny_channels.n_tx, 2, 1)
    with pytest.raises(DimensionError):
        certify_design(pre, RISProfile.uniform(tiny_channels.n_ris), tiny_channels, tiny_cfg)


# =============================================================================
# Grid search
# =============================================================================


def test_single_point_grid_matches_rate_evaluation(tiny_channels, tiny_cfg):
    cfg = tiny_cfg.with_updates(e_th=0.0, r_c_min=0.0)
    channels = without_error(tiny_channels)
    grid = grid_search_tiny(channels, cfg, grid_density=1, n_ball_samples=10)
    assert grid.found
    assert grid.n_points == 1
    report = worst_case_secrecy(grid.precoders, grid.ris, channels, 10)
    assert grid.r_sec == pytest.approx(report.r_sec_sampled, rel=1e-9, abs=1e-12)
    assert grid.precoders.total_power == pytest.approx(cfg.pt_linear)


def test_density_two_grid_size(tiny_channels, tiny_cfg):
    cfg = tiny_cfg.with_updates(e_th=0.0, r_c_min=0.0)
    grid = grid_search_tiny(tiny_channels, cfg, grid_density=2, n_ball_samples=20)
    # (2 x 2 phases, 3 amplitudes) per element, 4 directions per stream, 6 power splits
    assert grid.n_points == 12 ** 2 * 4 ** 3 * 6
    assert grid.found
    assert grid.n_feasible == grid.n_points
    assert grid.r_sec >= 0.0


def test_unreachable_targets_find_nothing(tiny_channels, tiny_cfg):
    cfg = tiny_cfg.with_updates(e_th=1e9)
    grid = grid_search_tiny(tiny_channels, cfg, grid_density=1, n_ball_samples=10)
    assert not grid.found
    assert grid.n_feasible == 0


def test_grid_rejects_large_instances(small_channels, small_cfg):
    with pytest.raises(DimensionError):
        grid_search_tiny(small_channels, small_cfg)


# =============================================================================
# Surrogate audit
# =============================================================================


def test_empty_audit():
    report = surrogate_audit(0)
    assert report.entries == []
    assert report.passed


def test_audit_has_no_violations():
    report = surrogate_audit(2000, seed=4)
    assert [entry.operator for entry in report.entries] == list(AUDIT_CHECKS)
    for entry in report.entries:
        assert entry.violations == 0, entry.operator
        assert entry.tangency_residual <= 1e-9, entry.operator
    assert report.passed


def test_gamma_tangency_is_tight():
    assert surrogate_audit(500, seed=1).entry("gamma_lower").tangency_residual < 1e-12


def test_audit_rows_match_header():
    entry = surrogate_audit(5).entries[0]
    assert len(entry.to_csv_row()) == len(AUDIT_HEADER)


@pytest.mark.slow
def test_full_audit():
    assert surrogate_audit(10_000, seed=0).passed


def test_full_grid_size(tiny_channels, tiny_cfg):
    cfg = tiny_cfg.with_updates(e_th=0.0, r_c_min=0.0)
    grid = grid_search_tiny(tiny_channels, cfg, grid_density=FULL_GRID_DENSITY, n_ball_samples=5)
    # (4 x 4 phases, 5 amplitudes) per element, 6 directions per stream, 15 power splits
    assert grid.n_points == 80 ** 2 * 6 ** 3 * 15
    assert grid.n_feasible == grid.n_points


def test_grid_best_matches_its_own_evaluation(tiny_channels, tiny_cfg):
    cfg = tiny_cfg.with_updates(e_th=0.0, r_c_min=0.0)
    grid = grid_search_tiny(tiny_channels, cfg, grid_density=2, n_ball_samples=30, seed=2)
    report = worst_case_secrecy(grid.precoders, grid.ris, tiny_channels, 30, seed=2)
    assert grid.r_sec == pytest.approx(report.r_sec_sampled, rel=1e-9, abs=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_alternation_reaches_the_full_grid_optimum(tiny_cfg, seed):
    cfg = tiny_cfg.with_updates(seed=seed, e_th=0.2, r_c_min=0.2, max_outer=5, n_ball_samples=1000)
    channels = synthesize_channels(cfg)
    grid = grid_search_tiny(channels, cfg, grid_density=FULL_GRID_DENSITY, n_ball_samples=1000)
    pre, ris, _ = alternate(channels, cfg)
    certificate = certify_design(pre, ris, channels, cfg, seed=cfg.seed)
    assert certificate.passed
    if grid.found:
        assert certificate.r_sec_sampled >= 0.9 * grid.r_sec - 1e-2
