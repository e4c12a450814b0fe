"""
Precoder step: program structure, feasibility restoration and the SPCA loop
"""

import numpy as np
import pytest

from starswipt.core.config import settings
from starswipt.core.exceptions import DimensionError
from starswipt.schemas.design import RISProfile
from starswipt.schemas.scenario import ScenarioConfig
from starswipt.schemas.state import PrecoderSubproblemState
from starswipt.services.conic import Cone, solve
from starswipt.services.oracle import certify_design
from starswipt.services.precoder_opt import (
    POINT_KEYS,
    RHO_FLOOR,
    build_precoder_program,
    fipsa,
    lift_point,
    random_precoders,
    restored,
    slack_values,
    spca_precoders,
)
from starswipt.services.scenario import synthesize_channels


def expected_count(K: int, J: int) -> int:
    nonneg_blocks = 21
    per_uer = 5 + 5 * K + 2 * J
    return nonneg_blocks + 1 + K * J + (J + K * J) + (1 + K) + J * per_uer + 1 + 7 * K + 1


def start_state(channels, cfg, seed=0):
    pre = random_precoders(channels, cfg, seed)
    ris = RISProfile.uniform(channels.n_ris)
    return PrecoderSubproblemState(precoders=pre, point=lift_point(pre, channels, ris)), ris


@pytest.fixture
def relaxed_cfg(tiny_cfg):
    return tiny_cfg.with_updates(e_th=0.2, r_c_min=0.2)


# =============================================================================
# Expansion points and program structure
# =============================================================================


def test_random_precoders_split_the_budget(small_channels, small_cfg):
    pre = random_precoders(small_channels, small_cfg, 4)
    n_streams = 1 + small_cfg.n_ir + small_cfg.n_uer
    assert pre.total_power == pytest.approx(small_cfg.pt_linear)
    assert np.allclose(np.linalg.norm(pre.streams, axis=1) ** 2, small_cfg.pt_linear / n_streams)
    assert pre.alpha.sum() == pytest.approx(1.0)


def test_lift_point_carries_every_key(small_channels, small_cfg):
    state, _ = start_state(small_channels, small_cfg)
    for key in POINT_KEYS:
        assert key in state.point
    assert np.all(state.point["rho_k"] >= RHO_FLOOR)
    assert state.point["alpha_p"].shape == (small_cfg.n_ir, small_cfg.n_uer)


def test_constraint_count_single_pair(tiny_channels, tiny_cfg):
    state, ris = start_state(tiny_channels, tiny_cfg)
    program = build_precoder_program(state, tiny_channels, ris, tiny_cfg)
    assert len(program.constraints) == 48 == expected_count(1, 1)
    assert program.sense == "max"


def test_constraint_families_two_by_two(small_channels, small_cfg):
    state, ris = start_state(small_channels, small_cfg)
    program = build_precoder_program(state, small_channels, ris, small_cfg)
    K, J = small_cfg.n_ir, small_cfg.n_uer
    assert len(program.constraints) == expected_count(K, J)
    assert program.count(prefix="secrecy[") == K * J
    assert program.count(prefix="common leak sinr[") == J
    assert program.count(prefix="private leak peak[") == K * J
    assert program.count(prefix="energy floor at UER[") == J * J
    assert program.count(prefix="harvest private[") == J * K
    assert program.count(prefix="private[") == 2 * K
    assert program.count(prefix="common[") == 2 * K
    assert program.count(prefix="common threshold[") == K
    assert program.count(Cone.SOC, prefix="power budget") == 1


def test_restoration_adds_the_indicator(tiny_channels, tiny_cfg):
    state, ris = start_state(tiny_channels, tiny_cfg)
    program = build_precoder_program(state, tiny_channels, ris, tiny_cfg, restoration=True)
    assert "s" in program.variables
    assert program.sense == "min"
    assert len(program.constraints) == expected_count(1, 1) + 1


def test_program_rejects_mismatched_profile(tiny_channels, tiny_cfg):
    state, _ = start_state(tiny_channels, tiny_cfg)
    with pytest.raises(DimensionError):
        build_precoder_program(state, tiny_channels, RISProfile.uniform(tiny_channels.n_ris + 1), tiny_cfg)


def test_every_label_is_descriptive(small_channels, small_cfg):
    state, ris = start_state(small_channels, small_cfg)
    program = build_precoder_program(state, small_channels, ris, small_cfg)
    assert all(c.label.strip() for c in program.constraints)


# =============================================================================
# Feasibility restoration
# =============================================================================


def test_restoration_without_qos_is_immediately_feasible(tiny_channels, tiny_cfg):
    cfg = tiny_cfg.with_updates(e_th=0.0, r_c_min=0.0)
    state = fipsa(tiny_channels, RISProfile.uniform(tiny_channels.n_ris), cfg, random_init=1)
    assert state.feasible
    assert restored(state.s)
    assert state.precoders.total_power <= cfg.pt_linear + 1e-6


def test_restoration_reports_infeasible_energy_target(tiny_channels, tiny_cfg):
    cfg = tiny_cfg.with_updates(e_th=1e6, m_max=3)
    trace = []
    state = fipsa(tiny_channels, RISProfile.uniform(tiny_channels.n_ris), cfg, random_init=1, trace=trace)
    assert not state.feasible
    assert 1 <= len(trace) <= cfg.m_max
    assert all(row.stage == "fipsa" for row in trace)


def test_restoration_tolerates_solver_residue():
    # Interior-point solvers leave the indicator a few ulps above zero
    assert restored(0.0)
    assert restored(4.77e-9)
    assert restored(settings.residual_tolerance)
    assert not restored(10.0 * settings.residual_tolerance)
    assert not restored(0.1)


def test_restoration_flag_follows_the_indicator(small_channels, small_cfg):
    cfg = small_cfg.with_updates(e_th=0.2, r_c_min=0.2)
    state = fipsa(small_channels, RISProfile.uniform(small_channels.n_ris), cfg, random_init=6)
    assert state.s is not None
    assert state.feasible == restored(state.s)


def test_slack_blocks_are_nonnegative(tiny_channels, relaxed_cfg):
    state, ris = start_state(tiny_channels, relaxed_cfg)
    solution = solve(build_precoder_program(state, tiny_channels, ris, relaxed_cfg, restoration=True))
    assert solution.ok
    for name, value in slack_values(solution).items():
        assert np.all(value >= -1e-6), name


# =============================================================================
# SPCA
# =============================================================================


def test_spca_is_monotone_and_certified(tiny_channels, relaxed_cfg):
    ris = RISProfile.uniform(tiny_channels.n_ris)
    start = fipsa(tiny_channels, ris, relaxed_cfg, random_init=2)
    assert start.feasible
    trace = []
    pre, r_sec, history = spca_precoders(tiny_channels, ris, relaxed_cfg, start, trace=trace)

    assert 1 <= len(history) <= relaxed_cfg.n_max
    assert r_sec == history[-1]
    assert all(b >= a - 1e-4 * max(1.0, abs(a)) for a, b in zip(history, history[1:]))
    assert len([row for row in trace if row.stage == "spca"]) >= len(history)

    certificate = certify_design(pre, ris, tiny_channels, relaxed_cfg)
    assert certificate.checks["power"]
    assert certificate.checks["simplex"]
    assert certificate.checks["energy"]
    assert certificate.checks["common_rate"]
    assert pre.common_rate is not None


def test_tiny_power_gives_tiny_secrecy(tiny_cfg):
    cfg = tiny_cfg.with_updates(pt_db=-30.0, e_th=0.0, r_c_min=0.0, nu=0.0)
    channels = synthesize_channels(cfg)
    ris = RISProfile.uniform(channels.n_ris)
    start = fipsa(channels, ris, cfg, random_init=0)
    assert start.feasible
    _, r_sec, _ = spca_precoders(channels, ris, cfg, start)
    assert r_sec < 1e-2


def test_spca_converges_on_two_by_two(small_channels, small_cfg):
    cfg = small_cfg.with_updates(e_th=0.2, r_c_min=0.2)
    ris = RISProfile.uniform(small_channels.n_ris)
    start = fipsa(small_channels, ris, cfg, random_init=5)
    assert start.feasible
    pre, _, history = spca_precoders(small_channels, ris, cfg, start)
    assert pre.total_power <= cfg.pt_linear + 1e-6
    assert np.all(pre.alpha >= 0.0)
    assert pre.alpha.sum() == pytest.approx(1.0)
    assert len(history) <= cfg.n_max


def test_default_config_is_restorable():
    cfg = ScenarioConfig(n_tx=2, n_ris=2, n_ir=1, n_uer=1, seed=8, m_max=15)
    channels = synthesize_channels(cfg)
    state = fipsa(channels, RISProfile.uniform(channels.n_ris), cfg, random_init=0)
    assert state.s is not None
