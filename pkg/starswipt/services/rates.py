"""
Exact SINRs, rates, harvested energy and worst-case secrecy of a fixed design
"""

import logging
from typing import Tuple

import numpy as np

from starswipt.core.exceptions import DimensionError
from starswipt.schemas.design import PrecoderSet, RISProfile
from starswipt.schemas.report import RateReport
from starswipt.schemas.scenario import ChannelSet
from starswipt.services.scenario import Seed, make_rng, sample_uncertainty
from starswipt.services.surrogates import robust_abs_max, robust_sq_min

logger = logging.getLogger(__name__)

# Slack on "bound >= sampled" comparisons
DOMINANCE_TOL = 1e-9


def combined_channel(g: np.ndarray, Theta: np.ndarray, H: np.ndarray) -> np.ndarray:
    """g^H Theta H as a length-N_T row; Theta may be the diagonal matrix or its diagonal"""
    g = np.asarray(g, dtype=complex)
    H = np.asarray(H, dtype=complex)
    Theta = np.asarray(Theta, dtype=complex)
    if Theta.ndim == 1:
        Theta = np.diag(Theta)
    if g.ndim != 1 or H.ndim != 2 or Theta.shape != (g.shape[0], g.shape[0]) or H.shape[0] != g.shape[0]:
        raise DimensionError(
            f"combined channel needs g (M), Theta (M x M), H (M x N); got {g.shape}, {Theta.shape}, {H.shape}"
        )
    return g.conj() @ Theta @ H


def user_channels(channels: ChannelSet, ris: RISProfile) -> Tuple[np.ndarray, np.ndarray]:
    """Combined rows for every IR (transmission side) and every UER estimate (reflection side)"""
    if ris.n_ris != channels.n_ris:
        raise DimensionError(f"profile has {ris.n_ris} elements, channels have {channels.n_ris}")
    h_t = np.array([combined_channel(g, ris.u_t, channels.H) for g in channels.g_t])
    h_r = np.array([combined_channel(g, ris.u_r, channels.H) for g in channels.g_r_hat])
    return h_t, h_r


def _stream_powers(pre: PrecoderSet, rows: np.ndarray) -> np.ndarray:
    """|h p|^2 per row and stream (columns: common, private..., energy...)"""
    rows = np.atleast_2d(rows)
    if rows.shape[1] != pre.n_tx:
        raise DimensionError(f"channel rows have {rows.shape[1]} entries, precoders {pre.n_tx}")
    return np.abs(rows @ pre.streams.T) ** 2


def ir_sinrs(pre: PrecoderSet, h_t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(common-stream SINR, private SINR) per IR; the private SINR follows SIC of the common stream"""
    powers = _stream_powers(pre, h_t)
    k = pre.n_ir
    if powers.shape[0] != k:
        raise DimensionError(f"{powers.shape[0]} IR channels for {k} private streams")
    others = powers[:, 1:].sum(axis=1)
    gamma_c = powers[:, 0] / (others + 1.0)
    own = powers[np.arange(k), 1 + np.arange(k)]
    gamma_p = own / (others - own + 1.0)
    return gamma_c, gamma_p


def uer_sinrs(pre: PrecoderSet, h_r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eavesdropping SINRs at UER rows: common (rows,) and private (K, rows); no SIC at the UER"""
    powers = _stream_powers(pre, h_r)
    total = powers.sum(axis=1)
    common = powers[:, 0] / (total - powers[:, 0] + 1.0)
    private = np.array([powers[:, 1 + k] / (total - powers[:, 1 + k] + 1.0) for k in range(pre.n_ir)])
    return common, private


def harvested_energy(pre: PrecoderSet, h_r: np.ndarray) -> np.ndarray:
    """Q_j with unit conversion efficiency"""
    return _stream_powers(pre, h_r).sum(axis=1)


def reflected_streams(pre: PrecoderSet, channels: ChannelSet, ris: RISProfile) -> np.ndarray:
    """Theta_r H p for every stream, as rows"""
    return (ris.Theta_r @ channels.H @ pre.streams.T).T


def bound_leakage(pre: PrecoderSet, primes: np.ndarray, g_hat: np.ndarray, nu: float):
    """Closed-form worst-case leakage SINRs and energy floor at one UER"""
    peak = np.array([robust_abs_max(g_hat, p, nu) for p in primes]) ** 2
    floor = np.array([max(0.0, robust_sq_min(g_hat, p, nu)) for p in primes])
    total_floor = floor.sum()
    common = peak[0] / (total_floor - floor[0] + 1.0)
    private = np.array([peak[1 + k] / (total_floor - floor[1 + k] + 1.0) for k in range(pre.n_ir)])
    return common, private, total_floor


def worst_case_secrecy(pre: PrecoderSet, ris: RISProfile, channels: ChannelSet, n_samples: int,
                       seed: Seed = 0) -> RateReport:
    """Rates, leakage and secrecy totals with the inner max over the CSI ball taken two ways"""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = make_rng(seed)
    h_t, h_r = user_channels(channels, ris)
    gamma_c, gamma_p = ir_sinrs(pre, h_t)
    r_ck = np.log2(1.0 + gamma_c)
    r_c = float(np.min(r_ck))
    # Allocated common rate, capped by what every IR can decode
    r_c_alloc = r_c if pre.common_rate is None else min(float(pre.common_rate), r_c)
    r_k = np.log2(1.0 + gamma_p)

    primes = reflected_streams(pre, channels, ris)
    nu = channels.nu
    n_uer, n_ir = channels.n_uer, channels.n_ir
    leak_c_bound = np.zeros(n_uer)
    leak_p_bound = np.zeros((n_ir, n_uer))
    leak_c_sampled = np.zeros(n_uer)
    leak_p_sampled = np.zeros((n_ir, n_uer))
    energy_bound = np.zeros(n_uer)
    energy_sampled = np.zeros(n_uer)

    for j, g_hat in enumerate(channels.g_r_hat):
        common, private, floor = bound_leakage(pre, primes, g_hat, nu)
        leak_c_bound[j] = np.log2(1.0 + common)
        leak_p_bound[:, j] = np.log2(1.0 + private)
        energy_bound[j] = floor

        # Nominal estimate plus ball samples
        deltas = np.vstack([np.zeros((1, channels.n_ris)), sample_uncertainty(g_hat, nu, rng, n_samples)])
        rows = (g_hat[None, :] + deltas).conj() @ ris.Theta_r @ channels.H
        s_common, s_private = uer_sinrs(pre, rows)
        leak_c_sampled[j] = np.log2(1.0 + s_common.max())
        leak_p_sampled[:, j] = np.log2(1.0 + s_private.max(axis=1))
        energy_sampled[j] = harvested_energy(pre, rows).min()

    secrecy_bound = pre.alpha * np.maximum(0.0, r_c_alloc - leak_c_bound.max()) + np.maximum(
        0.0, r_k - leak_p_bound.max(axis=1)
    )
    secrecy_sampled = pre.alpha * np.maximum(0.0, r_c_alloc - leak_c_sampled.max()) + np.maximum(
        0.0, r_k - leak_p_sampled.max(axis=1)
    )

    dominates = bool(
        np.all(leak_c_sampled <= leak_c_bound * (1.0 + DOMINANCE_TOL) + DOMINANCE_TOL)
        and np.all(leak_p_sampled <= leak_p_bound * (1.0 + DOMINANCE_TOL) + DOMINANCE_TOL)
        and np.all(energy_sampled >= energy_bound * (1.0 - DOMINANCE_TOL) - DOMINANCE_TOL)
    )
    if not dominates:
        logger.warning("closed-form worst case does not dominate the sampled one")

    return RateReport(
        alpha=pre.alpha,
        r_ck=r_ck,
        r_c=r_c,
        r_k=r_k,
        leak_common_bound=leak_c_bound,
        leak_private_bound=leak_p_bound,
        leak_common_sampled=leak_c_sampled,
        leak_private_sampled=leak_p_sampled,
        energy_nominal=harvested_energy(pre, h_r),
        energy_worst_bound=energy_bound,
        energy_worst_sampled=energy_sampled,
        secrecy_bound=secrecy_bound,
        secrecy_sampled=secrecy_sampled,
        bound_dominates=dominates,
        decodable_flag=bool(leak_c_bound.max() < r_c),
    )
