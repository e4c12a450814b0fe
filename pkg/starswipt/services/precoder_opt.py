"""
Precoder step: successive convex approximation with the RIS profile held fixed

`build_precoder_program` assembles the convex inner approximation around the
current expansion point. `spca_precoders` iterates it to convergence and
`fipsa` searches for a feasible starting point by minimizing a shared
infeasibility indicator s over the restorable constraints.
"""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from starswipt.core.config import settings
from starswipt.core.exceptions import DimensionError, SubproblemInfeasible
from starswipt.schemas.design import PrecoderSet, RISProfile
from starswipt.schemas.experiment import SPCATraceRow
from starswipt.schemas.scenario import ChannelSet, ScenarioConfig
from starswipt.schemas.state import ExpansionPoint, PrecoderSubproblemState
from starswipt.services.conic import Affine, ComplexAffine, ConicProgram, ConicSolution, add_quad_over_lin, solve
from starswipt.services.rates import bound_leakage, ir_sinrs, reflected_streams, user_channels
from starswipt.services.scenario import Seed, complex_gaussian, make_rng
from starswipt.services.surrogates import (
    gamma_lower_parts,
    log_rate_lower_parts,
    psd_split_parts,
    psi_lower_parts,
    robust_mu,
    theta_lower_parts,
    theta_upper_parts,
)

logger = logging.getLogger(__name__)

# Positive floor for SINR-type expansion values
RHO_FLOOR = 1e-9
# Lower bound on the infeasibility indicator
S_FLOOR = -1.0
# Allowed objective decrease between iterations before a warning
MONOTONE_TOL = 1e-6

POINT_KEYS = ("p_c", "p_k", "f_j", "alpha", "r_c", "alpha_c", "alpha_p", "rho_k", "rho_ck")


def _check_dimensions(channels: ChannelSet, ris: RISProfile, pre: PrecoderSet) -> None:
    if ris.n_ris != channels.n_ris:
        raise DimensionError(f"profile has {ris.n_ris} elements, channels have {channels.n_ris}")
    if (pre.n_tx, pre.n_ir, pre.n_uer) != (channels.n_tx, channels.n_ir, channels.n_uer):
        raise DimensionError("precoder dimensions do not match the channel set")


def lift_point(pre: PrecoderSet, channels: ChannelSet, ris: RISProfile) -> ExpansionPoint:
    """Expansion point of a fresh design from its exact rates and leakage bounds"""
    _check_dimensions(channels, ris, pre)
    h_t, _ = user_channels(channels, ris)
    gamma_c, gamma_p = ir_sinrs(pre, h_t)
    primes = reflected_streams(pre, channels, ris)
    alpha_c = np.zeros(channels.n_uer)
    alpha_p = np.zeros((channels.n_ir, channels.n_uer))
    for j, g_hat in enumerate(channels.g_r_hat):
        common, private, _ = bound_leakage(pre, primes, g_hat, channels.nu)
        alpha_c[j] = np.log2(1.0 + common)
        alpha_p[:, j] = np.log2(1.0 + private)
    return ExpansionPoint(values={
        "p_c": pre.p_c,
        "p_k": pre.p_k,
        "f_j": pre.f_j,
        "alpha": pre.alpha,
        "r_c": float(np.min(np.log2(1.0 + gamma_c))),
        "alpha_c": alpha_c,
        "alpha_p": alpha_p,
        "rho_k": np.maximum(gamma_p, RHO_FLOOR),
        "rho_ck": np.maximum(gamma_c, RHO_FLOOR),
    })


def random_precoders(channels: ChannelSet, cfg: ScenarioConfig, seed: Seed) -> PrecoderSet:
    """Isotropic complex Gaussian streams, each scaled to P_t / (K + J + 1)"""
    rng = make_rng(seed)
    n_streams = 1 + channels.n_ir + channels.n_uer
    streams = complex_gaussian(rng, (n_streams, channels.n_tx))
    streams *= np.sqrt(cfg.pt_linear / n_streams) / np.linalg.norm(streams, axis=1, keepdims=True)
    k = channels.n_ir
    return PrecoderSet(
        p_c=streams[0], p_k=streams[1:1 + k], f_j=streams[1 + k:], alpha=np.full(k, 1.0 / k),
    )


class _Layout:
    """Variable handles of one precoder program"""

    def __init__(self, program: ConicProgram, n_tx: int, n_ir: int, n_uer: int, restoration: bool):
        self.n, self.k, self.j = n_tx, n_ir, n_uer
        K, J = n_ir, n_uer
        self.p_c = program.add_complex("p_c", n_tx)
        self._p_k = program.add_complex("p_k", K * n_tx)
        self._f_j = program.add_complex("f_j", J * n_tx)
        self.r_sec = program.add_scalar("r_sec")
        self.R_c = program.add_scalar("r_c", nonneg=True)
        self.gamma = program.add_vector("gamma", K, nonneg=True)
        self.alpha = program.add_vector("alpha", K, nonneg=True)
        self.alpha_c = program.add_vector("alpha_c", J, nonneg=True)
        self.alpha_p = program.add_vector("alpha_p", K * J, nonneg=True)
        self.rho_c = program.add_vector("rho_cj", J, nonneg=True)
        self.rho_p = program.add_vector("rho_kj", K * J, nonneg=True)
        self.rho_k = program.add_vector("rho_k", K, nonneg=True)
        self.a = program.add_vector("a", J * K, nonneg=True)
        self.b = program.add_vector("b", J * J, nonneg=True)
        self.x_c = program.add_vector("x_c", J, nonneg=True)
        self.x_p = program.add_vector("x_kj", K * J, nonneg=True)
        self.v = program.add_vector("v", J, nonneg=True)
        self.rho_ck = program.add_vector("rho_ck", K, nonneg=True)
        self.lam_c = program.add_vector("lambda_c", J, nonneg=True)
        self.lam_p = program.add_vector("lambda_k", J * K, nonneg=True)
        self.xi = program.add_vector("xi", J * J, nonneg=True)
        # Auxiliaries: inverse-rate epigraphs and norm epigraphs of the reflected streams
        self.w_k = program.add_vector("w_k", K, nonneg=True)
        self.w_ck = program.add_vector("w_ck", K, nonneg=True)
        self.e_c = program.add_scalar("e_c", nonneg=True)
        self.e_k = program.add_vector("e_k", K, nonneg=True)
        if restoration:
            self.s = program.add_scalar("s")
            program.add_geq(self.s, S_FLOOR, "indicator floor")
        else:
            self.s = None

    def p_k(self, k: int) -> ComplexAffine:
        return self._p_k[k * self.n:(k + 1) * self.n]

    def f_j(self, j: int) -> ComplexAffine:
        return self._f_j[j * self.n:(j + 1) * self.n]

    def all_streams(self) -> ComplexAffine:
        return ComplexAffine.stack([self.p_c, self._p_k, self._f_j])

    def slack(self, expr: Affine) -> Affine:
        """Add the indicator to a restorable margin"""
        return expr if self.s is None else expr + self.s

    @staticmethod
    def kj(k: int, j: int, n_uer: int) -> int:
        return k * n_uer + j


def _floor_lower(program: ConicProgram, layout: _Layout, slack: Affine, u: ComplexAffine,
                 u0: np.ndarray, A: np.ndarray, label: str) -> None:
    """slack <= u^H A u through the PSD split around u0"""
    parts = psd_split_parts(u0, A)
    rhs = 2.0 * u.real_inner(parts.linear) + parts.offset - slack
    program.add_square_le((parts.factor @ u).real_stack(), layout.slack(rhs), label)


def _rate_lower(program: ConicProgram, layout: _Layout, rate: Affine, rho: Affine, w: Affine,
                rho0: float, label: str) -> None:
    """rate <= log2(1 + rho) via the tangent of the inverse and w * rho >= 1"""
    intercept, inv_coeff = log_rate_lower_parts(max(rho0, RHO_FLOOR))
    program.add_geq(layout.slack(intercept - inv_coeff * w - rate), 0.0, f"{label} rate")
    program.add_rotated(w, rho, 1.0, f"{label} inverse")


def build_precoder_program(state: PrecoderSubproblemState, channels: ChannelSet, ris: RISProfile,
                           cfg: ScenarioConfig, restoration: bool = False) -> ConicProgram:
    """Convex inner approximation of the secrecy problem around state.point"""
    point = state.point
    missing = [key for key in POINT_KEYS if key not in point]
    if missing:
        raise DimensionError(f"expansion point lacks {missing}")
    _check_dimensions(channels, ris, state.precoders)
    K, J, N = channels.n_ir, channels.n_uer, channels.n_tx
    nu = channels.nu

    program = ConicProgram("fipsa" if restoration else "spca")
    lay = _Layout(program, N, K, J, restoration)

    alpha0 = point["alpha"]
    r_c0 = point.scalar("r_c")
    alpha_c0 = point["alpha_c"]
    alpha_p0 = point["alpha_p"]
    p_c0, p_k0, f_j0 = point["p_c"], point["p_k"], point["f_j"]

    h_t, _ = user_channels(channels, ris)
    T = ris.Theta_r @ channels.H
    reflected_c = T @ lay.p_c
    reflected_k = [T @ lay.p_k(k) for k in range(K)]

    # Common-rate shares on the simplex
    program.add_equal(lay.alpha.sum(), 1.0, "shares sum to one")

    # Secrecy margin per IR and UER, bilinear terms bounded by their tangents
    for k in range(K):
        lo = theta_lower_parts(alpha0[k], r_c0)
        for j in range(J):
            up = theta_upper_parts(alpha0[k], alpha_c0[j])
            a_k, R_c, a_c = lay.alpha[k], lay.R_c, lay.alpha_c[j]
            rhs = (lo.slope * (a_k + R_c) + lo.offset - up.offset - up.slope * (a_k - a_c)
                   + lay.gamma[k] - lay.alpha_p[lay.kj(k, j, J)] - lay.r_sec)
            squares = Affine.stack([0.5 * (a_k - R_c), 0.5 * (a_k + a_c)])
            program.add_square_le(squares, rhs, f"secrecy[k={k + 1},j={j + 1}]")

    # Rates must cover the leakage upper bounds
    for j in range(J):
        program.add_geq(lay.R_c, lay.alpha_c[j], f"common rate covers leakage[j={j + 1}]")
        for k in range(K):
            program.add_geq(lay.gamma[k], lay.alpha_p[lay.kj(k, j, J)],
                            f"private rate covers leakage[k={k + 1},j={j + 1}]")

    # Norm epigraphs of the reflected streams
    program.add_soc(lay.e_c, reflected_c.real_stack(), "reflected common norm")
    for k in range(K):
        program.add_soc(lay.e_k[k], reflected_k[k].real_stack(), f"reflected private norm[k={k + 1}]")

    for j, g_hat in enumerate(channels.g_r_hat):
        mu = robust_mu(g_hat, nu)
        A = T.conj().T @ (np.outer(g_hat, g_hat.conj()) - mu * np.eye(channels.n_ris)) @ T
        c_j = T.conj().T @ g_hat
        tag = f"j={j + 1}"

        # Common-stream leakage at UER j
        slope, intercept = gamma_lower_parts(alpha_c0[j])
        program.add_geq(lay.slack(slope * lay.alpha_c[j] + intercept - 1.0 - lay.rho_c[j]), 0.0,
                        f"common leak rate[{tag}]")
        denom = lay.b[j * J:(j + 1) * J].sum() + lay.a[j * K:(j + 1) * K].sum() + 1.0
        add_quad_over_lin(program, lay.x_c[j], denom, lay.rho_c[j], f"common leak sinr[{tag}]")
        program.add_soc(lay.x_c[j] - nu * lay.e_c, lay.p_c.vdot(c_j).real_stack(), f"common leak peak[{tag}]")
        for k in range(K):
            _floor_lower(program, lay, lay.a[j * K + k], lay.p_k(k), p_k0[k], A,
                         f"private floor at UER[{tag},k={k + 1}]")
        for jj in range(J):
            _floor_lower(program, lay, lay.b[j * J + jj], lay.f_j(jj), f_j0[jj], A,
                         f"energy floor at UER[{tag},j'={jj + 1}]")

        # Private-stream leakage at UER j
        _floor_lower(program, lay, lay.v[j], lay.p_c, p_c0, A, f"common floor at UER[{tag}]")
        for k in range(K):
            kj = lay.kj(k, j, J)
            slope, intercept = gamma_lower_parts(alpha_p0[k, j])
            program.add_geq(lay.slack(slope * lay.alpha_p[kj] + intercept - 1.0 - lay.rho_p[kj]), 0.0,
                            f"private leak rate[k={k + 1},{tag}]")
            others = [lay.a[j * K + kk] for kk in range(K) if kk != k]
            denom = lay.v[j] + lay.b[j * J:(j + 1) * J].sum() + 1.0
            for other in others:
                denom = denom + other
            add_quad_over_lin(program, lay.x_p[kj], denom, lay.rho_p[kj], f"private leak sinr[k={k + 1},{tag}]")
            program.add_soc(lay.x_p[kj] - nu * lay.e_k[k], lay.p_k(k).vdot(c_j).real_stack(),
                            f"private leak peak[k={k + 1},{tag}]")

        # Worst-case energy harvested at UER j
        _floor_lower(program, lay, lay.lam_c[j], lay.p_c, p_c0, A, f"harvest common[{tag}]")
        for k in range(K):
            _floor_lower(program, lay, lay.lam_p[j * K + k], lay.p_k(k), p_k0[k], A,
                         f"harvest private[{tag},k={k + 1}]")
        for jj in range(J):
            _floor_lower(program, lay, lay.xi[j * J + jj], lay.f_j(jj), f_j0[jj], A,
                         f"harvest energy[{tag},j'={jj + 1}]")

    harvested = lay.lam_c.sum() + lay.lam_p.sum() + lay.xi.sum()
    program.add_geq(lay.slack(harvested - cfg.e_th), 0.0, "energy threshold")

    # Rates at the IRs
    rho_k0 = np.maximum(point["rho_k"], RHO_FLOOR)
    rho_ck0 = np.maximum(point["rho_ck"], RHO_FLOOR)
    for k in range(K):
        row = h_t[k][None, :]
        h_col = h_t[k].conj()
        tag = f"k={k + 1}"

        _rate_lower(program, lay, lay.gamma[k], lay.rho_k[k], lay.w_k[k], rho_k0[k], f"private[{tag}]")
        interference = [(row @ lay.p_k(kk)).real_stack() for kk in range(K) if kk != k]
        interference += [(row @ lay.f_j(jj)).real_stack() for jj in range(J)]
        psi = psi_lower_parts(p_k0[k], rho_k0[k], h_col)
        rhs = 2.0 * lay.p_k(k).real_inner(psi.direction) + psi.x_coeff * lay.rho_k[k] - 1.0
        program.add_square_le(Affine.stack(interference or [0.0]), lay.slack(rhs), f"private sinr[{tag}]")

        _rate_lower(program, lay, lay.R_c, lay.rho_ck[k], lay.w_ck[k], rho_ck0[k], f"common[{tag}]")
        interference = [(row @ lay.p_k(kk)).real_stack() for kk in range(K)]
        interference += [(row @ lay.f_j(jj)).real_stack() for jj in range(J)]
        psi = psi_lower_parts(p_c0, rho_ck0[k], h_col)
        rhs = 2.0 * lay.p_c.real_inner(psi.direction) + psi.x_coeff * lay.rho_ck[k] - 1.0
        program.add_square_le(Affine.stack(interference), lay.slack(rhs), f"common sinr[{tag}]")

        # Common-rate threshold per IR
        lo = theta_lower_parts(alpha0[k], r_c0)
        rhs = lo.slope * (lay.alpha[k] + lay.R_c) + lo.offset - cfg.r_c_min
        program.add_square_le(0.5 * (lay.alpha[k] - lay.R_c), lay.slack(rhs), f"common threshold[{tag}]")

    program.add_soc(np.sqrt(cfg.pt_linear), lay.all_streams().real_stack(), "power budget")

    if restoration:
        program.minimize(lay.s)
    else:
        program.maximize(lay.r_sec)
    return program


def _state_from_solution(solution: ConicSolution, channels: ChannelSet, cfg: ScenarioConfig, iteration: int,
                         history: List[float], s: Optional[float], feasible: bool) -> PrecoderSubproblemState:
    values = solution.values
    K, J, N = channels.n_ir, channels.n_uer, channels.n_tx
    alpha = np.clip(values["alpha"], 0.0, None)
    alpha = alpha / alpha.sum() if alpha.sum() > 0.0 else np.full(K, 1.0 / K)
    precoders = PrecoderSet(
        p_c=values["p_c"], p_k=values["p_k"].reshape(K, N), f_j=values["f_j"].reshape(J, N), alpha=alpha,
        common_rate=float(max(values["r_c"][0], 0.0)),
    )
    # Solver tolerance may overshoot the budget slightly
    if precoders.total_power > cfg.pt_linear:
        precoders = precoders.scaled(np.sqrt(cfg.pt_linear / precoders.total_power))
    point = ExpansionPoint(values={
        "p_c": precoders.p_c,
        "p_k": precoders.p_k,
        "f_j": precoders.f_j,
        "alpha": alpha,
        "r_c": float(max(values["r_c"][0], 0.0)),
        "alpha_c": np.clip(values["alpha_c"], 0.0, None),
        "alpha_p": np.clip(values["alpha_p"], 0.0, None).reshape(K, J),
        "rho_k": np.maximum(values["rho_k"], RHO_FLOOR),
        "rho_ck": np.maximum(values["rho_ck"], RHO_FLOOR),
    })
    return PrecoderSubproblemState(
        precoders=precoders,
        point=point,
        iteration=iteration,
        r_sec=float(values["r_sec"][0]),
        s=s,
        feasible=feasible,
        history=list(history),
    )


def restored(s: float) -> bool:
    """Indicator value counts as feasible up to the conic residual tolerance"""
    return s <= settings.residual_tolerance


def fipsa(channels: ChannelSet, ris: RISProfile, cfg: ScenarioConfig, random_init: Optional[Seed] = None,
          start: Optional[PrecoderSet] = None, trace: Optional[List[SPCATraceRow]] = None) -> PrecoderSubproblemState:
    """Minimize the infeasibility indicator until it reaches zero (up to the residual tolerance), stalls or M_max is hit"""
    if start is None:
        start = random_precoders(channels, cfg, 0 if random_init is None else random_init)
    state = PrecoderSubproblemState(precoders=start, point=lift_point(start, channels, ris))
    previous: Optional[float] = None

    for i in range(1, cfg.m_max + 1):
        solution = solve(build_precoder_program(state, channels, ris, cfg, restoration=True))
        if trace is not None:
            trace.append(SPCATraceRow(stage="fipsa", iteration=i, r_sec=float("nan"),
                                      s=solution.objective if solution.ok else float("nan"),
                                      solver_status=solution.status.value))
        if not solution.ok:
            logger.info("restoration stopped at iteration %d: %s %s", i, solution.status.value, solution.detail)
            break
        s = float(solution.values["s"][0])
        state = _state_from_solution(solution, channels, cfg, i, state.history, s, feasible=restored(s))
        logger.debug("fipsa iteration %d: s=%.6g", i, s)
        if state.feasible:
            break
        # A stall only ends restoration while s is clearly positive; near zero keep pushing to M_max
        if previous is not None and abs(s - previous) < cfg.delta_e and s > cfg.delta_e:
            break
        previous = s

    if state.feasible:
        logger.debug("feasible start found after %d iterations (s=%.3g)", state.iteration, state.s)
    else:
        logger.info("restoration ended infeasible after %d iterations (s=%s)", state.iteration, state.s)
    return state


def spca_precoders(channels: ChannelSet, ris: RISProfile, cfg: ScenarioConfig, init: PrecoderSubproblemState,
                   trace: Optional[List[SPCATraceRow]] = None) -> Tuple[PrecoderSet, float, List[float]]:
    """Iterate the inner approximation until |delta r_sec| < delta_i or N_max iterations"""
    state = init
    history: List[float] = []
    restarted = False
    iteration = 0

    while iteration < cfg.n_max:
        solution = solve(build_precoder_program(state, channels, ris, cfg))
        if not solution.ok:
            if trace is not None:
                trace.append(SPCATraceRow(stage="spca", iteration=iteration + 1, r_sec=float("nan"),
                                          s=float("nan"), solver_status=solution.status.value))
            if restarted:
                raise SubproblemInfeasible("spca", iteration + 1, solution.status.value, solution.detail)
            restarted = True
            logger.info("spca subproblem %s at iteration %d, restoring feasibility",
                        solution.status.value, iteration + 1)
            restored = fipsa(channels, ris, cfg, start=state.precoders, trace=trace)
            if not restored.feasible:
                raise SubproblemInfeasible("spca", iteration + 1, solution.status.value,
                                           "feasibility restoration did not recover")
            state = restored
            continue

        iteration += 1
        r_sec = float(solution.values["r_sec"][0])
        if history and r_sec < history[-1] - MONOTONE_TOL:
            logger.warning("spca objective decreased from %.9g to %.9g at iteration %d",
                           history[-1], r_sec, iteration)
        history.append(r_sec)
        state = _state_from_solution(solution, channels, cfg, iteration, history, None, feasible=True)
        if trace is not None:
            trace.append(SPCATraceRow(stage="spca", iteration=iteration, r_sec=r_sec, s=float("nan"),
                                      solver_status=solution.status.value))
        logger.debug("spca iteration %d: r_sec=%.6g", iteration, r_sec)
        if len(history) > 1 and abs(history[-1] - history[-2]) < cfg.delta_i:
            break

    if not history:
        raise SubproblemInfeasible("spca", iteration, "no-iterate", "no subproblem was solved")
    return state.precoders, history[-1], history


def slack_values(solution: ConicSolution) -> Dict[str, np.ndarray]:
    """Nonnegative slack blocks of a solved precoder program, by name"""
    names = ("gamma", "alpha_c", "alpha_p", "rho_cj", "rho_kj", "rho_k", "a", "b", "x_c", "x_kj", "v",
             "rho_ck", "lambda_c", "lambda_k", "xi")
    return {name: solution.values[name] for name in names if name in solution.values}
