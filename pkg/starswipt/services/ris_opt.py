"""
RIS step: transmission and reflection beamforming with the precoders held fixed

Matrices follow V_p = v_p v_p^H with v_p = conj(u_p), so that
|g^H Theta_p H p_n|^2 = Tr(V_p hbar hbar^H) with hbar = diag(g^H) H p_n.
"""

import logging
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from starswipt.core.exceptions import DimensionError, DomainError
from starswipt.schemas.design import PrecoderSet, RISProfile
from starswipt.schemas.experiment import RISTraceRow
from starswipt.schemas.scenario import ChannelSet, ScenarioConfig
from starswipt.schemas.state import RISSubproblemState
from starswipt.services.conic import Affine, ConicProgram, MatrixVariable, solve
from starswipt.services.surrogates import rate_taylor_parts, theta_lower_parts

logger = logging.getLogger(__name__)

# Streams whose effective gain is below this are treated as switched off
NEGLIGIBLE_GAIN = 1e-12
# Rank-one relaxation gives up once the step size falls below this
MIN_STEP = 1e-6


class EffectiveVectors(NamedTuple):
    """Per-stream effective vectors; stream axis is (common, private..., energy...)"""

    t: np.ndarray      # K x S x M, transmission side
    r: np.ndarray      # J x S x M, reflection side (estimated channels)
    drive: np.ndarray  # S x M, H p_n


def effective_vectors(channels: ChannelSet, pre: PrecoderSet) -> EffectiveVectors:
    if pre.n_tx != channels.n_tx:
        raise DimensionError(f"precoders have {pre.n_tx} antennas, channels {channels.n_tx}")
    if (pre.n_ir, pre.n_uer) != (channels.n_ir, channels.n_uer):
        raise DimensionError("precoder stream counts do not match the channel set")
    drive = (channels.H @ pre.streams.T).T
    t = channels.g_t.conj()[:, None, :] * drive[None, :, :]
    r = channels.g_r_hat.conj()[:, None, :] * drive[None, :, :]
    return EffectiveVectors(t=t, r=r, drive=drive)


def _gain(V: np.ndarray, hbar: np.ndarray) -> float:
    return float(np.real(np.vdot(hbar, V @ hbar)))


def profile_matrices(ris: RISProfile) -> Tuple[np.ndarray, np.ndarray]:
    """Rank-one (V_t, V_r) of a profile"""
    v_t, v_r = ris.u_t.conj(), ris.u_r.conj()
    return np.outer(v_t, v_t.conj()), np.outer(v_r, v_r.conj())


def _leading(V: np.ndarray) -> Tuple[float, np.ndarray]:
    w, U = np.linalg.eigh(0.5 * (V + V.conj().T))
    return float(max(w[-1], 0.0)), U[:, -1]


def _private_active(ev: EffectiveVectors, k: int) -> bool:
    return float(np.linalg.norm(ev.t[k, 1 + k]) ** 2) > NEGLIGIBLE_GAIN


def initial_state(channels: ChannelSet, pre: PrecoderSet, ris: RISProfile, delta: float) -> RISSubproblemState:
    """Slack expansion values read off the current profile"""
    ev = effective_vectors(channels, pre)
    V_t, V_r = profile_matrices(ris)
    K = channels.n_ir
    A_c, B_c, A_p, B_p = np.ones(K), np.ones(K), np.ones(K), np.ones(K)
    rate_c, rate_p = np.zeros(K), np.zeros(K)
    for k in range(K):
        gains = np.array([_gain(V_t, h) for h in ev.t[k]])
        A_c[k] = 1.0 / max(gains[0], NEGLIGIBLE_GAIN)
        B_c[k] = gains[1:].sum() + 1.0
        rate_c[k] = np.log2(1.0 + gains[0] / B_c[k])
        if _private_active(ev, k):
            A_p[k] = 1.0 / max(gains[1 + k], NEGLIGIBLE_GAIN)
            B_p[k] = gains[1:].sum() - gains[1 + k] + 1.0
            rate_p[k] = np.log2(1.0 + gains[1 + k] / B_p[k])
    return RISSubproblemState(
        V_t=V_t, V_r=V_r, A_c=A_c, B_c=B_c, A_p=A_p, B_p=B_p,
        r_c=float(rate_c.min()), gamma=rate_p, eps=0.0, delta=delta, iteration=0,
    )


def _taylor(a: Affine, b: Affine, a0: float, b0: float) -> Affine:
    value, slope_a, slope_b = rate_taylor_parts(max(a0, NEGLIGIBLE_GAIN), max(b0, NEGLIGIBLE_GAIN))
    return value + slope_a * (a - a0) + slope_b * (b - b0)


def _rank_constraint(program: ConicProgram, V: MatrixVariable, previous: np.ndarray, eps: float, label: str) -> None:
    _, e_max = _leading(previous)
    program.add_geq(V.quad(e_max) - eps * V.trace(), 0.0, label)


def build_ris_program(state: RISSubproblemState, channels: ChannelSet, pre: PrecoderSet, alpha: np.ndarray,
                      cfg: ScenarioConfig) -> ConicProgram:
    """Sum-rate SDP over (V_t, V_r) around the slack values in state"""
    for name in ("V_t", "V_r"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise DomainError(f"{name} has non-finite entries")
    M, K, J = channels.n_ris, channels.n_ir, channels.n_uer
    if state.V_t.shape != (M, M) or state.V_r.shape != (M, M):
        raise DimensionError(f"RIS matrices must be {M} x {M}")
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (K,):
        raise DimensionError(f"{alpha.shape[0]} shares for {K} IRs")
    ev = effective_vectors(channels, pre)

    program = ConicProgram("ris")
    V_t = program.add_hermitian("V_t", M)
    V_r = program.add_hermitian("V_r", M)
    A_c = program.add_vector("A_c", K, nonneg=True)
    B_c = program.add_vector("B_c", K, nonneg=True)
    A_p = program.add_vector("A_p", K, nonneg=True)
    B_p = program.add_vector("B_p", K, nonneg=True)
    R_c = program.add_scalar("r_c", nonneg=True)
    gamma = program.add_vector("gamma", K, nonneg=True)
    n_streams = 1 + K + J
    harvest = program.add_vector("lambda", J * n_streams)

    for k in range(K):
        tag = f"k={k + 1}"
        gains = [V_t.quad(h) for h in ev.t[k]]
        interference = gains[1]
        for g in gains[2:]:
            interference = interference + g

        if np.linalg.norm(ev.t[k, 0]) ** 2 > NEGLIGIBLE_GAIN:
            program.add_rotated(A_c[k], gains[0], 1.0, f"common gain[{tag}]")
        else:
            program.add_equal(A_c[k], 1.0, f"common gain[{tag}] off")
            program.add_equal(R_c, 0.0, f"common rate[{tag}] off")
        program.add_geq(B_c[k], interference + 1.0, f"common interference[{tag}]")
        program.add_geq(_taylor(A_c[k], B_c[k], state.A_c[k], state.B_c[k]) - R_c, 0.0, f"common rate[{tag}]")

        if _private_active(ev, k):
            program.add_rotated(A_p[k], gains[1 + k], 1.0, f"private gain[{tag}]")
            program.add_geq(B_p[k], interference - gains[1 + k] + 1.0, f"private interference[{tag}]")
            program.add_geq(_taylor(A_p[k], B_p[k], state.A_p[k], state.B_p[k]) - gamma[k], 0.0,
                            f"private rate[{tag}]")
        else:
            program.add_equal(A_p[k], 1.0, f"private gain[{tag}] off")
            program.add_equal(B_p[k], 1.0, f"private interference[{tag}] off")
            program.add_equal(gamma[k], 0.0, f"private rate[{tag}] off")

        lo = theta_lower_parts(alpha[k], state.r_c)
        rhs = lo.slope * (R_c + alpha[k]) + lo.offset - cfg.r_c_min
        program.add_square_le(0.5 * (alpha[k] - R_c), rhs, f"common threshold[{tag}]")

    program.add_equal(V_t.diag() + V_r.diag(), np.ones(M), "energy conservation")

    if state.eps > 0.0:
        _rank_constraint(program, V_t, state.V_t, state.eps, "rank-one relaxation[t]")
        _rank_constraint(program, V_r, state.V_r, state.eps, "rank-one relaxation[r]")

    nu = channels.nu
    for j in range(J):
        for n in range(n_streams):
            hbar = ev.r[j, n]
            sigma = nu * float(np.max(np.abs(ev.drive[n])))
            mu = sigma ** 2 + 2.0 * sigma * float(np.linalg.norm(hbar))
            program.add_leq(harvest[j * n_streams + n], V_r.quad(hbar) - mu * V_r.trace(),
                            f"robust harvest[j={j + 1},n={n + 1}]")
    program.add_geq(harvest.sum(), cfg.e_th, "energy threshold")

    program.maximize(R_c + gamma.sum())
    return program


def extract_profile(V_t: np.ndarray, V_r: np.ndarray) -> RISProfile:
    """Leading-eigenvector profile, renormalized so beta_t + beta_r = 1 per element"""
    V_t, V_r = np.asarray(V_t, dtype=complex), np.asarray(V_r, dtype=complex)
    if V_t.shape != V_r.shape or V_t.ndim != 2 or V_t.shape[0] != V_t.shape[1]:
        raise DimensionError(f"V_t {V_t.shape} and V_r {V_r.shape} must be equal square matrices")
    lam_t, e_t = _leading(V_t)
    lam_r, e_r = _leading(V_r)
    v_t = np.sqrt(lam_t) * e_t
    v_r = np.sqrt(lam_r) * e_r
    beta_t, beta_r = np.abs(v_t) ** 2, np.abs(v_r) ** 2
    total = beta_t + beta_r
    off = total <= 0.0
    beta_t = np.where(off, 0.5, beta_t / np.where(off, 1.0, total))
    return RISProfile(
        beta_t=beta_t,
        beta_r=1.0 - beta_t,
        theta_t=np.angle(v_t.conj()),
        theta_r=np.angle(v_r.conj()),
    )


def sum_rate_objective(channels: ChannelSet, pre: PrecoderSet, ris: RISProfile) -> float:
    """min_k R_{c,k} + sum_k R_k for a fixed profile, the quantity the RIS step maximizes"""
    ev = effective_vectors(channels, pre)
    V_t, _ = profile_matrices(ris)
    common, private = [], []
    for k in range(channels.n_ir):
        gains = np.array([_gain(V_t, h) for h in ev.t[k]])
        others = gains[1:].sum()
        common.append(np.log2(1.0 + gains[0] / (others + 1.0)))
        private.append(np.log2(1.0 + gains[1 + k] / (others - gains[1 + k] + 1.0)))
    return float(min(common) + sum(private))


class RankOneOutcome(NamedTuple):
    """Extracted profile, per-iteration rows and whether eps stopped short of rank one"""

    profile: RISProfile
    history: List[RISTraceRow]
    incomplete: bool


def sequential_rank_one(channels: ChannelSet, pre: PrecoderSet, alpha: np.ndarray, cfg: ScenarioConfig,
                        init: RISProfile, trace: Optional[List[RISTraceRow]] = None) -> RankOneOutcome:
    """Tighten eps from 0 towards 1 until the iterate is rank one and the objective settles

    If the step size underflows or l_max runs out first, the extracted iterate
    with the best exact sum rate is returned and the outcome is flagged
    incomplete.
    """
    if init.n_ris != channels.n_ris:
        raise DimensionError(f"profile has {init.n_ris} elements, channels have {channels.n_ris}")
    state = initial_state(channels, pre, init, cfg.delta0)
    history: List[RISTraceRow] = []
    objective: Optional[float] = None
    best: Optional[Tuple[float, RISProfile]] = None
    complete = False

    for l in range(1, cfg.l_max + 1):
        solution = solve(build_ris_program(state, channels, pre, alpha, cfg))
        update = {"iteration": l}
        if solution.ok:
            values = solution.values
            previous, objective = objective, solution.objective
            update.update(
                V_t=values["V_t"], V_r=values["V_r"],
                A_c=np.maximum(values["A_c"], NEGLIGIBLE_GAIN), B_c=np.maximum(values["B_c"], NEGLIGIBLE_GAIN),
                A_p=np.maximum(values["A_p"], NEGLIGIBLE_GAIN), B_p=np.maximum(values["B_p"], NEGLIGIBLE_GAIN),
                r_c=float(values["r_c"][0]), gamma=values["gamma"],
            )
        else:
            previous = objective
            update["delta"] = state.delta / 2.0
            logger.debug("ris iteration %d %s, step halved to %.3g", l, solution.status.value, update["delta"])
        state = state.model_copy(update=update)

        ratio = state.eps_ratio
        row = RISTraceRow(
            iteration=l, objective=solution.objective if solution.ok else float("nan"), eps=state.eps,
            delta=state.delta, eps_ratio=ratio, solver_status=solution.status.value,
        )
        history.append(row)
        if trace is not None:
            trace.append(row)

        if solution.ok:
            extracted = extract_profile(state.V_t, state.V_r)
            value = sum_rate_objective(channels, pre, extracted)
            if best is None or value > best[0]:
                best = (value, extracted)
            settled = previous is None or abs(objective - previous) <= cfg.delta_p * max(1.0, abs(objective))
            if 1.0 - ratio <= cfg.delta_p and settled:
                complete = True
                break
        if state.delta < MIN_STEP:
            logger.warning("rank-one relaxation incomplete: step size underflow at eps ratio %.4f", ratio)
            break
        state = state.model_copy(update={"eps": min(1.0, ratio + state.delta)})
    else:
        logger.warning("rank-one relaxation incomplete: l_max=%d reached at eps ratio %.4f", cfg.l_max,
                       state.eps_ratio)

    if best is None:
        logger.info("ris step found no solvable relaxation; keeping the current profile")
        return RankOneOutcome(profile=init, history=history, incomplete=True)
    if complete:
        return RankOneOutcome(profile=extract_profile(state.V_t, state.V_r), history=history, incomplete=False)
    return RankOneOutcome(profile=best[1], history=history, incomplete=True)
