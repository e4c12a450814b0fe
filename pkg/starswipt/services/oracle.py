"""
Brute-force validators

Nothing here imports the optimizers: designs are certified with literal
transcriptions of the system model and sampled CSI errors, and the grid search
enumerates designs directly.
"""

import itertools
import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from starswipt.core.exceptions import DimensionError
from starswipt.schemas.design import COUPLING_TOL, PrecoderSet, RISProfile
from starswipt.schemas.report import format_value
from starswipt.schemas.scenario import ChannelSet, ScenarioConfig
from starswipt.services import surrogates
from starswipt.services.scenario import Seed, complex_gaussian, make_rng, sample_uncertainty

logger = logging.getLogger(__name__)

TANGENCY_TOL = 1e-9
BOUND_TOL = 1e-9

POWER_TOL = 1e-6
RATE_TOL = 1e-6
ENERGY_TOL = 1e-3
SECRECY_TOL = 1e-3

# 4 phases x 5 beta_t levels per element, 6 directions, 15 power splits
FULL_GRID_DENSITY = 4


class Certificate(BaseModel):
    """Pass/fail per original constraint plus the sampled quantities behind them"""

    model_config = ConfigDict(frozen=True)

    checks: Dict[str, bool]
    total_power: float
    r_c: float
    energy_sampled: float
    secrecy_sampled: List[float]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def failed(self) -> List[str]:
        return [name for name, ok in self.checks.items() if not ok]

    @property
    def r_sec_sampled(self) -> float:
        return float(min(self.secrecy_sampled))


def _literal_rates(streams: np.ndarray, row: np.ndarray, n_ir: int) -> Tuple[float, np.ndarray]:
    """(common SINR, private SINRs) at one IR row, term by term"""
    powers = [abs(sum(row[m] * s[m] for m in range(row.shape[0]))) ** 2 for s in streams]
    private_total = sum(powers[1:1 + n_ir])
    energy_total = sum(powers[1 + n_ir:])
    common = powers[0] / (private_total + energy_total + 1.0)
    private = np.array([
        powers[1 + k] / (private_total - powers[1 + k] + energy_total + 1.0) for k in range(n_ir)
    ])
    return common, private


def _ris_checks(ris: RISProfile) -> bool:
    return bool(
        np.all((ris.beta_t >= -COUPLING_TOL) & (ris.beta_t <= 1.0 + COUPLING_TOL))
        and np.all((ris.beta_r >= -COUPLING_TOL) & (ris.beta_r <= 1.0 + COUPLING_TOL))
        and np.all(np.abs(ris.beta_t + ris.beta_r - 1.0) <= COUPLING_TOL)
        and np.all((ris.theta_t >= 0.0) & (ris.theta_t < 2.0 * np.pi))
        and np.all((ris.theta_r >= 0.0) & (ris.theta_r < 2.0 * np.pi))
    )


def certify_design(pre: PrecoderSet, ris: RISProfile, channels: ChannelSet, cfg: ScenarioConfig,
                   n_ball_samples: Optional[int] = None, seed: Seed = 0,
                   reported_r_sec: Optional[float] = None) -> Certificate:
    """Check every constraint of the original problem with exact arithmetic and ball sampling

    The common rate is the one allocated to the precoders (their exact minimum over IRs when unset).
    With reported_r_sec the sampled worst-case secrecy rate must also reach the reported value.
    """
    n_samples = cfg.n_ball_samples if n_ball_samples is None else n_ball_samples
    K, J, M = channels.n_ir, channels.n_uer, channels.n_ris
    if (pre.n_tx, pre.n_ir, pre.n_uer) != (channels.n_tx, K, J) or ris.n_ris != M:
        raise DimensionError("design dimensions do not match the channel set")
    rng = make_rng(seed)
    streams = pre.streams
    u_t = np.sqrt(ris.beta_t) * np.exp(1j * ris.theta_t)
    u_r = np.sqrt(ris.beta_r) * np.exp(1j * ris.theta_r)

    # IR side: h = sum_m conj(g_m) u_m H[m, :]
    common_rates, private_rates = np.zeros(K), np.zeros(K)
    for k in range(K):
        row = sum(np.conj(channels.g_t[k, m]) * u_t[m] * channels.H[m] for m in range(M))
        common, private = _literal_rates(streams, row, K)
        common_rates[k] = np.log2(1.0 + common)
        private_rates[k] = np.log2(1.0 + private[k])
    r_c = float(common_rates.min())
    allocated = r_c if pre.common_rate is None else float(pre.common_rate)

    # UER side over sampled errors, nominal estimate included
    worst_common = np.zeros(J)
    worst_private = np.zeros((K, J))
    energy = 0.0
    for j in range(J):
        errors = [np.zeros(M, dtype=complex)] + list(sample_uncertainty(channels.g_r_hat[j], channels.nu, rng, n_samples))
        harvest = np.inf
        for dg in errors:
            g = channels.g_r_hat[j] + dg
            row = sum(np.conj(g[m]) * u_r[m] * channels.H[m] for m in range(M))
            powers = np.abs(streams @ row) ** 2
            total = powers.sum()
            worst_common[j] = max(worst_common[j], np.log2(1.0 + powers[0] / (total - powers[0] + 1.0)))
            for k in range(K):
                leak = powers[1 + k] / (total - powers[1 + k] + 1.0)
                worst_private[k, j] = max(worst_private[k, j], np.log2(1.0 + leak))
            harvest = min(harvest, total)
        energy += harvest

    secrecy = [
        float(pre.alpha[k] * max(0.0, min(allocated, r_c) - worst_common.max()) + max(0.0, private_rates[k] - worst_private[k].max()))
        for k in range(K)
    ]
    power = float(np.sum(np.abs(streams) ** 2))
    checks = {
        "power": power <= cfg.pt_linear + POWER_TOL,
        "simplex": bool(np.all(pre.alpha >= -RATE_TOL) and abs(pre.alpha.sum() - 1.0) <= RATE_TOL),
        "common_rate": float(pre.alpha.sum()) * allocated <= r_c + RATE_TOL,
        "common_threshold": bool(np.all(pre.alpha * allocated >= cfg.r_c_min - RATE_TOL)),
        "energy": energy >= cfg.e_th - ENERGY_TOL,
        "ris_profile": _ris_checks(ris),
    }
    if reported_r_sec is not None:
        checks["secrecy"] = min(secrecy) >= reported_r_sec - SECRECY_TOL
    return Certificate(checks=checks, total_power=power, r_c=allocated, energy_sampled=energy, secrecy_sampled=secrecy)


class GridSearchResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    precoders: Optional[PrecoderSet] = None
    ris: Optional[RISProfile] = None
    r_sec: float = float("nan")
    n_points: int = 0
    n_feasible: int = 0

    @property
    def found(self) -> bool:
        return self.precoders is not None


def _grid_axes(n_tx: int, density: int):
    """Phase levels, beta_t levels, precoder directions and power splits of a grid density"""
    phases = np.arange(min(4, density)) * (2.0 * np.pi / min(4, density))
    betas = np.array([0.5]) if density == 1 else np.linspace(0.0, 1.0, min(5, density + 1))
    if n_tx == 1:
        directions = np.ones((1, 1), dtype=complex)
    else:
        directions = [np.array([1.0, np.exp(1j * phi)]) / np.sqrt(2.0) for phi in phases]
        if density > 1:
            directions += [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        directions = np.array(directions, dtype=complex)
    if density == 1:
        splits = np.full((1, 3), 1.0 / 3.0)
    else:
        splits = np.array([(a, b, density - a - b) for a in range(density + 1) for b in range(density + 1 - a)],
                          dtype=float) / density
    return phases, betas, directions, splits


def grid_search_tiny(channels: ChannelSet, cfg: ScenarioConfig, grid_density: Optional[int] = None,
                     n_ball_samples: int = 1000, seed: Seed = 0) -> GridSearchResult:
    """Exhaustive search for K = J = 1, N_T <= 2, M <= 2 with sampled worst-case leakage

    For a fixed beta_t tuple the IR side only sees the transmission phases and the
    UER side only the reflection phases, so both sides are tabulated once per
    phase tuple and combined afterwards.
    """
    density = cfg.grid_density if grid_density is None else grid_density
    if density < 1:
        raise ValueError("grid density must be at least 1")
    if channels.n_tx > 2 or channels.n_ris > 2 or channels.n_ir != 1 or channels.n_uer != 1:
        raise DimensionError("grid search supports N_T <= 2, M <= 2 and K = J = 1 only")
    M = channels.n_ris
    phases, betas, directions, splits = _grid_axes(channels.n_tx, density)
    P = cfg.pt_linear
    rng = make_rng(seed)
    errors = np.vstack([np.zeros((1, M)), sample_uncertainty(channels.g_r_hat[0], channels.nu, rng, n_ball_samples)])
    uer_rows = (channels.g_r_hat[0][None, :] + errors).conj()

    n_dir = directions.shape[0]
    combos = np.array(list(itertools.product(range(n_dir), range(n_dir), range(n_dir), range(len(splits)))))
    ic, ip, ie, isp = combos.T
    c, p, e = (P * splits[isp, i] for i in range(3))

    phase_tuples = np.array(list(itertools.product(phases, repeat=M)))
    best = GridSearchResult()
    n_points = n_feasible = 0
    for beta_t in itertools.product(betas, repeat=M):
        beta_t = np.array(beta_t)
        # IR side per transmission phase tuple: (n_phase_tuples, n_combos)
        u_t = np.sqrt(beta_t)[None, :] * np.exp(1j * phase_tuples)
        zt = np.abs((u_t * channels.g_t[0].conj()[None, :]) @ channels.H @ directions.T) ** 2
        r_c = np.log2(1.0 + c * zt[:, ic] / (p * zt[:, ip] + e * zt[:, ie] + 1.0))
        r_p = np.log2(1.0 + p * zt[:, ip] / (e * zt[:, ie] + 1.0))

        # UER side per reflection phase tuple, worst over the sampled ball
        leak_common = np.empty((len(phase_tuples), len(combos)))
        leak_private = np.empty_like(leak_common)
        harvest = np.empty_like(leak_common)
        for t, theta_r in enumerate(phase_tuples):
            u_r = np.sqrt(1.0 - beta_t) * np.exp(1j * theta_r)
            zr = np.abs((uer_rows * u_r[None, :]) @ channels.H @ directions.T) ** 2
            s_c, s_p, s_e = c * zr[:, ic], p * zr[:, ip], e * zr[:, ie]
            leak_common[t] = np.log2(1.0 + (s_c / (s_p + s_e + 1.0)).max(axis=0))
            leak_private[t] = np.log2(1.0 + (s_p / (s_c + s_e + 1.0)).max(axis=0))
            harvest[t] = (s_c + s_p + s_e).min(axis=0)

        # (transmission tuple, reflection tuple, combo)
        r_sec = (np.maximum(0.0, r_c[:, None, :] - leak_common[None, :, :])
                 + np.maximum(0.0, r_p[:, None, :] - leak_private[None, :, :]))
        feasible = (r_c[:, None, :] >= cfg.r_c_min - RATE_TOL) & (harvest[None, :, :] >= cfg.e_th - ENERGY_TOL)
        n_points += r_sec.size
        n_feasible += int(feasible.sum())
        if not feasible.any():
            continue
        a, b, idx = np.unravel_index(int(np.argmax(np.where(feasible, r_sec, -np.inf))), r_sec.shape)
        if not best.found or r_sec[a, b, idx] > best.r_sec:
            amp = np.sqrt(np.array([c[idx], p[idx], e[idx]]))
            best = GridSearchResult(
                precoders=PrecoderSet(
                    p_c=amp[0] * directions[ic[idx]],
                    p_k=(amp[1] * directions[ip[idx]])[None, :],
                    f_j=(amp[2] * directions[ie[idx]])[None, :],
                    alpha=np.ones(1),
                ),
                ris=RISProfile(beta_t=beta_t, beta_r=1.0 - beta_t, theta_t=phase_tuples[a],
                               theta_r=phase_tuples[b]),
                r_sec=float(r_sec[a, b, idx]),
            )

    if not best.found:
        logger.info("grid search: no feasible point among %d", n_points)
    return best.model_copy(update={"n_points": n_points, "n_feasible": n_feasible})


class AuditEntry(BaseModel):
    """Worst tangency residual and bound violations of one operator (relative to max(1, |target|))"""

    model_config = ConfigDict(frozen=True)

    operator: str
    samples: int
    tangency_residual: float
    worst_violation: float
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.tangency_residual <= TANGENCY_TOL

    def to_csv_row(self) -> List[str]:
        return [self.operator, str(self.samples), format_value(self.tangency_residual),
                format_value(self.worst_violation), str(self.violations)]


AUDIT_HEADER = ["operator", "samples", "tangency_residual", "worst_violation", "violations"]


class AuditReport(BaseModel):
    entries: List[AuditEntry] = []

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    def entry(self, operator: str) -> AuditEntry:
        return next(e for e in self.entries if e.operator == operator)


def _relative(gap: float, target: float) -> float:
    return gap / max(1.0, abs(target))


# Each check draws one case and returns (relative tangency gap, bound gap, target);
# a positive bound gap is a violation in the operator's bound direction
Check = Callable[[np.random.Generator], Tuple[float, float, float]]


def _cvec(rng: np.random.Generator, n: int = 3) -> np.ndarray:
    return complex_gaussian(rng, n)


def _check_theta_lower(rng):
    x, y, x0, y0 = rng.uniform(-5.0, 5.0, 4)
    return (_relative(abs(surrogates.theta_lower(x0, y0, x0, y0) - x0 * y0), x0 * y0),
            surrogates.theta_lower(x, y, x0, y0) - x * y, x * y)


def _check_theta_upper(rng):
    x, y, x0, y0 = rng.uniform(-5.0, 5.0, 4)
    return (_relative(abs(surrogates.theta_upper(x0, y0, x0, y0) - x0 * y0), x0 * y0),
            x * y - surrogates.theta_upper(x, y, x0, y0), x * y)


def _check_gamma_lower(rng):
    x, x0 = rng.uniform(-3.0, 3.0, 2)
    return (_relative(abs(surrogates.gamma_lower(x0, x0) - 2.0 ** x0), 2.0 ** x0),
            surrogates.gamma_lower(x, x0) - 2.0 ** x, 2.0 ** x)


def _check_psi_lower(rng):
    h, u, u0 = _cvec(rng), _cvec(rng), _cvec(rng)
    x, x0 = rng.uniform(0.1, 10.0, 2)
    target = abs(np.vdot(h, u)) ** 2 / x
    tangent = abs(np.vdot(h, u0)) ** 2 / x0
    return (_relative(abs(surrogates.psi_lower(u0, x0, u0, x0, h) - tangent), tangent),
            surrogates.psi_lower(u, x, u0, x0, h) - target, target)


def _ball_case(rng):
    g, u = _cvec(rng), _cvec(rng)
    sigma = rng.uniform(0.0, 0.5)
    dg = sample_uncertainty(g, sigma, rng)
    return g, u, sigma, abs(np.vdot(g + dg, u))


def _check_robust_abs_max(rng):
    g, u, sigma, sampled = _ball_case(rng)
    a = np.vdot(g, u)
    # maximizer: dg = sigma e^{-i arg(g^H u)} u / ||u||
    dg = sigma * np.exp(-1j * np.angle(a)) * u / np.linalg.norm(u)
    achieved = abs(np.vdot(g + dg, u))
    closed = surrogates.robust_abs_max(g, u, sigma)
    return _relative(abs(closed - achieved), closed), sampled - closed, closed


def _check_robust_sq_min(rng):
    g, u, sigma, sampled = _ball_case(rng)
    return (_relative(abs(surrogates.robust_sq_min(g, u, 0.0) - abs(np.vdot(g, u)) ** 2), abs(np.vdot(g, u)) ** 2),
            surrogates.robust_sq_min(g, u, sigma) - sampled ** 2, sampled ** 2)


def _check_robust_sq_max(rng):
    g, u, sigma, sampled = _ball_case(rng)
    return (_relative(abs(surrogates.robust_sq_max(g, u, 0.0) - abs(np.vdot(g, u)) ** 2), abs(np.vdot(g, u)) ** 2),
            sampled ** 2 - surrogates.robust_sq_max(g, u, sigma), sampled ** 2)


def _check_psd_split(rng):
    X = complex_gaussian(rng, (3, 3))
    A = 0.5 * (X + X.conj().T)
    u, u0 = _cvec(rng), _cvec(rng)
    target = float(np.real(np.vdot(u, A @ u)))
    tangent = float(np.real(np.vdot(u0, A @ u0)))
    return (_relative(abs(surrogates.psd_split_quad_lower(u0, u0, A) - tangent), tangent),
            surrogates.psd_split_quad_lower(u, u0, A) - target, target)


def _check_log_rate_lower(rng):
    rho, rho0 = 10.0 ** rng.uniform(-2.0, 2.0, 2)
    target = np.log2(1.0 + rho)
    return (_relative(abs(surrogates.log_rate_lower(rho0, rho0) - np.log2(1.0 + rho0)), np.log2(1.0 + rho0)),
            surrogates.log_rate_lower(rho, rho0) - target, target)


def _check_rate_taylor(rng):
    a, b, a0, b0 = 10.0 ** rng.uniform(-1.3, 1.3, 4)
    target = np.log2(1.0 + 1.0 / (a * b))
    return (_relative(abs(surrogates.rate_taylor_lower(a0, b0, a0, b0) - np.log2(1.0 + 1.0 / (a0 * b0))), 1.0),
            surrogates.rate_taylor_lower(a, b, a0, b0) - target, target)


AUDIT_CHECKS: Dict[str, Check] = {
    "theta_lower": _check_theta_lower,
    "theta_upper": _check_theta_upper,
    "gamma_lower": _check_gamma_lower,
    "psi_lower": _check_psi_lower,
    "robust_abs_max": _check_robust_abs_max,
    "robust_sq_min": _check_robust_sq_min,
    "robust_sq_max": _check_robust_sq_max,
    "psd_split_quad_lower": _check_psd_split,
    "log_rate_lower": _check_log_rate_lower,
    "rate_taylor_lower": _check_rate_taylor,
}


def surrogate_audit(n_samples: int, seed: Seed = 0) -> AuditReport:
    """Tangency and bound direction of every surrogate over random draws"""
    if n_samples <= 0:
        return AuditReport()
    rng = make_rng(seed)
    entries = []
    for name, check in AUDIT_CHECKS.items():
        tangency = worst = 0.0
        violations = 0
        for _ in range(n_samples):
            tangent_gap, bound_gap, target = check(rng)
            tangency = max(tangency, tangent_gap)
            rel = _relative(bound_gap, target)
            worst = max(worst, rel)
            if rel > BOUND_TOL:
                violations += 1
        entries.append(AuditEntry(operator=name, samples=n_samples, tangency_residual=tangency,
                                  worst_violation=worst, violations=violations))
        if violations:
            logger.warning("%s: %d bound violations (worst %.3g)", name, violations, worst)
    return AuditReport(entries=entries)
