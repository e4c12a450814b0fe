"""
Convexification toolkit for the precoder and RIS steps

Every operator comes in a numeric form (evaluate at a point) and, where a
program builder needs it, a coefficient form describing the same surrogate as
"affine part + convex part" around an expansion point.
"""

from typing import NamedTuple, Tuple

import numpy as np

from starswipt.core.exceptions import DomainError

LN2 = float(np.log(2.0))
LOG2_E = float(1.0 / np.log(2.0))

# Eigenvalues with magnitude below this are treated as zero in the PSD split
EIG_CLIP = 1e-10


def theta_lower(x: float, y: float, x0: float, y0: float) -> float:
    """Concave minorant of x*y, tight at (x0, y0)"""
    s0 = x0 + y0
    return 0.5 * s0 * (x + y) - 0.25 * s0 ** 2 - 0.25 * (x - y) ** 2


def theta_upper(x: float, y: float, x0: float, y0: float) -> float:
    """Convex majorant of x*y, tight at (x0, y0)"""
    d0 = x0 - y0
    return 0.25 * (x + y) ** 2 + 0.25 * d0 ** 2 - 0.5 * d0 * (x - y)


class BilinearParts(NamedTuple):
    """theta_lower = slope*(x+y) + offset - 1/4 (x-y)^2
    theta_upper = 1/4 (x+y)^2 + offset + slope*(x-y)"""

    slope: float
    offset: float


def theta_lower_parts(x0: float, y0: float) -> BilinearParts:
    s0 = float(x0 + y0)
    return BilinearParts(slope=0.5 * s0, offset=-0.25 * s0 ** 2)


def theta_upper_parts(x0: float, y0: float) -> BilinearParts:
    d0 = float(x0 - y0)
    return BilinearParts(slope=-0.5 * d0, offset=0.25 * d0 ** 2)


def gamma_lower(x: float, x0: float) -> float:
    """Tangent of 2^x at x0 (global minorant)"""
    return float(2.0 ** x0 * (1.0 + LN2 * (x - x0)))


def gamma_lower_parts(x0: float) -> Tuple[float, float]:
    """(slope, intercept) of gamma_lower as an affine function of x"""
    base = float(2.0 ** x0)
    return base * LN2, base * (1.0 - LN2 * x0)


def psi_lower(u: np.ndarray, x: float, u0: np.ndarray, x0: float, h: np.ndarray) -> float:
    """Affine minorant of |h^H u|^2 / x on x > 0, tight at (u0, x0)"""
    if x0 <= 0.0:
        raise DomainError(f"psi_lower needs a positive expansion point, got x0={x0}")
    hu0 = np.vdot(h, u0)
    hu = np.vdot(h, u)
    return float(2.0 * np.real(np.conj(hu0) * hu) / x0 - abs(hu0) ** 2 * x / x0 ** 2)


class PsiParts(NamedTuple):
    """psi_lower = 2 Re{direction^H u} + x_coeff * x"""

    direction: np.ndarray
    x_coeff: float


def psi_lower_parts(u0: np.ndarray, x0: float, h: np.ndarray) -> PsiParts:
    if x0 <= 0.0:
        raise DomainError(f"psi_lower needs a positive expansion point, got x0={x0}")
    hu0 = np.vdot(h, u0)
    # Re{u0^H h h^H u} = Re{(h (h^H u0))^H u}
    return PsiParts(direction=h * hu0 / x0, x_coeff=-float(abs(hu0) ** 2) / x0 ** 2)


def robust_abs_max(g_hat: np.ndarray, u: np.ndarray, sigma: float) -> float:
    """max |(g_hat + dg)^H u| over ||dg|| <= sigma"""
    return float(abs(np.vdot(g_hat, u)) + sigma * np.linalg.norm(u))


def robust_mu(g_hat: np.ndarray, sigma: float) -> float:
    return float(sigma ** 2 + 2.0 * sigma * np.linalg.norm(g_hat))


def robust_sq_min(g_hat: np.ndarray, u: np.ndarray, sigma: float) -> float:
    """Conservative lower bound of min |(g_hat + dg)^H u|^2 over the ball (may be negative)"""
    return float(abs(np.vdot(g_hat, u)) ** 2 - robust_mu(g_hat, sigma) * np.real(np.vdot(u, u)))


def robust_sq_max(g_hat: np.ndarray, u: np.ndarray, sigma: float) -> float:
    """Upper bound of max |(g_hat + dg)^H u|^2 over the ball"""
    return float(abs(np.vdot(g_hat, u)) ** 2 + robust_mu(g_hat, sigma) * np.real(np.vdot(u, u)))


def _eigen_split(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eigenvectors with the clipped positive and negative eigenvalue magnitudes"""
    w, U = np.linalg.eigh(0.5 * (A + A.conj().T))
    pos = np.where(w > EIG_CLIP, w, 0.0)
    neg = np.where(w < -EIG_CLIP, -w, 0.0)
    return U, pos, neg


def psd_split(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """A = A_plus - A_minus with both halves PSD"""
    U, pos, neg = _eigen_split(A)
    return (U * pos) @ U.conj().T, (U * neg) @ U.conj().T


class QuadSplit(NamedTuple):
    """Concave minorant of u^H A u:  2 Re{linear^H u} + offset - ||factor u||^2"""

    linear: np.ndarray
    offset: float
    factor: np.ndarray


def psd_split_parts(u0: np.ndarray, A: np.ndarray) -> QuadSplit:
    U, pos, neg = _eigen_split(A)
    a_plus = (U * pos) @ U.conj().T
    keep = neg > 0.0
    # u^H A_minus u = ||diag(sqrt(neg)) U^H u||^2
    factor = np.sqrt(neg[keep])[:, None] * U[:, keep].conj().T
    if factor.shape[0] == 0:
        factor = np.zeros((1, A.shape[0]), dtype=complex)
    linear = a_plus @ u0
    offset = -float(np.real(np.vdot(u0, linear)))
    return QuadSplit(linear=linear, offset=offset, factor=factor)


def psd_split_quad_lower(u: np.ndarray, u0: np.ndarray, A: np.ndarray) -> float:
    parts = psd_split_parts(u0, A)
    return float(
        2.0 * np.real(np.vdot(parts.linear, u)) + parts.offset - np.linalg.norm(parts.factor @ u) ** 2
    )


def log_rate_lower(rho: float, rho0: float) -> float:
    """Concave minorant of log2(1 + rho) on rho > 0, tight at rho0"""
    if rho0 <= 0.0 or rho <= 0.0:
        raise DomainError("log_rate_lower is defined for positive arguments only")
    intercept, inv_coeff = log_rate_lower_parts(rho0)
    return intercept - inv_coeff / rho


def log_rate_lower_parts(rho0: float) -> Tuple[float, float]:
    """log_rate_lower = intercept - inv_coeff / rho"""
    if rho0 <= 0.0:
        raise DomainError(f"log_rate_lower needs a positive expansion point, got {rho0}")
    intercept = (np.log1p(rho0) + rho0 / (1.0 + rho0)) / LN2
    inv_coeff = rho0 ** 2 / (1.0 + rho0) / LN2
    return float(intercept), float(inv_coeff)


def rate_taylor_lower(a: float, b: float, a0: float, b0: float) -> float:
    """Tangent plane of log2(1 + 1/(a b)) at (a0, b0); a global minorant on a, b > 0"""
    value, slope_a, slope_b = rate_taylor_parts(a0, b0)
    return value + slope_a * (a - a0) + slope_b * (b - b0)


def rate_taylor_parts(a0: float, b0: float) -> Tuple[float, float, float]:
    if a0 <= 0.0 or b0 <= 0.0:
        raise DomainError("rate_taylor_lower needs positive expansion points")
    value = float(np.log2(1.0 + 1.0 / (a0 * b0)))
    slope_a = -LOG2_E / (a0 + a0 ** 2 * b0)
    slope_b = -LOG2_E / (b0 + b0 ** 2 * a0)
    return value, float(slope_a), float(slope_b)
