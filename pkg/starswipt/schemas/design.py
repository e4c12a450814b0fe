from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

# Tolerance on the energy-conservation coupling beta_t + beta_r = 1
COUPLING_TOL = 1e-9


def _frozen(value: Any, dtype: type) -> np.ndarray:
    array = np.array(value, dtype=dtype)
    if not np.all(np.isfinite(array)):
        raise ValueError("entries must be finite")
    array.flags.writeable = False
    return array


class RISProfile(BaseModel):
    """Amplitudes (squared) and phases of the transmission and reflection halves"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    beta_t: np.ndarray
    beta_r: np.ndarray
    theta_t: np.ndarray
    theta_r: np.ndarray

    @field_validator("beta_t", "beta_r", mode="before")
    @classmethod
    def freeze_amplitudes(cls, value: Any) -> np.ndarray:
        return _frozen(value, float)

    @field_validator("theta_t", "theta_r", mode="before")
    @classmethod
    def wrap_phases(cls, value: Any) -> np.ndarray:
        return _frozen(np.mod(np.asarray(value, dtype=float), 2.0 * np.pi), float)

    @model_validator(mode="after")
    def check_coupling(self) -> "RISProfile":
        shapes = {a.shape for a in (self.beta_t, self.beta_r, self.theta_t, self.theta_r)}
        if len(shapes) != 1 or self.beta_t.ndim != 1:
            raise ValueError("all RIS profile arrays must be vectors of length M")
        if np.any(self.beta_t < -COUPLING_TOL) or np.any(self.beta_r < -COUPLING_TOL):
            raise ValueError("amplitudes must be nonnegative")
        if np.any(np.abs(self.beta_t + self.beta_r - 1.0) > COUPLING_TOL):
            raise ValueError("beta_t + beta_r must equal 1 on every element")
        return self

    @classmethod
    def uniform(cls, n_ris: int) -> "RISProfile":
        """Equal split, zero phase on every element"""
        half = np.full(n_ris, 0.5)
        zero = np.zeros(n_ris)
        return cls(beta_t=half, beta_r=half, theta_t=zero, theta_r=zero)

    @property
    def n_ris(self) -> int:
        return self.beta_t.shape[0]

    @property
    def u_t(self) -> np.ndarray:
        return np.sqrt(np.clip(self.beta_t, 0.0, 1.0)) * np.exp(1j * self.theta_t)

    @property
    def u_r(self) -> np.ndarray:
        return np.sqrt(np.clip(self.beta_r, 0.0, 1.0)) * np.exp(1j * self.theta_r)

    @property
    def Theta_t(self) -> np.ndarray:
        return np.diag(self.u_t)

    @property
    def Theta_r(self) -> np.ndarray:
        return np.diag(self.u_r)


class PrecoderSet(BaseModel):
    """Common, private and energy precoders plus the common-rate shares"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    p_c: np.ndarray
    p_k: np.ndarray
    f_j: np.ndarray
    alpha: np.ndarray
    # Allocated common rate R_c (split as alpha_k R_c); None means the exact minimum over IRs
    common_rate: Optional[float] = None

    @field_validator("p_c", "p_k", "f_j", mode="before")
    @classmethod
    def freeze_precoders(cls, value: Any) -> np.ndarray:
        return _frozen(value, complex)

    @field_validator("alpha", mode="before")
    @classmethod
    def freeze_alpha(cls, value: Any) -> np.ndarray:
        return _frozen(value, float)

    @model_validator(mode="after")
    def check_shapes(self) -> "PrecoderSet":
        if self.p_c.ndim != 1 or self.p_k.ndim != 2 or self.f_j.ndim != 2:
            raise ValueError("p_c is a vector, p_k is K x N_T and f_j is J x N_T")
        n_tx = self.p_c.shape[0]
        if self.p_k.shape[1] != n_tx or self.f_j.shape[1] != n_tx:
            raise ValueError("precoder lengths disagree")
        if self.alpha.shape != (self.p_k.shape[0],):
            raise ValueError("one common-rate share per IR is required")
        return self

    @property
    def n_tx(self) -> int:
        return self.p_c.shape[0]

    @property
    def n_ir(self) -> int:
        return self.p_k.shape[0]

    @property
    def n_uer(self) -> int:
        return self.f_j.shape[0]

    @property
    def streams(self) -> np.ndarray:
        """All precoders stacked as rows: common, private..., energy..."""
        return np.vstack([self.p_c[None, :], self.p_k, self.f_j])

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.streams) ** 2))

    def scaled(self, factor: float) -> "PrecoderSet":
        """Amplitude-scaled copy (shares unchanged)"""
        return PrecoderSet(p_c=self.p_c * factor, p_k=self.p_k * factor, f_j=self.f_j * factor, alpha=self.alpha,
                           common_rate=self.common_rate)

    def with_common_rate(self, common_rate: Optional[float]) -> "PrecoderSet":
        return self.model_copy(update={"common_rate": common_rate})

    @classmethod
    def zeros(cls, n_tx: int, n_ir: int, n_uer: int) -> "PrecoderSet":
        return cls(
            p_c=np.zeros(n_tx, dtype=complex),
            p_k=np.zeros((n_ir, n_tx), dtype=complex),
            f_j=np.zeros((n_uer, n_tx), dtype=complex),
            alpha=np.full(n_ir, 1.0 / n_ir),
        )
