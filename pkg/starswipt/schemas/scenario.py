from typing import Any, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Position = Tuple[float, float, float]


class ScenarioConfig(BaseModel):
    """Scenario and algorithm parameters (noise power normalized to 1)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Counts
    n_tx: int = Field(default=4, ge=1)
    n_ris: int = Field(default=10, ge=1)
    n_ir: int = Field(default=2, ge=1)
    n_uer: int = Field(default=2, ge=1)

    # Power budget and QoS thresholds
    pt_db: float = 25.0
    e_th: float = Field(default=1.0, ge=0.0)
    r_c_min: float = Field(default=1.0, ge=0.0)
    nu: float = Field(default=1e-4, ge=0.0)

    # Geometry (meters)
    bs_pos: Position = (0.0, 0.0, 0.0)
    ris_pos: Position = (400.0, 400.0, 150.0)
    user_radius: float = Field(default=50.0, gt=0.0)
    user_offset: float = Field(default=60.0, ge=0.0)

    # Path loss
    exp_los: float = 2.0
    exp_nlos: float = 3.5
    lambda1: float = 9.61
    lambda2: float = 0.16
    rician_k: float = Field(default=0.0, ge=0.0)
    hop_gain_db: float = 60.0

    seed: int = Field(default=0, ge=0)

    # Algorithm parameters
    n_realizations: int = Field(default=100, ge=1)
    max_outer: int = Field(default=10, ge=1)
    delta_outer: float = Field(default=1e-2, gt=0.0)
    delta_i: float = Field(default=1e-2, gt=0.0)
    delta_e: float = Field(default=1e-2, gt=0.0)
    delta_p: float = Field(default=1e-2, gt=0.0)
    n_max: int = Field(default=30, ge=1)
    m_max: int = Field(default=30, ge=1)
    delta0: float = Field(default=0.1, gt=0.0)
    l_max: int = Field(default=50, ge=1)

    # Validation sampling
    n_ball_samples: int = Field(default=1000, ge=1)
    audit_samples: int = Field(default=10000, ge=0)
    # 4 is the full grid: 4 phases and 5 beta_t levels per element
    grid_density: int = Field(default=4, ge=1)
    # Random restarts of the alternating loop per realization
    n_starts: int = Field(default=1, ge=1)

    @field_validator("bs_pos", "ris_pos", mode="before")
    @classmethod
    def parse_position(cls, value: Any) -> Any:
        """Accept 'x,y,z' strings from INI files"""
        if isinstance(value, str):
            return tuple(float(part) for part in value.replace("(", "").replace(")", "").split(","))
        return value

    @model_validator(mode="after")
    def check_geometry(self) -> "ScenarioConfig":
        if not self.exp_los < self.exp_nlos:
            raise ValueError("exp_los must be strictly smaller than exp_nlos")
        if self.ris_pos[2] <= self.bs_pos[2]:
            raise ValueError("the RIS must be mounted above the BS")
        if self.ris_pos[2] <= 0.0:
            raise ValueError("the RIS height must be positive")
        return self

    @property
    def pt_linear(self) -> float:
        return float(10.0 ** (self.pt_db / 10.0))

    @property
    def hop_gain(self) -> float:
        """Power gain applied to each hop"""
        return float(10.0 ** (self.hop_gain_db / 10.0))

    def with_updates(self, **changes: Any) -> "ScenarioConfig":
        """Validated copy with some fields replaced"""
        data = self.model_dump()
        data.update(changes)
        return ScenarioConfig.model_validate(data)


def _frozen_complex(value: Any) -> np.ndarray:
    array = np.array(value, dtype=complex)
    if not np.all(np.isfinite(array)):
        raise ValueError("channel entries must be finite")
    array.flags.writeable = False
    return array


class ChannelSet(BaseModel):
    """BS->RIS matrix, RIS->IR vectors and estimated RIS->UER vectors"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    H: np.ndarray
    g_t: np.ndarray
    g_r_hat: np.ndarray
    nu: float = Field(ge=0.0)

    @field_validator("H", "g_t", "g_r_hat", mode="before")
    @classmethod
    def freeze(cls, value: Any) -> np.ndarray:
        return _frozen_complex(value)

    @model_validator(mode="after")
    def check_shapes(self) -> "ChannelSet":
        if self.H.ndim != 2 or self.g_t.ndim != 2 or self.g_r_hat.ndim != 2:
            raise ValueError("H must be M x N_T, g_t K x M and g_r_hat J x M")
        n_ris = self.H.shape[0]
        if self.g_t.shape[1] != n_ris or self.g_r_hat.shape[1] != n_ris:
            raise ValueError("RIS dimension mismatch between H and user vectors")
        return self

    @property
    def n_ris(self) -> int:
        return self.H.shape[0]

    @property
    def n_tx(self) -> int:
        return self.H.shape[1]

    @property
    def n_ir(self) -> int:
        return self.g_t.shape[0]

    @property
    def n_uer(self) -> int:
        return self.g_r_hat.shape[0]

    def matches(self, cfg: ScenarioConfig) -> bool:
        return (self.n_ris, self.n_tx, self.n_ir, self.n_uer) == (cfg.n_ris, cfg.n_tx, cfg.n_ir, cfg.n_uer)
