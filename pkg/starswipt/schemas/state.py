from typing import Dict, List, Mapping, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from starswipt.schemas.design import PrecoderSet


class ExpansionPoint(BaseModel):
    """Values of the named variables at iteration i, used by every surrogate"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: Dict[str, np.ndarray]

    @field_validator("values", mode="before")
    @classmethod
    def freeze(cls, value: Mapping[str, object]) -> Dict[str, np.ndarray]:
        frozen = {}
        for name, raw in value.items():
            array = np.array(raw)
            if not np.all(np.isfinite(array)):
                raise ValueError(f"expansion value '{name}' is not finite")
            array.flags.writeable = False
            frozen[name] = array
        return frozen

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def scalar(self, name: str, index: tuple = ()) -> float:
        return float(np.real(self.values[name][index]))


class PrecoderSubproblemState(BaseModel):
    """Iterate of the precoder step: design, slack values and objective trace"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    precoders: PrecoderSet
    point: ExpansionPoint
    iteration: int = 0
    r_sec: float = 0.0
    s: Optional[float] = None
    feasible: bool = False
    history: List[float] = Field(default_factory=list)


class RISSubproblemState(BaseModel):
    """Iterate of the sequential rank-one relaxation"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    V_t: np.ndarray
    V_r: np.ndarray
    A_c: np.ndarray
    B_c: np.ndarray
    A_p: np.ndarray
    B_p: np.ndarray
    r_c: float
    gamma: np.ndarray
    eps: float = Field(default=0.0, ge=0.0, le=1.0)
    delta: float = Field(default=0.1, gt=0.0)
    iteration: int = 0

    @property
    def eps_ratio(self) -> float:
        """Smallest lambda_max / trace over both halves"""
        ratios = []
        for V in (self.V_t, self.V_r):
            trace = float(np.real(np.trace(V)))
            if trace <= 0.0:
                ratios.append(1.0)
                continue
            ratios.append(float(np.linalg.eigvalsh(V)[-1]) / trace)
        return min(ratios)
