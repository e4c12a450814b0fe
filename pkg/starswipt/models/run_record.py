from datetime import datetime, timezone
from typing import Optional

from sqlmodel import Field, SQLModel


class RunRecord(SQLModel, table=True):
    __tablename__ = "run_records"

    id: Optional[int] = Field(default=None, primary_key=True)
    run_label: str = Field(index=True)
    sweep_key: Optional[str] = None
    sweep_value: float
    realization: int
    outer_iter: int
    r_sec: float
    sum_rate: float
    energy_worst: float
    feasible: bool
    eps_ratio: float
    wall_ms: float
    rank_incomplete: bool = False
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
