from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from starswipt.schemas.report import format_value


class SPCATraceRow(BaseModel):
    """One iteration of the precoder step (SPCA or feasibility restoration)"""

    model_config = ConfigDict(frozen=True)

    stage: str  # "fipsa" or "spca"
    iteration: int
    r_sec: float
    s: float
    solver_status: str

    def to_csv_row(self) -> List[str]:
        return [self.stage, str(self.iteration), format_value(self.r_sec), format_value(self.s), self.solver_status]


class RISTraceRow(BaseModel):
    """One iteration of the sequential rank-one relaxation"""

    model_config = ConfigDict(frozen=True)

    iteration: int
    objective: float
    eps: float
    delta: float
    eps_ratio: float
    solver_status: str

    def to_csv_row(self) -> List[str]:
        return [
            str(self.iteration), format_value(self.objective), format_value(self.eps),
            format_value(self.delta), format_value(self.eps_ratio), self.solver_status,
        ]


SPCA_TRACE_HEADER = ["stage", "iteration", "r_sec", "s", "solver_status"]
RIS_TRACE_HEADER = ["l", "objective", "eps", "delta", "eps_ratio", "solver_status"]


class ExperimentRecord(BaseModel):
    """Exact-evaluated outcome of one outer iteration of one realization"""

    model_config = ConfigDict(frozen=True)

    sweep_value: float
    realization: int
    outer_iter: int
    r_sec: float
    sum_rate: float
    energy_worst: float
    feasible: bool
    eps_ratio: float
    wall_ms: float
    converged: bool = False
    spca_iterations: int = 0
    ris_iterations: int = 0
    # eps stopped short of rank one (step underflow or l_max)
    rank_incomplete: bool = False

    def to_csv_row(self) -> List[str]:
        values = [
            self.sweep_value, self.realization, self.outer_iter, self.r_sec, self.sum_rate,
            self.energy_worst, self.feasible, self.eps_ratio, self.wall_ms,
        ]
        return [format_value(v) for v in values]


RECORD_HEADER = [
    "sweep_value", "realization", "outer_iter", "r_sec", "sum_rate",
    "energy_worst", "feasible", "eps_ratio", "wall_ms",
]


class AggregateRow(BaseModel):
    """Mean and standard deviation over realizations at one sweep value"""

    model_config = ConfigDict(frozen=True)

    sweep_value: float
    n_realizations: int
    n_failed: int
    r_sec_mean: float
    r_sec_std: float
    sum_rate_mean: float
    sum_rate_std: float
    feasible_fraction: float
    ris_iterations_mean: float
    rank_incomplete_fraction: float

    def to_csv_row(self) -> List[str]:
        return [format_value(v) for v in self.model_dump().values()]


AGGREGATE_HEADER = list(AggregateRow.model_fields)


class ExperimentResult(BaseModel):
    """All records of a run plus aggregates recomputable from them"""

    sweep_key: Optional[str] = None
    records: List[ExperimentRecord] = []
    failures: Dict[float, int] = {}

    def final_records(self) -> List[ExperimentRecord]:
        """Last outer iteration of every realization"""
        last: Dict[tuple, ExperimentRecord] = {}
        for record in self.records:
            key = (record.sweep_value, record.realization)
            if key not in last or record.outer_iter > last[key].outer_iter:
                last[key] = record
        return sorted(last.values(), key=lambda r: (r.sweep_value, r.realization))

    def aggregate(self) -> List[AggregateRow]:
        finals = self.final_records()
        values = sorted({r.sweep_value for r in finals} | set(self.failures))
        rows = []
        for value in values:
            group = [r for r in finals if r.sweep_value == value]
            r_sec = np.array([r.r_sec for r in group]) if group else np.zeros(0)
            sum_rate = np.array([r.sum_rate for r in group]) if group else np.zeros(0)
            rows.append(
                AggregateRow(
                    sweep_value=value,
                    n_realizations=len(group),
                    n_failed=self.failures.get(value, 0),
                    r_sec_mean=float(r_sec.mean()) if group else float("nan"),
                    r_sec_std=float(r_sec.std()) if group else float("nan"),
                    sum_rate_mean=float(sum_rate.mean()) if group else float("nan"),
                    sum_rate_std=float(sum_rate.std()) if group else float("nan"),
                    feasible_fraction=float(np.mean([r.feasible for r in group])) if group else 0.0,
                    ris_iterations_mean=float(np.mean([r.ris_iterations for r in group])) if group else 0.0,
                    rank_incomplete_fraction=float(np.mean([r.rank_incomplete for r in group])) if group else 0.0,
                )
            )
        return rows

    @property
    def total_failures(self) -> int:
        return sum(self.failures.values())
