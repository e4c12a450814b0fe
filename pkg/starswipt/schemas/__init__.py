"""
Pydantic value objects shared by every service module
"""

from .scenario import ScenarioConfig, ChannelSet
from .design import RISProfile, PrecoderSet
from .report import RateReport
from .state import ExpansionPoint, PrecoderSubproblemState, RISSubproblemState
from .experiment import (
    SPCATraceRow,
    RISTraceRow,
    ExperimentRecord,
    AggregateRow,
    ExperimentResult,
    RECORD_HEADER,
    AGGREGATE_HEADER,
    SPCA_TRACE_HEADER,
    RIS_TRACE_HEADER,
)

__all__ = [
    # Scenario
    "ScenarioConfig",
    "ChannelSet",

    # Design
    "RISProfile",
    "PrecoderSet",

    # Reports
    "RateReport",

    # Optimizer state
    "ExpansionPoint",
    "PrecoderSubproblemState",
    "RISSubproblemState",

    # Experiments
    "SPCATraceRow",
    "RISTraceRow",
    "ExperimentRecord",
    "AggregateRow",
    "ExperimentResult",
    "RECORD_HEADER",
    "AGGREGATE_HEADER",
    "SPCA_TRACE_HEADER",
    "RIS_TRACE_HEADER",
]
