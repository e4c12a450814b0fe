"""
Database models for persisted experiment results
"""

from .run_record import RunRecord

__all__ = [
    "RunRecord",
]
