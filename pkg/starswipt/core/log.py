import logging

from starswipt.core.config import settings


def setup_logging(level: str | None = None) -> None:
    """Configure the root logger once from settings"""
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format=settings.log_format,
    )
    # cvxpy is chatty at INFO
    logging.getLogger("cvxpy").setLevel(logging.WARNING)
