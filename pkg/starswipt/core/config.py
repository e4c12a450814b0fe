"""
Core runtime settings for STAR-SWIPT
"""

import os
from typing import List, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings (environment + .env)"""

    model_config = SettingsConfigDict(
        env_prefix="STAR_SWIPT_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # App info
    app_name: str = "STAR-SWIPT"
    app_version: str = "1.0.0"
    app_description: str = "Worst-case secrecy optimization for STAR-RIS aided RSMA SWIPT"
    debug: bool = False

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # Worker pool - env STAR_SWIPT_THREADS
    threads: Optional[int] = None

    # Conic backend
    solver: str = "CLARABEL"
    fallback_solvers_str: str = "SCS"
    solve_tolerance: float = 1e-8
    residual_tolerance: float = 1e-6
    max_solver_iterations: int = 10000
    dump_programs: bool = False
    dump_dir: str = "programs"

    # Results store
    results_db_name: str = "results.db"

    @property
    def fallback_solvers(self) -> List[str]:
        """Convert comma-separated string to list"""
        return [name.strip().upper() for name in self.fallback_solvers_str.split(",") if name.strip()]

    @property
    def worker_count(self) -> int:
        if self.threads is not None and self.threads > 0:
            return self.threads
        return os.cpu_count() or 1


# Global settings instance
settings = Settings()
