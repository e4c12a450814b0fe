"""
Typed failures raised across the optimization stack
"""

from typing import Optional


class StarSwiptError(Exception):
    """Base failure: an exit status plus a human readable detail"""

    status_code: int = 1

    def __init__(self, detail: str, status_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if status_code is not None:
            self.status_code = status_code


class ConfigError(StarSwiptError):
    """Invalid, unknown or missing configuration"""

    status_code = 2


class DimensionError(StarSwiptError, ValueError):
    """Array shapes do not agree with the scenario"""


class DomainError(StarSwiptError, ValueError):
    """Argument outside the mathematical domain of an operation"""


class SubproblemInfeasible(StarSwiptError):
    """A convex subproblem could not be solved to optimality"""

    def __init__(self, stage: str, iteration: int, solver_status: str, detail: str = ""):
        message = f"{stage} subproblem failed at iteration {iteration} ({solver_status})"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.stage = stage
        self.iteration = iteration
        self.solver_status = solver_status


class OptimizationFailure(StarSwiptError):
    """A sub-algorithm failure tagged with the outer iteration it happened in"""

    def __init__(self, outer_iteration: int, cause: StarSwiptError):
        super().__init__(f"outer iteration {outer_iteration}: {cause.detail}")
        self.outer_iteration = outer_iteration
        self.cause = cause
