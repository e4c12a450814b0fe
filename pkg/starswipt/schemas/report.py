from typing import Any, List

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

# Floats in every CSV file carry 9 significant digits
FLOAT_FORMAT = "{:.9g}"


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return FLOAT_FORMAT.format(float(value))


class RateReport(BaseModel):
    """Exact rates, harvested energy and worst-case secrecy of one design

    Leakage and worst-case energy are reported twice: through the closed-form
    norm-ball bounds ("bound") and through sampling the uncertainty ball
    ("sampled"). The bound must dominate the sampled leakage.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alpha: np.ndarray
    r_ck: np.ndarray
    r_c: float
    r_k: np.ndarray
    leak_common_bound: np.ndarray
    leak_private_bound: np.ndarray
    leak_common_sampled: np.ndarray
    leak_private_sampled: np.ndarray
    energy_nominal: np.ndarray
    energy_worst_bound: np.ndarray
    energy_worst_sampled: np.ndarray
    secrecy_bound: np.ndarray
    secrecy_sampled: np.ndarray
    bound_dominates: bool
    decodable_flag: bool

    @field_validator(
        "alpha", "r_ck", "r_k", "leak_common_bound", "leak_private_bound",
        "leak_common_sampled", "leak_private_sampled", "energy_nominal",
        "energy_worst_bound", "energy_worst_sampled", "secrecy_bound", "secrecy_sampled",
        mode="before",
    )
    @classmethod
    def freeze(cls, value: Any) -> np.ndarray:
        array = np.array(value, dtype=float)
        array.flags.writeable = False
        return array

    @property
    def r_sec(self) -> float:
        """Worst-case secrecy objective min_k over the closed-form bounds"""
        return float(np.min(self.secrecy_bound))

    @property
    def r_sec_sampled(self) -> float:
        return float(np.min(self.secrecy_sampled))

    @property
    def sum_rate(self) -> float:
        return float(self.r_c + np.sum(self.r_k))

    @property
    def energy_worst(self) -> float:
        """Sum over UERs of the conservative worst-case harvested energy"""
        return float(np.sum(self.energy_worst_bound))

    @staticmethod
    def csv_header(n_ir: int, n_uer: int) -> List[str]:
        """Column order of `to_csv_row` (stable for given K, J)"""
        ks = range(1, n_ir + 1)
        js = range(1, n_uer + 1)
        columns = ["r_sec", "r_sec_sampled", "sum_rate", "r_c"]
        columns += [f"r_c_{k}" for k in ks]
        columns += [f"r_{k}" for k in ks]
        columns += [f"alpha_{k}" for k in ks]
        columns += [f"leak_c_bound_{j}" for j in js]
        columns += [f"leak_c_sampled_{j}" for j in js]
        columns += [f"leak_p_bound_{k}_{j}" for k in ks for j in js]
        columns += [f"leak_p_sampled_{k}_{j}" for k in ks for j in js]
        columns += [f"energy_{j}" for j in js]
        columns += [f"energy_worst_bound_{j}" for j in js]
        columns += [f"energy_worst_sampled_{j}" for j in js]
        columns += [f"secrecy_bound_{k}" for k in ks]
        columns += [f"secrecy_sampled_{k}" for k in ks]
        columns += ["bound_dominates", "decodable"]
        return columns

    def to_csv_row(self) -> List[str]:
        values: List[Any] = [self.r_sec, self.r_sec_sampled, self.sum_rate, self.r_c]
        values += list(self.r_ck) + list(self.r_k) + list(self.alpha)
        values += list(self.leak_common_bound) + list(self.leak_common_sampled)
        values += list(self.leak_private_bound.ravel()) + list(self.leak_private_sampled.ravel())
        values += list(self.energy_nominal) + list(self.energy_worst_bound) + list(self.energy_worst_sampled)
        values += list(self.secrecy_bound) + list(self.secrecy_sampled)
        values += [self.bound_dominates, self.decodable_flag]
        return [format_value(v) for v in values]
