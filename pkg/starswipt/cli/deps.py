"""
Common dependencies for CLI commands
"""

import argparse
from pathlib import Path
from typing import List

from starswipt.core.exceptions import ConfigError
from starswipt.database import init_db, store_result
from starswipt.schemas.experiment import ExperimentResult
from starswipt.schemas.scenario import ScenarioConfig
from starswipt.services.pipeline import write_aggregate, write_records
from starswipt.services.scenario import load_config, override_config


def add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="INI scenario file (defaults if omitted)")
    parser.add_argument("--seed", type=int, default=None, help="base seed; realization r uses seed + r")
    parser.add_argument("--realizations", type=int, default=None, help="override n_realizations")


def get_config(args: argparse.Namespace) -> ScenarioConfig:
    """Scenario from --config with command-line overrides applied"""
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "realizations", None) is not None:
        changes["n_realizations"] = args.realizations
    return override_config(cfg, **changes) if changes else cfg


def get_out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path exists and is not a directory: {out}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def parse_values(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"sweep values must be comma-separated numbers, got '{text}'") from exc
    if not values:
        raise ConfigError("no sweep values given")
    return values


def save_result(result: ExperimentResult, out: Path, run_label: str) -> List[Path]:
    """CSV files, plot data and the results database"""
    paths = [write_records(result, out)]
    paths += write_aggregate(result, out)
    store_result(init_db(out), result, run_label)
    return paths


def print_aggregate(result: ExperimentResult) -> None:
    print(f"{'value':>12} {'runs':>5} {'failed':>6} {'r_sec':>12} {'sum_rate':>12} {'feasible':>9}")
    for row in result.aggregate():
        print(f"{row.sweep_value:>12.6g} {row.n_realizations:>5d} {row.n_failed:>6d} "
              f"{row.r_sec_mean:>12.6g} {row.sum_rate_mean:>12.6g} {row.feasible_fraction:>9.2f}")
