"""
simulate and convergence commands
"""

import argparse
import logging

from starswipt.cli.deps import add_config_args, get_config, get_out_dir, print_aggregate, save_result
from starswipt.services.pipeline import convergence_run, run_experiment, write_traces

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    simulate = subparsers.add_parser("simulate", help="run n_realizations at one scenario")
    add_config_args(simulate)
    simulate.add_argument("--out", required=True, help="output directory")
    simulate.set_defaults(handler=run_simulate)

    convergence = subparsers.add_parser("convergence", help="per-iteration traces of one realization")
    add_config_args(convergence)
    convergence.add_argument("--out", required=True, help="output directory")
    convergence.set_defaults(handler=run_convergence)


def run_simulate(args: argparse.Namespace) -> int:
    cfg = get_config(args)
    out = get_out_dir(args)
    result = run_experiment(cfg)
    save_result(result, out, run_label="simulate")
    print_aggregate(result)
    print(f"records written to {out}")
    return 1 if result.total_failures else 0


def run_convergence(args: argparse.Namespace) -> int:
    cfg = get_config(args)
    out = get_out_dir(args)
    trace = convergence_run(cfg)
    for path in write_traces(trace, out):
        logger.debug("wrote %s", path)
    final = trace.outer[-1]
    print(f"outer iterations: {len(trace.outer)}  r_sec: {final.r_sec:.6g}  feasible: {final.feasible}")
    print(f"traces written to {out}")
    return 0 if final.feasible else 1
