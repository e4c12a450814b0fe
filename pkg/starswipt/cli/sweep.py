"""
sweep command
"""

import argparse

from starswipt.cli.deps import add_config_args, get_config, get_out_dir, parse_values, print_aggregate, save_result
from starswipt.services.pipeline import run_experiment


def register(subparsers) -> None:
    sweep = subparsers.add_parser("sweep", help="vary one scenario key over a list of values")
    add_config_args(sweep)
    sweep.add_argument("--param", required=True, help="ScenarioConfig key to sweep")
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.set_defaults(handler=run_sweep)


def run_sweep(args: argparse.Namespace) -> int:
    cfg = get_config(args)
    values = parse_values(args.values)
    out = get_out_dir(args)
    result = run_experiment(cfg, sweep_key=args.param, values=values)
    save_result(result, out, run_label=f"sweep:{args.param}")
    print_aggregate(result)
    print(f"records written to {out}")
    return 1 if result.total_failures else 0
