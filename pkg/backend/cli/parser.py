"""Argument parser for the sharp-finite-keys command line."""

import argparse
import os

from backend.bounds.bound_types import Direction, EkertDirection
from backend.cli import commands

ENV_LOG_LEVEL = "FKS_LOG_LEVEL"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--log-level",
        type=str.upper,
        choices=LOG_LEVELS,
        default=os.getenv(ENV_LOG_LEVEL, "INFO").upper(),
        help=f"logging level (default: ${ENV_LOG_LEVEL} or INFO)",
    )
    common.add_argument(
        "--ekert-direction",
        choices=[d.value for d in EkertDirection],
        default=None,
        help="optimization direction of the Ekert-combined threshold",
    )
    return common


def _jobs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers")


def _budget_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="RunConfig JSON supplying defaults")
    parser.add_argument("--N", type=float, help="block size")
    parser.add_argument("--eps-pe", type=float)
    parser.add_argument("--eps-cor", type=float)
    parser.add_argument("--eps-pa", type=float)
    parser.add_argument("--lambda-ec-factor", type=float)
    parser.add_argument("--family", action="append", help="bound family (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="sharp-finite-keys",
        description="Finite-key confidence bounds, thresholds and QKD key rates.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    bound = subparsers.add_parser("bound", parents=[common], help="evaluate a confidence bound")
    bound.add_argument("--kind", help="bound family")
    bound.add_argument("--all", action="store_true", help="every applicable family")
    bound.add_argument(
        "--direction", choices=[d.value for d in Direction], default=Direction.UPPER.value
    )
    bound.add_argument("--n", type=float, required=True, help="sample size")
    bound.add_argument("--count", type=float, help="observed count")
    bound.add_argument("--population", type=float, help="population size N (sampling families)")
    bound.add_argument("--eps", type=float, required=True)
    bound.add_argument("--p-th", type=float, help="tolerated sample error (threshold form)")
    bound.add_argument("--clamp", action="store_true", help="clamp counts to [0, n]")
    bound.set_defaults(func=commands.cmd_bound)

    thresholds = subparsers.add_parser(
        "threshold", parents=[common], help="compare q_th(p_th) across families"
    )
    thresholds.add_argument("--config", help="RunConfig JSON supplying defaults")
    thresholds.add_argument("--population", type=float, help="population size N")
    thresholds.add_argument("--n", type=float, help="sample size")
    thresholds.add_argument("--eps", type=float)
    thresholds.add_argument("--p-th", type=float, nargs="+")
    thresholds.add_argument("--family", action="append")
    _jobs(thresholds)
    thresholds.set_defaults(func=commands.cmd_threshold)

    keyrate = subparsers.add_parser("keyrate", help="secret key length at one block size")
    protocols = keyrate.add_subparsers(dest="protocol", required=True)

    bbm92 = protocols.add_parser("bbm92", parents=[common])
    _budget_options(bbm92)
    bbm92.add_argument("--n", type=int, help="test size (optimized when omitted)")
    bbm92.add_argument("--p-th", type=float)
    bbm92.set_defaults(func=commands.cmd_keyrate_bbm92)

    decoy = protocols.add_parser("decoy", parents=[common])
    _budget_options(decoy)
    decoy.add_argument("--delta", type=float)
    decoy.add_argument("--theta-th", type=float)
    decoy.add_argument("--omega", type=float)
    for name in ("--mu", "--nu", "--p-mu", "--p-nu", "--q-x"):
        decoy.add_argument(name, type=float)
    loss = decoy.add_mutually_exclusive_group()
    loss.add_argument("--loss-db", type=float)
    loss.add_argument("--eta", type=float)
    decoy.add_argument("--p-d", type=float)
    decoy.add_argument("--e-mis", type=float)
    decoy.set_defaults(func=commands.cmd_keyrate_decoy)

    sweep = subparsers.add_parser("sweep", parents=[common], help="run a configured sweep")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", help="CSV path (overrides output.csv)")
    _jobs(sweep)
    sweep.set_defaults(func=commands.cmd_sweep)

    minblock = subparsers.add_parser(
        "minblock", parents=[common], help="minimum block size per family"
    )
    minblock.add_argument("--config", required=True)
    minblock.add_argument("--report", help="JSON report path (overrides output.report)")
    _jobs(minblock)
    minblock.set_defaults(func=commands.cmd_minblock)

    return parser
