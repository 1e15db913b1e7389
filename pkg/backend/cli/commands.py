"""Subcommand implementations; each returns the process exit code."""

import argparse
import copy
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Tuple

from backend.bounds.bernoulli import CP_MAX_EPS, bernoulli_interval
from backend.bounds.bound_types import (
    DEFAULT_EKERT_DIRECTION,
    BernoulliBoundKind,
    Direction,
    SamplingBoundKind,
)
from backend.bounds.sampling import confidence_upper, threshold
from backend.cli.config import RunConfig, config_from_dict, load_config
from backend.common.errors import ConfigurationError, InfeasibleError
from backend.common.utils import render_csv
from backend.data_model.sweep import DecoyParams, Protocol, SweepRecord, TaskKind
from backend.numerics.precision import set_precision
from backend.optimizer.block_size import pairwise_reductions
from backend.optimizer.search import optimize_bbm92, optimize_decoy
from backend.pipeline.graph import run_pipeline
from backend.pipeline.nodes import sweep_row, header_for
from backend.protocols.bbm92 import key_length_bbm92
from backend.protocols.decoy import evaluate_decoy

logger = logging.getLogger(__name__)

BOUND_HEADER = ["kind", "direction", "n", "count", "population", "eps", "p_th", "value", "status"]
MINBLOCK_HEADER = ["protocol", "family", "n_min", "feasible", "verified", "status"]
REDUCTION_HEADER = ["family", "baseline", "reduction_pct"]


def _print_csv(header: List[str], rows: List[Dict[str, Any]], stream: Optional[TextIO] = None) -> None:
    (stream or sys.stdout).write(render_csv(header, rows))


def _bernoulli_row(kind: BernoulliBoundKind, args: argparse.Namespace) -> Dict[str, Any]:
    direction = Direction(args.direction)
    value = bernoulli_interval(kind, direction, args.eps, args.count, args.n)
    status = "ok"
    if not 0.0 <= value <= args.n:
        if args.clamp:
            value, status = min(max(value, 0.0), float(args.n)), "clamped"
        elif kind is BernoulliBoundKind.RELAXED_CHERNOFF:
            status = "sentinel"
        else:
            status = "out_of_range"
    return {
        "kind": kind.value, "direction": direction.value, "n": args.n, "count": args.count,
        "population": None, "eps": args.eps, "p_th": None, "value": value, "status": status,
    }


def _sampling_row(kind: SamplingBoundKind, args: argparse.Namespace) -> Dict[str, Any]:
    row = {
        "kind": kind.value, "n": args.n, "count": args.count, "population": args.population,
        "eps": args.eps, "p_th": args.p_th,
    }
    if args.p_th is not None:
        try:
            value = threshold(
                kind, args.population, args.n, args.eps, args.p_th,
                args.ekert_direction or DEFAULT_EKERT_DIRECTION,
            )
            status = "ok"
        except InfeasibleError:
            value, status = math.inf, "infeasible"
        row.update(direction="threshold", value=value, status=status)
        return row
    if Direction(args.direction) is not Direction.UPPER:
        raise ConfigurationError("sampling bounds are upper bounds only", field="direction")
    value = confidence_upper(kind, args.population, args.n, args.eps, args.count / args.n)
    row.update(direction="upper", value=value, status="sentinel" if value > 1.0 else "ok")
    return row


def _bound_kinds(args: argparse.Namespace) -> List[Any]:
    sampling = args.population is not None
    if args.all:
        if not sampling:
            return [
                kind for kind in BernoulliBoundKind
                if kind is not BernoulliBoundKind.CLOPPER_PEARSON_BINOMIAL or args.eps <= CP_MAX_EPS
            ]
        if args.p_th is not None:
            return list(SamplingBoundKind)
        return [kind for kind in SamplingBoundKind if kind.has_confidence_bound]
    if args.kind is None:
        raise ConfigurationError("give --kind or --all", field="kind")
    try:
        return [SamplingBoundKind(args.kind) if sampling else BernoulliBoundKind(args.kind)]
    except ValueError as exc:
        family = "sampling" if sampling else "bernoulli"
        raise ConfigurationError(f"{args.kind!r} is not a {family} family", field="kind") from exc


def cmd_bound(args: argparse.Namespace) -> int:
    """Evaluate one bound family (or every applicable family with --all)."""
    sampling = args.population is not None
    if args.p_th is None and args.count is None:
        raise ConfigurationError("give --count or --p-th", field="count")
    if not sampling and args.count is None:
        raise ConfigurationError("Bernoulli bounds need --count", field="count")
    rows = []
    for kind in _bound_kinds(args):
        rows.append(_sampling_row(kind, args) if sampling else _bernoulli_row(kind, args))
    _print_csv(BOUND_HEADER, rows)
    return 0


def _base_source(args: argparse.Namespace, protocol: str) -> Dict[str, Any]:
    if getattr(args, "config", None):
        source = copy.deepcopy(load_config(args.config).source)
    else:
        source = {}
    source["protocol"] = protocol
    if getattr(args, "ekert_direction", None):
        source["ekert_direction"] = args.ekert_direction
    return source


def _overlay(source: Dict[str, Any], values: Dict[str, Any], section: Optional[str] = None) -> None:
    target = source
    if section is not None:
        target = source.setdefault(section, {})
    for key, value in values.items():
        if value is not None:
            target[key] = value


def _configured_families(config: RunConfig, fallback: str) -> List[str]:
    if "families" in config.source:
        return list(config.families)
    return [fallback]


def _prepare(config: RunConfig) -> RunConfig:
    set_precision(config.precision)
    return config


def threshold_tasks(config: RunConfig) -> List[Dict[str, Any]]:
    sweep = config.threshold
    return [
        {
            "kind": TaskKind.THRESHOLD_POINT,
            "family": SamplingBoundKind(family),
            "N": sweep.N,
            "n": sweep.n,
            "eps": sweep.eps,
            "p_th": p_th,
            "ekert_direction": config.bbm92.ekert_direction,
        }
        for p_th in sweep.p_th
        for family in config.families
    ]


def cmd_threshold(args: argparse.Namespace) -> int:
    """Threshold comparison table q_th(p_th) for several families."""
    source = _base_source(args, "threshold")
    section = dict(source.get("threshold", {}))
    _overlay(section, {"N": args.population, "n": args.n, "eps": args.eps, "p_th": args.p_th})
    source["threshold"] = section
    if args.family:
        source["families"] = args.family
    config = _prepare(config_from_dict(source))
    state = run_pipeline(threshold_tasks(config), {}, args.jobs)
    _print_csv(header_for(TaskKind.THRESHOLD_POINT), state["rows"])
    return 0


def cmd_keyrate_bbm92(args: argparse.Namespace) -> int:
    """BBM92 key length at one block size; the test size is optimized unless --n is given."""
    source = _base_source(args, "bbm92")
    if args.N is not None:
        source.pop("sweep", None)
    _overlay(source, {"N": args.N, "p_th": args.p_th, "eps_pe": args.eps_pe,
                      "eps_cor": args.eps_cor, "eps_pa": args.eps_pa,
                      "lambda_ec_factor": args.lambda_ec_factor})
    config = _prepare(config_from_dict(source))
    if not config.block_sizes:
        raise ConfigurationError("give --N or an N in the config", field="N")
    N = int(config.block_sizes[0])
    families = args.family or _configured_families(config, "relaxed_chernoff")

    rows = []
    for family in families:
        template = config.bbm92_template(family)
        if args.n is not None:
            n, result = args.n, key_length_bbm92(template.build(N, args.n))
        else:
            n, result = optimize_bbm92(N, template)
        record = SweepRecord(
            N=N, family=template.bound_kind.value, l=result.l, rate=result.rate,
            eps_sec=result.eps_sec, feasible=result.feasible, n_opt=n,
        )
        rows.append(sweep_row(record))
    _print_csv(header_for(TaskKind.BBM92_POINT), rows)
    return 0


def _explicit_params(args: argparse.Namespace) -> Optional[DecoyParams]:
    values = (args.mu, args.nu, args.p_mu, args.p_nu, args.q_x)
    if all(v is None for v in values):
        return None
    if any(v is None for v in values):
        raise ConfigurationError(
            "give all of --mu, --nu, --p-mu, --p-nu, --q-x or none of them", field="params"
        )
    return DecoyParams(*values)


def cmd_keyrate_decoy(args: argparse.Namespace) -> int:
    """Decoy-state key length at one block size; parameters are optimized unless all are given."""
    source = _base_source(args, "decoy")
    if args.N is not None:
        source.pop("sweep", None)
    _overlay(source, {"N": args.N, "eps_pe": args.eps_pe, "eps_cor": args.eps_cor,
                      "eps_pa": args.eps_pa, "delta": args.delta, "theta_th": args.theta_th,
                      "lambda_ec_factor": args.lambda_ec_factor})
    if args.eta is not None:
        source.setdefault("channel", {}).pop("loss_db", None)
    elif args.loss_db is not None:
        source.setdefault("channel", {}).pop("eta", None)
    _overlay(source, {"loss_db": args.loss_db, "eta": args.eta, "p_d": args.p_d,
                      "e_mis": args.e_mis}, section="channel")
    _overlay(source, {"omega": args.omega}, section="search")
    config = _prepare(config_from_dict(source))
    if not config.block_sizes:
        raise ConfigurationError("give --N or an N in the config", field="N")
    N = config.block_sizes[0]
    families = args.family or _configured_families(config, "relaxed_chernoff+relaxed_chernoff")
    explicit = _explicit_params(args)

    rows = []
    for family in families:
        template = config.decoy_template(family)
        if explicit is not None:
            inputs = template.build(
                N, explicit.mu, explicit.nu, config.search.omega,
                explicit.p_mu, explicit.p_nu, explicit.q_x,
            )
            params = explicit
            result = evaluate_decoy(inputs, config.channel, config.search.bset_resolution)
        else:
            params, result = optimize_decoy(N, config.channel, template, config.search)
        record = SweepRecord(
            N=N, family=template.sampling_kind.value,
            bernoulli_family=template.bernoulli_kind.value, l=result.l, rate=result.rate,
            eps_sec=result.eps_sec, feasible=result.feasible, params=params,
        )
        rows.append(sweep_row(record))
    _print_csv(header_for(TaskKind.DECOY_POINT), rows)
    return 0


def sweep_tasks(config: RunConfig) -> Tuple[List[Dict[str, Any]], List[str]]:
    """Tasks (family-major, then block size) and the CSV header of a sweep."""
    if config.protocol == "threshold":
        return threshold_tasks(config), header_for(TaskKind.THRESHOLD_POINT)
    if not config.block_sizes:
        raise ConfigurationError("a key-rate sweep needs N or a sweep definition", field="sweep")
    if config.protocol == "bbm92":
        tasks = [
            {"kind": TaskKind.BBM92_POINT, "N": int(N), "template": config.bbm92_template(family)}
            for family in config.families
            for N in config.block_sizes
        ]
        return tasks, header_for(TaskKind.BBM92_POINT, with_marker=True)
    tasks = [
        {
            "kind": TaskKind.DECOY_POINT,
            "N": N,
            "template": config.decoy_template(family),
            "model": config.channel,
            "space": config.search,
        }
        for family in config.families
        for N in config.block_sizes
    ]
    return tasks, header_for(TaskKind.DECOY_POINT)


def cmd_sweep(args: argparse.Namespace) -> int:
    """Run a configured sweep; rows go to the CSV path or to stdout."""
    config = _prepare(load_config(args.config))
    tasks, header = sweep_tasks(config)
    csv_path = args.out or config.output.csv
    metadata_path = config.output.metadata
    if args.out:
        metadata_path = str(Path(args.out).with_suffix(".meta.json"))
    settings = {
        "csv_path": csv_path,
        "header": header,
        "metadata_path": metadata_path if csv_path else None,
        "config": config.source,
        "seed": config.seed,
    }
    logger.info("Sweep: %s, %d families, %d tasks", config.protocol, len(config.families), len(tasks))
    state = run_pipeline(tasks, settings, args.jobs)
    if not csv_path:
        _print_csv(header, state["rows"])
    return 0


def minblock_tasks(config: RunConfig) -> List[Dict[str, Any]]:
    if config.protocol == "threshold":
        raise ConfigurationError("minblock needs protocol bbm92 or decoy", field="protocol")
    protocol = Protocol(config.protocol)
    tasks = []
    for family in config.families:
        template = (
            config.bbm92_template(family)
            if protocol is Protocol.BBM92
            else config.decoy_template(family)
        )
        tasks.append({
            "kind": TaskKind.MIN_BLOCK,
            "protocol": protocol,
            "template": template,
            "model": config.channel,
            "space": config.search,
            "cap": config.cap,
        })
    return tasks


def _minblock_status(report: Dict[str, Any]) -> str:
    if not report["feasible"]:
        return report["notes"][-1] if report["notes"] else "infeasible"
    return "ok" if report["verified"] else "unverified"


def cmd_minblock(args: argparse.Namespace) -> int:
    """Minimum block size per family and the pairwise reductions between them."""
    config = _prepare(load_config(args.config))
    settings = {
        "report_path": args.report or config.output.report,
        "metadata_path": None,
        "config": config.source,
    }
    state = run_pipeline(minblock_tasks(config), settings, args.jobs)
    reports = state["rows"]
    _print_csv(MINBLOCK_HEADER, [dict(r, status=_minblock_status(r)) for r in reports])
    reductions = pairwise_reductions(reports)
    if reductions:
        sys.stdout.write("\n")
        _print_csv(REDUCTION_HEADER, reductions)
    return 0
