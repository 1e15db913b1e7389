"""Pipeline nodes implementation for the sweep workflow."""

import logging
import math
from datetime import datetime
from typing import Any, Dict, List

from langgraph.graph import END
from langgraph.types import Command, Send

from backend.bounds.bound_types import SamplingBoundKind
from backend.bounds.sampling import threshold
from backend.common.errors import ConfigurationError, InfeasibleError
from backend.common.utils import config_digest, software_version, write_csv, write_json
from backend.data_model.protocol import BBM92Template, DecoyTemplate
from backend.data_model.sweep import (
    MICIUS_BLOCK_SIZE,
    SweepRecord,
    TaskKind,
    ThresholdRecord,
)
from backend.optimizer.block_size import BLOCK_CAP, min_block_size, pairwise_reductions
from backend.optimizer.search import infeasible_result, optimize_bbm92, optimize_decoy
from backend.pipeline.node_types import (
    COLLECT_RESULTS_NODE,
    DELIVERY_NODE,
    EVALUATE_TASK_NODE,
)
from backend.pipeline.state import PipelineState, SweepTaskState

logger = logging.getLogger(__name__)

BBM92_HEADER = ["N", "family", "n_opt", "l", "rate", "eps_sec", "feasible"]
DECOY_HEADER = [
    "N", "family", "bernoulli_family", "mu", "nu", "p_mu", "p_nu", "q_x",
    "l", "rate", "eps_sec", "feasible",
]
THRESHOLD_HEADER = ["p_th", "family", "q_th", "status"]


def sweep_row(record: SweepRecord) -> Dict[str, Any]:
    row = {
        "N": record.N,
        "family": record.family,
        "n_opt": record.n_opt,
        "l": record.l,
        "rate": record.rate,
        "eps_sec": record.eps_sec,
        "feasible": record.feasible,
        "marker": record.marker,
        "bernoulli_family": record.bernoulli_family,
    }
    if record.params is not None:
        row.update(
            mu=record.params.mu, nu=record.params.nu, p_mu=record.params.p_mu,
            p_nu=record.params.p_nu, q_x=record.params.q_x,
        )
    return row


def _threshold_point(task: Dict[str, Any]) -> Dict[str, Any]:
    family = SamplingBoundKind(task["family"])
    options = {}
    if task.get("ekert_direction") is not None:
        options["ekert_direction"] = task["ekert_direction"]
    try:
        q_th = threshold(family, task["N"], task["n"], task["eps"], task["p_th"], **options)
    except InfeasibleError as exc:
        logger.warning(
            "Threshold at p_th=%g for %s is infeasible: %s", task["p_th"], family.value, exc
        )
        q_th = math.inf
    record = ThresholdRecord(p_th=task["p_th"], family=family.value, q_th=q_th)
    return {
        "p_th": record.p_th, "family": record.family, "q_th": record.q_th,
        "status": record.status,
    }


def _bbm92_point(task: Dict[str, Any]) -> Dict[str, Any]:
    N = int(task["N"])
    template: BBM92Template = task["template"]
    n_opt, result = optimize_bbm92(N, template)
    record = SweepRecord(
        N=N,
        family=template.bound_kind.value,
        l=result.l,
        rate=result.rate,
        eps_sec=result.eps_sec,
        feasible=result.feasible,
        n_opt=n_opt,
        marker="micius" if N == MICIUS_BLOCK_SIZE else "",
    )
    return sweep_row(record)


def _decoy_point(task: Dict[str, Any]) -> Dict[str, Any]:
    N = task["N"]
    template: DecoyTemplate = task["template"]
    try:
        params, result = optimize_decoy(N, task["model"], template, task.get("space"))
    except ConfigurationError as exc:
        if exc.field != "search":
            raise
        logger.warning("No valid decoy configuration at N=%g: %s", N, exc)
        params = None
        eps_sec = 2.0 * (math.sqrt(template.eps_pe) + template.delta) + template.eps_pa
        result = infeasible_result(eps_sec, template.eps_cor)
    record = SweepRecord(
        N=N,
        family=template.sampling_kind.value,
        bernoulli_family=template.bernoulli_kind.value,
        l=result.l,
        rate=result.rate,
        eps_sec=result.eps_sec,
        feasible=result.feasible,
        params=params,
    )
    return sweep_row(record)


def _min_block(task: Dict[str, Any]) -> Dict[str, Any]:
    report = min_block_size(
        task["protocol"],
        task["template"],
        model=task.get("model"),
        space=task.get("space"),
        cap=task.get("cap") or BLOCK_CAP,
    )
    return report.to_dict()


_TASK_HANDLERS = {
    TaskKind.THRESHOLD_POINT: _threshold_point,
    TaskKind.BBM92_POINT: _bbm92_point,
    TaskKind.DECOY_POINT: _decoy_point,
    TaskKind.MIN_BLOCK: _min_block,
}


def evaluate_task(task: Dict[str, Any]) -> Dict[str, Any]:
    """Run a single sweep task and return its output row."""
    return _TASK_HANDLERS[TaskKind(task["kind"])](task)


def map_tasks_node(state: PipelineState) -> Command:
    """
    Map phase: fan out one evaluation per sweep task.

    Tasks are independent, so LangGraph runs them in parallel up to the
    max_concurrency given at invocation.
    """
    pipeline_id = state["pipeline_id"]
    tasks = state.get("tasks", [])

    logger.info("[Pipeline %s] Dispatching %d tasks", pipeline_id, len(tasks))

    if not tasks:
        return Command(goto=DELIVERY_NODE, update={"rows": []})

    sends: List[Send] = [
        Send(
            EVALUATE_TASK_NODE,
            {"task": task, "task_index": i, "pipeline_id": pipeline_id},
        )
        for i, task in enumerate(tasks)
    ]
    return Command(goto=sends)


def evaluate_task_node(state: SweepTaskState) -> Command:
    """Evaluate one task; results are merged through the records reducer."""
    task = state["task"]
    task_index = state["task_index"]
    pipeline_id = state["pipeline_id"]

    logger.debug(
        "[Pipeline %s] [Task %d] %s", pipeline_id, task_index, TaskKind(task["kind"]).value
    )
    row = evaluate_task(task)

    return Command(
        goto=COLLECT_RESULTS_NODE,
        update={"records": [{"index": task_index, "row": row}]},
    )


def collect_results_node(state: PipelineState) -> Command:
    """
    Collect rows from all evaluated tasks in task order.

    This is the "reduce" step; completion order of the parallel tasks does not
    affect the output.
    """
    pipeline_id = state.get("pipeline_id", "unknown")
    records = sorted(state.get("records", []), key=lambda record: record["index"])
    rows = [record["row"] for record in records]

    logger.info("[Pipeline %s] Collected %d rows", pipeline_id, len(rows))

    return Command(goto=DELIVERY_NODE, update={"rows": rows})


def delivery_node(state: PipelineState) -> Command:
    """
    Write the collected rows as CSV or a JSON report, plus the metadata file.

    Settings keys: csv_path and header for tabular output, report_path for
    JSON output, metadata_path and config for the reproducibility record.
    """
    pipeline_id = state["pipeline_id"]
    settings = state.get("settings", {})
    rows = state.get("rows", [])
    delivered: List[str] = []

    if settings.get("csv_path"):
        delivered.append(write_csv(settings["csv_path"], settings["header"], rows))
    if settings.get("report_path"):
        report = {"families": rows, "reductions": pairwise_reductions(rows)}
        delivered.append(write_json(settings["report_path"], report))
    if settings.get("metadata_path"):
        metadata = {
            "config_sha256": config_digest(settings.get("config", {})),
            "software_version": software_version(),
            "rows": len(rows),
        }
        if settings.get("seed") is not None:
            metadata["seed"] = settings["seed"]
        delivered.append(write_json(settings["metadata_path"], metadata))

    start_time = state.get("start_time")
    elapsed = (datetime.now() - start_time).total_seconds() if start_time else 0.0
    logger.info("[Pipeline %s] Delivered %d files in %.1fs", pipeline_id, len(delivered), elapsed)

    return Command(goto=END, update={"delivered": delivered})


def header_for(kind, with_marker: bool = False) -> List[str]:
    """CSV header for a sweep of the given task kind."""
    kind = TaskKind(kind)
    if kind is TaskKind.THRESHOLD_POINT:
        return list(THRESHOLD_HEADER)
    if kind is TaskKind.DECOY_POINT:
        return list(DECOY_HEADER)
    return BBM92_HEADER + (["marker"] if with_marker else [])
