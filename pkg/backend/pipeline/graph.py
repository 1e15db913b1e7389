"""LangGraph workflow definition for the sweep pipeline."""

import uuid
from datetime import datetime
from typing import Any, Dict, List, Optional

from langgraph.graph import StateGraph

from backend.pipeline.node_types import (
    COLLECT_RESULTS_NODE,
    DELIVERY_NODE,
    EVALUATE_TASK_NODE,
    MAP_TASKS_NODE,
)
from backend.pipeline.nodes import (
    collect_results_node,
    delivery_node,
    evaluate_task_node,
    map_tasks_node,
)
from backend.pipeline.state import PipelineState


def build_graph():
    """Build and compile the sweep workflow graph."""
    flow = StateGraph(PipelineState)

    # Add pipeline nodes
    flow.add_node(MAP_TASKS_NODE, map_tasks_node)
    flow.add_node(EVALUATE_TASK_NODE, evaluate_task_node)
    flow.add_node(COLLECT_RESULTS_NODE, collect_results_node)
    flow.add_node(DELIVERY_NODE, delivery_node)

    # Set the entry point
    flow.set_entry_point(MAP_TASKS_NODE)

    return flow.compile()


def initial_state(
    tasks: List[Dict[str, Any]], settings: Optional[Dict[str, Any]] = None
) -> PipelineState:
    return {
        "settings": settings or {},
        "tasks": tasks,
        "records": [],
        "rows": [],
        "pipeline_id": str(uuid.uuid4()),
        "start_time": datetime.now(),
        "delivered": [],
    }


def run_pipeline(
    tasks: List[Dict[str, Any]],
    settings: Optional[Dict[str, Any]] = None,
    jobs: int = 1,
) -> PipelineState:
    """Evaluate tasks with at most `jobs` running at once and deliver the rows.

    Rows come back in task order regardless of jobs.
    """
    graph = build_graph()
    return graph.invoke(
        initial_state(tasks, settings), config={"max_concurrency": max(1, int(jobs))}
    )
