"""Pipeline state definition for the sweep workflow."""

import operator
from datetime import datetime
from typing import Annotated, Any, Dict, List, Optional, TypedDict


class PipelineState(TypedDict):
    """State object that flows through the pipeline nodes."""

    # Input
    settings: Dict[str, Any]
    tasks: List[Dict[str, Any]]

    # Evaluation output, merged across parallel tasks
    records: Annotated[List[Dict[str, Any]], operator.add]
    rows: List[Dict[str, Any]]

    # Metadata
    pipeline_id: str
    start_time: Optional[datetime]
    delivered: List[str]


class SweepTaskState(TypedDict):
    """State for evaluating a single sweep point."""

    task: Dict[str, Any]
    task_index: int
    pipeline_id: str
