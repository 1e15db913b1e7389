"""Node types for the sweep pipeline workflow."""

MAP_TASKS_NODE = "map_tasks_node"
EVALUATE_TASK_NODE = "evaluate_task_node"
COLLECT_RESULTS_NODE = "collect_results_node"
DELIVERY_NODE = "delivery_node"
