import json

import pytest

from backend.bounds.bound_types import SamplingBoundKind
from backend.bounds.sampling import threshold
from backend.common.utils import config_digest
from backend.data_model.protocol import ChannelModel
from backend.data_model.sweep import MICIUS_BLOCK_SIZE, Protocol, TaskKind
from backend.pipeline.graph import run_pipeline
from backend.pipeline.nodes import BBM92_HEADER, evaluate_task, header_for


def _threshold_tasks(p_values, families):
    return [
        {"kind": TaskKind.THRESHOLD_POINT, "family": family, "N": 1000, "n": 100,
         "eps": 1e-3, "p_th": p_th}
        for p_th in p_values
        for family in families
    ]


def test_rows_follow_task_order() -> None:
    families = ["serfling", "relaxed_chernoff", "cp_hg"]
    tasks = _threshold_tasks([0.02, 0.05, 0.1], families)
    serial = run_pipeline(tasks, jobs=1)["rows"]
    parallel = run_pipeline(tasks, jobs=4)["rows"]
    assert serial == parallel
    assert [row["family"] for row in serial] == families * 3
    assert serial[0]["q_th"] == threshold(SamplingBoundKind.SERFLING, 1000, 100, 1e-3, 0.02)


def test_empty_task_list() -> None:
    state = run_pipeline([])
    assert state["rows"] == []
    assert state["delivered"] == []
    assert "error" not in state


def test_delivery_writes_csv_and_metadata(tmp_path) -> None:
    config = {"protocol": "threshold", "seed": 7}
    settings = {
        "csv_path": str(tmp_path / "out" / "thresholds.csv"),
        "header": header_for(TaskKind.THRESHOLD_POINT),
        "metadata_path": str(tmp_path / "out" / "thresholds.meta.json"),
        "config": config,
        "seed": 7,
    }
    state = run_pipeline(_threshold_tasks([0.05], ["serfling", "cp_hg"]), settings)
    assert state["delivered"] == [settings["csv_path"], settings["metadata_path"]]

    lines = (tmp_path / "out" / "thresholds.csv").read_text(encoding="utf-8").split("\n")
    assert lines[0] == "p_th,family,q_th,status"
    assert lines[1].startswith("0.05,serfling,")
    assert lines[-1] == ""

    metadata = json.loads((tmp_path / "out" / "thresholds.meta.json").read_text(encoding="utf-8"))
    assert metadata["config_sha256"] == config_digest(config)
    assert metadata["rows"] == 2
    assert metadata["seed"] == 7
    assert "software_version" in metadata


def test_infeasible_threshold_is_emitted() -> None:
    task = {"kind": TaskKind.THRESHOLD_POINT, "family": "ekert", "N": 200, "n": 50,
            "eps": 1e-30, "p_th": 0.3}
    row = evaluate_task(task)
    assert row["q_th"] == float("inf")
    assert row["status"] == "infeasible"


def test_bbm92_point_marks_micius_block(bbm92_template) -> None:
    row = evaluate_task(
        {"kind": TaskKind.BBM92_POINT, "N": MICIUS_BLOCK_SIZE, "template": bbm92_template}
    )
    assert row["marker"] == "micius"
    assert row["N"] == MICIUS_BLOCK_SIZE
    assert row["eps_sec"] == pytest.approx(5e-8, rel=1e-12)
    assert set(BBM92_HEADER) <= set(row)


def test_decoy_point_without_valid_configuration(decoy_template, small_search) -> None:
    task = {
        "kind": TaskKind.DECOY_POINT,
        "N": 1e6,
        "template": decoy_template,
        "model": ChannelModel(loss_db=1e4, p_d=0.0),
        "space": small_search,
    }
    row = evaluate_task(task)
    assert row["l"] == 0
    assert row["feasible"] is False
    assert row["eps_sec"] == pytest.approx(7e-8, rel=1e-12)
    assert row.get("mu") is None
    assert row["bernoulli_family"] == "relaxed_chernoff"


def test_min_block_task(bbm92_template) -> None:
    row = evaluate_task(
        {"kind": TaskKind.MIN_BLOCK, "protocol": Protocol.BBM92, "template": bbm92_template,
         "cap": 1000}
    )
    assert row["family"] == "relaxed_chernoff"
    assert row["feasible"] is False
    assert row["notes"] == ["infeasible below 1e3"]


def test_headers() -> None:
    assert header_for(TaskKind.BBM92_POINT, with_marker=True)[-1] == "marker"
    assert "marker" not in header_for(TaskKind.BBM92_POINT)
    assert header_for("decoy_point")[:3] == ["N", "family", "bernoulli_family"]
