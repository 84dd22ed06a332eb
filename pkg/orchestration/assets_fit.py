"""Fit every seed's instance and score it against the model that generated it."""

import time
from typing import Any

from dagster import AssetExecutionContext, MetadataValue, Output, asset

from src.bench import empty_row, fill_row, learner_for
from src.duckdb_utils import read_dataset_csv
from src.errors import ResourceError
from src.learner import learn_all
from src.model import load_model
from src.utils import config_hash, describe_version, make_rng, spawn_rngs, write_json

from .assets_instances import bench_partitions, load_experiment, seed_dir


@asset(partitions_def=bench_partitions, deps=["mlr_instance"])
def mlr_fit(context: AssetExecutionContext) -> Output[dict[str, Any]]:
    seed = int(context.partition_key)
    exp, data_dir = load_experiment()
    run_dir = seed_dir(data_dir, seed)
    truth = load_model(run_dir / "model.json")
    data = read_dataset_csv(run_dir / "dataset.csv", keep_truth=True)
    cfg = learner_for(exp, truth)

    row = empty_row(seed)
    started = time.perf_counter()
    report_path = run_dir / "fit_report.json"
    fit_rng = spawn_rngs(make_rng(seed), 2)[1]
    try:
        report = learn_all(data, cfg, fit_rng, evaluation=True, truth=truth)
        fill_row(row, report, truth, cfg.eps)
        body = report.to_dict(exp.verbose_trace)
    except ResourceError as e:
        # recorded as a failed seed; the summary asset decides whether the sweep failed
        context.log.error("Seed %d ran out of data: %s", seed, e)
        row.update(status="insufficient_data", error=str(e))
        body = e.partial.to_dict() if e.partial is not None else None
    row["total_s"] = time.perf_counter() - started

    write_json(
        report_path,
        {
            "seed": seed,
            "config_hash": config_hash(exp.to_dict()),
            "version": describe_version(),
            "row": row,
            "report": body,
        },
    )
    return Output(
        value=row,
        metadata={
            "report": MetadataValue.path(str(report_path)),
            "status": row["status"],
            "max_error": row["max_error"],
            "success": row["success"],
            "rounds": row["rounds"],
        },
    )
