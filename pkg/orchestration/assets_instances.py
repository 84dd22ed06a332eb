"""Seed-partitioned synthetic instances: dataset.csv, model.json and a manifest per seed."""

import os
from pathlib import Path
from typing import Any

from dagster import (
    AssetExecutionContext,
    MetadataValue,
    Output,
    StaticPartitionsDefinition,
    asset,
)

from src.bench import generate_instance
from src.config import ExperimentConfig, load_experiment_config, load_runtime_config
from src.utils import parse_seed_list

PROJECT_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_EXPERIMENT = PROJECT_ROOT / "data" / "experiments" / "desk_k2.json"

bench_partitions = StaticPartitionsDefinition(
    [str(s) for s in parse_seed_list(os.getenv("MLR_BENCH_SEEDS", "0..9"))]
)


# -------------------------
# Helpers
# -------------------------


def load_experiment() -> tuple[ExperimentConfig, Path]:
    """Experiment from MLR_EXPERIMENT_CONFIG (or the bundled desk instance) and the run folder."""
    runtime = load_runtime_config()
    path = runtime["experiment_config"] or DEFAULT_EXPERIMENT
    return load_experiment_config(path), runtime["data_dir"]


def seed_dir(data_dir: Path, seed: int) -> Path:
    return data_dir / f"seed-{seed}"


@asset(partitions_def=bench_partitions)
def mlr_instance(context: AssetExecutionContext) -> Output[dict[str, Any]]:
    seed = int(context.partition_key)
    exp, data_dir = load_experiment()
    manifest = generate_instance(exp, seed, seed_dir(data_dir, seed))
    context.log.info("Seed %d: %d rows, md5 %s", seed, manifest["row_count"], manifest["md5"])

    return Output(
        value=manifest,
        metadata={
            "dataset": MetadataValue.path(manifest["dataset_path"]),
            "model": MetadataValue.path(manifest["model_path"]),
            "row_count": manifest["row_count"],
            "md5": manifest["md5"],
            "config_hash": manifest["config_hash"],
            "assumptions_passed": manifest["assumptions"]["passed"],
        },
    )
