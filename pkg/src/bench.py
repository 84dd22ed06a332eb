"""Seeded benchmark sweep: generate an instance, fit it, score it, once per seed."""

from __future__ import annotations

import datetime
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Any

import numpy as np
from dagster import get_dagster_logger

from src.config import ExperimentConfig
from src.duckdb_utils import aggregate_bench_rows, write_dataset_csv
from src.errors import MixtureError, ParameterError, ResourceError
from src.learner import (
    FitReport,
    LearnerConfig,
    learn_all,
    learner_config_from_dict,
    recovery_error,
)
from src.model import (
    MixtureModel,
    load_model,
    min_pairwise_distance,
    model_from_dict,
    random_model,
    sample_dataset,
    validate,
)
from src.utils import config_hash, describe_version, make_rng, md5_hash, spawn_rngs, write_json

log = get_dagster_logger(__name__)


def resolve_model(exp: ExperimentConfig, rng: np.random.Generator) -> MixtureModel:
    """Inline model, model file, or a random instance drawn with ``rng``."""
    if exp.model is not None:
        return model_from_dict(exp.model)
    if exp.model_path is not None:
        return load_model(exp.model_path)
    if exp.random_model is not None:
        spec = dict(exp.random_model)
        try:
            k, d = int(spec.pop("k")), int(spec.pop("d"))
        except KeyError as e:
            msg = f"random_model needs {e.args[0]!r}"
            raise ParameterError(msg) from e
        return random_model(k, d, rng, **spec)
    msg = "experiment needs one of 'model', a model path, or 'random_model'"
    raise ParameterError(msg)


def learner_for(exp: ExperimentConfig, model: MixtureModel) -> LearnerConfig:
    """Learner config for ``model``: declared bounds first, then the experiment's overrides."""
    delta_sep = model.delta if model.delta > 0 else min_pairwise_distance(model.weights)
    if not np.isfinite(delta_sep) or delta_sep <= 0:
        delta_sep = 1.0
    defaults: dict[str, Any] = {
        "sigma": max(1.0, model.sigma),
        "delta_sep": float(delta_sep),
        "pmin": model.pmin if model.pmin > 0 else float(model.probs.min()),
    }
    if exp.eps is not None:
        defaults["eps"] = float(exp.eps)
    return learner_config_from_dict(exp.learner, k=model.k, d=model.d, **defaults)


def empty_row(seed: int) -> dict[str, Any]:
    return {
        "seed": seed,
        "status": "ok",
        "success": False,
        "max_error": None,
        "rounds": 0,
        "samples_consumed": 0,
        "gen_s": None,
        "descent_s": None,
        "refine_s": None,
        "total_s": None,
        "error": None,
    }


def fill_row(row: dict[str, Any], report: FitReport, truth: MixtureModel, eps: float) -> None:
    """Score ``report`` against ``truth`` into a bench row."""
    match = report.recovery or recovery_error(report.recovered, truth.weights)
    row.update(
        max_error=match.max_error,
        success=bool(match.max_error <= eps),
        rounds=len(report.rounds),
        samples_consumed=report.samples_consumed,
        descent_s=report.timings.get("descent_s"),
        refine_s=report.timings.get("refine_s"),
    )


def generate_instance(exp: ExperimentConfig, seed: int, out_dir: Path) -> dict[str, Any]:
    """Write dataset.csv, model.json and manifest.json for ``seed``; returns the manifest."""
    started = time.perf_counter()
    gen_rng = spawn_rngs(make_rng(seed), 2)[0]
    model = resolve_model(exp, gen_rng)
    assumptions = validate(model, max(1.0, model.sigma), model.delta, model.pmin)
    data = sample_dataset(model, exp.n, gen_rng)

    out_dir.mkdir(parents=True, exist_ok=True)
    dataset_path = out_dir / "dataset.csv"
    model_path = out_dir / "model.json"
    rows = write_dataset_csv(dataset_path, data)
    write_json(model_path, model.to_dict())
    manifest = {
        "seed": seed,
        "config_hash": config_hash(exp.to_dict()),
        "version": describe_version(),
        "dataset_path": str(dataset_path),
        "model_path": str(model_path),
        "row_count": rows,
        "md5": md5_hash(dataset_path),
        "assumptions": assumptions.to_dict(),
        "gen_s": time.perf_counter() - started,
        "created_at_utc": datetime.datetime.now(datetime.UTC).isoformat(timespec="seconds"),
    }
    write_json(out_dir / "manifest.json", manifest)
    log.info("Generated %d rows for seed %d in %s", rows, seed, out_dir)
    return manifest


def run_seed(exp: ExperimentConfig, seed: int) -> dict[str, Any]:
    """One in-memory gen+fit+eval pass; failures become a row with status and error text."""
    row = empty_row(seed)
    started = time.perf_counter()
    try:
        gen_rng, fit_rng = spawn_rngs(make_rng(seed), 2)
        model = resolve_model(exp, gen_rng)
        data = sample_dataset(model, exp.n, gen_rng)
        row["gen_s"] = time.perf_counter() - started
        cfg = learner_for(exp, model)
        report = learn_all(data.without_truth(), cfg, fit_rng)
        fill_row(row, report, model, cfg.eps)
    except ResourceError as e:
        log.exception("Seed %d ran out of data", seed)
        row.update(status="insufficient_data", error=str(e))
    except MixtureError as e:
        log.exception("Seed %d failed", seed)
        row.update(status="failed", error=str(e))
    row["total_s"] = time.perf_counter() - started
    log.info("Seed %d finished: status=%s max_error=%s", seed, row["status"], row["max_error"])
    return row


def run_bench(
    exp: ExperimentConfig, seeds: list[int], threads: int = 1
) -> tuple[list[dict[str, Any]], dict[str, Any]]:
    """Per-seed rows (sorted by seed) and their aggregate; at least one seed must complete."""
    if not seeds:
        msg = "bench needs at least one seed"
        raise ParameterError(msg)
    workers = max(1, min(threads, len(seeds)))
    rows: list[dict[str, Any]] = []
    if workers == 1:
        rows = [run_seed(exp, s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(run_seed, exp, s) for s in seeds]
            for f in as_completed(futs):
                rows.append(f.result())
    rows.sort(key=lambda r: r["seed"])
    summary = aggregate_bench_rows(rows)
    if summary.get("completed", 0) == 0:
        msg = f"none of the {len(seeds)} seeds completed"
        raise ResourceError(msg, partial=(rows, summary))
    log.info(
        "Bench over %d seeds: success_rate=%.2f", summary["seeds"], summary["success_rate"]
    )
    return rows, summary
