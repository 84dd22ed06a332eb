"""Runtime settings from the environment and experiment files."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from dotenv import load_dotenv

from src.errors import ParameterError, StructuralError
from src.utils import parse_seed_list

DEFAULT_DATA_DIR = "./data/runs"
DEFAULT_BENCH_SEEDS = "0..9"


def load_runtime_config() -> dict[str, Any]:
    """Load environment configuration, reading ``.env`` when present."""
    load_dotenv()
    threads_raw = os.getenv("MLR_THREADS")
    threads = int(threads_raw) if threads_raw else (os.cpu_count() or 1)
    experiment = os.getenv("MLR_EXPERIMENT_CONFIG")
    return {
        "data_dir": Path(os.getenv("MLR_DATA_DIR", DEFAULT_DATA_DIR)),
        "experiment_config": Path(experiment) if experiment else None,
        "threads": max(1, threads),
        "bench_seeds": parse_seed_list(os.getenv("MLR_BENCH_SEEDS", DEFAULT_BENCH_SEEDS)),
    }


@dataclass
class ExperimentConfig:
    """One experiment: a model (inline, file or random), a size, seeds and learner overrides."""

    model: dict[str, Any] | None = None
    model_path: Path | None = None
    random_model: dict[str, Any] | None = None
    n: int = 10_000
    seeds: list[int] = field(default_factory=lambda: [0])
    learner: dict[str, Any] = field(default_factory=dict)
    eps: float | None = None
    out: Path | None = None
    fmt: str = "json"
    verbose_trace: bool = False
    eval_with_truth: bool = False

    def __post_init__(self) -> None:
        if self.n < 1:
            msg = f"n must be >= 1, got {self.n}"
            raise ParameterError(msg)
        if not self.seeds:
            msg = "seeds must not be empty"
            raise ParameterError(msg)
        if self.fmt not in {"json", "csv"}:
            msg = f"format must be 'json' or 'csv', got {self.fmt!r}"
            raise ParameterError(msg)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "model_path": str(self.model_path) if self.model_path else None,
            "random_model": self.random_model,
            "n": self.n,
            "seeds": list(self.seeds),
            "learner": self.learner,
            "eps": self.eps,
            "format": self.fmt,
            "verbose_trace": self.verbose_trace,
            "eval_with_truth": self.eval_with_truth,
        }


def experiment_from_dict(payload: dict[str, Any], base_dir: Path | None = None) -> ExperimentConfig:
    model = payload.get("model")
    model_path: Path | None = None
    if isinstance(model, str):
        model_path = Path(model)
        if base_dir is not None and not model_path.is_absolute():
            model_path = base_dir / model_path
        model = None
    elif model is not None and not isinstance(model, dict):
        msg = "experiment 'model' must be an object or a path"
        raise StructuralError(msg)
    seeds = payload.get("seeds", [0])
    if isinstance(seeds, str):
        seeds = parse_seed_list(seeds)
    out = payload.get("out")
    return ExperimentConfig(
        model=model,
        model_path=model_path,
        random_model=payload.get("random_model"),
        n=int(payload.get("n", 10_000)),
        seeds=[int(s) for s in seeds],
        learner=dict(payload.get("learner", {})),
        eps=payload.get("eps"),
        out=Path(out) if out else None,
        fmt=str(payload.get("format", "json")),
        verbose_trace=bool(payload.get("verbose_trace", False)),
        eval_with_truth=bool(payload.get("eval_with_truth", False)),
    )


def load_experiment_config(path: Path) -> ExperimentConfig:
    try:
        with path.open(encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError as e:
        msg = f"Experiment config not found: {path}"
        raise StructuralError(msg) from e
    except json.JSONDecodeError as e:
        msg = f"Experiment config {path} is not valid JSON: line {e.lineno}: {e.msg}"
        raise StructuralError(msg) from e
    if not isinstance(payload, dict):
        msg = f"Experiment config {path} must contain a JSON object"
        raise StructuralError(msg)
    return experiment_from_dict(payload, base_dir=path.parent)
