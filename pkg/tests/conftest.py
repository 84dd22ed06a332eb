"""Shared test fixtures and utilities."""

import json
import os
import tempfile
from collections.abc import Generator
from pathlib import Path
from typing import Any
from unittest.mock import patch

import numpy as np
import pytest

from src.model import MixtureModel
from tests.constants import BASE_SEED

# Small learner settings that keep k=1 fits to a few seconds
FAST_K1_LEARNER: dict[str, Any] = {
    "zeta": 0.1,
    "eps_g": 1e-3,
    "descent": {
        "m": 5000,
        "T": 100,
        "q": 10,
        "eta_scale": 0.3,
        "accept_factor": 0.95,
        "one_d": {"restarts": 2, "max_iters": 100, "tol": 1e-6},
    },
    "grad": {"m": 2048},
}


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator shared by a single test."""
    return np.random.default_rng(BASE_SEED)


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for testing."""
    with tempfile.TemporaryDirectory() as d:
        yield Path(d)


@pytest.fixture
def unit_model_k1() -> MixtureModel:
    """One component in d=5 with identity covariance and a unit weight vector."""
    d = 5
    w = np.ones(d) / np.sqrt(d)
    return MixtureModel(np.ones(1), w[None, :], np.eye(d)[None, :, :], sigma=1.0, pmin=1.0)


@pytest.fixture
def two_component_model() -> MixtureModel:
    """k=2, d=10, identity covariances, weights a distance 1 apart."""
    d = 10
    weights = np.zeros((2, d))
    weights[0, 0] = 0.5
    weights[1, 0] = -0.5
    cov = np.broadcast_to(np.eye(d), (2, d, d)).copy()
    return MixtureModel(np.array([0.5, 0.5]), weights, cov, sigma=1.0, delta=1.0, pmin=0.5)


@pytest.fixture
def fast_k1_experiment(temp_dir: Path) -> Path:
    """Experiment file for a small random k=1 instance."""
    path = temp_dir / "experiment.json"
    payload = {
        "random_model": {"k": 1, "d": 3, "sigma": 2.0, "delta": 0.5},
        "n": 20000,
        "eps": 0.05,
        "seeds": [0],
        "learner": FAST_K1_LEARNER,
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


@pytest.fixture
def mock_environment(temp_dir: Path, fast_k1_experiment: Path) -> Generator[dict[str, str], None, None]:
    """Mock environment variables for testing."""
    env_vars = {
        "MLR_DATA_DIR": str(temp_dir / "runs"),
        "MLR_EXPERIMENT_CONFIG": str(fast_k1_experiment),
        "MLR_THREADS": "1",
        "MLR_BENCH_SEEDS": "0..1",
    }

    with patch.dict(os.environ, env_vars):
        yield env_vars
