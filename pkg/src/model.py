"""Mixture of linear regressions: parameters, assumption checks and synthetic data.

Covariances are stored as the symmetric square root ``Sigma_i`` of the
component covariance, so a covariate is drawn as ``x = Sigma_i @ g`` with
``g`` standard normal and the covariate covariance is ``Sigma_i @ Sigma_i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from dagster import get_dagster_logger

from src.errors import DataError, ParameterError, StructuralError

log = get_dagster_logger(__name__)

PROB_SUM_TOL = 1e-12
EIG_TOL = 1e-9
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class MixtureModel:
    """Ground-truth generative parameters plus the declared bounds (sigma, delta, pmin)."""

    probs: np.ndarray
    weights: np.ndarray
    cov_sqrts: np.ndarray
    sigma: float = 1.0
    delta: float = 0.0
    pmin: float = 0.0

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        cov_sqrts = np.asarray(self.cov_sqrts, dtype=float)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "cov_sqrts", cov_sqrts)

        if probs.ndim != 1 or probs.size < 1:
            msg = f"probs must be a non-empty vector, got shape {probs.shape}"
            raise StructuralError(msg)
        k = probs.size
        if weights.shape[0] != k:
            msg = f"weights has {weights.shape[0]} rows but probs has {k} entries"
            raise StructuralError(msg)
        d = weights.shape[1]
        if cov_sqrts.shape != (k, d, d):
            msg = f"cov_sqrts must have shape {(k, d, d)} to match weights, got {cov_sqrts.shape}"
            raise StructuralError(msg)
        if not (np.all(np.isfinite(probs)) and np.all(np.isfinite(weights))):
            msg = "probs and weights must be finite"
            raise DataError(msg)
        if not np.all(np.isfinite(cov_sqrts)):
            msg = "cov_sqrts must be finite"
            raise DataError(msg)
        asym = np.max(np.abs(cov_sqrts - np.transpose(cov_sqrts, (0, 2, 1))))
        scale = max(1.0, float(np.max(np.abs(cov_sqrts))))
        if asym > SYMMETRY_TOL * scale:
            msg = f"cov_sqrts must be symmetric (max asymmetry {asym:.3g})"
            raise StructuralError(msg)
        if np.any(probs < 0):
            msg = f"probs must be non-negative, got {probs.tolist()}"
            raise ParameterError(msg)
        if abs(float(probs.sum()) - 1.0) > PROB_SUM_TOL * max(1, k):
            msg = f"probs must sum to 1, got {float(probs.sum())!r}"
            raise ParameterError(msg)

    @property
    def k(self) -> int:
        return int(self.probs.size)

    @property
    def d(self) -> int:
        return int(self.weights.shape[1])

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "d": self.d,
            "sigma": self.sigma,
            "delta": self.delta,
            "pmin": self.pmin,
            "probs": self.probs.tolist(),
            "weights": self.weights.tolist(),
            "cov_sqrts": self.cov_sqrts.tolist(),
        }


@dataclass(frozen=True)
class Dataset:
    """Labelled rows ``(x, alpha)``; ``hidden_z`` is only read by evaluation code."""

    x: np.ndarray
    alpha: np.ndarray
    hidden_z: np.ndarray | None = None

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        if x.ndim != 2:
            msg = f"x must be a 2-D array, got shape {x.shape}"
            raise StructuralError(msg)
        if alpha.shape != (x.shape[0],):
            msg = f"alpha must have shape ({x.shape[0]},), got {alpha.shape}"
            raise StructuralError(msg)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(alpha))):
            msg = "dataset contains non-finite values"
            raise DataError(msg)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "alpha", alpha)
        if self.hidden_z is not None:
            z = np.asarray(self.hidden_z, dtype=np.int64)
            if z.shape != alpha.shape:
                msg = f"hidden_z must have shape {alpha.shape}, got {z.shape}"
                raise StructuralError(msg)
            object.__setattr__(self, "hidden_z", z)

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    def __len__(self) -> int:
        return self.n

    def take(self, idx: np.ndarray) -> Dataset:
        """Row subset in the order given by ``idx`` (integer indices or boolean mask)."""
        z = None if self.hidden_z is None else self.hidden_z[idx]
        return Dataset(self.x[idx], self.alpha[idx], z)

    def without_truth(self) -> Dataset:
        return Dataset(self.x, self.alpha, None)


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    values: dict[str, float] = field(default_factory=dict)
    enforced: bool = True


@dataclass
class ValidationReport:
    """Pass/fail per assumption with the quantities that decided it."""

    checks: list[AssumptionCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.enforced)

    def check(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        msg = f"No assumption named {name!r}"
        raise KeyError(msg)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "enforced": c.enforced, **c.values}
                for c in self.checks
            ],
        }


def validate(
    model: MixtureModel,
    sigma: float,
    delta: float,
    pmin: float,
    *,
    strict_a1: bool = True,
    strict_a3: bool = True,
) -> ValidationReport:
    """Check covariance conditioning, mixing floor and weight separation.

    A1 and A3 are always measured; ``strict_a1`` / ``strict_a3`` decide whether a
    failure counts towards ``report.passed``.
    """
    eigs = np.linalg.eigvalsh(model.cov_sqrts)
    min_eig = float(eigs.min())
    max_eig = float(eigs.max())
    a1_ok = min_eig >= 1.0 - EIG_TOL and max_eig <= sigma + EIG_TOL
    a1 = AssumptionCheck(
        "A1",
        a1_ok,
        {"min_eigenvalue": min_eig, "max_eigenvalue": max_eig, "sigma": float(sigma)},
        enforced=strict_a1,
    )

    min_prob = float(model.probs.min())
    prob_sum = float(model.probs.sum())
    a2_ok = min_prob >= pmin and abs(prob_sum - 1.0) <= PROB_SUM_TOL * max(1, model.k)
    a2 = AssumptionCheck(
        "A2", a2_ok, {"min_prob": min_prob, "prob_sum": prob_sum, "pmin": float(pmin)}
    )

    norms = np.linalg.norm(model.weights, axis=1)
    max_norm = float(norms.max())
    min_dist = min_pairwise_distance(model.weights)
    a3_ok = max_norm <= 1.0 + EIG_TOL and min_dist >= delta
    a3 = AssumptionCheck(
        "A3",
        a3_ok,
        {"max_weight_norm": max_norm, "min_pairwise_distance": min_dist, "delta": float(delta)},
        enforced=strict_a3,
    )
    report = ValidationReport([a1, a2, a3])
    for c in report.checks:
        if not c.passed:
            log.warning("Assumption %s failed: %s", c.name, c.values)
    return report


def min_pairwise_distance(weights: np.ndarray) -> float:
    """Smallest ||w_i - w_j||; infinite for a single component."""
    k = weights.shape[0]
    if k < 2:
        return float("inf")
    diffs = weights[:, None, :] - weights[None, :, :]
    dists = np.linalg.norm(diffs, axis=2)
    iu = np.triu_indices(k, 1)
    return float(dists[iu].min())


def sample_dataset(
    model: MixtureModel,
    n: int,
    rng: np.random.Generator,
    *,
    label_noise: float = 0.0,
) -> Dataset:
    """Draw ``n`` i.i.d. rows; ``hidden_z`` records each row's component."""
    if n < 1:
        msg = f"n must be >= 1, got {n}"
        raise ParameterError(msg)
    z = rng.choice(model.k, size=n, p=model.probs)
    g = rng.standard_normal((n, model.d))
    x = np.empty_like(g)
    for i in range(model.k):
        rows = z == i
        x[rows] = g[rows] @ model.cov_sqrts[i].T
    alpha = np.einsum("nd,nd->n", x, model.weights[z])
    if label_noise > 0:
        alpha = alpha + label_noise * rng.standard_normal(n)
    return Dataset(x, alpha, z)


def residualize(data: Dataset, a: np.ndarray) -> Dataset:
    """Replace labels by ``alpha - <a, x>``."""
    a = np.asarray(a, dtype=float)
    if a.shape != (data.d,):
        msg = f"residual vector must have length {data.d}, got shape {a.shape}"
        raise StructuralError(msg)
    return Dataset(data.x, data.alpha - data.x @ a, data.hidden_z)


def residual_scales(model: MixtureModel, a: np.ndarray) -> np.ndarray:
    """``||Sigma_i (w_i - a)||`` for every component."""
    v = model.weights - np.asarray(a, dtype=float)[None, :]
    return np.linalg.norm(np.einsum("kij,kj->ki", model.cov_sqrts, v), axis=1)


def random_model(
    k: int,
    d: int,
    rng: np.random.Generator,
    *,
    sigma: float = 2.0,
    delta: float = 0.5,
    pmin: float | None = None,
    probs: np.ndarray | None = None,
    max_tries: int = 1000,
) -> MixtureModel:
    """Random instance satisfying A1-A3: diagonal covariances with entries in [1, sigma],
    weights uniform in the unit ball with pairwise separation at least ``delta``."""
    if k < 1 or d < 1:
        msg = f"k and d must be >= 1, got k={k}, d={d}"
        raise ParameterError(msg)
    if probs is None:
        probs = np.full(k, 1.0 / k)
    probs = np.asarray(probs, dtype=float)
    if pmin is None:
        pmin = float(probs.min())
    for _ in range(max_tries):
        dirs = rng.standard_normal((k, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = rng.uniform(0.0, 1.0, size=k) ** (1.0 / d)
        weights = dirs * radii[:, None]
        if min_pairwise_distance(weights) >= delta:
            break
    else:
        msg = f"Could not place {k} weights in the unit ball with separation {delta} in dimension {d}"
        raise ParameterError(msg)
    diag = rng.uniform(1.0, sigma, size=(k, d))
    cov_sqrts = np.stack([np.diag(row) for row in diag])
    return MixtureModel(probs, weights, cov_sqrts, sigma=sigma, delta=delta, pmin=pmin)


# -------------------------
# Model file I/O
# -------------------------


def _expand_cov_sqrts(raw: Any, k: int, d: int) -> np.ndarray:
    if raw == "identity":
        return np.broadcast_to(np.eye(d), (k, d, d)).copy()
    if isinstance(raw, dict):
        if "diag" not in raw:
            msg = f"cov_sqrts object must have a 'diag' key, got keys {sorted(raw)}"
            raise StructuralError(msg)
        diag = np.asarray(raw["diag"], dtype=float)
        if diag.shape != (k, d):
            msg = f"cov_sqrts.diag must have shape {(k, d)}, got {diag.shape}"
            raise StructuralError(msg)
        return np.stack([np.diag(row) for row in diag])
    full = np.asarray(raw, dtype=float)
    if full.shape != (k, d, d):
        msg = f"cov_sqrts must have shape {(k, d, d)}, got {full.shape}"
        raise StructuralError(msg)
    return full


def model_from_dict(payload: dict[str, Any]) -> MixtureModel:
    """Build a model from the JSON layout ``{k, d, sigma, delta, pmin, probs, weights, cov_sqrts}``."""
    try:
        k = int(payload["k"])
        d = int(payload["d"])
        probs = np.asarray(payload["probs"], dtype=float)
        weights = np.asarray(payload["weights"], dtype=float)
        cov_raw = payload.get("cov_sqrts", "identity")
    except KeyError as e:
        msg = f"model is missing required key {e.args[0]!r}"
        raise StructuralError(msg) from e
    except (TypeError, ValueError) as e:
        msg = f"model has malformed fields: {e}"
        raise StructuralError(msg) from e
    if weights.shape != (k, d) or probs.shape != (k,):
        msg = f"model declares k={k}, d={d} but probs/weights do not match"
        raise StructuralError(msg)
    try:
        cov_sqrts = _expand_cov_sqrts(cov_raw, k, d)
    except (TypeError, ValueError) as e:
        if isinstance(e, StructuralError):
            raise
        msg = f"model has malformed cov_sqrts: {e}"
        raise StructuralError(msg) from e
    return MixtureModel(
        probs,
        weights,
        cov_sqrts,
        sigma=float(payload.get("sigma", 1.0)),
        delta=float(payload.get("delta", 0.0)),
        pmin=float(payload.get("pmin", 0.0)),
    )


def load_model(path: Path) -> MixtureModel:
    try:
        with path.open(encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError as e:
        msg = f"Model file not found: {path}"
        raise StructuralError(msg) from e
    except json.JSONDecodeError as e:
        msg = f"Model file {path} is not valid JSON: line {e.lineno} column {e.colno}: {e.msg}"
        raise StructuralError(msg) from e
    if not isinstance(payload, dict):
        msg = f"Model file {path} must contain a JSON object"
        raise StructuralError(msg)
    return model_from_dict(payload)
