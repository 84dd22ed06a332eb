"""Variances of a zero-mean one-dimensional Gaussian mixture.

EM over ``k`` zero-mean components with several log-scale initialisations;
the restart with the highest mean log-likelihood wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from dagster import get_dagster_logger
from scipy.special import logsumexp

from src.errors import DataError, ParameterError
from src.utils import spawn_rngs

log = get_dagster_logger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
INIT_QUANTILES = (0.05, 0.95)


@dataclass(frozen=True)
class OneDConfig:
    restarts: int = 10
    max_iters: int = 500
    tol: float = 1e-8
    variance_floor: float = 1e-8
    var_tol: float | None = None


@dataclass
class OneDEstimate:
    variances: np.ndarray
    mix_weights: np.ndarray
    loglik: float
    restarts_used: int
    iterations: int = 0
    loglik_trace: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return int(self.variances.size)


def _component_logpdf(sq: np.ndarray, variances: np.ndarray) -> np.ndarray:
    return -0.5 * (LOG_2PI + np.log(variances)[None, :] + sq[:, None] / variances[None, :])


def _mean_loglik(
    sq: np.ndarray, variances: np.ndarray, weights: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    with np.errstate(divide="ignore"):
        log_joint = np.log(weights)[None, :] + _component_logpdf(sq, variances)
    log_norm = logsumexp(log_joint, axis=1)
    return float(np.mean(log_norm)), log_joint, log_norm


def _run_em(
    sq: np.ndarray,
    variances: np.ndarray,
    weights: np.ndarray,
    config: OneDConfig,
) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    n = sq.size
    loglik, log_joint, log_norm = _mean_loglik(sq, variances, weights)
    trace = [loglik]
    for _ in range(config.max_iters):
        resp = np.exp(log_joint - log_norm[:, None])
        mass = resp.sum(axis=0)
        live = mass > 0
        new_var = variances.copy()
        new_var[live] = (resp[:, live] * sq[:, None]).sum(axis=0) / mass[live]
        new_var = np.maximum(new_var, config.variance_floor)
        shift = float(np.max(np.abs(new_var - variances)))
        variances, weights = new_var, mass / n

        prev = loglik
        loglik, log_joint, log_norm = _mean_loglik(sq, variances, weights)
        trace.append(loglik)
        if loglik - prev < config.tol:
            break
        if config.var_tol is not None and shift < config.var_tol:
            break
    return variances, weights, loglik, trace


def estimate_variances(
    values: np.ndarray,
    k: int,
    config: OneDConfig | None = None,
    rng: np.random.Generator | None = None,
) -> OneDEstimate:
    """Estimate ``k`` component variances of ``values``; sorted ascending."""
    config = config or OneDConfig()
    z = np.asarray(values, dtype=float).ravel()
    if z.size == 0:
        msg = "estimate_variances needs at least one value"
        raise ParameterError(msg)
    if k < 1 or k > z.size:
        msg = f"k must be between 1 and the number of values ({z.size}), got {k}"
        raise ParameterError(msg)
    if not np.all(np.isfinite(z)):
        msg = "estimate_variances received non-finite values"
        raise DataError(msg)

    floor = config.variance_floor
    sq = z * z
    if k == 1:
        var = np.array([max(float(sq.mean()), floor)])
        loglik = float(np.mean(_component_logpdf(sq, var)))
        return OneDEstimate(var, np.ones(1), loglik, 1, 0, [loglik])

    lo, hi = np.quantile(sq, INIT_QUANTILES)
    lo = max(float(lo), floor)
    hi = max(float(hi), lo)
    restarts = max(1, config.restarts)
    streams = spawn_rngs(rng if rng is not None else np.random.default_rng(0), restarts)

    uniform = np.full(k, 1.0 / k)
    best = _run_em(sq, np.geomspace(lo, hi, k), uniform, config)
    for idx in range(1, restarts):
        init = np.sort(lo * (hi / lo) ** streams[idx].uniform(0.0, 1.0, size=k))
        result = _run_em(sq, init, uniform, config)
        if result[2] > best[2]:
            best = result
    variances, weights, loglik, trace = best

    order = np.argsort(variances, kind="stable")
    weights = weights[order] / weights.sum()
    log.debug("OneD EM: variances=%s weights=%s loglik=%.6f", variances[order], weights, loglik)
    return OneDEstimate(variances[order], weights, loglik, restarts, len(trace), trace)


def min_variance(est: OneDEstimate, weight_cutoff: float) -> float:
    """Smallest variance among components holding at least ``weight_cutoff`` mass."""
    keep = est.mix_weights >= weight_cutoff
    if not np.any(keep):
        return float(est.variances.min())
    return float(est.variances[keep].min())
