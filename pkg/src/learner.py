"""Learn all k weight vectors by peeling.

Round i runs the moment-descent warm start with k - i + 1 components on the
rows still unexplained, refines the warm start by gradient descent, and drops
every row the refined vector explains to within the removal threshold.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from dagster import get_dagster_logger

from src.errors import ParameterError, ResourceError
from src.graddescent import GradConfig, RefineResult, refine
from src.model import Dataset, MixtureModel
from src.momentdescent import DescentState, MomentDescentConfig, moment_descent
from src.momentsub import PowerwTolerances
from src.onedvar import OneDConfig
from src.sampling import SubsampleSampler
from src.utils import spawn_rngs

log = get_dagster_logger(__name__)

MAX_EXACT_MATCH_K = 8
EPS_G_FLOOR = 1e-9


@dataclass(frozen=True)
class LearnerConfig:
    k: int
    eps: float = 0.05
    sigma: float = 1.0
    delta_sep: float = 1.0
    pmin: float | None = None
    delta: float = 0.01
    zeta: float | None = None
    eps_w: float | None = None
    eps_g: float | None = None
    removal_scale: float = 3.0
    descent: MomentDescentConfig | None = None
    grad: GradConfig | None = None

    def resolved_pmin(self) -> float:
        return self.pmin if self.pmin is not None else 1.0 / self.k

    def resolved_zeta(self) -> float:
        if self.zeta is not None:
            return self.zeta
        return min(self.delta_sep / (2 * self.sigma), self.delta_sep * self.resolved_pmin() / 64)

    def resolved_eps_w(self) -> float:
        """Warm-start target; sigma_t <= eps_w * sigma implies ||w - a|| <= zeta / sigma."""
        if self.eps_w is not None:
            return self.eps_w
        return self.resolved_zeta() / self.sigma**2

    def resolved_eps_g(self, d: int) -> float:
        if self.eps_g is not None:
            return self.eps_g
        base = self.resolved_pmin() * self.delta_sep / (self.sigma * d)
        # underflows quickly in k, so floor it
        return max(min(self.eps, base ** (self.k**2)), EPS_G_FLOOR)

    def removal_threshold(self, d: int) -> float:
        """eps_g * sigma * C * log d, with log d floored at 1."""
        return self.resolved_eps_g(d) * self.sigma * self.removal_scale * max(math.log(d), 1.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "eps": self.eps,
            "sigma": self.sigma,
            "delta_sep": self.delta_sep,
            "pmin": self.resolved_pmin(),
            "delta": self.delta,
            "zeta": self.resolved_zeta(),
            "eps_w": self.resolved_eps_w(),
            "eps_g": self.eps_g,
            "removal_scale": self.removal_scale,
        }


@dataclass
class RecoveryResult:
    permutation: list[int]
    max_error: float
    per_component_errors: list[float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "permutation": self.permutation,
            "max_error": self.max_error,
            "per_component_errors": self.per_component_errors,
        }


@dataclass
class RoundReport:
    index: int
    k_effective: int
    rows_before: int
    descent: DescentState
    refinement: RefineResult
    v: np.ndarray
    threshold: float
    removed: int
    removed_by_component: dict[int, int] | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self, verbose_trace: bool = False) -> dict[str, Any]:
        return {
            "index": self.index,
            "k_effective": self.k_effective,
            "rows_before": self.rows_before,
            "v": self.v.tolist(),
            "threshold": self.threshold,
            "removed": self.removed,
            "removed_by_component": (
                {str(c): n for c, n in self.removed_by_component.items()}
                if self.removed_by_component is not None
                else None
            ),
            "descent": self.descent.to_dict(verbose_trace),
            "refinement": self.refinement.to_dict(verbose_trace),
            "timings": self.timings,
        }


@dataclass
class FitReport:
    recovered: list[np.ndarray] = field(default_factory=list)
    rounds: list[RoundReport] = field(default_factory=list)
    recovery: RecoveryResult | None = None
    n_rows: int = 0
    samples_consumed: int = 0
    timings: dict[str, float] = field(default_factory=dict)
    status: str = "ok"

    def stage_seconds(self, stage: str) -> float:
        return float(sum(r.timings.get(stage, 0.0) for r in self.rounds))

    def to_dict(self, verbose_trace: bool = False) -> dict[str, Any]:
        return {
            "status": self.status,
            "recovered": [v.tolist() for v in self.recovered],
            "n_rows": self.n_rows,
            "samples_consumed": self.samples_consumed,
            "matched": self.recovery.to_dict() if self.recovery else None,
            "timings": self.timings,
            "rounds": [r.to_dict(verbose_trace) for r in self.rounds],
        }


def explained_mask(data: Dataset, v: np.ndarray, threshold: float) -> np.ndarray:
    """True for rows with |<x, v> - alpha| <= threshold."""
    if threshold < 0:
        msg = f"threshold must be >= 0, got {threshold}"
        raise ParameterError(msg)
    return np.abs(data.x @ np.asarray(v, dtype=float) - data.alpha) <= threshold


def remove_explained(data: Dataset, v: np.ndarray, threshold: float) -> tuple[Dataset, int]:
    """Drop explained rows, preserving order; returns (kept, removed_count)."""
    mask = explained_mask(data, v, threshold)
    return data.take(~mask), int(mask.sum())


def recovery_error(
    estimates: list[np.ndarray] | np.ndarray, truth: list[np.ndarray] | np.ndarray
) -> RecoveryResult:
    """Exact matching: the permutation minimising the largest ||v_i - w_pi(i)||."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        msg = f"estimates {est.shape} and truth {tru.shape} must have the same shape"
        raise ParameterError(msg)
    k = est.shape[0]
    if k > MAX_EXACT_MATCH_K:
        msg = f"exact matching supports k <= {MAX_EXACT_MATCH_K}, got {k}; use greedy_match for diagnostics"
        raise ParameterError(msg)
    dists = np.linalg.norm(est[:, None, :] - tru[None, :, :], axis=2)
    best_perm: tuple[int, ...] = tuple(range(k))
    best = math.inf
    rows = np.arange(k)
    for perm in itertools.permutations(range(k)):
        worst = float(dists[rows, perm].max())
        if worst < best:
            best, best_perm = worst, perm
    errors = [float(dists[i, best_perm[i]]) for i in range(k)]
    return RecoveryResult(list(best_perm), best, errors)


def greedy_match(
    estimates: list[np.ndarray] | np.ndarray, truth: list[np.ndarray] | np.ndarray
) -> RecoveryResult:
    """Repeatedly pair the closest remaining estimate and truth vector."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        msg = f"estimates {est.shape} and truth {tru.shape} must have the same shape"
        raise ParameterError(msg)
    k = est.shape[0]
    dists = np.linalg.norm(est[:, None, :] - tru[None, :, :], axis=2)
    perm = [-1] * k
    work = dists.copy()
    for _ in range(k):
        i, j = np.unravel_index(int(np.argmin(work)), work.shape)
        perm[int(i)] = int(j)
        work[i, :] = np.inf
        work[:, j] = np.inf
    errors = [float(dists[i, perm[i]]) for i in range(k)]
    return RecoveryResult(perm, max(errors), errors)


def round_configs(cfg: LearnerConfig, k_i: int, d: int) -> tuple[MomentDescentConfig, GradConfig]:
    """Descent and refinement configs for a round fitting ``k_i`` components in ``d`` dims."""
    pmin = cfg.resolved_pmin()
    base_descent = cfg.descent or MomentDescentConfig(k=k_i)
    descent = replace(
        base_descent,
        k=k_i,
        sigma=cfg.sigma,
        pmin=pmin,
        eps=cfg.resolved_eps_w(),
        delta=cfg.delta,
    )
    base_grad = cfg.grad or GradConfig(d=d)
    grad = replace(
        base_grad,
        d=d,
        sigma=cfg.sigma,
        delta_sep=cfg.delta_sep,
        pmin=pmin,
        eps=cfg.resolved_eps_g(d),
        zeta=cfg.resolved_zeta(),
    )
    return descent, grad


def learn_all(
    data: Dataset,
    cfg: LearnerConfig,
    rng: np.random.Generator,
    *,
    evaluation: bool = False,
    truth: MixtureModel | None = None,
) -> FitReport:
    """Recover k weight vectors from ``data``.

    Datasets carrying ``hidden_z`` are rejected unless ``evaluation`` is set; in
    that case the ids are used only to audit which rows each round removes.
    ``truth`` (evaluation only) adds ground-truth diagnostics and the matched errors.
    """
    if data.hidden_z is not None and not evaluation:
        msg = "dataset carries hidden component ids; pass evaluation=True or strip them"
        raise ParameterError(msg)
    if truth is not None and not evaluation:
        msg = "ground truth may only be supplied in evaluation mode"
        raise ParameterError(msg)
    if cfg.k < 1:
        msg = f"k must be >= 1, got {cfg.k}"
        raise ParameterError(msg)

    audit = data.hidden_z
    remaining = data.without_truth()
    alive = np.arange(data.n)
    report = FitReport(n_rows=data.n)
    threshold = cfg.removal_threshold(data.d)
    started = time.perf_counter()
    round_rngs = spawn_rngs(rng, 3 * cfg.k)

    for i in range(cfg.k):
        k_i = cfg.k - i
        descent_cfg, grad_cfg = round_configs(cfg, k_i, data.d)
        rng_descent, rng_sub_d, rng_sub_g = round_rngs[3 * i : 3 * i + 3]
        log.info("Round %d/%d: %d rows, k=%d", i + 1, cfg.k, remaining.n, k_i)

        try:
            t0 = time.perf_counter()
            d_sampler = SubsampleSampler(remaining, rng_sub_d)
            state = moment_descent(d_sampler, descent_cfg, rng_descent, truth=truth)
            t1 = time.perf_counter()
            g_sampler = SubsampleSampler(remaining, rng_sub_g)
            refined = refine(g_sampler, state.a, grad_cfg, truth=truth)
            t2 = time.perf_counter()
        except ResourceError as e:
            report.status = "insufficient_data"
            report.timings["total_s"] = time.perf_counter() - started
            msg = f"Round {i + 1} of {cfg.k} ran out of data with {remaining.n} rows left: {e}"
            raise ResourceError(msg, partial=report) from e

        mask = explained_mask(remaining, refined.v, threshold)
        removed = int(mask.sum())
        by_component = None
        if audit is not None:
            ids, counts = np.unique(audit[alive[mask]], return_counts=True)
            by_component = {int(c): int(n) for c, n in zip(ids, counts, strict=True)}

        report.rounds.append(
            RoundReport(
                index=i,
                k_effective=k_i,
                rows_before=remaining.n,
                descent=state,
                refinement=refined,
                v=refined.v,
                threshold=threshold,
                removed=removed,
                removed_by_component=by_component,
                timings={
                    "descent_s": t1 - t0,
                    "refine_s": t2 - t1,
                    "remove_s": time.perf_counter() - t2,
                },
            )
        )
        report.recovered.append(refined.v)
        report.samples_consumed += d_sampler.consumed + g_sampler.consumed
        remaining = remaining.take(~mask)
        alive = alive[~mask]
        log.info("Round %d removed %d rows (threshold %.3g)", i + 1, removed, threshold)

    report.timings["descent_s"] = report.stage_seconds("descent_s")
    report.timings["refine_s"] = report.stage_seconds("refine_s")
    report.timings["total_s"] = time.perf_counter() - started
    if truth is not None:
        report.recovery = recovery_error(report.recovered, truth.weights)
        log.info("Matched max error %.4g", report.recovery.max_error)
    return report


# -------------------------
# Config from experiment overrides
# -------------------------


def learner_config_from_dict(
    payload: dict[str, Any], *, k: int, d: int, **defaults: Any
) -> LearnerConfig:
    """Build a LearnerConfig from JSON overrides.

    ``defaults`` (sigma, delta_sep, pmin, eps, ...) apply where ``payload`` is silent.
    Nested ``descent`` (with ``one_d`` / ``tolerances``) and ``grad`` blocks map onto
    their dataclasses.
    """
    fields = {**defaults, **payload}
    fields.pop("k", None)
    descent_raw = fields.pop("descent", None)
    grad_raw = fields.pop("grad", None)
    try:
        descent = None
        if descent_raw is not None:
            descent_raw = dict(descent_raw)
            one_d = OneDConfig(**descent_raw.pop("one_d", {}))
            tolerances = PowerwTolerances(**descent_raw.pop("tolerances", {}))
            descent = MomentDescentConfig(k=k, one_d=one_d, tolerances=tolerances, **descent_raw)
        grad = GradConfig(d=d, **grad_raw) if grad_raw is not None else None
        return LearnerConfig(k=k, descent=descent, grad=grad, **fields)
    except TypeError as e:
        msg = f"unknown learner override: {e}"
        raise ParameterError(msg) from e
