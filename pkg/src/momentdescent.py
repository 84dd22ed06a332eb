"""Warm start by moment descent.

Each iteration residualises a fresh batch against the current iterate ``a``,
estimates the smallest residual scale sigma_t with the 1-D estimator, builds
the moment subspace, and tries up to ``q`` random directions inside it with
step ``eta_scale * sigma_t / (sigma * sqrt(k))``. A step is kept only when the
re-estimated scale shrinks by ``accept_factor``.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Literal

import numpy as np
from dagster import get_dagster_logger

from src.errors import ParameterError, ResourceError
from src.model import Dataset, MixtureModel, residual_scales, residualize
from src.momentsub import PowerwTolerances, SubspaceEstimate, powerw
from src.onedvar import OneDConfig, OneDEstimate, estimate_variances, min_variance
from src.sampling import BatchSampler

log = get_dagster_logger(__name__)

DirectionMode = Literal["subspace", "isotropic"]


@dataclass(frozen=True)
class MomentDescentConfig:
    k: int
    sigma: float = 1.0
    pmin: float = 0.0
    eps: float = 0.05
    delta: float = 0.01
    T: int | None = None
    q: int | None = None
    m: int = 20_000
    eta_scale: float = 0.1
    accept_factor: float | None = None
    one_d: OneDConfig = field(default_factory=OneDConfig)
    tolerances: PowerwTolerances = field(default_factory=PowerwTolerances)
    max_stalls: int = 3
    direction_mode: DirectionMode = "subspace"
    weight_cutoff: float | None = None

    def resolved(self) -> MomentDescentConfig:
        """Fill in T, q, accept_factor, the variance floor and the weight cutoff."""
        if self.k < 1:
            msg = f"k must be >= 1, got {self.k}"
            raise ParameterError(msg)
        if self.eps <= 0 or self.sigma < 1:
            msg = f"need eps > 0 and sigma >= 1, got eps={self.eps}, sigma={self.sigma}"
            raise ParameterError(msg)
        if self.direction_mode not in ("subspace", "isotropic"):
            msg = f"unknown direction_mode {self.direction_mode!r}"
            raise ParameterError(msg)
        ks = self.k * self.sigma
        T = self.T
        if T is None:
            T = max(1, math.ceil(200 * ks * math.log(max(self.sigma / self.eps, math.e))))
        q = self.q
        if q is None:
            q = max(1, math.ceil(8 * math.log(max(ks / (self.eps * self.delta), math.e))))
        accept = self.accept_factor if self.accept_factor is not None else 1 - 1 / (150 * ks)
        floor = max(self.one_d.variance_floor, 1e-8, self.eps**2 / 4)
        cutoff = self.weight_cutoff if self.weight_cutoff is not None else self.pmin / 2
        return replace(
            self,
            T=T,
            q=q,
            accept_factor=accept,
            one_d=replace(self.one_d, variance_floor=floor),
            weight_cutoff=cutoff,
        )


@dataclass
class DescentRecord:
    t: int
    sigma_t2: float
    sigma_prime2: float | None
    accepted: bool
    trials: int
    eta: float
    accept_factor: float
    true_min_scale: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class DescentState:
    a: np.ndarray
    sigma_t: float
    iter: int
    trace: list[DescentRecord] = field(default_factory=list)
    stop_reason: str = "running"
    samples_consumed: int = 0

    def to_dict(self, verbose_trace: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "a": self.a.tolist(),
            "sigma_t": self.sigma_t,
            "iterations": self.iter,
            "accepted_steps": sum(r.accepted for r in self.trace),
            "stop_reason": self.stop_reason,
            "samples_consumed": self.samples_consumed,
        }
        if verbose_trace:
            out["trace"] = [r.to_dict() for r in self.trace]
        return out


def propose_direction(U: SubspaceEstimate | np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Unit vector U gamma / ||U gamma|| with gamma standard normal."""
    basis = U.basis if isinstance(U, SubspaceEstimate) else np.asarray(U, dtype=float)
    while True:
        v = basis @ rng.standard_normal(basis.shape[1])
        norm = float(np.linalg.norm(v))
        if norm > 0:
            return v / norm


def propose_isotropic(d: int, rng: np.random.Generator) -> np.ndarray:
    """Unit vector uniform on the sphere in R^d (ignores the moment subspace)."""
    while True:
        v = rng.standard_normal(d)
        norm = float(np.linalg.norm(v))
        if norm > 0:
            return v / norm


def _min_scale2(
    batch: Dataset, a: np.ndarray, cfg: MomentDescentConfig, rng: np.random.Generator
) -> tuple[float, Dataset, OneDEstimate]:
    resid = residualize(batch, a)
    est = estimate_variances(resid.alpha, cfg.k, cfg.one_d, rng)
    return min_variance(est, cfg.weight_cutoff or 0.0), resid, est


def _draw(sampler: BatchSampler, m: int, state: DescentState) -> Dataset:
    try:
        return sampler.draw(m)
    except ResourceError as e:
        state.stop_reason = "exhausted"
        state.samples_consumed = sampler.consumed
        msg = f"Moment descent ran out of samples at iteration {state.iter}: {e}"
        raise ResourceError(msg, partial=state) from e


def moment_descent(
    sampler: BatchSampler,
    cfg: MomentDescentConfig,
    rng: np.random.Generator,
    a0: np.ndarray | None = None,
    truth: MixtureModel | None = None,
) -> DescentState:
    """Shrink min_i ||Sigma_i (w_i - a)|| until it drops below ``eps * sigma``.

    ``truth`` is only used to record the true minimum scale in the trace.
    """
    cfg = cfg.resolved()
    n_iters, n_trials, accept = cfg.T or 1, cfg.q or 1, cfg.accept_factor or 1.0
    d = sampler.d
    a = np.zeros(d) if a0 is None else np.asarray(a0, dtype=float).copy()
    if a.shape != (d,):
        msg = f"a0 must have length {d}, got shape {a.shape}"
        raise ParameterError(msg)

    state = DescentState(a=a, sigma_t=float("inf"), iter=0)
    best_a, best_sigma = a.copy(), float("inf")
    stalls = 0
    target = cfg.eps * cfg.sigma
    step_scale = cfg.eta_scale / (cfg.sigma * math.sqrt(cfg.k))

    for t in range(n_iters):
        state.iter = t
        batch = _draw(sampler, cfg.m, state)
        sig2, resid, est = _min_scale2(batch, state.a, cfg, rng)
        sigma_t = math.sqrt(sig2)
        state.sigma_t = sigma_t
        true_scale = (
            float(residual_scales(truth, state.a).min()) if truth is not None else None
        )
        if sigma_t < best_sigma:
            best_a, best_sigma = state.a.copy(), sigma_t
        eta = step_scale * sigma_t

        if sigma_t <= target:
            state.trace.append(
                DescentRecord(t, sig2, None, False, 0, eta, accept, true_scale)
            )
            state.stop_reason = "converged"
            break

        sub = None
        if cfg.direction_mode == "subspace":
            sub = powerw(
                resid,
                cfg.k,
                cfg.tolerances,
                rng,
                estimate=est,
                weight_cutoff=cfg.weight_cutoff or 0.0,
                eps=cfg.eps,
                sigma=cfg.sigma,
            )

        accepted = False
        sig2_prime: float | None = None
        trials = 0
        for _ in range(n_trials):
            trials += 1
            v = propose_direction(sub, rng) if sub is not None else propose_isotropic(d, rng)
            candidate = state.a + eta * v
            trial_batch = _draw(sampler, cfg.m, state)
            sig2_prime, _, _ = _min_scale2(trial_batch, candidate, cfg, rng)
            if sig2_prime <= accept * sig2:
                state.a = candidate
                accepted = True
                break

        state.trace.append(
            DescentRecord(t, sig2, sig2_prime, accepted, trials, eta, accept, true_scale)
        )
        log.debug(
            "descent t=%d sigma_t=%.5g accepted=%s trials=%d eta=%.4g",
            t,
            sigma_t,
            accepted,
            trials,
            eta,
        )
        if accepted:
            stalls = 0
            continue
        stalls += 1
        if stalls >= cfg.max_stalls:
            state.a, state.sigma_t = best_a, best_sigma
            state.stop_reason = "stalled"
            break
    else:
        state.iter = n_iters
        state.stop_reason = "iteration_cap"

    state.samples_consumed = sampler.consumed
    log.info(
        "Moment descent stopped (%s) after %d iterations: sigma_t=%.5g, %d accepted steps",
        state.stop_reason,
        len(state.trace),
        state.sigma_t,
        sum(r.accepted for r in state.trace),
    )
    return state


def accepted_step_contract(trace: Iterable[DescentRecord]) -> bool:
    """True when every accepted step shrank the squared scale by its accept factor."""
    for rec in trace:
        if not rec.accepted:
            continue
        if rec.sigma_prime2 is None or rec.sigma_prime2 > rec.accept_factor * rec.sigma_t2:
            return False
    return True
