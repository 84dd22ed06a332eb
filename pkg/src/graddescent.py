"""Refinement of a warm start by stochastic descent on the smoothed log-residual.

The objective is the batch mean of ``log(|alpha - <v, x>| + zeta)``. Its
negative gradient ``sign(r) x / (|r| + zeta)`` pulls ``v`` towards the weight
vector that explains the most rows near ``v``; rows of other components
contribute a bounded, roughly isotropic term.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np
from dagster import get_dagster_logger

from src.errors import ParameterError, ResourceError
from src.model import Dataset, MixtureModel, residual_scales
from src.sampling import BatchSampler

log = get_dagster_logger(__name__)


@dataclass(frozen=True)
class GradConfig:
    d: int
    sigma: float = 1.0
    delta_sep: float = 1.0
    pmin: float = 1.0
    eps: float = 1e-3
    zeta: float | None = None
    T: int | None = None
    T_scale: float = 3.0
    m: int = 4096
    eta0: float = 0.5
    decay_const: float = 0.5

    def resolved(self) -> GradConfig:
        """Fill in zeta and T; validates the step schedule."""
        if self.d < 1 or self.pmin <= 0 or self.eps <= 0:
            msg = f"need d >= 1, pmin > 0, eps > 0; got d={self.d}, pmin={self.pmin}, eps={self.eps}"
            raise ParameterError(msg)
        zeta = self.zeta
        if zeta is None:
            zeta = min(self.delta_sep / (2 * self.sigma), self.delta_sep * self.pmin / 64)
        if zeta <= 0:
            msg = f"zeta must be positive, got {zeta}"
            raise ParameterError(msg)
        if self.decay_const * self.pmin**2 / self.d >= 1:
            msg = "decay_const * pmin^2 / d must be below 1 for a positive step schedule"
            raise ParameterError(msg)
        T = self.T
        if T is None:
            base = self.d / self.pmin**2
            T = max(1, math.ceil(self.T_scale * base * math.log(max(zeta / self.eps, math.e))))
        return replace(self, zeta=zeta, T=T)

    @property
    def block(self) -> int:
        """Steps per d / pmin^2 block of the schedule."""
        return max(1, math.ceil(self.d / self.pmin**2))

    def step_size(self, t: int) -> float:
        cfg = self if self.zeta is not None else self.resolved()
        base = self.eta0 * (cfg.zeta or 0.0) * self.pmin / self.d
        return base * (1 - self.decay_const * self.pmin**2 / self.d) ** t


@dataclass
class RefineRecord:
    t: int
    eta: float
    objective: float
    distance: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class WarmStartDiagnostics:
    """Both readings of the warm-start condition, measured against a known model."""

    nearest: int
    distance: float
    radius_bound: float
    within_radius: bool
    scale_nearest: int
    scale_near: float
    scale_far: float
    scale_near_bound: float
    scale_far_bound: float
    scales_ok: bool

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class RefineResult:
    v: np.ndarray
    trace: list[RefineRecord] = field(default_factory=list)
    warm_start: WarmStartDiagnostics | None = None
    samples_consumed: int = 0

    def to_dict(self, verbose_trace: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "v": self.v.tolist(),
            "steps": len(self.trace),
            "final_objective": self.trace[-1].objective if self.trace else None,
            "warm_start": self.warm_start.to_dict() if self.warm_start else None,
            "samples_consumed": self.samples_consumed,
        }
        if verbose_trace:
            out["trace"] = [r.to_dict() for r in self.trace]
        return out


def _residuals(batch: Dataset, v: np.ndarray) -> np.ndarray:
    return batch.alpha - batch.x @ v


def stochastic_gradient(batch: Dataset, v: np.ndarray, zeta: float) -> np.ndarray:
    """Descent direction mean(sign(r) x / (|r| + zeta)), r = alpha - <v, x>; sign(0) = 0.

    This is the negative gradient of ``empirical_objective``.
    """
    if zeta <= 0:
        msg = f"zeta must be positive, got {zeta}"
        raise ParameterError(msg)
    if batch.n == 0:
        msg = "stochastic_gradient needs a non-empty batch"
        raise ParameterError(msg)
    r = _residuals(batch, np.asarray(v, dtype=float))
    coef = np.sign(r) / (np.abs(r) + zeta)
    return np.asarray(coef @ batch.x / batch.n)


def empirical_objective(batch: Dataset, v: np.ndarray, zeta: float) -> float:
    """Batch mean of log(|alpha - <v, x>| + zeta)."""
    if zeta <= 0:
        msg = f"zeta must be positive, got {zeta}"
        raise ParameterError(msg)
    r = _residuals(batch, np.asarray(v, dtype=float))
    return float(np.mean(np.log(np.abs(r) + zeta)))


def warm_start_diagnostics(
    model: MixtureModel, v: np.ndarray, zeta: float, sigma: float | None = None
) -> WarmStartDiagnostics:
    """Euclidean condition ||w_i - v|| <= zeta/sigma next to the covariance-weighted one
    ||Sigma_j (w_j - v)|| <= zeta with every other component at least 32 zeta / pmin away."""
    sigma = model.sigma if sigma is None else sigma
    dists = np.linalg.norm(model.weights - v[None, :], axis=1)
    nearest = int(np.argmin(dists))
    scales = residual_scales(model, v)
    j = int(np.argmin(scales))
    others = np.delete(scales, j)
    far = float(others.min()) if others.size else float("inf")
    pmin = model.pmin if model.pmin > 0 else float(model.probs.min())
    far_bound = 32 * zeta / pmin
    return WarmStartDiagnostics(
        nearest=nearest,
        distance=float(dists[nearest]),
        radius_bound=zeta / sigma,
        within_radius=bool(dists[nearest] <= zeta / sigma),
        scale_nearest=j,
        scale_near=float(scales[j]),
        scale_far=far,
        scale_near_bound=zeta,
        scale_far_bound=far_bound,
        scales_ok=bool(scales[j] <= zeta and far >= far_bound),
    )


def refine(
    sampler: BatchSampler,
    v0: np.ndarray,
    cfg: GradConfig,
    truth: MixtureModel | None = None,
) -> RefineResult:
    """T steps of v <- v + eta_t * stochastic_gradient(fresh batch, v, zeta)."""
    cfg = cfg.resolved()
    zeta = cfg.zeta or 0.0
    v = np.asarray(v0, dtype=float).copy()
    if v.shape != (cfg.d,):
        msg = f"v0 must have length {cfg.d}, got shape {v.shape}"
        raise ParameterError(msg)
    result = RefineResult(v=v)
    if truth is not None:
        result.warm_start = warm_start_diagnostics(truth, v, zeta, cfg.sigma)
        if not result.warm_start.within_radius:
            log.info(
                "Warm start %.4g from the nearest weight exceeds zeta/sigma=%.4g",
                result.warm_start.distance,
                result.warm_start.radius_bound,
            )

    for t in range(cfg.T or 1):
        try:
            batch = sampler.draw(cfg.m)
        except ResourceError as e:
            result.v = v
            result.samples_consumed = sampler.consumed
            msg = f"Refinement ran out of samples at step {t}: {e}"
            raise ResourceError(msg, partial=result) from e
        eta = cfg.step_size(t)
        v = v + eta * stochastic_gradient(batch, v, zeta)
        distance = None
        if truth is not None:
            distance = float(np.linalg.norm(truth.weights - v[None, :], axis=1).min())
        result.trace.append(RefineRecord(t, eta, empirical_objective(batch, v, zeta), distance))

    result.v = v
    result.samples_consumed = sampler.consumed
    log.info(
        "Refinement finished %d steps (zeta=%.4g, final eta=%.3g)",
        len(result.trace),
        zeta,
        result.trace[-1].eta,
    )
    return result


def inverse_gaussian_expectation(
    a: np.ndarray, b: np.ndarray, zeta: float, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte-Carlo E[sign(<b,y>) <a,y> / (|<b,y>| + zeta)], y ~ N(0, I); returns (mean, std error).

    Only the plane spanned by a and b matters, so two normal coordinates suffice.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    nb = float(np.linalg.norm(b))
    if nb == 0:
        msg = "b must be nonzero"
        raise ParameterError(msg)
    if n < 1:
        msg = f"n must be >= 1, got {n}"
        raise ParameterError(msg)
    na = float(np.linalg.norm(a))
    if na == 0:
        return 0.0, 0.0
    rho = float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    g = rng.standard_normal((n, 2))
    tb = nb * g[:, 0]
    ta = na * (rho * g[:, 0] + math.sqrt(max(0.0, 1 - rho * rho)) * g[:, 1])
    vals = np.sign(tb) * ta / (np.abs(tb) + zeta)
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(vals.mean()), se


def inverse_gaussian_bounds(a: np.ndarray, b: np.ndarray, zeta: float) -> tuple[float, float]:
    """Closed bracket (rho||a|| / (4 (zeta + ||b||)), rho||a|| / ||b||) valid for rho >= 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if nb == 0:
        msg = "b must be nonzero"
        raise ParameterError(msg)
    if na == 0:
        return 0.0, 0.0
    rho = float(a @ b / (na * nb))
    return 0.25 * rho * na / (zeta + nb), rho * na / nb
