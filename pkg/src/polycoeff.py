"""Clustering centres and the even polynomial f(x) = prod_p (x^2 - z_p).

The centres are the estimated residual variances, clustered so that the
smallest one is kept apart from everything within ``eps / rho`` of it. f then
vanishes (approximately) at every component scale while f' stays large at the
smallest one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from dagster import get_dagster_logger
from numpy.polynomial import polynomial as P

from src.errors import ParameterError

log = get_dagster_logger(__name__)

RHO_MARGIN = 2.0


@dataclass(frozen=True)
class PolynomialSpec:
    centers: np.ndarray
    coeffs: np.ndarray
    rho: float
    eps: float
    clamped: bool = False

    @property
    def s(self) -> int:
        return int(self.centers.size)

    def eval_coeffs(self, x: float | np.ndarray) -> float | np.ndarray:
        """f evaluated through the expanded coefficients (used for cross-checks)."""
        return P.polyval(np.square(x), self.coeffs)

    def to_dict(self) -> dict[str, object]:
        return {
            "centers": self.centers.tolist(),
            "coeffs": self.coeffs.tolist(),
            "rho": self.rho,
            "eps": self.eps,
            "clamped": self.clamped,
        }


def clamp_ratios(r: np.ndarray, rho: float) -> tuple[np.ndarray, bool]:
    """Clip ``r`` into ``[1/rho, rho]``; the flag says whether anything moved."""
    r = np.asarray(r, dtype=float)
    clipped = np.clip(r, 1.0 / rho, rho)
    moved = bool(np.any(clipped != r))
    if moved:
        log.warning(
            "Clamped %d of %d ratios into [%.4g, %.4g]",
            int(np.sum(clipped != r)),
            r.size,
            1.0 / rho,
            rho,
        )
    return clipped, moved


def cluster_centers(r: np.ndarray, eps: float, rho: float) -> np.ndarray:
    """Smallest ratio plus every ratio from the first one at least ``eps/rho`` above it."""
    if eps <= 0:
        msg = f"eps must be positive, got {eps}"
        raise ParameterError(msg)
    if rho <= 1:
        msg = f"rho must exceed 1, got {rho}"
        raise ParameterError(msg)
    r = np.asarray(r, dtype=float).ravel()
    if r.size == 0:
        msg = "cluster_centers needs at least one ratio"
        raise ParameterError(msg)
    r, _ = clamp_ratios(r, rho)
    r = np.sort(r)
    z1 = r[0]
    far = np.flatnonzero(r >= z1 + eps / rho)
    if far.size == 0:
        return np.array([z1])
    return np.concatenate([[z1], r[far[0] :]])


def poly_coeffs(centers: np.ndarray) -> np.ndarray:
    """Coefficients c_0..c_s of x^0, x^2, ..., x^{2s} in prod_p (x^2 - z_p)."""
    centers = np.asarray(centers, dtype=float).ravel()
    if centers.size == 0:
        msg = "poly_coeffs needs at least one center"
        raise ParameterError(msg)
    return np.asarray(P.polyfromroots(centers), dtype=float)


def build_spec(r: np.ndarray, eps: float, rho: float | None = None) -> PolynomialSpec:
    """Cluster the ratios and expand the polynomial; ``rho`` defaults to a margin over the data."""
    r = np.asarray(r, dtype=float).ravel()
    if r.size == 0 or np.any(r <= 0) or not np.all(np.isfinite(r)):
        msg = f"ratios must be positive and finite, got {r.tolist()}"
        raise ParameterError(msg)
    if rho is None:
        rho = RHO_MARGIN * max(float(r.max()), 1.0 / float(r.min()))
    clamped = bool(np.any((r < 1.0 / rho) | (r > rho)))
    centers = cluster_centers(r, eps, rho)
    return PolynomialSpec(centers, poly_coeffs(centers), float(rho), float(eps), clamped)


def eval_f(spec: PolynomialSpec, x: float) -> tuple[float, float, float]:
    """f, f' and f'' at ``x`` from the product form."""
    y = float(x) * float(x)
    t = y - spec.centers
    s = t.size
    g = float(np.prod(t))
    g1 = 0.0
    g2 = 0.0
    for p in range(s):
        rest = np.delete(t, p)
        g1 += float(np.prod(rest))
        for q in range(p + 1, s):
            g2 += 2.0 * float(np.prod(np.delete(t, [p, q])))
    f1 = 2.0 * x * g1
    f2 = 2.0 * g1 + 4.0 * y * g2
    return g, f1, f2
