"""Mixed-moment matrix, its top-k eigen-subspace and the population closed forms.

For residual labels alpha and the polynomial f from ``polycoeff``, the matrix

    M = (1/m) sum_l  omega(alpha_l) x_l x_l^T,   omega(a) = sum_p c_p a^{2p} / (2p-1)!!

has expectation sum_i p_i (X_i + Y_i): rank-one signal terms X_i along
Sigma_i^2 v_i scaled by f', and covariance noise terms Y_i scaled by f. The
centres of f sit at the estimated scales, so the noise cancels and the
eigenvectors of M point at the signal directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from dagster import get_dagster_logger

from src.errors import DataError, InvariantError, ParameterError
from src.model import Dataset, MixtureModel
from src.onedvar import OneDConfig, OneDEstimate, estimate_variances
from src.polycoeff import PolynomialSpec, build_spec, eval_f

log = get_dagster_logger(__name__)

MAX_DOUBLE_FACTORIAL_P = 15
ROW_WEIGHT_CAP = 1e300
ORTHONORMAL_TOL = 1e-9
CHUNK_ROWS = 1 << 16


def double_factorial(p: int) -> float:
    """(2p-1)!! = 1 * 3 * ... * (2p-1); equals 1 for p = 0."""
    if p < 0 or p > MAX_DOUBLE_FACTORIAL_P:
        msg = f"double_factorial supports 0 <= p <= {MAX_DOUBLE_FACTORIAL_P}, got {p}"
        raise ParameterError(msg)
    return float(math.prod(range(1, 2 * p, 2)))


@dataclass(frozen=True)
class MomentMatrix:
    mat: np.ndarray
    sample_count: int
    spec: PolynomialSpec
    clipped_rows: int = 0


@dataclass(frozen=True)
class SubspaceEstimate:
    basis: np.ndarray
    abs_eigenvalues: np.ndarray
    next_abs_eigenvalue: float = 0.0
    spec: PolynomialSpec | None = None

    @property
    def k(self) -> int:
        return int(self.basis.shape[1])


@dataclass(frozen=True)
class PowerwTolerances:
    """Accuracy knobs of the subspace step.

    ``eps_p`` separates clustering centres, ``eps_g`` is the absolute variance
    accuracy asked of the 1-D estimator, ``eps_e`` is the relative eigen-gap
    below which a warning is logged (defaults to 1/(100k)). ``faithful`` swaps
    in eps_p = eps and eps_g = (eps/sigma)^(4k).
    """

    eps_p: float = 0.05
    eps_g: float = 1e-3
    eps_e: float | None = None
    faithful: bool = False

    def resolved(self, k: int, eps: float | None = None, sigma: float = 1.0) -> PowerwTolerances:
        eps_e = self.eps_e if self.eps_e is not None else 1.0 / (100.0 * k)
        if not self.faithful:
            return replace(self, eps_e=eps_e)
        if eps is None:
            msg = "faithful tolerances need the target eps"
            raise ParameterError(msg)
        eps_g = (eps / sigma) ** (4 * k)
        if eps_g < np.finfo(float).tiny:
            log.warning(
                "Faithful eps_g=(%.3g/%.3g)^%d underflows double precision", eps, sigma, 4 * k
            )
        return PowerwTolerances(eps_p=eps, eps_g=eps_g, eps_e=eps_e, faithful=True)


def row_weights(alpha: np.ndarray, spec: PolynomialSpec) -> tuple[np.ndarray, np.ndarray]:
    """omega(alpha) by Horner in alpha^2, with oversized rows clipped; returns (omega, clipped mask)."""
    scaled = np.array([c / double_factorial(p) for p, c in enumerate(spec.coeffs)])
    u = np.square(np.asarray(alpha, dtype=float))
    cap = ROW_WEIGHT_CAP ** (1.0 / max(1, spec.s))
    clipped = u > cap
    u = np.where(clipped, cap, u)
    omega = np.full_like(u, scaled[-1])
    for coef in scaled[-2::-1]:
        omega = omega * u + coef
    return omega, clipped


def moment_matrix(
    data: Dataset, spec: PolynomialSpec, chunk_rows: int = CHUNK_ROWS
) -> MomentMatrix:
    """M = (1/m) sum omega_l x_l x_l^T over the (already residualised) rows."""
    m = data.n
    if m == 0:
        msg = "moment_matrix needs at least one row"
        raise ParameterError(msg)
    omega, clipped = row_weights(data.alpha, spec)
    n_clipped = int(clipped.sum())
    if n_clipped:
        log.warning("Clipped %d of %d rows with oversized labels", n_clipped, m)
    mat = np.zeros((data.d, data.d))
    for start in range(0, m, chunk_rows):
        x = data.x[start : start + chunk_rows]
        w = omega[start : start + chunk_rows]
        mat += (x * w[:, None]).T @ x
    mat /= m
    mat = 0.5 * (mat + mat.T)
    if not np.all(np.isfinite(mat)):
        msg = "moment matrix has non-finite entries"
        raise DataError(msg)
    return MomentMatrix(mat, m, spec, n_clipped)


def population_moment(cov_sqrt: np.ndarray, v: np.ndarray, p: int) -> np.ndarray:
    """E[<x, v>^{2p} x x^T] for x = Sigma g."""
    cov_sqrt = np.asarray(cov_sqrt, dtype=float)
    v = np.asarray(v, dtype=float)
    cov2 = cov_sqrt @ cov_sqrt
    if p == 0:
        return cov2
    a = cov_sqrt @ v
    norm2 = float(a @ a)
    if norm2 == 0.0:
        return np.zeros_like(cov2)
    b = cov_sqrt @ a
    return double_factorial(p) * norm2**p * (2 * p * np.outer(b, b) / norm2 + cov2)


def population_signal_noise(
    model: MixtureModel, a: np.ndarray, spec: PolynomialSpec
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-component signal X_i and noise Y_i of E[M] (not weighted by p_i)."""
    signals: list[np.ndarray] = []
    noises: list[np.ndarray] = []
    for i in range(model.k):
        cov = model.cov_sqrts[i]
        cov2 = cov @ cov
        v = model.weights[i] - a
        sv = cov @ v
        scale = float(np.linalg.norm(sv))
        f, f1, _ = eval_f(spec, scale)
        if scale > 0:
            b = cov @ sv
            signals.append(np.outer(b, b) / scale**2 * (f1 * scale))
        else:
            signals.append(np.zeros_like(cov2))
        noises.append(cov2 * f)
    return signals, noises


def population_moment_mix(model: MixtureModel, a: np.ndarray, spec: PolynomialSpec) -> np.ndarray:
    """E[M] for residualisation vector ``a``."""
    a = np.asarray(a, dtype=float)
    signals, noises = population_signal_noise(model, a, spec)
    total = np.zeros((model.d, model.d))
    for p_i, x_i, y_i in zip(model.probs, signals, noises, strict=True):
        total += p_i * (x_i + y_i)
    return total


def top_k_subspace(moment: MomentMatrix | np.ndarray, k: int) -> SubspaceEstimate:
    """Eigenvectors of the k largest |eigenvalues|, largest-magnitude entry made positive."""
    spec = moment.spec if isinstance(moment, MomentMatrix) else None
    mat = moment.mat if isinstance(moment, MomentMatrix) else np.asarray(moment, dtype=float)
    d = mat.shape[0]
    if mat.shape != (d, d):
        msg = f"moment matrix must be square, got {mat.shape}"
        raise ParameterError(msg)
    if k < 1 or k > d:
        msg = f"k must be between 1 and d={d}, got {k}"
        raise ParameterError(msg)
    if not np.all(np.isfinite(mat)):
        msg = "moment matrix has non-finite entries"
        raise DataError(msg)

    evals, evecs = scipy.linalg.eigh(0.5 * (mat + mat.T))
    order = np.argsort(-np.abs(evals), kind="stable")
    basis = evecs[:, order[:k]].copy()
    pivots = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivots, np.arange(k)])
    signs[signs == 0] = 1.0
    basis *= signs[None, :]

    gram = basis.T @ basis
    if np.max(np.abs(gram - np.eye(k))) > ORTHONORMAL_TOL:
        msg = "eigenvector basis is not orthonormal"
        raise InvariantError(msg)
    abs_top = np.abs(evals[order[:k]])
    next_abs = float(np.abs(evals[order[k]])) if k < d else 0.0
    return SubspaceEstimate(basis, abs_top, next_abs, spec)


def powerw(
    data: Dataset,
    k: int,
    tol: PowerwTolerances | None = None,
    rng: np.random.Generator | None = None,
    *,
    estimate: OneDEstimate | None = None,
    one_d: OneDConfig | None = None,
    weight_cutoff: float = 0.0,
    eps: float | None = None,
    sigma: float = 1.0,
) -> SubspaceEstimate:
    """Variances -> clustering -> polynomial -> moment matrix -> top-k subspace.

    ``estimate`` lets the caller reuse a 1-D fit of the same residual labels.
    Components lighter than ``weight_cutoff`` are left out of the clustering.
    """
    tol = (tol or PowerwTolerances()).resolved(k, eps, sigma)
    if estimate is None:
        base = one_d or OneDConfig()
        estimate = estimate_variances(data.alpha, k, replace(base, var_tol=tol.eps_g), rng)
    keep = estimate.mix_weights >= weight_cutoff
    ratios = estimate.variances[keep] if np.any(keep) else estimate.variances
    spec = build_spec(ratios, tol.eps_p)
    moment = moment_matrix(data, spec)
    sub = top_k_subspace(moment, k)

    lead = float(sub.abs_eigenvalues[0])
    gap = float(sub.abs_eigenvalues[-1]) - sub.next_abs_eigenvalue
    if lead > 0 and gap < (tol.eps_e or 0.0) * lead:
        log.debug(
            "Weak eigen-gap: |lambda_k|=%.4g |lambda_k+1|=%.4g |lambda_1|=%.4g",
            sub.abs_eigenvalues[-1],
            sub.next_abs_eigenvalue,
            lead,
        )
    return sub
