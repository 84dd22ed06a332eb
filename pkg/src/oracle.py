"""Brute-force and Monte-Carlo reference computations for the test suite.

Nothing in the fitting path imports this module.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from dagster import get_dagster_logger

from src.errors import ParameterError
from src.model import MixtureModel, residual_scales
from src.momentsub import double_factorial

log = get_dagster_logger(__name__)

MC_CHUNK = 1 << 16


@dataclass(frozen=True)
class OracleResult:
    estimate: float | np.ndarray
    std_error: float | np.ndarray
    n: int
    excluded: int = 0


def mc_expectation(
    f: Callable[[np.ndarray], float | np.ndarray],
    dim: int,
    n: int,
    rng: np.random.Generator,
    *,
    vectorized: bool = False,
    chunk: int = MC_CHUNK,
) -> OracleResult:
    """Sample mean and standard error of f(y), y ~ N(0, I_dim).

    With ``vectorized`` f receives a (rows, dim) block and returns one value per
    row along axis 0. Draws with non-finite output are dropped and counted.
    """
    if n < 2:
        msg = f"n must be >= 2, got {n}"
        raise ParameterError(msg)
    if dim < 1:
        msg = f"dim must be >= 1, got {dim}"
        raise ParameterError(msg)

    total: np.ndarray | None = None
    total_sq: np.ndarray | None = None
    kept = 0
    for start in range(0, n, chunk):
        y = rng.standard_normal((min(chunk, n - start), dim))
        if vectorized:
            vals = np.asarray(f(y), dtype=float)
        else:
            vals = np.stack([np.asarray(f(row), dtype=float) for row in y])
        flat = vals.reshape(vals.shape[0], -1)
        finite = np.all(np.isfinite(flat), axis=1)
        vals = vals[finite]
        kept += int(finite.sum())
        if total is None or total_sq is None:
            total = vals.sum(axis=0)
            total_sq = np.square(vals).sum(axis=0)
        else:
            total += vals.sum(axis=0)
            total_sq += np.square(vals).sum(axis=0)

    excluded = n - kept
    if excluded:
        log.warning("Excluded %d of %d Monte-Carlo draws with non-finite output", excluded, n)
    if kept < 2 or total is None or total_sq is None:
        msg = f"only {kept} finite draws out of {n}"
        raise ParameterError(msg)
    mean = total / kept
    var = np.maximum(total_sq / kept - np.square(mean), 0.0) * kept / (kept - 1)
    se = np.sqrt(var / kept)
    if np.ndim(mean) == 0:
        return OracleResult(float(mean), float(se), kept, excluded)
    return OracleResult(mean, se, kept, excluded)


def finite_diff_grad(
    objective: Callable[[np.ndarray], float], v: np.ndarray, h: float = 1e-6
) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    if h <= 0:
        msg = f"h must be positive, got {h}"
        raise ParameterError(msg)
    v = np.asarray(v, dtype=float)
    grad = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        grad[i] = (objective(v + e) - objective(v - e)) / (2 * h)
    return grad


def brute_force_min_scale(model: MixtureModel, a: np.ndarray) -> tuple[int, float]:
    """argmin_i ||Sigma_i (w_i - a)|| and its value; ties go to the lowest index."""
    a = np.asarray(a, dtype=float)
    if a.shape != (model.d,):
        msg = f"a must have length {model.d}, got shape {a.shape}"
        raise ParameterError(msg)
    scales = residual_scales(model, a)
    best, value = 0, float(scales[0])
    for i in range(1, model.k):
        if scales[i] < value:
            best, value = i, float(scales[i])
    return best, value


def gaussian_moment_unit(w: np.ndarray, p: int) -> np.ndarray:
    """E[<w, g>^{2p} g g^T] = (2p+1)!! w w^T + (2p-1)!! (I - w w^T) for unit w."""
    w = np.asarray(w, dtype=float)
    if not math.isclose(float(w @ w), 1.0, rel_tol=1e-9):
        msg = f"w must be a unit vector, got norm {float(np.linalg.norm(w))}"
        raise ParameterError(msg)
    ww = np.outer(w, w)
    return double_factorial(p + 1) * ww + double_factorial(p) * (np.eye(w.size) - ww)


def gapfree_wedin(
    A: np.ndarray, B: np.ndarray, mu: float, tau: float
) -> tuple[float, float]:
    """(||U^T V||_2, ||A - B||_2 / tau) for U spanning eigenvalues of A <= mu and
    V spanning eigenvalues of B >= mu + tau. The first should not exceed the second."""
    if tau <= 0:
        msg = f"tau must be positive, got {tau}"
        raise ParameterError(msg)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        msg = f"A and B must be square and equal in shape, got {A.shape} and {B.shape}"
        raise ParameterError(msg)
    ea, va = scipy.linalg.eigh(0.5 * (A + A.T))
    eb, vb = scipy.linalg.eigh(0.5 * (B + B.T))
    U = va[:, ea <= mu]
    V = vb[:, eb >= mu + tau]
    bound = float(np.linalg.norm(A - B, 2)) / tau
    if U.shape[1] == 0 or V.shape[1] == 0:
        return 0.0, bound
    return float(np.linalg.norm(U.T @ V, 2)), bound
