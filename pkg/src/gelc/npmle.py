"""Self-consistent weight estimation for the censored covariate.

Two fixed-point maps share one implementation: Turnbull's classic update
(membership only) and the outcome-informed update, where each observation
spreads its unit mass over cells in proportion to ``w_j C_ij``.  The latter
is the EM step for the mixture weights with ``C`` held fixed, so the
conditional loglikelihood never decreases along the iteration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import CellDensityMatrix

__all__ = [
    "DegenerateSupportError",
    "WeightSolution",
    "initial_weights",
    "check_weights",
    "turnbull_update",
    "gelc_weight_update",
    "solve_weights",
    "weight_equation_residual",
    "conditional_loglik",
    "polish_weights",
    "WEIGHT_FLOOR",
]

WEIGHT_FLOOR = 1e-14
DEFAULT_EPS = 1e-6
DEFAULT_MAX_ITER = 10_000


class DegenerateSupportError(ArithmeticError):
    """An observation has zero mass under the current weights."""

    def __init__(self, rows):
        self.rows = np.atleast_1d(rows)
        super().__init__(f"observation(s) {self.rows.tolist()} have zero likelihood under the current weights")


def check_weights(w, atol=1e-12):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > atol:
        raise ValueError("weights must be a nonnegative vector summing to one")
    return w


def initial_weights(partition):
    """Uniform over cells covered by at least one observation."""
    cov = partition.covered.astype(float)
    return cov / cov.sum()


def _scaled_matrix(kappa, C):
    """Row-rescaled ``kappa * C`` and the per-row log scale."""
    kappa = np.asarray(kappa, dtype=bool)
    if C is None:
        return kappa.astype(float), np.zeros(kappa.shape[0])
    logc = C.log_values if isinstance(C, CellDensityMatrix) else np.log(np.asarray(C, dtype=float))
    logc = np.where(kappa, logc, -np.inf)
    rowmax = np.max(logc, axis=1)
    if not np.all(np.isfinite(rowmax)):
        raise DegenerateSupportError(np.flatnonzero(~np.isfinite(rowmax)))
    return np.exp(logc - rowmax[:, None]), rowmax


def _step(K, w):
    denom = K @ w
    if np.any(denom <= 0):
        raise DegenerateSupportError(np.flatnonzero(denom <= 0))
    new = w * (K.T @ (1.0 / denom)) / K.shape[0]
    return new / new.sum(), denom


def turnbull_update(weights, membership):
    """One step of Turnbull's self-consistency map."""
    w = check_weights(weights)
    return _step(np.asarray(membership, dtype=bool).astype(float), w)[0]


def gelc_weight_update(weights, kappa, C):
    """One step of the outcome-informed self-consistency map.

    ``C`` is a :class:`CellDensityMatrix` or a plain array of ``C_ij``
    values (only entries with ``kappa`` true are read).
    """
    w = check_weights(weights)
    K, _ = _scaled_matrix(kappa, C)
    return _step(K, w)[0]


def conditional_loglik(weights, kappa, C):
    """``sum_i log sum_j kappa_ij w_j C_ij``."""
    K, rowmax = _scaled_matrix(kappa, C)
    denom = K @ np.asarray(weights, dtype=float)
    if np.any(denom <= 0):
        raise DegenerateSupportError(np.flatnonzero(denom <= 0))
    return float(np.sum(np.log(denom)) + np.sum(rowmax))


def weight_equation_residual(weights, kappa, C):
    """Sup-norm gap between ``w`` and its image under the update map."""
    w = np.asarray(weights, dtype=float)
    K, _ = _scaled_matrix(kappa, C)
    return float(np.max(np.abs(_step(K, w)[0] - w)))


def polish_weights(weights, K, tol=1e-13, max_rounds=200):
    """Refine a near-fixed point to the exact maximizer of ``sum log(K w)``.

    Active-set Newton on the simplex: Newton steps on the current support,
    dropping cells whose mass would turn negative and adding the excluded
    cell with the largest ``D_j = n^-1 sum_i K_ij / (K w)_i`` while any
    exceeds one.  Fixes the 1/t tail of the plain iteration when a vanishing
    cell has ``D_j -> 1``.  ``K`` is the (row-scaled) ``kappa * C`` matrix.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    w = np.asarray(weights, dtype=float).copy()
    allowed = K.any(axis=0) & (w > 0)
    support = allowed & (w > 1e-9)
    if not support.any():
        support = allowed & (w == w[allowed].max())
    for _ in range(max_rounds):
        S = np.flatnonzero(support)
        KS = K[:, S]
        wS = w[S] / w[S].sum()
        for _newton in range(100):
            P = KS @ wS
            g = KS.T @ (1.0 / P)
            H = -(KS / P[:, None] ** 2).T @ KS
            k = len(S)
            A = np.zeros((k + 1, k + 1))
            A[:k, :k] = H
            A[:k, k] = A[k, :k] = 1.0
            rhs = np.concatenate([-(g - n), [0.0]])
            step = np.linalg.lstsq(A, rhs, rcond=None)[0][:k]
            t = 1.0
            neg = step < 0
            if neg.any():
                t = min(1.0, float(np.min(-wS[neg] / step[neg])))
            if t < 1.0:
                wS = wS + t * step
                drop = wS <= 1e-15 * max(1.0, wS.max())
                if drop.any():
                    break
            else:
                wS = wS + step
            wS = np.maximum(wS, 0.0)
            wS /= wS.sum()
            if np.max(np.abs(step)) < tol:
                break
        keep = wS > 1e-15
        w = np.zeros_like(w)
        w[S[keep]] = wS[keep]
        w /= w.sum()
        support = w > 0
        if not keep.all():
            continue
        D = K.T @ (1.0 / (K @ w)) / n
        outside = allowed & ~support
        if not outside.any() or D[outside].max() <= 1.0 + 1e-12:
            return w
        j = np.flatnonzero(outside)[np.argmax(D[outside])]
        support[j] = True
        w[j] = 1e-10
        w /= w.sum()
    return w


@dataclass(frozen=True)
class WeightSolution:
    weights: np.ndarray
    iterations: int
    residual: float
    converged: bool
    loglik_trace: np.ndarray

    def __iter__(self):
        return iter((self.weights, self.iterations, self.residual))


def solve_weights(start, kappa, C=None, eps_p=DEFAULT_EPS, max_iter=DEFAULT_MAX_ITER, floor=WEIGHT_FLOOR,
                  polish=False):
    """Iterate the weight update until ``||w - w_old|| / ||w_old|| < eps_p``.

    ``C=None`` gives the classic Turnbull iteration on ``kappa``.  Weights
    below ``floor`` are zeroed only once iteration stops.  Non-convergence
    is reported through ``converged`` rather than raised.  ``polish=True``
    finishes with :func:`polish_weights` to land on the exact fixed point.
    """
    if eps_p <= 0:
        raise ValueError("eps_p must be positive")
    w = check_weights(start).copy()
    K, rowmax = _scaled_matrix(kappa, C)
    active = np.flatnonzero(w > 0)
    Ka = K[:, active]
    wa = w[active]
    offset = float(np.sum(rowmax))
    trace = []
    converged = False
    it = 0
    while it < max_iter:
        new, denom = _step(Ka, wa)
        trace.append(float(np.sum(np.log(denom))) + offset)
        it += 1
        norm_old = np.linalg.norm(wa)
        delta = np.linalg.norm(new - wa) / (norm_old if norm_old > 0 else 1.0)
        wa = new
        if delta < eps_p:
            converged = True
            break
    if polish:
        wa = polish_weights(wa, Ka)
        converged = True
    if floor > 0:
        wa = np.where(wa < floor, 0.0, wa)
        wa /= wa.sum()
    w = np.zeros_like(w)
    w[active] = wa
    denom = Ka @ wa
    if np.any(denom <= 0):
        raise DegenerateSupportError(np.flatnonzero(denom <= 0))
    trace.append(float(np.sum(np.log(denom))) + offset)
    residual = float(np.max(np.abs(_step(K, w)[0] - w)))
    return WeightSolution(w, it, residual, converged, np.array(trace))
