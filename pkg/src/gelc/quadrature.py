"""Cell integrals of the conditional density and its score.

All (observation, cell) pairs are integrated together: one 15-point
Gauss-Kronrod pass over every pair, then bisection only for the pieces whose
Kronrod-Gauss difference is too large.  Integrands are evaluated as
``exp(log f - shift)`` with a per-pair shift taken from the first pass, so
densities far below the floating-point range still integrate accurately;
callers work with ``shift + log(integral)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .families import ObservedInterval, ParameterVector, get_family

__all__ = [
    "QuadratureError",
    "CellIntegrals",
    "CellDensityMatrix",
    "integrate_pairs",
    "integrate_density",
    "integrate_score_weighted",
    "cell_density_matrix",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-8
MAX_LEVEL = 30

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[[9, 11, 13]] = _WG[2::-1]
GAUSS_WEIGHTS[7] = _WG[3]


class QuadratureError(ArithmeticError):
    def __init__(self, message, error_estimate=None, pair=None):
        self.error_estimate = error_estimate
        self.pair = pair
        super().__init__(message)


def _gk15(evaluate, owner, a, b, shift):
    half = 0.5 * (b - a)
    u = 0.5 * (a + b)[:, None] + half[:, None] * NODES[None, :]
    vals = evaluate(u, owner, shift)  # (K, 15, d)
    kron = half[:, None] * np.einsum("knd,n->kd", vals, KRONROD_WEIGHTS)
    gauss = half[:, None] * np.einsum("knd,n->kd", vals, GAUSS_WEIGHTS)
    scale = half[:, None] * np.einsum("knd,n->kd", np.abs(vals), KRONROD_WEIGHTS)
    return kron, np.abs(kron - gauss), scale


def _simpson(evaluate, owner, a, b, shift, tol, max_panels=2**16):
    """Composite Simpson with panel doubling and a Richardson error check."""
    panels = 16
    prev = None
    while True:
        t = np.linspace(0.0, 1.0, 2 * panels + 1)
        u = a[:, None] + (b - a)[:, None] * t[None, :]
        vals = evaluate(u, owner, shift)
        w = np.ones(2 * panels + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        h = (b - a) / (6.0 * panels)
        cur = h[:, None] * np.einsum("knd,n->kd", vals, w)
        scale = h[:, None] * np.einsum("knd,n->kd", np.abs(vals), w)
        if prev is not None:
            err = np.abs(cur - prev) / 15.0
            if np.all(err <= tol * scale + 1e-300) or panels >= max_panels:
                return cur + (cur - prev) / 15.0, err
        prev = cur
        panels *= 2


def adaptive_integrate(evaluate, a, b, shift, tol, max_level=MAX_LEVEL):
    """Integrate ``evaluate`` over ``[a_k, b_k]`` for every k at once.

    ``evaluate(u, owner, shift)`` maps nodes ``u`` (K, r) for owners
    ``owner`` (K,) to values (K, r, d).  A piece is accepted when every
    component's Kronrod-Gauss difference is within ``tol`` times the
    integral of its absolute value.  Returns ``(result, error)``, each
    (P, d).
    """
    P = len(a)
    owner = np.arange(P)
    lo, hi = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    result = None
    error = None
    for level in range(max_level + 1):
        kron, err, scale = _gk15(evaluate, owner, lo, hi, shift)
        if result is None:
            result = np.zeros((P, kron.shape[1]))
            error = np.zeros((P, kron.shape[1]))
        done = np.all(err <= tol * scale + 1e-300, axis=1)
        np.add.at(result, owner[done], kron[done])
        np.add.at(error, owner[done], err[done])
        if done.all():
            return result, error
        owner, lo, hi = owner[~done], lo[~done], hi[~done]
        mid = 0.5 * (lo + hi)
        owner = np.concatenate([owner, owner])
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        order = np.argsort(owner, kind="stable")
        owner, lo, hi = owner[order], lo[order], hi[order]
    # bisection budget exhausted: composite Simpson on the unresolved pieces
    res, err = _simpson(evaluate, owner, lo, hi, shift, tol)
    if np.any(err > tol * np.abs(res) + 1e-300 + tol):
        k = int(np.argmax(np.max(err, axis=1)))
        raise QuadratureError(
            f"quadrature did not converge (error estimate {float(np.max(err[k])):.3g})",
            error_estimate=float(np.max(err[k])),
            pair=int(owner[k]),
        )
    np.add.at(result, owner, res)
    np.add.at(error, owner, err)
    return result, error


def _theta_parts(theta, family, p):
    theta = np.asarray(theta, dtype=float)
    phi = float(theta[p + 2]) if family.has_dispersion else 1.0
    return theta[: p + 2], phi


@dataclass(frozen=True)
class CellIntegrals:
    """Per-pair integrals in shifted form.

    ``shift + log(density)`` is the log of the integral of ``f`` over the
    cell (of ``f`` itself for point cells); ``score / density`` is the
    ``f``-weighted mean score within the cell.
    """

    shift: np.ndarray
    density: np.ndarray
    score: np.ndarray | None
    error: np.ndarray

    @property
    def log_integral(self):
        return self.shift + np.log(self.density)


def integrate_pairs(family, y, X, theta, rows, a, b, tol=DEFAULT_TOL, with_score=False):
    """Integrate ``f(y_i | x_i, u)`` (and optionally its score times ``f``)
    over ``[a_k, b_k]`` for observation ``rows[k]``.

    ``theta`` is the flat parameter array ``(alpha, beta..., gamma[, phi])``.
    Zero-length cells are point evaluations.
    """
    family = get_family(family)
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    reg, phi = _theta_parts(theta, family, p)
    gamma = reg[p + 1]
    base = reg[0] + X @ reg[1 : p + 1]
    rows = np.asarray(rows, dtype=int)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ndim = len(theta)
    yk, basek = y[rows], base[rows]
    Xk = X[rows]

    def logf(u, idx):
        return family.logpdf(yk[idx][:, None], basek[idx][:, None] + gamma * u, phi)

    def values(u, idx, shift):
        lf = logf(u, idx)
        e = np.exp(lf - shift[idx][:, None])
        if not with_score:
            return e[:, :, None]
        eta = basek[idx][:, None] + gamma * u
        g = family.dlogf_deta(yk[idx][:, None], eta, phi)
        out = np.empty(u.shape + (ndim + 1,))
        out[:, :, 0] = e
        out[:, :, 1] = g * e
        for c in range(p):
            out[:, :, 2 + c] = out[:, :, 1] * Xk[idx, c][:, None]
        out[:, :, p + 2] = out[:, :, 1] * u
        if family.has_dispersion:
            out[:, :, p + 3] = family.dlogf_dphi(yk[idx][:, None], eta, phi) * e
        return out

    P = len(rows)
    width = ndim + 1 if with_score else 1
    shift = np.empty(P)
    res = np.empty((P, width))
    err = np.zeros((P, width))

    point = a == b
    if point.any():
        idx = np.flatnonzero(point)
        u = a[idx][:, None]
        shift[idx] = logf(u, idx)[:, 0]
        res[idx] = values(u, idx, shift)[:, 0, :]
    span = np.flatnonzero(~point)
    if len(span):
        half = 0.5 * (b[span] - a[span])
        u = 0.5 * (a[span] + b[span])[:, None] + half[:, None] * NODES[None, :]
        shift[span] = np.max(logf(u, span), axis=1)

        def sub_values(uu, owner, sh):
            return values(uu, span[owner], shift)

        r, e = adaptive_integrate(sub_values, a[span], b[span], None, tol)
        res[span] = r
        err[span] = e
    if not np.all(np.isfinite(res)) or np.any(res[:, 0] <= 0):
        bad = int(np.flatnonzero(~np.isfinite(res).all(axis=1) | (res[:, 0] <= 0))[0])
        raise QuadratureError("non-finite or non-positive cell integral", pair=bad)
    return CellIntegrals(shift, res[:, 0], res[:, 1:] if with_score else None, err)


def _single(family, y, x, theta, cell, tol, with_score):
    family = get_family(family)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not isinstance(theta, ParameterVector):
        raise TypeError("theta must be a ParameterVector")
    family.check_response(y)
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    ci = integrate_pairs(
        family, [y], x, theta.to_array(family), [0], [cell.left], [cell.right], tol, with_score
    )
    scale = np.exp(ci.shift[0])
    return ci, scale


def integrate_density(family, y, x, theta, cell: ObservedInterval, tol=DEFAULT_TOL):
    """``∫_cell f(y | x, u; theta) du``; a point cell returns ``f`` at the point."""
    ci, scale = _single(family, y, x, theta, cell, tol, False)
    return float(ci.density[0] * scale)


def integrate_score_weighted(family, y, x, theta, cell: ObservedInterval, tol=DEFAULT_TOL):
    """Return ``(∫ S f du, ∫ f du)`` over the cell (point values for a point cell)."""
    ci, scale = _single(family, y, x, theta, cell, tol, True)
    return ci.score[0] * scale, float(ci.density[0] * scale)


@dataclass(frozen=True)
class CellDensityMatrix:
    """Cell-averaged conditional densities ``C_ij`` on the ``kappa`` support.

    Stored as logs; entries off the support are ``-inf``.
    """

    log_values: np.ndarray
    error: np.ndarray

    @property
    def values(self):
        return np.exp(self.log_values)


def cell_log_density(family, y, X, theta, partition, rows, cols, tol=DEFAULT_TOL, with_score=False):
    """Integrals for the listed (row, col) pairs plus ``log C`` for each."""
    a = partition.left[cols]
    b = partition.right[cols]
    ci = integrate_pairs(family, y, X, theta, rows, a, b, tol, with_score)
    length = b - a
    logc = ci.log_integral - np.log(np.where(length > 0, length, 1.0))
    return ci, logc


def cell_density_matrix(dataset, partition, family, theta, tol=DEFAULT_TOL):
    """``C_ij(theta)`` for every pair with ``kappa[i, j]``."""
    family = get_family(family)
    theta_arr = theta.to_array(family) if isinstance(theta, ParameterVector) else np.asarray(theta, float)
    rows, cols = np.nonzero(partition.kappa)
    try:
        ci, logc = cell_log_density(family, dataset.y, dataset.X, theta_arr, partition, rows, cols, tol)
    except QuadratureError as exc:
        if exc.pair is not None:
            exc.args = (f"{exc.args[0]} at observation {rows[exc.pair]}, cell {cols[exc.pair]}",)
        raise
    out = np.full(partition.kappa.shape, -np.inf)
    out[rows, cols] = logc
    err = np.zeros(partition.kappa.shape)
    err[rows, cols] = ci.error[:, 0] * np.exp(ci.shift)
    return CellDensityMatrix(out, err)
