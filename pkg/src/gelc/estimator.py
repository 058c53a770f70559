"""Joint maximum-likelihood fit of GLM coefficients and covariate weights.

The fit alternates two stages until the relative changes in parameters and
weights, or in the loglikelihood, fall below tolerance:

* weight stage: with ``C_ij`` frozen at the current coefficients, iterate the
  self-consistency map to a fixed point;
* coefficient stage: with the weights frozen, maximize the loglikelihood by
  L-BFGS using the analytic gradient.

The covariance is the inverse observed information at the final point,
holding the weights fixed.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .data import Dataset
from .families import ParameterVector, get_family
from .glm import RankDeficiencyError, check_rank, irls
from .npmle import DEFAULT_MAX_ITER, initial_weights, solve_weights, weight_equation_residual
from .partition import DEFAULT_DECIMALS, Partition, build_partition
from .quadrature import DEFAULT_TOL, CellDensityMatrix, cell_log_density

__all__ = [
    "FitConfig",
    "FitResult",
    "ConvergenceReason",
    "LikelihoodError",
    "RankDeficiencyError",
    "fit",
    "loglikelihood",
    "loglik_gradient",
    "maximize_theta",
    "observed_information",
    "score_residual",
]

log = logging.getLogger(__name__)


class LikelihoodError(ArithmeticError):
    """Non-finite or zero likelihood for some observation."""


class ConvergenceReason(str, enum.Enum):
    PARAMETER = "parameter"
    LOGLIK = "loglik"
    MAX_ITER = "max-iter"


@dataclass(frozen=True)
class FitConfig:
    eps_p: float = 1e-6
    eps_l: float = 1e-8
    max_outer: int = 200
    max_inner: int = DEFAULT_MAX_ITER
    quad_tol: float = DEFAULT_TOL
    theta_init: str = "midpoint-glm"
    decimals: int = DEFAULT_DECIMALS
    compute_covariance: bool = True

    def __post_init__(self):
        if min(self.eps_p, self.eps_l, self.quad_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.theta_init not in ("midpoint-glm", "user-supplied"):
            raise ValueError("theta_init must be 'midpoint-glm' or 'user-supplied'")


@dataclass(frozen=True)
class FitResult:
    theta_hat: ParameterVector
    weights: np.ndarray
    partition: Partition
    loglik: float
    covariance: np.ndarray | None
    std_errors: np.ndarray
    outer_iterations: int
    converged: bool
    convergence_reason: ConvergenceReason
    family: object
    names: tuple
    weight_residual: float = float("nan")
    score_residual: float = float("nan")
    history: dict = field(default_factory=dict, repr=False)
    elapsed: float = 0.0

    @property
    def params(self):
        return self.theta_hat.to_array(self.family)

    def summary_frame(self, level=0.95):
        """Rows of ``(name, estimate, se, z, lower, upper, exp(estimate))``."""
        from .report import coefficient_table

        return coefficient_table(self, level)


class _Problem:
    """Precomputed pair structure for one dataset and partition."""

    def __init__(self, dataset, partition, family, quad_tol):
        self.dataset = dataset
        self.partition = partition
        self.family = family
        self.tol = quad_tol
        self.p = dataset.p
        self.rows, self.cols = np.nonzero(partition.kappa)
        self.ndim = self.p + 2 + int(family.has_dispersion)

    def _pairs(self, w):
        keep = w[self.cols] > 0
        return self.rows[keep], self.cols[keep]

    def cell_matrix(self, theta, w):
        rows, cols = self._pairs(w)
        ci, logc = cell_log_density(
            self.family, self.dataset.y, self.dataset.X, theta, self.partition, rows, cols, self.tol
        )
        out = np.full(self.partition.kappa.shape, -np.inf)
        out[rows, cols] = logc
        return CellDensityMatrix(out, np.zeros_like(out))

    def evaluate(self, theta, w, with_score=True):
        """Loglikelihood and per-observation scores (n, ndim)."""
        rows, cols = self._pairs(w)
        ci, logc = cell_log_density(
            self.family, self.dataset.y, self.dataset.X, theta, self.partition, rows, cols, self.tol, with_score
        )
        n = self.dataset.n
        r = np.log(w[cols]) + logc
        rowmax = np.full(n, -np.inf)
        np.maximum.at(rowmax, rows, r)
        if not np.all(np.isfinite(rowmax)):
            raise LikelihoodError(f"observations {np.flatnonzero(~np.isfinite(rowmax)).tolist()} have zero likelihood")
        e = np.exp(r - rowmax[rows])
        tot = np.zeros(n)
        np.add.at(tot, rows, e)
        ll = float(np.sum(np.log(tot) + rowmax))
        if not np.isfinite(ll):
            raise LikelihoodError("non-finite loglikelihood")
        if not with_score:
            return ll, None
        post = e / tot[rows]
        contrib = post[:, None] * ci.score / ci.density[:, None]
        scores = np.zeros((n, self.ndim))
        np.add.at(scores, rows, contrib)
        return ll, scores


def _as_array(theta, family):
    if isinstance(theta, ParameterVector):
        return theta.to_array(family)
    return np.asarray(theta, dtype=float)


def _problem(dataset, partition, family, quad_tol):
    family = get_family(family)
    return _Problem(dataset, partition, family, quad_tol), family


def loglikelihood(dataset, partition, weights, family, theta, quad_tol=DEFAULT_TOL):
    """``sum_i log sum_j kappa_ij w_j C_ij(theta)``."""
    prob, family = _problem(dataset, partition, family, quad_tol)
    return prob.evaluate(_as_array(theta, family), np.asarray(weights, float), with_score=False)[0]


def loglik_gradient(dataset, partition, weights, family, theta, quad_tol=DEFAULT_TOL):
    """Analytic gradient of the loglikelihood in ``(alpha, beta, gamma[, phi])``."""
    prob, family = _problem(dataset, partition, family, quad_tol)
    return prob.evaluate(_as_array(theta, family), np.asarray(weights, float))[1].sum(axis=0)


def score_residual(dataset, partition, weights, family, theta, quad_tol=DEFAULT_TOL):
    """Sup norm of the averaged estimating function ``n^-1 sum_i S_i``."""
    prob, family = _problem(dataset, partition, family, quad_tol)
    scores = prob.evaluate(_as_array(theta, family), np.asarray(weights, float))[1]
    return float(np.max(np.abs(scores.mean(axis=0))))


def _to_free(theta, has_phi):
    out = np.array(theta, dtype=float)
    if has_phi:
        out[-1] = np.log(out[-1])
    return out


def _from_free(u, has_phi):
    out = np.array(u, dtype=float)
    if has_phi:
        out[-1] = np.exp(out[-1])
    return out


def _hessian(prob, theta, w):
    """Central differences of the analytic gradient, symmetrized."""
    d = len(theta)
    H = np.empty((d, d))
    for k in range(d):
        h = 1e-5 * (1.0 + abs(theta[k]))
        if prob.family.has_dispersion and k == d - 1:
            h = min(h, 0.5 * theta[k])
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        gp = prob.evaluate(tp, w)[1].sum(axis=0)
        gm = prob.evaluate(tm, w)[1].sum(axis=0)
        H[:, k] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def _preconditioner(prob, theta, w):
    """Inverse Cholesky factor of the negative Hessian in free coordinates."""
    has_phi = prob.family.has_dispersion
    H = _hessian(prob, theta, w)
    if has_phi:
        # chain rule to log(phi): d2/dlogphi2 = phi^2 H + phi g
        phi = theta[-1]
        g = prob.evaluate(theta, w)[1].sum(axis=0)
        J = np.ones(len(theta))
        J[-1] = phi
        H = H * np.outer(J, J)
        H[-1, -1] += phi * g[-1]
    try:
        L = np.linalg.cholesky(-H)
        return np.linalg.inv(L).T
    except np.linalg.LinAlgError:
        return np.diag(1.0 / np.sqrt(np.maximum(np.abs(np.diag(H)), 1e-8)))


def _maximize(prob, theta_start, w, precond=None):
    has_phi = prob.family.has_dispersion
    u0 = _to_free(theta_start, has_phi)
    if precond is None:
        precond = np.eye(len(u0))
    ll0, s0 = prob.evaluate(theta_start, w)
    if not np.isfinite(ll0):
        raise LikelihoodError("non-finite loglikelihood at the starting value")
    best = [ll0, theta_start.copy()]

    def objective(v):
        theta = _from_free(u0 + precond @ v, has_phi)
        try:
            ll, scores = prob.evaluate(theta, w)
        except (LikelihoodError, ArithmeticError, FloatingPointError):
            return np.inf, np.zeros_like(v)
        g = scores.sum(axis=0)
        if has_phi:
            g[-1] *= theta[-1]
        if ll > best[0]:
            best[0], best[1] = ll, theta
        return -ll, -(precond.T @ g)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        res = minimize(
            objective,
            np.zeros(len(u0)),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 1000, "ftol": 1e-16, "gtol": 1e-10, "maxcor": 20},
        )
    if not res.success:
        log.debug("coefficient stage stopped early: %s", res.message)
    return best[1], best[0], res


def maximize_theta(dataset, partition, weights, family, theta_start, quad_tol=DEFAULT_TOL):
    """Maximize the loglikelihood over the coefficients with weights fixed.

    Returns ``(ParameterVector, loglik)``; the loglikelihood never falls
    below its value at ``theta_start``.
    """
    prob, family = _problem(dataset, partition, family, quad_tol)
    w = np.asarray(weights, dtype=float)
    t0 = _as_array(theta_start, family)
    theta, ll, _ = _maximize(prob, t0, w, _preconditioner(prob, t0, w))
    return ParameterVector.from_array(theta, family, dataset.p), ll


def observed_information(dataset, partition, weights, family, theta, quad_tol=DEFAULT_TOL):
    """Negative Hessian of the loglikelihood in ``theta``, weights held fixed."""
    prob, family = _problem(dataset, partition, family, quad_tol)
    H = _hessian(prob, _as_array(theta, family), np.asarray(weights, dtype=float))
    if not np.all(np.isfinite(H)):
        raise LikelihoodError("non-finite entries in the observed information")
    return -H


def _design(dataset):
    return np.column_stack([np.ones(dataset.n), dataset.X, dataset.midpoints()])


def _rel_change(new, old):
    den = np.linalg.norm(old)
    return float(np.linalg.norm(np.asarray(new) - np.asarray(old)) / (den if den > 0 else 1.0))


def fit(dataset: Dataset, family, config: FitConfig | None = None, theta_init=None) -> FitResult:
    """Fit a GLM with one interval-censored covariate.

    Non-convergence is reported through ``converged`` and
    ``convergence_reason`` rather than raised.
    """
    config = config or FitConfig()
    family = get_family(family)
    t_start = time.perf_counter()
    family.check_response(dataset.y)
    design = _design(dataset)
    check_rank(design)
    partition = build_partition(dataset.intervals, config.decimals)
    prob = _Problem(dataset, partition, family, config.quad_tol)

    if theta_init is not None:
        theta = _as_array(theta_init, family).copy()
    elif config.theta_init == "user-supplied":
        raise ValueError("theta_init='user-supplied' requires an initial ParameterVector")
    else:
        # design columns are (1, x, z), already the parameter order
        coef, phi = irls(family, design, dataset.y)
        theta = np.append(coef, phi) if family.has_dispersion else coef
    names = tuple(ParameterVector.from_array(theta, family, dataset.p).names(family))

    w = initial_weights(partition)
    ll_old = prob.evaluate(theta, w, with_score=False)[0]
    history = {"loglik": [ll_old], "theta": [theta.copy()], "inner_iterations": [], "inner_trace": [],
               "delta_theta": [], "delta_w": [], "delta_loglik": []}
    precond = None
    reason = ConvergenceReason.MAX_ITER
    it = 0
    for it in range(1, config.max_outer + 1):
        C = prob.cell_matrix(theta, w)
        sol = solve_weights(w, partition.kappa, C, config.eps_p, config.max_inner)
        w_new = sol.weights
        if precond is None:
            precond = _preconditioner(prob, theta, w_new)
        theta_new, ll, res = _maximize(prob, theta, w_new, precond)
        if res.nit > 50:
            precond = _preconditioner(prob, theta_new, w_new)
        d_theta = _rel_change(theta_new, theta)
        d_w = _rel_change(w_new, w)
        d_ll = abs(ll - ll_old) / (abs(ll_old) if ll_old != 0 else 1.0)
        history["loglik"].append(ll)
        history["theta"].append(theta_new.copy())
        history["inner_iterations"].append(sol.iterations)
        history["inner_trace"].append(sol.loglik_trace)
        history["delta_theta"].append(d_theta)
        history["delta_w"].append(d_w)
        history["delta_loglik"].append(d_ll)
        theta, w, ll_old = theta_new, w_new, ll
        if d_theta + d_w < config.eps_p:
            reason = ConvergenceReason.PARAMETER
            break
        if d_ll < config.eps_l:
            reason = ConvergenceReason.LOGLIK
            break
    converged = reason is not ConvergenceReason.MAX_ITER

    C = prob.cell_matrix(theta, w)
    w_resid = weight_equation_residual(w, partition.kappa, C)
    ll, scores = prob.evaluate(theta, w)
    s_resid = float(np.max(np.abs(scores.mean(axis=0))))

    d = len(theta)
    cov = None
    se = np.full(d, np.nan)
    if config.compute_covariance:
        info = -_hessian(prob, theta, w)
        try:
            np.linalg.cholesky(info)
            cov = np.linalg.inv(info)
            cov = 0.5 * (cov + cov.T)
            se = np.sqrt(np.diag(cov))
        except np.linalg.LinAlgError:
            log.warning("observed information is not positive definite; covariance omitted")
        history["information"] = info

    return FitResult(
        theta_hat=ParameterVector.from_array(theta, family, dataset.p),
        weights=w,
        partition=partition,
        loglik=ll,
        covariance=cov,
        std_errors=se,
        outer_iterations=it,
        converged=converged,
        convergence_reason=reason,
        family=family,
        names=names,
        weight_residual=w_resid,
        score_residual=s_resid,
        history=history,
        elapsed=time.perf_counter() - t_start,
    )
