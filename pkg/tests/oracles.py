"""Reference computations that share no code with the package.

Each oracle is written from the textbook definition with plain numpy/scipy:
IRLS for GLMs with closed-form observed information, brute-force Turnbull
intervals and EM, composite Simpson quadrature, and central differences.
"""
import math

import numpy as np
from scipy.optimize import brentq, fsolve
from scipy.special import digamma, gammaln, polygamma


# -- GLM oracle ---------------------------------------------------------------

def irls_oracle(X, y, family, tol=1e-14, max_iter=200):
    """Fisher scoring for logit (Bernoulli) or log link (Gamma) GLMs."""
    beta = np.zeros(X.shape[1])
    if family == "gamma":
        beta[0] = math.log(y.mean())
    for _ in range(max_iter):
        eta = X @ beta
        if family == "bernoulli":
            mu = 1 / (1 + np.exp(-eta))
            W = mu * (1 - mu)
            zwork = eta + (y - mu) / W
        else:
            mu = np.exp(eta)
            W = np.ones_like(mu)
            zwork = eta + (y - mu) / mu
        new = np.linalg.solve(X.T @ (W[:, None] * X), X.T @ (W * zwork))
        if np.max(np.abs(new - beta)) < tol * (1 + np.max(np.abs(beta))):
            beta = new
            break
        beta = new
    return beta


def gamma_shape_mle(y, mu):
    """Root of the profile score for the Gamma shape k = 1/phi."""
    n = len(y)
    c = np.sum(np.log(y / mu) - y / mu)

    def score(logk):
        k = math.exp(logk)
        return n * (math.log(k) + 1 - digamma(k)) + c

    return math.exp(brentq(score, -20, 20, xtol=1e-14))


def glm_oracle(X, y, family):
    """Coefficients (plus phi for Gamma) and observed-information SEs."""
    beta = irls_oracle(X, y, family)
    eta = X @ beta
    if family == "bernoulli":
        mu = 1 / (1 + np.exp(-eta))
        info = X.T @ ((mu * (1 - mu))[:, None] * X)
        return beta, np.sqrt(np.diag(np.linalg.inv(info)))
    mu = np.exp(eta)
    k = gamma_shape_mle(y, mu)
    phi = 1 / k
    # loglik per row: k(-y/mu - log mu + log y + log k) - log y - lgamma(k)
    info_b = k * X.T @ ((y / mu)[:, None] * X)
    d2k = len(y) * (1 / k - polygamma(1, k))
    info_phi = -d2k * (1 / phi**2) ** 2
    se = np.concatenate([np.sqrt(np.diag(np.linalg.inv(info_b))), [1 / math.sqrt(info_phi)]])
    return np.concatenate([beta, [phi]]), se


def gamma_loglik(y, eta, phi):
    k = 1 / phi
    return np.sum(k * (-y * np.exp(-eta) - eta + np.log(y * k)) - np.log(y) - gammaln(k))


# -- Turnbull oracle ----------------------------------------------------------

def turnbull_oracle(intervals, tol=1e-12, max_iter=20000):
    """Classic Turnbull NPMLE for half-open [l, r) intervals.

    Innermost intervals are found by brute force over all (left endpoint,
    right endpoint) pairs; EM runs to relative change ``tol`` and the answer
    is then pinned down by solving the stationarity equations on the
    support, so that slowly vanishing masses do not linger.
    """
    L = np.array([a for a, _ in intervals], float)
    R = np.array([b for _, b in intervals], float)
    ends = np.union1d(L, R)
    cand = sorted({(p, q) for p in L for q in R if p < q and not np.any((ends > p) & (ends < q))})
    A = np.array([[l <= p and q <= r for p, q in cand] for l, r in zip(L, R)], float)
    n, M = A.shape
    w = np.full(M, 1 / M)
    for _ in range(max_iter):
        new = w * (A.T @ (1 / (A @ w))) / n
        done = np.linalg.norm(new - w) / np.linalg.norm(w) < tol
        w = new
        if done:
            break
    support = w > 1e-8
    for _ in range(M):
        S = np.flatnonzero(support)
        if len(S) == 1:
            w = support.astype(float)
            break

        def eqs(v):
            full = np.zeros(M)
            full[S[:-1]] = v
            full[S[-1]] = 1 - v.sum()
            g = A.T @ (1 / (A @ full))
            return g[S[:-1]] - g[S[-1]]

        v, info, _, _ = fsolve(eqs, w[S[:-1]] / w[S].sum(), xtol=1e-14, full_output=True)
        assert np.max(np.abs(info["fvec"])) < 1e-9 * n, "stationarity solve failed"
        cand_w = np.zeros(M)
        cand_w[S[:-1]] = v
        cand_w[S[-1]] = 1 - v.sum()
        if np.all(cand_w[S] > -1e-12):
            w = np.clip(cand_w, 0, None)
            w /= w.sum()
            break
        support[S[np.argmin(cand_w[S])]] = False
    D = A.T @ (1 / (A @ w)) / n
    assert D.max() <= 1 + 1e-8, "oracle failed its own KKT check"
    return cand, w


# -- quadrature and differentiation -------------------------------------------

def simpson(f, a, b, panels=20000):
    x = np.linspace(a, b, 2 * panels + 1)
    fx = f(x)
    h = (b - a) / (2 * panels)
    return h / 3 * (fx[0] + fx[-1] + 4 * fx[1:-1:2].sum() + 2 * fx[2:-1:2].sum())


def central_gradient(f, x, h, richardson=True):
    """Central differences; with ``richardson`` the h and h/2 estimates are
    combined to cancel the O(h^2) term."""
    x = np.asarray(x, float)
    h = np.broadcast_to(np.asarray(h, float), x.shape)
    g = np.zeros_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h[k]
        d1 = (f(x + e) - f(x - e)) / (2 * h[k])
        if not richardson:
            g[k] = d1
            continue
        d2 = (f(x + e / 2) - f(x - e / 2)) / h[k]
        g[k] = (4 * d2 - d1) / 3
    return g
