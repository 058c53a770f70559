"""Ordinary GLM fitting by iteratively reweighted least squares.

Used to seed the censored-covariate fit with interval midpoints standing in
for the censored values.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq
from scipy.special import digamma

from .families import Kind, get_family

__all__ = ["RankDeficiencyError", "check_rank", "irls", "dispersion_mle"]


class RankDeficiencyError(np.linalg.LinAlgError):
    """The design ``(1, x, z)`` is not of full column rank."""


def check_rank(design):
    design = np.asarray(design, dtype=float)
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise RankDeficiencyError(
            f"design matrix has rank {rank} < {design.shape[1]} columns (perfect multicollinearity)"
        )


def dispersion_mle(family, y, mu):
    """Maximum-likelihood dispersion given fitted means."""
    family = get_family(family)
    if family.kind is Kind.GAUSSIAN_IDENTITY:
        return float(np.mean((y - mu) ** 2))
    if family.kind is Kind.GAMMA_LOG:
        # profile score in k = 1/phi: n(log k + 1 - digamma k) + sum(log(y/mu) - y/mu) = 0
        d = float(np.mean(np.log(y / mu) - y / mu))
        if d >= -1.0:
            return 1e-8

        def score(logk):
            k = np.exp(logk)
            return np.log(k) + 1.0 - digamma(k) + d

        lo, hi = -30.0, 30.0
        return float(np.exp(-brentq(score, lo, hi, xtol=1e-14)))
    return 1.0


def irls(family, design, y, max_iter=100, tol=1e-12):
    """Return ``(coef, phi)`` maximizing the GLM likelihood."""
    family = get_family(family)
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    check_rank(design)
    if family.kind is Kind.BERNOULLI_LOGIT:
        mu = (y + 0.5) / 2.0
    else:
        mu = np.where(y > 0, y, 0.1) if family.kind is Kind.GAMMA_LOG else y.copy()
    eta = family.link(mu)
    coef = np.zeros(design.shape[1])
    for _ in range(max_iter):
        dmu = family.dmu_deta(eta)
        var = family.variance(family.inverse_link(eta))
        wts = dmu**2 / np.maximum(var, 1e-300)
        z = eta + (y - family.inverse_link(eta)) / np.maximum(dmu, 1e-300)
        sw = np.sqrt(wts)
        new, *_ = np.linalg.lstsq(design * sw[:, None], z * sw, rcond=None)
        eta = design @ new
        if np.max(np.abs(new - coef)) <= tol * (1.0 + np.max(np.abs(new))):
            coef = new
            break
        coef = new
    mu = family.inverse_link(design @ coef)
    return coef, dispersion_mle(family, y, mu)
