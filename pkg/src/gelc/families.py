"""Outcome families, parameter containers and per-point scores.

Every family works on the linear predictor ``eta`` directly; the mean is
``g^{-1}(eta)``.  All array functions broadcast over ``y``, ``eta`` and
``phi``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, expit, gammaln

__all__ = [
    "DomainError",
    "ObservedInterval",
    "Observation",
    "ParameterVector",
    "Family",
    "GAMMA",
    "BERNOULLI",
    "GAUSSIAN",
    "get_family",
    "linear_predictor",
    "log_density",
    "score_point",
    "eta_clamp_hits",
]

ETA_CLAMP = 700.0


class DomainError(ValueError):
    """Input outside the support or parameter space of a family."""


# Counts how often |eta| exceeded ETA_CLAMP; acceptance runs assert it stays 0.
_clamp_hits = [0]


def eta_clamp_hits(reset=False):
    n = _clamp_hits[0]
    if reset:
        _clamp_hits[0] = 0
    return n


def _clamp(eta):
    eta = np.asarray(eta, dtype=float)
    over = np.abs(eta) > ETA_CLAMP
    if over.any():
        _clamp_hits[0] += int(over.sum())
        eta = np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
    return eta


@dataclass(frozen=True)
class ObservedInterval:
    """A censoring interval ``⌊left, right⌋`` with endpoint openness flags.

    Exact observations are the degenerate closed interval ``[z, z]``.
    """

    left: float
    right: float
    left_closed: bool = True
    right_closed: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.left) and math.isfinite(self.right)):
            raise DomainError(f"interval endpoints must be finite, got ({self.left}, {self.right})")
        if self.left > self.right:
            raise DomainError(f"left endpoint {self.left} exceeds right endpoint {self.right}")
        if self.left == self.right and not (self.left_closed and self.right_closed):
            raise DomainError("a degenerate interval must be closed on both sides")

    @classmethod
    def exact(cls, z):
        return cls(float(z), float(z), True, True)

    @classmethod
    def censored(cls, left, right):
        """Ingestion convention: ``[left, right)``, or ``[z, z]`` when equal."""
        left, right = float(left), float(right)
        if left == right:
            return cls.exact(left)
        return cls(left, right, True, False)

    @property
    def is_exact(self):
        return self.left == self.right

    @property
    def length(self):
        return self.right - self.left

    def contains(self, z):
        lo = z >= self.left if self.left_closed else z > self.left
        hi = z <= self.right if self.right_closed else z < self.right
        return bool(lo and hi)

    def __str__(self):
        lb = "[" if self.left_closed else "("
        rb = "]" if self.right_closed else ")"
        return f"{lb}{self.left:g}, {self.right:g}{rb}"


@dataclass(frozen=True)
class ParameterVector:
    """Regression coefficients ``(alpha, beta, gamma)`` and dispersion ``phi``."""

    alpha: float
    beta: tuple = ()
    gamma: float = 0.0
    phi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        if not self.phi > 0:
            raise DomainError(f"dispersion must be positive, got {self.phi}")

    @property
    def p(self):
        return len(self.beta)

    @property
    def regression(self):
        """Coefficients in internal order ``(alpha, beta..., gamma)``."""
        return np.array([self.alpha, *self.beta, self.gamma])

    def to_array(self, family):
        """Free parameters on the natural scale, ``phi`` last when estimated."""
        reg = self.regression
        return np.append(reg, self.phi) if family.has_dispersion else reg

    @classmethod
    def from_array(cls, values, family, p):
        values = np.asarray(values, dtype=float)
        phi = float(values[p + 2]) if family.has_dispersion else 1.0
        return cls(float(values[0]), tuple(values[1:p + 1]), float(values[p + 1]), phi)

    def names(self, family):
        out = ["alpha"] + [f"beta{k + 1}" for k in range(self.p)] + ["gamma"]
        return out + ["phi"] if family.has_dispersion else out


@dataclass(frozen=True)
class Observation:
    y: float
    x: tuple
    interval: ObservedInterval

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        if not all(math.isfinite(v) for v in self.x):
            raise DomainError("covariates must be finite")


class Kind(enum.Enum):
    GAMMA_LOG = "gamma"
    BERNOULLI_LOGIT = "binomial"
    GAUSSIAN_IDENTITY = "gaussian"


@dataclass(frozen=True)
class Family:
    """Exponential-dispersion family with a fixed link.

    ``logpdf``, ``dlogf_deta`` and ``dlogf_dphi`` take the linear predictor,
    so the regression score is ``dlogf_deta * (1, x, z)``.
    """

    kind: Kind
    has_dispersion: bool = field(default=True)

    @property
    def name(self):
        return self.kind.value

    # link -------------------------------------------------------------
    def inverse_link(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind is Kind.GAMMA_LOG:
            return np.exp(_clamp(eta))
        if self.kind is Kind.BERNOULLI_LOGIT:
            return expit(_clamp(eta))
        return eta

    def link(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.kind is Kind.GAMMA_LOG:
            return np.log(mu)
        if self.kind is Kind.BERNOULLI_LOGIT:
            return np.log(mu) - np.log1p(-mu)
        return mu

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.kind is Kind.GAMMA_LOG:
            return mu**2
        if self.kind is Kind.BERNOULLI_LOGIT:
            return mu * (1 - mu)
        return np.ones_like(mu)

    def dmu_deta(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind is Kind.GAMMA_LOG:
            return np.exp(_clamp(eta))
        if self.kind is Kind.BERNOULLI_LOGIT:
            p = expit(_clamp(eta))
            return p * (1 - p)
        return np.ones_like(eta)

    # support ----------------------------------------------------------
    def check_response(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("response must be finite")
        if self.kind is Kind.GAMMA_LOG and np.any(y <= 0):
            raise DomainError("Gamma responses must be strictly positive")
        if self.kind is Kind.BERNOULLI_LOGIT and np.any((y != 0) & (y != 1)):
            raise DomainError("Bernoulli responses must be 0 or 1")
        return y

    def check_phi(self, phi):
        if self.has_dispersion and not np.all(np.asarray(phi) > 0):
            raise DomainError(f"dispersion must be positive, got {phi}")

    # densities --------------------------------------------------------
    def logpdf(self, y, eta, phi=1.0):
        if self.kind is Kind.GAMMA_LOG:
            eta = _clamp(eta)
            k = 1.0 / phi
            # (y(-1/mu) - log mu)/phi + log(y/phi)/phi - log(y Gamma(1/phi))
            return k * (-y * np.exp(-eta) - eta + np.log(y * k)) - np.log(y) - gammaln(k)
        if self.kind is Kind.BERNOULLI_LOGIT:
            eta = _clamp(eta)
            # y*eta - log(1 + e^eta) without cancellation for y in {0, 1}
            return -np.logaddexp(0.0, (1.0 - 2.0 * np.asarray(y, dtype=float)) * eta)
        r = y - eta
        return -0.5 * r * r / phi - 0.5 * np.log(2 * np.pi * phi)

    def dlogf_deta(self, y, eta, phi=1.0):
        if self.kind is Kind.GAMMA_LOG:
            return (y * np.exp(-_clamp(eta)) - 1.0) / phi
        if self.kind is Kind.BERNOULLI_LOGIT:
            return y - expit(_clamp(eta))
        return (y - eta) / phi

    def dlogf_dphi(self, y, eta, phi=1.0):
        if self.kind is Kind.GAMMA_LOG:
            eta = _clamp(eta)
            k = 1.0 / phi
            dk = -y * np.exp(-eta) - eta + np.log(y * k) + 1.0 - digamma(k)
            return -k * k * dk
        if self.kind is Kind.BERNOULLI_LOGIT:
            return np.zeros(np.broadcast(y, eta).shape)
        r = y - eta
        return 0.5 * r * r / phi**2 - 0.5 / phi

    def sample(self, eta, phi, rng):
        mu = self.inverse_link(eta)
        if self.kind is Kind.GAMMA_LOG:
            return rng.gamma(shape=1.0 / phi, scale=phi * mu)
        if self.kind is Kind.BERNOULLI_LOGIT:
            return (rng.random(mu.shape) < mu).astype(float)
        return rng.normal(mu, np.sqrt(phi))


GAMMA = Family(Kind.GAMMA_LOG, True)
BERNOULLI = Family(Kind.BERNOULLI_LOGIT, False)
GAUSSIAN = Family(Kind.GAUSSIAN_IDENTITY, True)

_ALIASES = {
    "gamma": GAMMA,
    "gamma-log": GAMMA,
    "binomial": BERNOULLI,
    "bernoulli": BERNOULLI,
    "bernoulli-logit": BERNOULLI,
    "logistic": BERNOULLI,
    "gaussian": GAUSSIAN,
    "gaussian-identity": GAUSSIAN,
    "normal": GAUSSIAN,
}


def get_family(name):
    if isinstance(name, Family):
        return name
    try:
        return _ALIASES[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose gamma, binomial or gaussian") from None


def linear_predictor(theta, x, z):
    """``alpha + beta'x + gamma z``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[-1] != theta.p:
        raise ValueError(f"expected {theta.p} covariates, got {x.shape[-1]}")
    return theta.alpha + x @ np.asarray(theta.beta, dtype=float) + theta.gamma * np.asarray(z, dtype=float)


def log_density(family, y, eta, phi=1.0):
    """Log-density of one response given its linear predictor."""
    family = get_family(family)
    family.check_response(y)
    family.check_phi(phi)
    return float(family.logpdf(float(y), float(eta), float(phi) if family.has_dispersion else 1.0))


def score_point(family, y, x, z, theta):
    """Gradient of ``log f(y | x, z; theta)``.

    Ordered as ``(alpha, beta..., gamma[, phi])``; the regression block is
    ``(y - mu) / (phi V(mu)) * dmu/deta * (1, x, z)``.
    """
    family = get_family(family)
    family.check_response(y)
    if not math.isfinite(z):
        raise DomainError("z must be finite")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    eta = float(linear_predictor(theta, x, z))
    g = family.dlogf_deta(float(y), eta, theta.phi)
    reg = g * np.concatenate([[1.0], x, [z]])
    if family.has_dispersion:
        return np.append(reg, family.dlogf_dphi(float(y), eta, theta.phi))
    return reg
