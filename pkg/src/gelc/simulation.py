"""Simulation study: data generation, censoring, replication and metrics.

Random streams come from Philox keyed by ``(seed, repetition, stream)``, so
any repetition can be regenerated on its own and every scenario that shares
a seed sees the same covariate draws:

* stream ``("z",)`` gives the true covariate for the largest sample size;
* stream ``("y", family, gamma, phi, ...)`` gives the outcomes for one
  outcome model;
* stream ``("censor", mu)`` gives the censoring intervals for one width.

Smaller sample sizes take the first ``n`` rows.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .estimator import FitConfig, fit
from .families import ObservedInterval, ParameterVector, get_family

__all__ = [
    "Scenario",
    "MetricsReport",
    "ParameterMetrics",
    "ReplicateResult",
    "generate_z",
    "censor",
    "stream",
    "simulate_dataset",
    "run_scenario",
    "run_study",
    "compute_metrics",
    "load_scenarios",
    "POOL_SIZE",
]

log = logging.getLogger(__name__)

POOL_SIZE = 500
CV = 0.75


@dataclass(frozen=True)
class Scenario:
    n: int
    family: str
    alpha: float
    gamma: float
    phi: float = 1.0
    censor_mean_width: float = 0.0
    z_mean: float = 12.0
    replications: int = 500
    seed: int = 2025
    name: str = ""
    beta: tuple = ()

    def __post_init__(self):
        if self.replications < 2:
            raise ValueError("a scenario needs at least two replications")
        if self.n < 1 or self.censor_mean_width < 0 or self.z_mean <= 0:
            raise ValueError("invalid scenario parameters")
        get_family(self.family)
        object.__setattr__(self, "beta", tuple(self.beta))
        if not self.name:
            fam = get_family(self.family)
            tag = f"{fam.name}_a{self.alpha:g}_g{self.gamma:g}"
            if fam.has_dispersion:
                tag += f"_phi{self.phi:g}"
            object.__setattr__(self, "name", f"{tag}_n{self.n}_mu{self.censor_mean_width:g}")

    @property
    def sigma(self):
        return CV * self.censor_mean_width

    @property
    def true_theta(self):
        fam = get_family(self.family)
        return ParameterVector(self.alpha, self.beta, self.gamma, self.phi if fam.has_dispersion else 1.0)

    def outcome_key(self):
        fam = get_family(self.family)
        return ("y", fam.name, repr(float(self.alpha)), repr(float(self.gamma)), repr(float(self.phi)))


def stream(seed, repetition, *key):
    """Independent Philox generator for ``(seed, repetition, key)``."""
    digest = hashlib.sha256(json.dumps([int(seed), int(repetition), *map(str, key)]).encode()).digest()
    words = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=words))


def generate_z(n, mean, rng):
    """``n`` iid exponential draws with the given mean."""
    if mean <= 0:
        raise ValueError("mean must be positive")
    return rng.exponential(mean, size=n)


def _positive_normal(mu, sigma, rng):
    while True:
        g = rng.normal(mu, sigma)
        if g > 0:
            return g


def censor(z, mu, sigma, rng):
    """Gap-based inspection process.

    The first inspection falls at ``U(0, mu)``, later gaps are
    ``N(mu, sigma)`` (nonpositive draws are redrawn); ``z`` is reported as
    ``[tau_{R-1}, tau_R)`` for the first inspection time ``tau_R > z``.
    ``mu == 0`` returns exact observations.
    """
    z = np.asarray(z, dtype=float)
    if mu == 0:
        return [ObservedInterval.exact(v) for v in z]
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    out = []
    for zi in z:
        prev, tau = 0.0, rng.uniform(0.0, mu)
        while not zi < tau:
            prev, tau = tau, tau + _positive_normal(mu, sigma, rng)
        out.append(ObservedInterval(prev, tau, True, False))
    return out


def simulate_dataset(scenario: Scenario, repetition: int, pool_size=POOL_SIZE):
    """Data for one repetition, following the shared-draws protocol.

    Returns ``(dataset, z_true)`` truncated to ``scenario.n`` rows.
    """
    size = max(pool_size, scenario.n)
    fam = get_family(scenario.family)
    z = generate_z(size, scenario.z_mean, stream(scenario.seed, repetition, "z", size, scenario.z_mean))
    p = len(scenario.beta)
    X = np.empty((size, 0))
    if p:
        X = stream(scenario.seed, repetition, "x", size, p).standard_normal((size, p))
    theta = scenario.true_theta
    eta = theta.alpha + X @ np.asarray(theta.beta, dtype=float) + theta.gamma * z
    y = fam.sample(eta, theta.phi, stream(scenario.seed, repetition, *scenario.outcome_key(), size))
    intervals = censor(
        z, scenario.censor_mean_width, scenario.sigma,
        stream(scenario.seed, repetition, "censor", repr(float(scenario.censor_mean_width)), size),
    )
    n = scenario.n
    return Dataset(y[:n], X[:n], intervals[:n]), z[:n]


@dataclass(frozen=True)
class ReplicateResult:
    repetition: int
    estimates: np.ndarray
    std_errors: np.ndarray
    converged: bool
    reason: str
    outer_iterations: int
    loglik: float
    m: int
    seconds: float
    error: str = ""
    weight_residual: float = float("nan")
    score_residual: float = float("nan")
    # largest decrease of the outer loglikelihood sequence and of any
    # weight-stage trace (0 when both are nondecreasing)
    outer_drop: float = float("nan")
    inner_drop: float = float("nan")


def _max_drop(seq):
    seq = np.asarray(seq, dtype=float)
    return float(max(0.0, -np.min(np.diff(seq)))) if seq.size > 1 else 0.0


def _fit_one(args):
    scenario, repetition, config = args
    fam = get_family(scenario.family)
    d = len(scenario.true_theta.to_array(fam))
    t0 = time.perf_counter()
    try:
        data, _ = simulate_dataset(scenario, repetition)
        res = fit(data, fam, config)
        return ReplicateResult(
            repetition, res.params, res.std_errors, res.converged and res.covariance is not None,
            res.convergence_reason.value, res.outer_iterations, res.loglik, res.partition.m,
            time.perf_counter() - t0, "", res.weight_residual, res.score_residual,
            _max_drop(res.history["loglik"]),
            max((_max_drop(t) for t in res.history["inner_trace"]), default=0.0),
        )
    except Exception as exc:  # a failed replicate is recorded, not fatal
        return ReplicateResult(
            repetition, np.full(d, np.nan), np.full(d, np.nan), False, "error", 0, float("nan"), 0,
            time.perf_counter() - t0, f"{type(exc).__name__}: {exc}",
        )


def _map(func, items, jobs):
    if jobs is None:
        jobs = int(os.environ.get("GELC_JOBS", "1"))
    if jobs <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items, chunksize=1))


@dataclass(frozen=True)
class ParameterMetrics:
    name: str
    truth: float
    relative: bool
    bias: float
    bias_mcse: float
    empse: float
    empse_mcse: float
    rmse: float
    rmse_mcse: float
    coverage: float
    coverage_mcse: float
    mean_se: float

    @property
    def bias_label(self):
        return "RelBias" if self.relative else "Bias"


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    replications: int
    used: int
    nonconvergences: int
    parameters: tuple
    seconds_mean: float = float("nan")
    seconds_sd: float = float("nan")
    m_mean: float = float("nan")
    m_sd: float = float("nan")
    replicates: tuple = field(default=(), repr=False)

    def __getitem__(self, name):
        for pm in self.parameters:
            if pm.name == name:
                return pm
        raise KeyError(name)

    def rows(self):
        """``(scenario, parameter, metric, value, mcse)`` tuples."""
        out = []
        for pm in self.parameters:
            out += [
                (self.scenario, pm.name, pm.bias_label, pm.bias, pm.bias_mcse),
                (self.scenario, pm.name, "EmpSE", pm.empse, pm.empse_mcse),
                (self.scenario, pm.name, "RMSE", pm.rmse, pm.rmse_mcse),
                (self.scenario, pm.name, "CP", pm.coverage, pm.coverage_mcse),
                (self.scenario, pm.name, "ModSE", pm.mean_se, float("nan")),
            ]
        return out


def compute_metrics(estimates, ses, truths, ci_level=0.95, names=None, scenario=""):
    """Bias, empirical SE, RMSE and Wald coverage with Monte Carlo SEs.

    ``estimates`` and ``ses`` are (R, d).  Bias is relative and in percent
    unless the truth is zero, in which case it is the plain mean error.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    se = np.atleast_2d(np.asarray(ses, dtype=float))
    truths = np.atleast_1d(np.asarray(truths, dtype=float))
    if est.shape[0] == 1 and truths.size > 1:
        est, se = est.T, se.T
    if est.ndim == 2 and est.shape[1] != truths.size:
        est, se = est.T, se.T
    R = est.shape[0]
    if R < 2:
        raise ValueError("at least two replicates are required")
    names = names or [f"theta{k}" for k in range(truths.size)]
    zq = norm.ppf(0.5 + ci_level / 2.0)
    out = []
    for k, truth in enumerate(truths):
        e, s = est[:, k], se[:, k]
        relative = truth != 0
        err = (e - truth) / truth * 100.0 if relative else e - truth
        bias = err.mean()
        bias_mcse = math.sqrt(np.sum((err - bias) ** 2) / (R * (R - 1)))
        empse = math.sqrt(np.sum((e - e.mean()) ** 2) / (R - 1))
        mse = (e - truth) ** 2
        rmse = math.sqrt(mse.mean())
        mse_sd = math.sqrt(np.sum((mse - mse.mean()) ** 2) / (R * (R - 1)))
        rmse_mcse = mse_sd / (2.0 * rmse) if rmse > 0 else 0.0
        covered = (e - zq * s <= truth) & (truth <= e + zq * s)
        cp = covered.mean()
        out.append(ParameterMetrics(
            names[k], float(truth), bool(relative), float(bias), bias_mcse, empse,
            empse / math.sqrt(2 * (R - 1)), rmse, rmse_mcse, float(cp), math.sqrt(cp * (1 - cp) / R),
            float(np.mean(s)),
        ))
    return MetricsReport(scenario, R, R, 0, tuple(out))


def run_scenario(scenario: Scenario, config: FitConfig | None = None, jobs=None, ci_level=0.95):
    config = config or FitConfig()
    reps = _map(_fit_one, [(scenario, r, config) for r in range(scenario.replications)], jobs)
    reps.sort(key=lambda r: r.repetition)
    ok = [r for r in reps if r.converged and np.all(np.isfinite(r.std_errors))]
    fam = get_family(scenario.family)
    names = scenario.true_theta.names(fam)
    truths = scenario.true_theta.to_array(fam)
    secs = np.array([r.seconds for r in reps])
    ms = np.array([r.m for r in reps if r.m])
    if len(ok) >= 2:
        rep = compute_metrics(
            np.array([r.estimates for r in ok]), np.array([r.std_errors for r in ok]), truths, ci_level, names,
            scenario.name,
        )
        params = rep.parameters
    else:
        params = ()
    return MetricsReport(
        scenario.name, scenario.replications, len(ok), scenario.replications - len(ok), params,
        float(secs.mean()), float(secs.std(ddof=1)) if len(secs) > 1 else 0.0,
        float(ms.mean()) if len(ms) else float("nan"), float(ms.std(ddof=1)) if len(ms) > 1 else 0.0,
        tuple(reps),
    )


def run_study(scenarios, fit_config: FitConfig | None = None, parallelism=None, ci_level=0.95):
    """Run every scenario; failures are counted in each report, never raised."""
    return [run_scenario(s, fit_config, parallelism, ci_level) for s in scenarios]


_SCENARIO_FIELDS = {f for f in Scenario.__dataclass_fields__}


def load_scenarios(path_or_obj):
    """Scenarios from a JSON document.

    The document is either a list of scenario objects or
    ``{"defaults": {...}, "scenarios": [...]}``; keys are the
    :class:`Scenario` field names, plus ``true_theta`` as an alternative
    spelling of ``alpha``/``beta``/``gamma``/``phi``.
    """
    if isinstance(path_or_obj, (str, os.PathLike)):
        with open(path_or_obj) as fh:
            doc = json.load(fh)
    else:
        doc = path_or_obj
    if isinstance(doc, dict):
        defaults = dict(doc.get("defaults", {}))
        for key in ("seed", "replications", "z_mean"):
            if key in doc:
                defaults.setdefault(key, doc[key])
        items = doc.get("scenarios")
    else:
        defaults, items = {}, doc
    if not isinstance(items, list) or not items:
        raise ValueError("scenario document must contain a non-empty list of scenarios")
    out = []
    for k, item in enumerate(items):
        if not isinstance(item, dict):
            raise ValueError(f"scenario {k} is not an object")
        entry = {**defaults, **item}
        theta = entry.pop("true_theta", None)
        if theta is not None:
            entry.update({key: theta[key] for key in ("alpha", "beta", "gamma", "phi") if key in theta})
        unknown = set(entry) - _SCENARIO_FIELDS
        if unknown:
            raise ValueError(f"scenario {k}: unknown field(s) {sorted(unknown)}")
        try:
            out.append(Scenario(**entry))
        except TypeError as exc:
            raise ValueError(f"scenario {k}: {exc}") from None
    return out


def scenario_to_dict(s: Scenario):
    d = asdict(s)
    d["beta"] = list(s.beta)
    return d
