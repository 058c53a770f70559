"""Coefficient tables and interpretation helpers."""
from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm

from .families import Kind

__all__ = [
    "coefficient_table",
    "format_coefficients",
    "fit_to_dict",
    "effect_ratio",
    "gamma_log10_variance",
    "format_metrics",
]


def effect_ratio(coef, se, delta=1.0, level=0.95):
    """``exp(delta * coef)`` with a Wald interval on the log scale.

    For a logit link this is the odds ratio per ``delta`` units, for a log
    link the ratio of means.
    """
    zq = norm.ppf(0.5 + level / 2.0)
    return (
        math.exp(delta * coef),
        math.exp(delta * (coef - zq * se)),
        math.exp(delta * (coef + zq * se)),
    )


def gamma_log10_variance(phi):
    """Delta-method variance of ``log10(Y)`` for a Gamma response:
    ``Var(Y) / (mu log 10)^2 = phi / log(10)^2``."""
    return phi / math.log(10.0) ** 2


def _ratio_label(family):
    if family.kind is Kind.BERNOULLI_LOGIT:
        return "odds_ratio"
    if family.kind is Kind.GAMMA_LOG:
        return "mean_ratio"
    return None


def coefficient_table(result, level=0.95):
    """One dict per parameter: estimate, se, Wald z, CI and exp(estimate).

    The dispersion row carries no z statistic or ratio.
    """
    zq = norm.ppf(0.5 + level / 2.0)
    label = _ratio_label(result.family)
    rows = []
    for name, est, se in zip(result.names, result.params, result.std_errors):
        row = {"name": name, "estimate": float(est), "se": float(se)}
        if name == "phi":
            row.update(z=None, lower=float(est - zq * se), upper=float(est + zq * se), ratio=None)
        else:
            row.update(
                z=float(est / se) if se > 0 else None,
                lower=float(est - zq * se),
                upper=float(est + zq * se),
                ratio=float(np.exp(est)) if label else None,
            )
        rows.append(row)
    return rows


def fit_to_dict(result, level=0.95):
    return {
        "family": result.family.name,
        "coefficients": coefficient_table(result, level),
        "ratio_column": _ratio_label(result.family),
        "loglik": float(result.loglik),
        "outer_iterations": int(result.outer_iterations),
        "converged": bool(result.converged),
        "convergence_reason": result.convergence_reason.value,
        "n": int(result.partition.n),
        "m": int(result.partition.m),
        "weight_residual": float(result.weight_residual),
        "score_residual": float(result.score_residual),
        "covariance": None if result.covariance is None else np.asarray(result.covariance).tolist(),
        "ci_level": level,
    }


def _g(v):
    if v is None:
        return ""
    return f"{v:.6g}"


def format_coefficients(result, level=0.95):
    rows = coefficient_table(result, level)
    label = _ratio_label(result.family)
    pct = f"{100 * level:g}%"
    head = ["", "estimate", "se", "z", f"{pct} lower", f"{pct} upper"] + ([label] if label else [])
    body = [
        [r["name"], _g(r["estimate"]), _g(r["se"]), _g(r["z"]), _g(r["lower"]), _g(r["upper"])]
        + ([_g(r["ratio"])] if label else [])
        for r in rows
    ]
    widths = [max(len(str(c)) for c in col) for col in zip(head, *body)]
    lines = ["  ".join(str(c).rjust(w) for c, w in zip(line, widths)) for line in [head, *body]]
    lines += [
        "",
        f"loglikelihood: {result.loglik:.6g}",
        f"outer iterations: {result.outer_iterations}",
        f"converged: {result.converged} ({result.convergence_reason.value})",
        f"augmented intervals: {result.partition.m}",
    ]
    return "\n".join(lines)


def format_metrics(reports):
    """Plain-text table in the layout of a simulation summary."""
    head = ["scenario", "param", "bias", "(mcse)", "EmpSE", "RMSE", "CP", "(mcse)", "used", "nonconv"]
    body = []
    for rep in reports:
        for pm in rep.parameters:
            tag = f"{pm.bias_label}{'%' if pm.relative else ''}"
            body.append([
                rep.scenario, pm.name, f"{tag} {pm.bias:.3f}", f"{pm.bias_mcse:.3f}", f"{pm.empse:.4f}",
                f"{pm.rmse:.4f}", f"{pm.coverage:.3f}", f"{pm.coverage_mcse:.3f}", str(rep.used),
                str(rep.nonconvergences),
            ])
        if not rep.parameters:
            body.append([rep.scenario, "-", "-", "-", "-", "-", "-", "-", str(rep.used), str(rep.nonconvergences)])
    widths = [max(len(c) for c in col) for col in zip(head, *body)]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in [head, *body])
