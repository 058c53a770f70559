"""Command-line interface: ``gelc fit``, ``gelc simulate``, ``gelc npmle``.

Exit codes:

    0  success
    2  usage error (bad flags)
    3  data or scenario file could not be parsed
    4  rank-deficient design
    5  fit did not converge, or the likelihood/quadrature failed
    6  I/O failure (unreadable input, unwritable output)
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import DataParseError, read_data
from .estimator import FitConfig, LikelihoodError, fit
from .families import DomainError, ParameterVector, get_family
from .glm import RankDeficiencyError
from .npmle import DegenerateSupportError, initial_weights, solve_weights
from .partition import build_partition, classic_turnbull_intervals
from .quadrature import QuadratureError, cell_density_matrix
from .report import fit_to_dict, format_coefficients, format_metrics

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_RANK = 4
EXIT_CONVERGENCE = 5
EXIT_IO = 6

JOBS_ENV = "GELC_JOBS"


class CliError(Exception):
    def __init__(self, message, code):
        self.code = code
        super().__init__(message)


def _load(path, require_response=True):
    try:
        return read_data(path, require_response=require_response)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
    except (DataParseError, DomainError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None


def cmd_fit(args):
    data = _load(args.data)
    config = FitConfig(eps_p=args.eps_p, eps_l=args.eps_l, quad_tol=args.quad_tol, max_outer=args.max_outer)
    try:
        result = fit(data, get_family(args.family), config)
    except DomainError as exc:
        raise CliError(f"{args.data}: {exc}", EXIT_PARSE) from None
    except RankDeficiencyError as exc:
        raise CliError(str(exc), EXIT_RANK) from None
    except (LikelihoodError, QuadratureError, DegenerateSupportError) as exc:
        raise CliError(str(exc), EXIT_CONVERGENCE) from None
    if args.json:
        print(json.dumps(fit_to_dict(result), indent=2))
    else:
        print(format_coefficients(result))
    if not result.converged:
        print(f"warning: fit did not converge after {result.outer_iterations} iterations", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_npmle(args):
    data = _load(args.data, require_response=args.mode == "augmented")
    if args.mode == "classic":
        part = classic_turnbull_intervals(data.intervals)
        sol = solve_weights(np.full(part.m, 1.0 / part.m), part.kappa, None, args.eps, args.max_iter)
    else:
        if args.family is None:
            raise CliError("--mode augmented requires --family", EXIT_USAGE)
        fam = get_family(args.family)
        try:
            if args.gamma_zero:
                from .glm import irls

                coef, phi = irls(fam, np.column_stack([np.ones(data.n), data.X]), data.y)
                theta = ParameterVector(coef[0], tuple(coef[1:]), 0.0, phi if fam.has_dispersion else 1.0)
                part = build_partition(data.intervals)
                C = cell_density_matrix(data, part, fam, theta)
                sol = solve_weights(initial_weights(part), part.kappa, C, args.eps, args.max_iter)
            else:
                res = fit(data, fam, FitConfig(compute_covariance=False))
                part, sol = res.partition, None
                weights = res.weights
        except DomainError as exc:
            raise CliError(f"{args.data}: {exc}", EXIT_PARSE) from None
        except RankDeficiencyError as exc:
            raise CliError(str(exc), EXIT_RANK) from None
        except (LikelihoodError, QuadratureError, DegenerateSupportError) as exc:
            raise CliError(str(exc), EXIT_CONVERGENCE) from None
    weights = sol.weights if sol is not None else weights
    if args.json:
        print(json.dumps({
            "mode": args.mode,
            "cells": [str(c) for c in part.cells],
            "left": part.left.tolist(),
            "right": part.right.tolist(),
            "weights": weights.tolist(),
        }, indent=2))
    else:
        print(f"{'cell':>24}  {'mass':>12}")
        for cell, mass in zip(part.cells, weights):
            print(f"{str(cell):>24}  {mass:12.6g}")
    return EXIT_OK


def cmd_simulate(args):
    from .simulation import load_scenarios, run_study, scenario_to_dict

    try:
        scenarios = load_scenarios(args.scenarios)
    except OSError as exc:
        raise CliError(f"cannot read {args.scenarios}: {exc.strerror or exc}", EXIT_IO) from None
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError(f"{args.scenarios}: invalid scenario file: {exc}", EXIT_PARSE) from None
    if args.reps is not None:
        from dataclasses import replace

        scenarios = [replace(s, replications=args.reps) for s in scenarios]
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc.strerror or exc}", EXIT_IO) from None

    jobs = args.jobs if args.jobs is not None else int(os.environ.get(JOBS_ENV, "1"))
    reports = run_study(scenarios, FitConfig(), parallelism=jobs)

    with open(out / "metrics.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario", "parameter", "metric", "value", "mcse"])
        for rep in reports:
            for row in rep.rows():
                wr.writerow([row[0], row[1], row[2], repr(float(row[3])), repr(float(row[4]))])
    with open(out / "replicates.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario", "seed", "repetition", "parameter", "estimate", "se", "converged", "reason",
                     "outer_iterations", "m", "loglik", "error"])
        for s, rep in zip(scenarios, reports):
            names = s.true_theta.names(get_family(s.family))
            for r in rep.replicates:
                for k, name in enumerate(names):
                    wr.writerow([rep.scenario, s.seed, r.repetition, name, repr(float(r.estimates[k])),
                                 repr(float(r.std_errors[k])), int(r.converged), r.reason, r.outer_iterations,
                                 r.m, repr(float(r.loglik)), r.error])
    with open(out / "timing.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario", "seconds_mean", "seconds_sd", "m_mean", "m_sd", "nonconvergences"])
        for rep in reports:
            wr.writerow([rep.scenario, f"{rep.seconds_mean:.3f}", f"{rep.seconds_sd:.3f}", f"{rep.m_mean:.1f}",
                         f"{rep.m_sd:.1f}", rep.nonconvergences])
    with open(out / "scenarios.json", "w") as fh:
        json.dump([scenario_to_dict(s) for s in scenarios], fh, indent=2)
    summary = format_metrics(reports)
    (out / "summary.txt").write_text(summary + "\n")
    print(summary)
    incomplete = [r.scenario for r in reports if len(r.parameters) == 0]
    if incomplete:
        print(f"error: no usable replicates for {', '.join(incomplete)}", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gelc", description="GLMs with an interval-censored covariate")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model to a data file")
    p.add_argument("--data", required=True, help="delimited file with columns y, zl, zr[, x1..xp]")
    p.add_argument("--family", required=True, choices=["gamma", "binomial", "gaussian"])
    p.add_argument("--eps-p", type=float, default=1e-6)
    p.add_argument("--eps-l", type=float, default=1e-8)
    p.add_argument("--quad-tol", type=float, default=1e-8)
    p.add_argument("--max-outer", type=int, default=200)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run a simulation study from a scenario file")
    p.add_argument("--scenarios", required=True, help="JSON scenario file")
    p.add_argument("--reps", type=int, default=None, help="override the replication count")
    p.add_argument("--jobs", type=int, default=None, help=f"worker processes (default ${JOBS_ENV} or 1)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("npmle", help="estimate the covariate distribution")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["classic", "augmented"], default="classic")
    p.add_argument("--family", choices=["gamma", "binomial", "gaussian"], default=None)
    p.add_argument("--gamma-zero", action="store_true",
                   help="augmented mode with the censored covariate's effect fixed at 0")
    p.add_argument("--eps", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_npmle)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
