"""Command-line interface: ``efm {fit,test,simulate,bandwidth}``.

Every verb reads its settings from flags, optionally layered over a JSON
config file (``--config``), and writes its results under ``--out``:

fit        fit.json, link_curve.csv, link_curve.png
test       test.json
simulate   study.json, study_errors.csv, study_errors.png; with ``--deltas``
           also power.json, power.csv, power.png
bandwidth  bandwidth.json, bandwidth.csv, bandwidth.png

Data come either from a CSV file (``--data`` and ``--response``) or from a
simulation design (``--design``).  The exit status is 0 when every
requested computation converged, 1 when something did not converge or
failed numerically, and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .exceptions import EFMError, TestFailure
from .families import get_family
from .inference import covariance_from_fit, qlr_test
from .io import IngestError, RunConfig, ingest_csv, write_csv, write_json
from .simulation import (
    DESIGNS,
    SimDesign,
    center_by_group,
    freeze_damping,
    generate,
    power_curve,
    run_study,
)
from .solver import EFMConfig, solve

log = logging.getLogger("efm")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _csv_list(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _int_list(text):
    try:
        return tuple(int(s) for s in _csv_list(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return tuple(float(s) for s in _csv_list(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_common(p):
    S = argparse.SUPPRESS
    g = p.add_argument_group("data")
    g.add_argument("--data", default=S, help="input CSV with a header row")
    g.add_argument("--response", default=S, help="response column of --data")
    g.add_argument("--categorical", type=_csv_list, default=S,
                   help="comma-separated columns to dummy-code")
    g.add_argument("--standardize", action="store_true", default=S,
                   help="scale non-indicator columns to mean 0, variance 1")
    g.add_argument("--log", type=_csv_list, default=S, help="columns to log-transform")
    g.add_argument("--log1p", type=_csv_list, default=S, help="columns to log(1+x)-transform")
    g.add_argument("--design", choices=DESIGNS, default=S,
                   help="simulate the data from this design instead of reading --data")
    g.add_argument("--n", type=int, default=S, help="simulated sample size (default 400)")
    g.add_argument("--d", type=int, default=S, help="simulated dimension (default 10)")
    g.add_argument("--tau", type=float, default=S, help="Beta(tau, 1) shape for Ex1 designs")
    g.add_argument("--a", type=float, default=S, help="frequency of the Ex4 link")

    g = p.add_argument_group("estimation")
    g.add_argument("--family", choices=("gaussian-identity", "bernoulli-logit", "poisson-log"),
                   default=S)
    g.add_argument("--bandwidth", default=S, help='positive number or "cv" (default)')
    g.add_argument("--damping-m", dest="damping_m", default=S,
                   help='positive number or "auto" (default)')
    g.add_argument("--cv-folds", dest="cv_folds", type=int, default=S)
    g.add_argument("--tol", type=float, default=S)
    g.add_argument("--max-iter", dest="max_iter", type=int, default=S)
    g.add_argument("--seed", type=int, default=S)

    g = p.add_argument_group("output")
    g.add_argument("--out", default=S, help="output directory (default efm-out)")
    g.add_argument("--config", help="JSON file with any of the settings above")
    g.add_argument("--no-plots", dest="plots", action="store_false", default=S)
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="efm", description="Single-index model estimation by estimating functions."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate the index vector and the link")
    _add_common(p)

    p = sub.add_parser("test", help="quasi-likelihood ratio test of zero coefficients")
    _add_common(p)
    p.add_argument("--restrict", type=_int_list, default=argparse.SUPPRESS,
                   help="1-based coefficient positions fixed at 0, e.g. 4,5,6")

    p = sub.add_parser("simulate", help="Monte Carlo study or power curve")
    _add_common(p)
    p.add_argument("--reps", type=int, default=argparse.SUPPRESS)
    p.add_argument("--deltas", type=_float_list, default=argparse.SUPPRESS,
                   help="power study: values of beta_4, must include 0")
    p.add_argument("--level", type=float, default=argparse.SUPPRESS)

    p = sub.add_parser("bandwidth", help="cross-validation scan over the bandwidth grid")
    _add_common(p)
    return parser


def resolve_config(args):
    """Merge the optional JSON config with the flags given on the command line."""
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    raw.update(flags)
    for key in ("restrict", "deltas", "categorical", "log", "log1p"):
        if key in raw:
            raw[key] = tuple(raw[key])
    try:
        return RunConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def efm_config(cfg):
    return EFMConfig(
        tol=cfg.tol, max_iter=cfg.max_iter, M=cfg.damping_m, bandwidth=cfg.bandwidth,
        cv_folds=cfg.cv_folds, seed=cfg.seed,
    )


def sim_design(cfg):
    if cfg.design is None:
        raise UsageError("--design is required")
    try:
        return SimDesign(cfg.design, d=cfg.d, n=cfg.n, tau=cfg.tau, a=cfg.a, seed=cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def load_data(cfg):
    """``(X, y, column_names, response_name, preprocessing_log, beta_true)``."""
    if cfg.data is not None and cfg.design is not None:
        raise UsageError("give either --data or --design, not both")
    if cfg.data is not None:
        if cfg.response is None:
            raise UsageError("--response is required with --data")
        try:
            ds = ingest_csv(
                cfg.data, cfg.response, cfg.categorical, cfg.standardize,
                log_columns=cfg.log, log1p_columns=cfg.log1p,
            )
        except (OSError, IngestError) as exc:
            raise UsageError(str(exc)) from None
        return ds.X, ds.y, ds.column_names, ds.response_name, ds.preprocessing_log, None
    data = generate(sim_design(cfg))
    y = data.y
    steps = [f"simulated {cfg.design} with seed {cfg.seed}"]
    if data.Z is not None:
        y = center_by_group(y, data.Z)
        steps.append("response centred within Z groups")
    names = [f"x{j + 1}" for j in range(data.X.shape[1])]
    return data.X, y, names, "y", steps, data.beta


def family_of(cfg):
    """``--family`` if given, else the design's family, else Gaussian."""
    if cfg.family is not None:
        return get_family(cfg.family)
    if cfg.design is not None and cfg.data is None:
        return get_family(sim_design(cfg).family)
    return get_family("gaussian-identity")


def _fit_summary(fit, names):
    return {
        "beta": {nm: float(b) for nm, b in zip(names, fit.beta_hat)},
        "quasi_loglik": fit.quasi_loglik,
        "bandwidth": fit.bandwidth_used,
        "M": fit.M_used,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "final_score_norm": fit.final_score_norm,
    }


def _settings(cfg):
    keys = ("bandwidth", "damping_m", "tol", "max_iter", "cv_folds", "seed")
    out = {"family": family_of(cfg).name}
    out.update({k: getattr(cfg, k) for k in keys})
    return out


def cmd_fit(cfg):
    X, y, names, response, steps, truth = load_data(cfg)
    family = family_of(cfg)
    fit = solve(X, y, family, efm_config(cfg))
    n, d = X.shape
    se = [None] * d
    sigma2 = None
    if n > d:
        cov = covariance_from_fit(fit, X, y, family)
        se, sigma2 = cov.std_errors, cov.sigma2_hat
    doc = {
        "kind": "fit",
        "family": family.name,
        "n": n,
        "d": d,
        "response": response,
        "coefficients": [
            {"name": nm, "estimate": float(b), "std_error": s}
            for nm, b, s in zip(names, fit.beta_hat, se)
        ],
        "sigma2_hat": sigma2,
        "quasi_loglik": fit.quasi_loglik,
        "bandwidth": fit.bandwidth_used,
        "M": fit.M_used,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "final_score_norm": fit.final_score_norm,
        "preprocessing": steps,
        "settings": _settings(cfg),
    }
    if truth is not None:
        doc["beta_true"] = truth
        doc["error"] = float(np.sum(np.abs(fit.beta_hat - truth)))
    write_json(os.path.join(cfg.out, "fit.json"), doc)

    c = fit.curve
    order = np.argsort(c.eval_points, kind="stable")
    mu = family.mu(c.g_hat)
    write_csv(
        os.path.join(cfg.out, "link_curve.csv"),
        ["index", "g_hat", "g_prime_hat", "mu_g_hat"],
        np.column_stack([c.eval_points, c.g_hat, c.g_prime_hat, mu])[order],
    )
    if cfg.plots:
        from .plotting import plot_link_curve

        plot_link_curve(os.path.join(cfg.out, "link_curve.png"), c.eval_points, y,
                        c.g_hat, mu, response)
    return EXIT_OK if fit.converged else EXIT_FAILED


def cmd_test(cfg):
    if not cfg.restrict:
        raise UsageError("--restrict is required")
    X, y, names, response, steps, _ = load_data(cfg)
    d = X.shape[1]
    if max(cfg.restrict) > d:
        raise UsageError(f"restricted positions must lie in 2..{d}")
    family = family_of(cfg)
    path = os.path.join(cfg.out, "test.json")
    restricted0 = [j - 1 for j in cfg.restrict]
    try:
        res = qlr_test(X, y, family, efm_config(cfg), restricted0)
    except TestFailure as exc:
        write_json(path, {
            "kind": "test_failure",
            "message": str(exc),
            "restricted": sorted(cfg.restrict),
            "full": _fit_summary(exc.full_fit, names),
            "restricted_fit": _fit_summary(exc.restricted_fit, names),
            "settings": _settings(cfg),
        })
        log.error("%s", exc)
        return EXIT_FAILED
    write_json(path, {
        "kind": "test",
        "statistic": res.statistic,
        "raw_statistic": res.raw_statistic,
        "df": res.df,
        "p_value": res.p_value,
        "sigma2_hat": res.sigma2_hat,
        "restricted": sorted(cfg.restrict),
        "full": _fit_summary(res.full_fit, names),
        "restricted_fit": _fit_summary(res.restricted_fit, names),
        "preprocessing": steps,
        "settings": _settings(cfg),
    })
    return EXIT_OK


def _study_settings(cfg, design, config):
    out = _settings(cfg)
    out["damping_m"] = config.M
    out.update(design=design.id, n=design.n, d=design.d, tau=design.tau, a=design.a)
    return out


def cmd_simulate(cfg):
    if cfg.data is not None:
        raise UsageError("simulate takes --design, not --data")
    design = sim_design(cfg)  # the design fixes the family
    config = freeze_damping(design, efm_config(cfg))
    status = EXIT_OK

    res = run_study(design, cfg.reps, config)
    write_json(os.path.join(cfg.out, "study.json"), {
        "kind": "study",
        "design": design.id,
        "reps": cfg.reps,
        "mean_error": res.mean_error,
        "mc_stderr": res.mc_stderr,
        "convergence_rate": res.convergence_rate,
        "per_rep_errors": res.per_rep_errors,
        "per_rep_converged": res.converged,
        "settings": _study_settings(cfg, design, config),
    })
    write_csv(
        os.path.join(cfg.out, "study_errors.csv"),
        ["rep", "seed", "error", "converged"],
        [[str(r), str(design.seed + r), e, str(int(c))]
         for r, (e, c) in enumerate(zip(res.per_rep_errors, res.converged))],
    )
    if res.convergence_rate < 1.0:
        status = EXIT_FAILED

    if cfg.deltas:
        try:
            pw = power_curve(design, cfg.deltas, cfg.level, cfg.reps, config)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        write_json(os.path.join(cfg.out, "power.json"), {
            "kind": "power",
            "design": design.id,
            "reps": cfg.reps,
            "level": cfg.level,
            "points": [
                {"delta": dl, "rejection_rate": r, "completed": c,
                 "mean_statistic": float(np.nanmean(s)) if c else None}
                for dl, r, c, s in zip(pw.deltas, pw.rejection_rates, pw.completed,
                                       pw.statistics)
            ],
            "settings": _study_settings(cfg, design, config),
        })
        write_csv(os.path.join(cfg.out, "power.csv"), ["delta", "rejection_rate"],
                  np.column_stack([pw.deltas, pw.rejection_rates]))
        if np.any(pw.completed < cfg.reps):
            status = EXIT_FAILED
        if cfg.plots:
            from .plotting import plot_power_curve

            plot_power_curve(os.path.join(cfg.out, "power.png"), pw.deltas,
                             pw.rejection_rates, cfg.level)
    if cfg.plots:
        from .plotting import plot_study_errors

        plot_study_errors(os.path.join(cfg.out, "study_errors.png"), res.per_rep_errors)
    return status


def cmd_bandwidth(cfg):
    """Fit, then report the CV criterion over the default grid at beta_hat."""
    from .selection import bandwidth_scores, default_bandwidth_grid, make_plan

    X, y, names, _, _, _ = load_data(cfg)
    family = family_of(cfg)
    fit = solve(X, y, family, efm_config(cfg))
    beta = fit.beta_hat
    grid = default_bandwidth_grid(X @ beta)
    scores = bandwidth_scores(X, y, family, beta, grid, make_plan(len(y), cfg.cv_folds, cfg.seed))
    if not np.any(np.isfinite(scores)):
        log.error("no bandwidth on the grid supports every held-out point")
        selected, status = float("nan"), EXIT_FAILED
    else:
        from .selection import _argbest

        selected = _argbest(grid, scores, +1.0)
        status = EXIT_OK if fit.converged else EXIT_FAILED
    write_json(os.path.join(cfg.out, "bandwidth.json"), {
        "kind": "bandwidth",
        "beta": beta,
        "grid": grid,
        "scores": scores,
        "selected": selected if np.isfinite(selected) else 0.0,
        "fit_converged": fit.converged,
        "settings": _settings(cfg),
    })
    write_csv(os.path.join(cfg.out, "bandwidth.csv"), ["bandwidth", "heldout_quasi_loglik"],
              np.column_stack([grid, scores]))
    if cfg.plots and np.isfinite(selected):
        from .plotting import plot_bandwidth_scan

        plot_bandwidth_scan(os.path.join(cfg.out, "bandwidth.png"), grid, scores, selected)
    return status


COMMANDS = {"fit": cmd_fit, "test": cmd_test, "simulate": cmd_simulate,
            "bandwidth": cmd_bandwidth}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.error(str(exc))
    except EFMError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
