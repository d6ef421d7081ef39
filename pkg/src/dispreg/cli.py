"""Batch command-line interface.

Subcommands: fit, bias, bootstrap, simulate.  A run is described by a flat
INI configuration (family, links, predictors, data bindings, command
options) plus a delimited data table with a header row; results are written
as canonical JSON reports.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from pathlib import Path

import numpy as np

from .bias import bias_report
from .bootstrap import BootstrapPlan, bootstrap_bias
from .errors import ConfigError, DataError, DispregError, DomainError
from .families import family_by_name
from .fit import fit_mle, wald_intervals
from .links import link_by_name
from .model import Dataset, ModelSpec, build_model
from .report import SCHEMA, canonical_json, write_report
from .simulate import StudyConfig, run_study

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NONCONVERGENCE = 4

_NA_TOKENS = {"", "na", "nan", "n/a", "null", "."}


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------


def read_table(path) -> dict[str, np.ndarray]:
    """Read a delimited text table with a header row into float columns."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise DataError(f"data file {path} needs a header row and at least one data row")
    delim = None
    for cand in ("\t", ",", ";"):
        if cand in lines[0]:
            delim = cand
            break
    header = [h.strip() for h in (lines[0].split(delim) if delim else lines[0].split())]
    if len(set(header)) != len(header):
        raise DataError(f"duplicate column names in {path}")
    columns = {h: np.empty(len(lines) - 1) for h in header}
    for r, line in enumerate(lines[1:], start=1):
        cells = [c.strip() for c in (line.split(delim) if delim else line.split())]
        if len(cells) != len(header):
            raise DataError(f"row {r}: expected {len(header)} fields, found {len(cells)}")
        for h, cell in zip(header, cells):
            if cell.lower() in _NA_TOKENS:
                raise DataError(f"row {r}: missing value in column {h!r} is not allowed")
            try:
                value = float(cell)
            except ValueError:
                raise DataError(f"row {r}: cannot parse {cell!r} in column {h!r}") from None
            if not np.isfinite(value):
                raise DataError(f"row {r}: non-finite value in column {h!r}")
            columns[h][r - 1] = value
    return columns


def load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None
    return parser


def _get(cfg, section, option, default=None, required=False):
    if cfg.has_option(section, option):
        return cfg.get(section, option).strip()
    if required:
        raise ConfigError(f"config is missing [{section}] {option}")
    return default


def _float_list(text: str, what: str) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse {what}: {text!r}") from None


def build_model_from_config(cfg) -> tuple[ModelSpec, str, list[str]]:
    """Model plus the response column name and declared covariate names."""
    try:
        family = family_by_name(_get(cfg, "family", "name", required=True))
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    try:
        mean_link = link_by_name(_get(cfg, "links", "mean", required=True))
        disp_name = _get(cfg, "links", "dispersion")
        disp_link = link_by_name(disp_name) if disp_name else None
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    mean_formula = _get(cfg, "predictors", "mean", required=True)
    disp_formula = _get(cfg, "predictors", "dispersion")
    response = _get(cfg, "data", "response", default="y")
    covariates = _get(cfg, "data", "covariates", default="")
    cov_names = [c.strip() for c in covariates.split(",") if c.strip()]
    model = build_model(
        family,
        mean_link,
        mean_formula,
        disp_link,
        disp_formula,
        covariate_names=cov_names,
    )
    return model, response, cov_names


def bind_data(model: ModelSpec, response: str, columns: dict[str, np.ndarray]) -> Dataset:
    for name in model.covariate_names:
        if name not in columns:
            raise ConfigError(f"covariate {name!r} is not bound to any data column")
    if response not in columns:
        raise ConfigError(f"response column {response!r} not found in the data")
    cov = (
        np.column_stack([columns[name] for name in model.covariate_names])
        if model.covariate_names
        else np.empty((len(columns[response]), 0))
    )
    return Dataset(y=columns[response], covariates=cov)


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


def _alphas(cfg, args) -> list[float]:
    if args.alpha:
        alphas = _float_list(args.alpha, "--alpha")
    else:
        alphas = _float_list(_get(cfg, "fit", "alpha", default="0.05"), "[fit] alpha")
    for a in alphas:
        if not 0.0 < a < 0.5:
            raise ConfigError(f"alpha {a} outside (0, 1/2)")
    return alphas


def _fit_payload(model, fit, alphas, cfg) -> dict:
    intervals = {}
    for a in alphas:
        band = wald_intervals(fit, a)
        intervals[f"{a:g}"] = {
            "lower": band[:, 0],
            "upper": band[:, 1],
        }
    return {
        "schema": SCHEMA,
        "family": model.family.name,
        "links": {
            "mean": model.mean_link.name,
            "dispersion": model.disp_link.name if model.disp_link else None,
        },
        "predictors": {
            "mean": _get(cfg, "predictors", "mean"),
            "dispersion": _get(cfg, "predictors", "dispersion"),
        },
        "parameters": list(model.param_names),
        "p": model.p,
        "q": model.q,
        "estimate": {"beta": fit.beta_hat, "theta": fit.theta_hat},
        "se": fit.se,
        "loglik": fit.loglik,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "score_norm": fit.score_norm,
        "intervals": intervals,
    }


def _emit(payload: dict, out) -> None:
    if out:
        write_report(payload, out)
    else:
        sys.stdout.write(canonical_json(payload))


def _fit_or_exit(model, data):
    fit = fit_mle(model, data)
    if not fit.converged:
        raise _NonConvergence(f"fit did not converge: {fit.message or 'score above tolerance'}")
    return fit


class _NonConvergence(DispregError):
    pass


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    model, response, _ = build_model_from_config(cfg)
    data = bind_data(model, response, read_table(args.data))
    fit = _fit_or_exit(model, data)
    payload = _fit_payload(model, fit, _alphas(cfg, args), cfg)
    payload["command"] = "fit"
    payload["n"] = data.n
    _emit(payload, args.out)
    return EXIT_OK


def cmd_bias(args) -> int:
    cfg = load_config(args.config)
    model, response, _ = build_model_from_config(cfg)
    data = bind_data(model, response, read_table(args.data))
    fit = _fit_or_exit(model, data)
    rep = bias_report(model, data, fit)
    payload = _fit_payload(model, fit, _alphas(cfg, args), cfg)
    payload["command"] = "bias"
    payload["n"] = data.n
    payload["bias"] = {
        "b_beta": rep.b_beta,
        "b_theta": rep.b_theta,
        "b_beta_regression_form": rep.b_beta_regression_form,
        "b_theta_regression_form": rep.b_theta_regression_form,
        "regression_form_gap_beta": rep.regression_form_gap_beta,
        "regression_form_gap_theta": rep.regression_form_gap_theta,
        "b1_beta": rep.b1_beta,
        "b2_beta": rep.b2_beta,
        "q1_theta": rep.q1_theta,
        "q2_theta": rep.q2_theta,
        "b_mu": rep.b_mu,
        "b_phi": rep.b_phi,
        "corrected": {
            "beta_tilde": rep.beta_tilde,
            "theta_tilde": rep.theta_tilde,
            "mu_tilde": rep.mu_tilde,
            "phi_tilde": rep.phi_tilde,
        },
    }
    _emit(payload, args.out)
    return EXIT_OK


def _bootstrap_plan(cfg, args) -> BootstrapPlan:
    scheme = args.boot_scheme or _get(cfg, "bootstrap", "scheme", default="parametric")
    scheme = {
        "parametric": "parametric-fixed-x",
        "nonparametric": "nonparametric-random-x",
    }.get(scheme, scheme)
    n_rep = args.boot_b if args.boot_b is not None else int(
        _get(cfg, "bootstrap", "replicates", default="200")
    )
    seed = args.seed if args.seed is not None else int(_get(cfg, "bootstrap", "seed", default="0"))
    try:
        return BootstrapPlan(scheme=scheme, n_replicates=n_rep, seed=seed)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def cmd_bootstrap(args) -> int:
    cfg = load_config(args.config)
    plan = _bootstrap_plan(cfg, args)
    model, response, _ = build_model_from_config(cfg)
    data = bind_data(model, response, read_table(args.data))
    fit = _fit_or_exit(model, data)
    res = bootstrap_bias(model, data, fit, plan, threads=_threads(args))
    payload = _fit_payload(model, fit, _alphas(cfg, args), cfg)
    payload["command"] = "bootstrap"
    payload["n"] = data.n
    payload["bootstrap"] = {
        "scheme": plan.scheme,
        "replicates": plan.n_replicates,
        "seed": plan.seed,
        "replicates_used": res.replicates_used,
        "nonconverged": res.nonconverged,
        "zeta_star_mean": res.zeta_star_mean,
        "bias_hat": res.bias_hat,
        "zeta_bar": res.zeta_bar,
    }
    _emit(payload, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    model, _, _ = build_model_from_config(cfg)
    if not cfg.has_section("simulate"):
        raise ConfigError("simulate needs a [simulate] section")
    n = int(_get(cfg, "simulate", "n", required=True))
    replications = int(_get(cfg, "simulate", "replications", required=True))
    boot = int(_get(cfg, "simulate", "bootstrap", default="0"))
    truth = _float_list(_get(cfg, "simulate", "true", required=True), "[simulate] true")
    alphas = _float_list(_get(cfg, "simulate", "alphas", default="0.10 0.05 0.01"), "alphas")
    law = _get(cfg, "simulate", "covariates", default="uniform01")
    seed = args.seed if args.seed is not None else int(_get(cfg, "simulate", "seed", default="0"))
    p = model.p
    if len(truth) != p + model.q:
        raise ConfigError(
            f"[simulate] true must list {p + model.q} values (p={p}, q={model.q})"
        )
    cov = None
    if law == "file":
        if not args.data:
            raise ConfigError("covariates = file requires --data")
        columns = read_table(args.data)
        for name in model.covariate_names:
            if name not in columns:
                raise ConfigError(f"covariate {name!r} is not bound to any data column")
        cov = np.column_stack([columns[name] for name in model.covariate_names])
        n = cov.shape[0]
    study = StudyConfig(
        model=model,
        true_beta=tuple(truth[:p]),
        true_theta=tuple(truth[p:]),
        n=n,
        replications=replications,
        bootstrap_replicates=boot,
        seed=seed,
        alphas=tuple(alphas),
        covariate_law=law,
        covariates=cov,
    )
    report = run_study(study, threads=_threads(args))
    payload = report.to_dict()
    payload["schema"] = SCHEMA
    payload["command"] = "simulate"
    payload["family"] = model.family.name
    payload["table"] = report.to_table()
    _emit(payload, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("DISPREG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"DISPREG_THREADS is not an integer: {env!r}") from None
    return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dispreg",
        description="Fit dispersion models with dispersion covariates and "
        "produce second-order bias-corrected estimates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, needs_data in (
        ("fit", cmd_fit, True),
        ("bias", cmd_bias, True),
        ("bootstrap", cmd_bootstrap, True),
        ("simulate", cmd_simulate, False),
    ):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI run configuration")
        sp.add_argument("--data", required=needs_data, help="delimited data table")
        sp.add_argument("--out", help="report file (stdout when omitted)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--alpha", help="comma-separated interval levels")
        sp.add_argument("--boot-B", dest="boot_b", type=int, default=None)
        sp.add_argument(
            "--boot-scheme",
            dest="boot_scheme",
            choices=["parametric", "nonparametric"],
            default=None,
        )
        sp.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except DispregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
