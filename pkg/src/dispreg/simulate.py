"""Monte Carlo study harness.

Generates one fixed covariate draw, simulates responses repeatedly at the
true parameters, and compares the plain maximum likelihood estimate against
the analytic (Cox-Snell) correction and the two bootstrap corrections on
mean, bias, variance, mean squared error and interval coverage.

Replicates run on independent substreams and are reduced in replicate
order, so a study is reproducible bit for bit regardless of thread count.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bias import bias_report
from .bootstrap import BootstrapPlan, BootstrapResult, bootstrap_bias
from .errors import ConfigError, DispregError, NumericsWarning
from .fit import _info_state, _inv_spd, fit_mle
from .model import CompiledModel, Dataset, ModelSpec
from .specialfns import norm_quantile

__all__ = ["StudyConfig", "StudyReport", "run_study", "ESTIMATORS"]

ESTIMATORS = ("mle", "cox-snell", "p-boot", "np-boot")


@dataclass(frozen=True)
class StudyConfig:
    model: ModelSpec
    true_beta: tuple
    true_theta: tuple
    n: int
    replications: int
    bootstrap_replicates: int
    seed: int
    alphas: tuple = (0.10, 0.05, 0.01)
    covariate_law: str = "uniform01"
    covariates: np.ndarray | None = None  # used when covariate_law == "file"

    def __post_init__(self):
        if self.covariate_law not in ("uniform01", "file"):
            raise ConfigError(f"unknown covariate law {self.covariate_law!r}")
        if self.covariate_law == "file" and self.covariates is None:
            raise ConfigError("covariate_law 'file' needs a covariate matrix")
        if self.replications < 1:
            raise ConfigError("at least one replication is required")
        if self.bootstrap_replicates < 0:
            raise ConfigError("bootstrap replicate count cannot be negative")
        for a in self.alphas:
            if not 0.0 < a < 0.5:
                raise ConfigError("alphas must lie in (0, 1/2)")

    @property
    def estimators(self) -> tuple:
        if self.bootstrap_replicates > 0:
            return ESTIMATORS
        return ESTIMATORS[:2]

    @property
    def truth(self) -> np.ndarray:
        return np.concatenate(
            [np.asarray(self.true_beta, float), np.asarray(self.true_theta, float)]
        )


@dataclass(frozen=True)
class StudyReport:
    """Aggregated study results; one row per estimator and parameter."""

    estimators: tuple
    param_names: tuple
    alphas: tuple
    truth: np.ndarray
    mean: np.ndarray        # (n_est, n_par)
    bias: np.ndarray
    variance: np.ndarray
    mse: np.ndarray
    coverage: np.ndarray    # (n_est, n_par, n_alpha)
    intervals_used: np.ndarray  # (n_est, n_alpha) denominators
    replications: int
    replicates_used: int
    nonconverged_fits: int
    boot_nonconverged: dict = field(default_factory=dict)
    n: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        rows = []
        for i, est in enumerate(self.estimators):
            for j, name in enumerate(self.param_names):
                rows.append(
                    {
                        "estimator": est,
                        "parameter": name,
                        "mean": float(self.mean[i, j]),
                        "bias": float(self.bias[i, j]),
                        "variance": float(self.variance[i, j]),
                        "mse": float(self.mse[i, j]),
                        "coverage": {
                            f"{1.0 - a:g}": float(self.coverage[i, j, k])
                            for k, a in enumerate(self.alphas)
                        },
                    }
                )
        return {
            "estimators": list(self.estimators),
            "parameters": list(self.param_names),
            "alphas": list(self.alphas),
            "truth": [float(v) for v in self.truth],
            "rows": rows,
            "intervals_used": {
                est: [int(v) for v in self.intervals_used[i]]
                for i, est in enumerate(self.estimators)
            },
            "replications": self.replications,
            "replicates_used": self.replicates_used,
            "nonconverged_fits": self.nonconverged_fits,
            "boot_nonconverged": dict(self.boot_nonconverged),
            "n": self.n,
            "seed": self.seed,
        }

    def to_table(self) -> str:
        cov_heads = [f"cover{100 * (1 - a):g}" for a in self.alphas]
        lines = ["\t".join(["estimator", "parameter", "mean", "bias", "variance", "mse"] + cov_heads)]
        for i, est in enumerate(self.estimators):
            for j, name in enumerate(self.param_names):
                cells = [
                    est,
                    name,
                    f"{self.mean[i, j]:.6f}",
                    f"{self.bias[i, j]:.6f}",
                    f"{self.variance[i, j]:.6f}",
                    f"{self.mse[i, j]:.6f}",
                ]
                cells += [f"{self.coverage[i, j, k]:.4f}" for k in range(len(self.alphas))]
                lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def _interval_halfwidth(model, data, zeta, quantiles):
    """Half-widths of Wald intervals with the information evaluated at zeta.

    Returns None when the design cannot be evaluated at zeta (the corrected
    estimate stepped outside the model domain).
    """
    cm = CompiledModel(model, data)
    p = model.p
    st = cm.state(zeta[:p], zeta[p:], strict=False)
    if st is None:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericsWarning)
        k_beta, k_theta = _info_state(cm, st)
        kb, _ = _inv_spd(k_beta)
        kt, _ = _inv_spd(k_theta)
    var = np.concatenate([np.diag(kb), np.diag(kt)])
    if np.any(var < 0.0) or not np.all(np.isfinite(var)):
        return None
    se = np.sqrt(var)
    return np.outer(quantiles, se)  # (n_alpha, n_par)


def _one_replicate(model, covariates, truth_mu, truth_phi, cfg, seed):
    """Simulate, fit and correct once.

    Returns (estimates, coverage, boot_noncvg) with NaN marking failures, or
    None when the base fit fails.
    """
    n_est = len(cfg.estimators)
    n_par = model.p + model.q
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_y, s_pboot, s_npboot = ss.spawn(3)
    rng = np.random.default_rng(s_y)
    y = model.family.sample(truth_mu, truth_phi, rng)
    data = Dataset(y=y, covariates=covariates)
    try:
        fit = fit_mle(model, data)
    except DispregError:
        return None
    if not fit.converged:
        return None

    estimates = np.full((n_est, n_par), np.nan)
    boot_noncvg = {"p-boot": 0, "np-boot": 0}
    estimates[0] = fit.zeta_hat
    try:
        rep = bias_report(model, data, fit)
        estimates[1] = np.concatenate([rep.beta_tilde, rep.theta_tilde])
    except DispregError:
        return None
    if cfg.bootstrap_replicates > 0:
        for row, scheme, key, s in (
            (2, "parametric-fixed-x", "p-boot", s_pboot),
            (3, "nonparametric-random-x", "np-boot", s_npboot),
        ):
            try:
                res: BootstrapResult = bootstrap_bias(
                    model,
                    data,
                    fit,
                    BootstrapPlan(scheme, cfg.bootstrap_replicates, seed=s),
                )
            except DispregError:
                return None
            estimates[row] = res.zeta_bar
            boot_noncvg[key] = res.nonconverged

    quantiles = np.array([norm_quantile(1.0 - a / 2.0) for a in cfg.alphas])
    coverage = np.full((n_est, n_par, len(cfg.alphas)), np.nan)
    truth = cfg.truth
    for i in range(n_est):
        half = _interval_halfwidth(model, data, estimates[i], quantiles)
        if half is None:
            continue
        for k in range(len(cfg.alphas)):
            inside = np.abs(estimates[i] - truth) <= half[k]
            coverage[i, :, k] = inside.astype(float)
    return estimates, coverage, boot_noncvg


def _study_chunk(args):
    model, covariates, truth_mu, truth_phi, cfg, seeds, indices = args
    out = []
    for i, seed in zip(indices, seeds):
        out.append((i, _one_replicate(model, covariates, truth_mu, truth_phi, cfg, seed)))
    return out


def run_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """Run the full replication study described by ``cfg``."""
    model = cfg.model
    if not model.family.samplable:
        raise ConfigError(f"family {model.family.name!r} is not samplable")
    n_par = model.p + model.q
    truth = cfg.truth
    if truth.shape != (n_par,):
        raise ConfigError(f"true parameter vector must have length {n_par}")

    children = np.random.SeedSequence(cfg.seed).spawn(1 + cfg.replications)
    cov_ss, rep_seeds = children[0], children[1:]
    m = len(model.covariate_names)
    if cfg.covariate_law == "uniform01":
        covariates = np.random.default_rng(cov_ss).random((cfg.n, m))
    else:
        covariates = np.asarray(cfg.covariates, dtype=float)
        if covariates.shape != (cfg.n, m):
            raise ConfigError(
                f"covariate matrix must have shape ({cfg.n}, {m}), got {covariates.shape}"
            )

    # the truth must be admissible on the generated design
    truth_state = CompiledModel(
        model, Dataset(y=np.zeros(cfg.n), covariates=covariates)
    ).state(truth[: model.p], truth[model.p :], strict=False)
    if truth_state is None:
        raise ConfigError("true parameters are outside the model domain on this design")

    results: list = [None] * cfg.replications
    if threads > 1:
        chunks = np.array_split(np.arange(cfg.replications), min(8 * threads, cfg.replications))
        jobs = [
            (
                model,
                covariates,
                truth_state.mu,
                truth_state.phi,
                cfg,
                [rep_seeds[i] for i in idx],
                list(idx),
            )
            for idx in chunks
            if idx.size
        ]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for chunk in pool.map(_study_chunk, jobs):
                for i, r in chunk:
                    results[i] = r
    else:
        for b in range(cfg.replications):
            results[b] = _one_replicate(
                model, covariates, truth_state.mu, truth_state.phi, cfg, rep_seeds[b]
            )

    n_est = len(cfg.estimators)
    n_alpha = len(cfg.alphas)
    used = [r for r in results if r is not None]
    nonconverged = cfg.replications - len(used)
    if not used:
        raise DispregError("every replicate failed; nothing to aggregate")

    est_stack = np.stack([r[0] for r in used])          # (R, n_est, n_par)
    cover_stack = np.stack([r[1] for r in used])        # (R, n_est, n_par, n_alpha)
    boot_noncvg = {"p-boot": 0, "np-boot": 0}
    for r in used:
        for k, v in r[2].items():
            boot_noncvg[k] += v

    mean = est_stack.mean(axis=0)
    bias = mean - truth[None, :]
    variance = est_stack.var(axis=0)
    mse = bias**2 + variance
    cover_ok = ~np.isnan(cover_stack)
    denom = cover_ok[:, :, 0, :].sum(axis=0)            # (n_est, n_alpha)
    with np.errstate(invalid="ignore"):
        coverage = np.where(
            cover_ok.sum(axis=0) > 0,
            np.nansum(cover_stack, axis=0) / np.maximum(cover_ok.sum(axis=0), 1),
            np.nan,
        )
    return StudyReport(
        estimators=cfg.estimators,
        param_names=model.param_names,
        alphas=cfg.alphas,
        truth=truth,
        mean=mean,
        bias=bias,
        variance=variance,
        mse=mse,
        coverage=coverage,
        intervals_used=denom,
        replications=cfg.replications,
        replicates_used=len(used),
        nonconverged_fits=nonconverged,
        boot_nonconverged=boot_noncvg,
        n=cfg.n,
        seed=cfg.seed,
    )
