"""Bootstrap bias estimation and constant-bias-correcting estimates.

Two resampling schemes: parametric fixed-x (draw responses from the fitted
per-row distributions) and nonparametric random-x (resample whole
observation rows with replacement).  Pseudo-samples are generated from
per-replicate substreams spawned off one root seed, refits run in fixed-size
batches, and the reduction is by replicate index, so a result is
bit-identical no matter how many workers are used.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._batchfit import batch_refit
from .errors import DispregError, DomainError, UnsupportedFamilyOperation
from .fit import FitResult, _fit_compiled
from .model import CompiledModel, Dataset, ModelSpec

__all__ = ["BootstrapPlan", "BootstrapResult", "bootstrap_bias"]

SCHEMES = ("parametric-fixed-x", "nonparametric-random-x")

# batch width is fixed (not tied to the thread count) so that scheduling
# cannot change which replicates share stacked linear algebra
_CHUNK = 64


@dataclass(frozen=True)
class BootstrapPlan:
    scheme: str
    n_replicates: int
    seed: object
    refit_policy: str = "skip-nonconverged"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown bootstrap scheme {self.scheme!r}")
        if self.n_replicates < 1:
            raise DomainError("bootstrap needs at least one replicate")
        if self.refit_policy not in ("skip-nonconverged", "error"):
            raise DomainError(f"unknown refit policy {self.refit_policy!r}")


@dataclass(frozen=True)
class BootstrapResult:
    zeta_star_mean: np.ndarray
    bias_hat: np.ndarray
    zeta_bar: np.ndarray
    replicates_used: int
    nonconverged: int


def _refit_chunk(args):
    model, y_chunk, cov, init = args
    return batch_refit(model, y_chunk, cov, init)


def bootstrap_bias(
    model: ModelSpec,
    data: Dataset,
    fit: FitResult,
    plan: BootstrapPlan,
    threads: int = 1,
    _resampler=None,
) -> BootstrapResult:
    """Estimate the bias of the fitted parameters by resampling.

    ``_resampler(replicate_index, rng) -> Dataset`` is a test hook that
    overrides pseudo-sample generation and runs the plain per-replicate
    refit path.
    """
    if not fit.converged:
        raise DispregError("bootstrap requires a converged base fit")
    if plan.scheme == "parametric-fixed-x" and not model.family.samplable:
        raise UnsupportedFamilyOperation(
            f"family {model.family.name!r} has no sampler; parametric resampling "
            "is unavailable"
        )

    n_rep = plan.n_replicates
    seed = plan.seed
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = root.spawn(n_rep)
    cm = CompiledModel(model, data)
    n = data.n

    if _resampler is not None:
        zeta_rows = np.full((n_rep, model.p + model.q), np.nan)
        conv = np.zeros(n_rep, dtype=bool)
        for b in range(n_rep):
            new = _resampler(b, np.random.default_rng(seeds[b]))
            refit = _fit_compiled(CompiledModel(model, new), init=fit.zeta_hat)
            if refit.converged:
                zeta_rows[b] = refit.zeta_hat
                conv[b] = True
    else:
        # draw every pseudo-sample from its own substream, in replicate order
        if plan.scheme == "parametric-fixed-x":
            st = cm.state(fit.beta_hat, fit.theta_hat, strict=True)
            y_stack = np.empty((n_rep, n))
            for b in range(n_rep):
                y_stack[b] = model.family.sample(st.mu, st.phi, np.random.default_rng(seeds[b]))
            cov_for = lambda sl: data.covariates  # noqa: E731 - shared design
        else:
            idx = np.empty((n_rep, n), dtype=np.int64)
            for b in range(n_rep):
                idx[b] = np.random.default_rng(seeds[b]).integers(0, n, size=n)
            y_stack = data.y[idx]
            cov_stack = data.covariates[idx]
            cov_for = lambda sl: cov_stack[sl]  # noqa: E731

        slices = [slice(i, min(i + _CHUNK, n_rep)) for i in range(0, n_rep, _CHUNK)]
        jobs = [(model, y_stack[sl], cov_for(sl), fit.zeta_hat) for sl in slices]
        zeta_rows = np.empty((n_rep, model.p + model.q))
        conv = np.empty(n_rep, dtype=bool)
        if threads > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for sl, (z, c) in zip(slices, pool.map(_refit_chunk, jobs)):
                    zeta_rows[sl], conv[sl] = z, c
        else:
            for sl, job in zip(slices, jobs):
                zeta_rows[sl], conv[sl] = _refit_chunk(job)

    nonconverged = int(n_rep - conv.sum())
    if nonconverged and plan.refit_policy == "error":
        raise DispregError(f"{nonconverged} bootstrap replicates failed to converge")
    used = n_rep - nonconverged
    if used == 0:
        raise DispregError("all bootstrap replicates failed to converge")

    total = np.zeros(model.p + model.q)
    for b in range(n_rep):  # fixed index order: schedule-independent reduction
        if conv[b]:
            total += zeta_rows[b]
    zeta_star_mean = total / used
    bias_hat = zeta_star_mean - fit.zeta_hat
    return BootstrapResult(
        zeta_star_mean=zeta_star_mean,
        bias_hat=bias_hat,
        zeta_bar=2.0 * fit.zeta_hat - zeta_star_mean,
        replicates_used=used,
        nonconverged=nonconverged,
    )
