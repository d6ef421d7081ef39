"""Second-order bias machinery.

The analytic route evaluates the Cox-Snell order-1/n biases of the
regression and dispersion estimates in two algebraically equal ways -- a
direct matrix product and the coefficient vector of an auxiliary weighted
least-squares regression -- and propagates them to the fitted positions and
precisions.  Bootstrap bias vectors can be substituted for the analytic
parameter biases when propagating.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DispregError, DomainError, NumericsWarning
from .fit import FitResult, _weights_state
from .model import CompiledModel, Dataset, DesignState, ModelSpec

__all__ = [
    "BiasMatrices",
    "BiasReport",
    "bias_matrices",
    "bias_beta",
    "bias_theta",
    "corrected_parameters",
    "bias_mu_phi",
    "bias_report",
]

# direct-vs-regression agreement required of a healthy fit
_EQUIV_TOL = 1e-8


@dataclass(frozen=True)
class BiasMatrices:
    """Per-observation diagonals and inverse information blocks at the fit."""

    w_beta: np.ndarray
    w_theta: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    e_diag: np.ndarray
    f_diag: np.ndarray
    z_beta: np.ndarray
    z_theta: np.ndarray
    k_beta_inv: np.ndarray
    k_theta_inv: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class BiasReport:
    """Bias vectors and corrected estimates for one fitted model."""

    source: str
    b_beta: np.ndarray
    b_theta: np.ndarray
    b_beta_regression_form: np.ndarray
    b_theta_regression_form: np.ndarray
    b1_beta: np.ndarray
    b2_beta: np.ndarray
    q1_theta: np.ndarray
    q2_theta: np.ndarray
    b_mu: np.ndarray
    b_phi: np.ndarray
    beta_tilde: np.ndarray
    theta_tilde: np.ndarray
    mu_tilde: np.ndarray
    phi_tilde: np.ndarray
    regression_form_gap_beta: float
    regression_form_gap_theta: float


def _state_at_fit(model: ModelSpec, data: Dataset, fit: FitResult) -> tuple[CompiledModel, DesignState]:
    cm = CompiledModel(model, data)
    st = cm.state(fit.beta_hat, fit.theta_hat, need_hess=True, strict=True)
    return cm, st


def bias_matrices(model: ModelSpec, data: Dataset, fit: FitResult) -> BiasMatrices:
    """All auxiliary diagonals evaluated at the fitted parameters."""
    if not fit.converged:
        raise DispregError("bias computation requires a converged fit")
    cm, st = _state_at_fit(model, data, fit)
    return _bias_matrices_state(cm, st, fit)


def _bias_matrices_state(cm: CompiledModel, st: DesignState, fit: FitResult) -> BiasMatrices:
    fam = cm.model.family
    cum = fam.cumulants(st.mu, st.phi)
    w_beta, w_theta = _weights_state(cm, st)

    m1 = 0.5 * ((2.0 * cum.d2p - cum.d3) * st.dmu**3 + cum.d2 * st.dmu * st.d2mu)
    if cm.model.q:
        m2 = 0.5 * (
            (2.0 * cum.alpha2p - cum.alpha3) * st.dphi**3
            + cum.alpha2 * st.dphi * st.d2phi
        )
        m3 = 0.5 * cum.d2 * st.dmu**2 * st.dphi
    else:
        m2 = np.zeros(cm.n)
        m3 = np.zeros(cm.n)

    kb_inv = fit.k_beta_inv
    kt_inv = fit.k_theta_inv
    z_beta = np.einsum("ij,jk,ik->i", st.xtilde, kb_inv, st.xtilde)
    z_theta = (
        np.einsum("ij,jk,ik->i", st.ztilde, kt_inv, st.ztilde)
        if cm.model.q
        else np.zeros(cm.n)
    )
    e_diag = np.einsum("ijk,jk->i", st.xhess, kb_inv)
    f_diag = (
        np.einsum("ijk,jk->i", st.zhess, kt_inv) if cm.model.q else np.zeros(cm.n)
    )
    return BiasMatrices(
        w_beta=w_beta,
        w_theta=w_theta,
        m1=m1,
        m2=m2,
        m3=m3,
        t1=st.dmu,
        t2=st.dphi,
        s1=st.d2mu,
        s2=st.d2phi,
        e_diag=e_diag,
        f_diag=f_diag,
        z_beta=z_beta,
        z_theta=z_theta,
        k_beta_inv=kb_inv,
        k_theta_inv=kt_inv,
        phi=st.phi,
    )


def _wls_coefficients(design: np.ndarray, weights: np.ndarray, target: np.ndarray) -> np.ndarray:
    root = np.sqrt(weights)
    return np.linalg.lstsq(design * root[:, None], target * root, rcond=None)[0]


def bias_beta(mats: BiasMatrices, design: DesignState) -> dict:
    """Order-1/n bias of the regression estimate, split into the linear-model
    part and the predictor-curvature part.

    Computed both as the direct matrix product and as weighted least squares
    coefficients; the two routes must agree.
    """
    phi = mats.phi
    b1 = mats.k_beta_inv @ (design.xtilde.T @ (phi * mats.m1 * mats.z_beta))
    b2 = -0.5 * mats.k_beta_inv @ (design.xtilde.T @ (phi * mats.w_beta * mats.e_diag))
    direct = b1 + b2
    omega = mats.m1 * mats.z_beta / mats.w_beta
    wls = _wls_coefficients(design.xtilde, phi * mats.w_beta, omega - 0.5 * mats.e_diag)
    gap = float(np.max(np.abs(direct - wls), initial=0.0))
    if gap > _EQUIV_TOL:
        warnings.warn(
            f"direct and regression-form beta biases disagree by {gap:.3e}",
            NumericsWarning,
            stacklevel=2,
        )
    return {"b_beta": direct, "b1_beta": b1, "b2_beta": b2, "wls": wls, "gap": gap}


def bias_theta(mats: BiasMatrices, design: DesignState) -> dict:
    """Order-1/n bias of the dispersion estimate, dual-route as for beta."""
    if design.ztilde.shape[1] == 0:
        z = np.zeros(0)
        return {"b_theta": z, "q1_theta": z, "q2_theta": z, "wls": z, "gap": 0.0}
    core = mats.m2 * mats.z_theta - mats.m3 * mats.z_beta
    q1 = mats.k_theta_inv @ (design.ztilde.T @ core)
    q2 = -0.5 * mats.k_theta_inv @ (design.ztilde.T @ (mats.w_theta * mats.f_diag))
    direct = q1 + q2
    omega = core / mats.w_theta
    wls = _wls_coefficients(design.ztilde, mats.w_theta, omega - 0.5 * mats.f_diag)
    gap = float(np.max(np.abs(direct - wls), initial=0.0))
    if gap > _EQUIV_TOL:
        warnings.warn(
            f"direct and regression-form theta biases disagree by {gap:.3e}",
            NumericsWarning,
            stacklevel=2,
        )
    return {"b_theta": direct, "q1_theta": q1, "q2_theta": q2, "wls": wls, "gap": gap}


def corrected_parameters(fit: FitResult, b_beta: np.ndarray, b_theta: np.ndarray) -> dict:
    """One-step corrected estimate: subtract the estimated bias."""
    return {
        "beta_tilde": fit.beta_hat - b_beta,
        "theta_tilde": fit.theta_hat - b_theta,
    }


def bias_mu_phi(
    model: ModelSpec,
    data: Dataset,
    fit: FitResult,
    mats: BiasMatrices,
    source: str = "analytic",
    boot_bias: np.ndarray | None = None,
) -> dict:
    """Per-observation biases of the fitted positions and precisions.

    ``source`` selects where the parameter-level biases come from:
    'analytic' composes the Cox-Snell vectors; 'parametric-boot' and
    'nonparametric-boot' require ``boot_bias`` (length p + q) from the
    matching resampling scheme.
    """
    if source not in ("analytic", "parametric-boot", "nonparametric-boot"):
        raise DomainError(f"unknown bias source {source!r}")
    cm, st = _state_at_fit(model, data, fit)
    p = model.p
    if source == "analytic":
        b_beta = bias_beta(mats, st)["b_beta"]
        b_theta = bias_theta(mats, st)["b_theta"]
    else:
        if boot_bias is None:
            raise DomainError(f"source {source!r} requires a bootstrap bias vector")
        boot_bias = np.asarray(boot_bias, dtype=float)
        if boot_bias.shape != (p + model.q,):
            raise DomainError("bootstrap bias vector has the wrong length")
        b_beta, b_theta = boot_bias[:p], boot_bias[p:]

    b_mu = 0.5 * mats.t1 * (2.0 * st.xtilde @ b_beta + mats.e_diag) + 0.5 * mats.s1 * mats.z_beta
    if model.q:
        b_phi = (
            0.5 * mats.t2 * (2.0 * st.ztilde @ b_theta + mats.f_diag)
            + 0.5 * mats.s2 * mats.z_theta
        )
    else:
        b_phi = np.zeros(cm.n)
    return {
        "b_mu": b_mu,
        "b_phi": b_phi,
        "mu_tilde": st.mu - b_mu,
        "phi_tilde": st.phi - b_phi,
    }


def bias_report(
    model: ModelSpec,
    data: Dataset,
    fit: FitResult,
    source: str = "analytic",
    boot_bias: np.ndarray | None = None,
) -> BiasReport:
    """Assemble the full set of bias vectors and corrected estimates."""
    mats = bias_matrices(model, data, fit)
    cm, st = _state_at_fit(model, data, fit)
    bb = bias_beta(mats, st)
    bt = bias_theta(mats, st)
    if source == "analytic":
        b_beta, b_theta = bb["b_beta"], bt["b_theta"]
    else:
        if boot_bias is None:
            raise DomainError(f"source {source!r} requires a bootstrap bias vector")
        b_beta = np.asarray(boot_bias[: model.p], dtype=float)
        b_theta = np.asarray(boot_bias[model.p :], dtype=float)
    corr = corrected_parameters(fit, b_beta, b_theta)
    mp = bias_mu_phi(model, data, fit, mats, source=source, boot_bias=boot_bias)
    return BiasReport(
        source=source,
        b_beta=b_beta,
        b_theta=b_theta,
        b_beta_regression_form=bb["wls"],
        b_theta_regression_form=bt["wls"],
        b1_beta=bb["b1_beta"],
        b2_beta=bb["b2_beta"],
        q1_theta=bt["q1_theta"],
        q2_theta=bt["q2_theta"],
        b_mu=mp["b_mu"],
        b_phi=mp["b_phi"],
        beta_tilde=corr["beta_tilde"],
        theta_tilde=corr["theta_tilde"],
        mu_tilde=mp["mu_tilde"],
        phi_tilde=mp["phi_tilde"],
        regression_form_gap_beta=bb["gap"],
        regression_form_gap_theta=bt["gap"],
    )
