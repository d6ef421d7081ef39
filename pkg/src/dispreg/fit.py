"""Maximum likelihood machinery: log-likelihood, score, information blocks,
Fisher scoring with step halving, and Wald intervals.

The beta and theta blocks are globally orthogonal, so scoring updates them
with the two diagonal information blocks only; no cross block is ever
formed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import DataError, DomainError, NumericsWarning
from .model import CompiledModel, Dataset, DesignState, ModelSpec
from .specialfns import norm_quantile

__all__ = [
    "FitResult",
    "loglik",
    "score",
    "information",
    "fit_mle",
    "wald_intervals",
]

SCORE_TOL = 1e-8
STEP_TOL = 1e-10
MAX_ITER = 100
MAX_HALVINGS = 30


@dataclass(frozen=True)
class FitResult:
    """Converged (or flagged) maximum likelihood estimate."""

    beta_hat: np.ndarray
    theta_hat: np.ndarray
    loglik: float
    k_beta_inv: np.ndarray
    k_theta_inv: np.ndarray
    iterations: int
    converged: bool
    score_norm: float
    used_pinv: bool = False
    message: str = ""
    trace: tuple = ()

    @property
    def zeta_hat(self) -> np.ndarray:
        return np.concatenate([self.beta_hat, self.theta_hat])

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(
            np.concatenate([np.diag(self.k_beta_inv), np.diag(self.k_theta_inv)])
        )


# ---------------------------------------------------------------------------
# Pieces evaluated on a design state
# ---------------------------------------------------------------------------


def _loglik_state(cm: CompiledModel, st: DesignState) -> float:
    fam = cm.model.family
    y = cm.data.y
    return float(np.sum(st.phi * fam.t(y, st.mu) + fam.a(st.phi, y)))


def _score_state(cm: CompiledModel, st: DesignState) -> tuple[np.ndarray, np.ndarray]:
    fam = cm.model.family
    y = cm.data.y
    tstar = fam.tprime(y, st.mu)
    u_beta = st.xtilde.T @ (st.phi * st.dmu * tstar)
    if cm.model.q:
        v = fam.t(y, st.mu) + fam.aprime(st.phi, y)
        u_theta = st.ztilde.T @ (st.dphi * v)
    else:
        u_theta = np.zeros(0)
    return u_beta, u_theta


def _weights_state(cm: CompiledModel, st: DesignState) -> tuple[np.ndarray, np.ndarray]:
    """Scoring weights W_beta and W_theta (diagonals)."""
    fam = cm.model.family
    cum = fam.cumulants(st.mu, st.phi)
    w_beta = -cum.d2 * st.dmu**2
    w_theta = -cum.alpha2 * st.dphi**2 if cm.model.q else np.zeros(0)
    return w_beta, w_theta


def _info_state(cm: CompiledModel, st: DesignState) -> tuple[np.ndarray, np.ndarray]:
    w_beta, w_theta = _weights_state(cm, st)
    if np.any(w_beta <= 0.0) or (cm.model.q and np.any(w_theta <= 0.0)):
        warnings.warn(
            "nonpositive information weights; the information matrix may not be "
            "positive definite",
            NumericsWarning,
            stacklevel=3,
        )
    k_beta = st.xtilde.T @ (st.xtilde * (st.phi * w_beta)[:, None])
    k_theta = st.ztilde.T @ (st.ztilde * w_theta[:, None])
    return k_beta, k_theta


def _solve_spd(k: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, bool]:
    """Solve K x = rhs for SPD K; fall back to a clipped pseudo-inverse."""
    if k.shape[0] == 0:
        return np.zeros(0), False
    try:
        c = np.linalg.cholesky(k)
        x = np.linalg.solve(c.T, np.linalg.solve(c, rhs))
        return x, False
    except np.linalg.LinAlgError:
        warnings.warn(
            "information block not positive definite; using clipped pseudo-inverse",
            NumericsWarning,
            stacklevel=3,
        )
        return _pinv_spd(k) @ rhs, True


def _pinv_spd(k: np.ndarray) -> np.ndarray:
    if k.shape[0] == 0:
        return np.zeros((0, 0))
    vals, vecs = np.linalg.eigh(0.5 * (k + k.T))
    tol = 1e-12 * max(vals.max(initial=0.0), 0.0)
    inv = np.where(vals > tol, 1.0 / np.where(vals > tol, vals, 1.0), 0.0)
    return (vecs * inv) @ vecs.T


def _inv_spd(k: np.ndarray) -> tuple[np.ndarray, bool]:
    if k.shape[0] == 0:
        return np.zeros((0, 0)), False
    try:
        c = np.linalg.cholesky(k)
        ci = np.linalg.solve(c, np.eye(k.shape[0]))
        return ci.T @ ci, False
    except np.linalg.LinAlgError:
        warnings.warn(
            "information block not positive definite; using clipped pseudo-inverse",
            NumericsWarning,
            stacklevel=3,
        )
        return _pinv_spd(k), True


# ---------------------------------------------------------------------------
# Public evaluation surfaces
# ---------------------------------------------------------------------------


def _compiled_state(model, data, beta, theta, need_hess=False):
    cm = CompiledModel(model, data)
    beta = np.asarray(beta, dtype=float)
    theta = np.zeros(0) if theta is None else np.asarray(theta, dtype=float)
    st = cm.state(beta, theta, need_hess=need_hess, strict=True)
    return cm, st


def loglik(model: ModelSpec, data: Dataset, beta, theta=None) -> float:
    """Log-likelihood sum over observations."""
    cm, st = _compiled_state(model, data, beta, theta)
    return _loglik_state(cm, st)


def score(model: ModelSpec, data: Dataset, beta, theta=None) -> np.ndarray:
    """Concatenated score vector (U_beta, U_theta)."""
    cm, st = _compiled_state(model, data, beta, theta)
    u_beta, u_theta = _score_state(cm, st)
    return np.concatenate([u_beta, u_theta])


def information(model: ModelSpec, data: Dataset, beta, theta=None):
    """The two diagonal Fisher information blocks (K_beta, K_theta).

    The cross block vanishes by parameter orthogonality and is never formed.
    """
    cm, st = _compiled_state(model, data, beta, theta)
    return _info_state(cm, st)


# ---------------------------------------------------------------------------
# Starting values
# ---------------------------------------------------------------------------


def _clamp_into(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    out = np.array(values, dtype=float)
    if np.isfinite(lo) and np.isfinite(hi):
        pad = 1e-2 * (hi - lo)  # bounded domains: data may sit on the boundary
        return np.clip(out, lo + pad, hi - pad)
    scale = max(1.0, float(np.median(np.abs(out[np.isfinite(out)]))) if out.size else 1.0)
    if np.isfinite(lo):
        out = np.maximum(out, lo + 1e-8 * scale)
    if np.isfinite(hi):
        out = np.minimum(out, hi - 1e-8 * scale)
    return out


def _linearized_start(compiled, target: np.ndarray) -> np.ndarray:
    """Least squares start with power-term exponents pinned at 1."""
    spec = compiled.spec
    p = spec.param_count
    params = np.zeros(p)
    exponents = {t.param for t in spec.terms if t.kind == "power"}
    resid = np.array(target, dtype=float)
    cols: dict[int, np.ndarray] = {}
    n = compiled.n
    for term, data_cols in zip(spec.terms, _term_columns(compiled)):
        if term.kind == "power":
            params[term.param] = 1.0
            resid -= data_cols  # x^1
        elif term.kind == "offset":
            resid -= data_cols
        elif term.kind == "intercept":
            cols.setdefault(term.param, np.zeros(n))
            cols[term.param] += np.ones(n)
        else:
            cols.setdefault(term.param, np.zeros(n))
            cols[term.param] += data_cols
    free = sorted(set(cols) - exponents)
    if free:
        a = np.column_stack([cols[j] for j in free])
        sol = np.linalg.lstsq(a, resid, rcond=None)[0]
        for j, v in zip(free, sol):
            params[j] = v
    return params


def _term_columns(compiled):
    """Covariate column per term, aligned with the spec's term order."""
    plain_iter = iter(compiled._plain)
    power_iter = iter(compiled._powers)
    for t in compiled.spec.terms:
        if t.kind == "power":
            yield next(power_iter)[1]
        else:
            col = next(plain_iter)[2]
            yield col if col is not None else np.zeros(compiled.n)


def _solve_constant_phi(fam, tbar: float, y: np.ndarray) -> float:
    """Root of mean(t) + mean(a'(phi, y)) = 0 over a log-spaced bracket."""

    def h(phi: float) -> float:
        return tbar + float(np.mean(fam.aprime(phi, y)))

    grid = np.logspace(-8, 8, 17)
    prev_g, prev_v = None, None
    for g in grid:
        v = h(g)
        if not np.isfinite(v):
            prev_g, prev_v = None, None
            continue
        if prev_v is not None and prev_v * v <= 0.0:
            return float(scipy.optimize.brentq(h, prev_g, g, xtol=1e-12, rtol=1e-12))
        prev_g, prev_v = g, v
    return 1.0


def _start_values(cm: CompiledModel) -> tuple[np.ndarray, np.ndarray]:
    model = cm.model
    fam = model.family
    y = cm.data.y
    ystat = fam.position_stat(y)
    lo = max(fam.mu_lo, model.mean_link.mu_lo)
    hi = min(fam.mu_hi, model.mean_link.mu_hi)
    target = model.mean_link.apply(_clamp_into(ystat, lo, hi))
    beta = _linearized_start(cm._mean, target)

    if model.q == 0:
        return beta, np.zeros(0)

    st = cm.state(beta, np.ones(model.q), strict=False)
    mu0 = st.mu if st is not None else _clamp_into(ystat, fam.mu_lo, fam.mu_hi)
    tbar = float(np.mean(fam.t(y, mu0)))
    phi0 = _solve_constant_phi(fam, tbar, y)
    disp_target = np.full(cm.n, model.disp_link.apply(phi0))
    theta = _linearized_start(cm._disp, disp_target)
    return beta, theta


def _admissible_start(cm: CompiledModel) -> tuple[np.ndarray, np.ndarray]:
    beta, theta = _start_values(cm)
    if cm.state(beta, theta, strict=False) is not None:
        return beta, theta
    # retry with the mean target floored away from the invertible boundary
    model = cm.model
    eta1 = cm._mean.eta_grad(beta)[0]
    if not model.mean_link.eta_valid(eta1).all():
        floor = 1e-3 * max(1.0, float(np.median(np.abs(eta1))))
        beta = _linearized_start(cm._mean, np.maximum(eta1, floor))
        if cm.state(beta, theta, strict=False) is not None:
            return beta, theta
    raise DomainError("could not construct an admissible starting point")


# ---------------------------------------------------------------------------
# Fisher scoring
# ---------------------------------------------------------------------------


def _newton_step(cm, st, tp, v, cum, u_beta, u_theta):
    """Full Newton step from the analytic observed curvature.

    Returns None when the negated Hessian is not positive definite (the
    iterate is still far from a maximum); the caller then falls back to the
    scoring step.
    """
    fam = cm.model.family
    q = cm.model.q
    tpp = fam.t2(cm.data.y, st.mu)
    wb = st.phi * (tpp * st.dmu**2 + tp * st.d2mu)
    h_bb = (st.xtilde * wb[:, None]).T @ st.xtilde
    h_bb += np.einsum("i,ijk->jk", st.phi * tp * st.dmu, st.xhess)
    if q:
        wt = cum.alpha2 * st.dphi**2 + v * st.d2phi
        h_tt = (st.ztilde * wt[:, None]).T @ st.ztilde
        h_tt += np.einsum("i,ijk->jk", v * st.dphi, st.zhess)
        h_bt = (st.xtilde * (tp * st.dmu * st.dphi)[:, None]).T @ st.ztilde
        neg_h = -np.block([[h_bb, h_bt], [h_bt.T, h_tt]])
        u = np.concatenate([u_beta, u_theta])
    else:
        neg_h = -h_bb
        u = u_beta
    try:
        c = np.linalg.cholesky(neg_h)
    except np.linalg.LinAlgError:
        return None
    return np.linalg.solve(c.T, np.linalg.solve(c, u))


def fit_mle(
    model: ModelSpec,
    data: Dataset,
    init=None,
    *,
    max_iter: int = MAX_ITER,
    score_tol: float = SCORE_TOL,
    step_tol: float = STEP_TOL,
    track_trace: bool = False,
) -> FitResult:
    """Maximize the log-likelihood by Fisher scoring with step halving.

    Convergence requires the max-norm of the score to drop below
    ``score_tol`` with the latest relative parameter change below
    ``step_tol``.  A non-converged fit is returned flagged, not raised.
    """
    cm = CompiledModel(model, data)
    return _fit_compiled(
        cm,
        init,
        max_iter=max_iter,
        score_tol=score_tol,
        step_tol=step_tol,
        track_trace=track_trace,
    )


def _fit_compiled(cm: CompiledModel, init=None, **kwargs) -> FitResult:
    # overflow in rejected trial steps is routine (the admissibility masks
    # and the line search absorb it), and pseudo-inverse fallbacks inside
    # the iteration are reported via FitResult.used_pinv instead of warnings
    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NumericsWarning)
            return _fit_loop(cm, init, **kwargs)


def _fit_loop(
    cm: CompiledModel,
    init=None,
    *,
    max_iter: int = MAX_ITER,
    score_tol: float = SCORE_TOL,
    step_tol: float = STEP_TOL,
    track_trace: bool = False,
) -> FitResult:
    model = cm.model
    p, q = model.p, model.q
    if cm.n < p + q:
        raise DataError(
            f"model is not identifiable: n = {cm.n} rows but p + q = {p + q} parameters"
        )
    if init is not None:
        zeta = np.asarray(init, dtype=float)
        if zeta.shape != (p + q,):
            raise DataError(f"init must have length p + q = {p + q}")
        beta, theta = zeta[:p].copy(), zeta[p:].copy()
    else:
        beta, theta = _admissible_start(cm)

    # the start point must be admissible and full rank
    st = cm.state(beta, theta, need_hess=True, check_rank=not cm._rank_checked, strict=True)
    cm._rank_checked = True
    ll = _loglik_state(cm, st)
    trace = [ll] if track_trace else None

    fam = model.family
    y = cm.data.y
    used_pinv = False
    converged = False
    message = ""
    iterations = 0
    snorm = np.inf

    for it in range(max_iter + 1):
        tp = fam.tprime(y, st.mu)
        u_beta = st.xtilde.T @ (st.phi * st.dmu * tp)
        if q:
            t_vals = fam.t(y, st.mu)
            v = t_vals + fam.aprime(st.phi, y)
            u_theta = st.ztilde.T @ (st.dphi * v)
        else:
            v = None
            u_theta = np.zeros(0)
        snorm = float(max(np.abs(u_beta).max(initial=0.0), np.abs(u_theta).max(initial=0.0)))
        small_score = snorm <= score_tol
        if small_score and it == 0:
            converged = True
            break
        if it == max_iter:
            message = "maximum number of scoring iterations reached"
            break

        cum = fam.cumulants(st.mu, st.phi)
        w_beta = st.phi * (-cum.d2) * st.dmu**2
        k_beta = (st.xtilde * w_beta[:, None]).T @ st.xtilde
        step_b, pb = _solve_spd(k_beta, u_beta)
        if q:
            w_theta = -cum.alpha2 * st.dphi**2
            k_theta = (st.ztilde * w_theta[:, None]).T @ st.ztilde
            step_t, pt = _solve_spd(k_theta, u_theta)
        else:
            k_theta = np.zeros((0, 0))
            step_t, pt = np.zeros(0), False
        used_pinv = used_pinv or pb or pt

        scale = max(1.0, np.abs(beta).max(initial=0.0), np.abs(theta).max(initial=0.0))
        if small_score and max(np.abs(step_b).max(initial=0.0), np.abs(step_t).max(initial=0.0)) / scale <= step_tol:
            converged = True  # the pending update is below the step tolerance
            break

        # scoring contracts only linearly; once it is moving, try an
        # observed-curvature (Newton) candidate first and keep the scoring
        # step-halving ladder as the fallback
        candidates = []
        if it >= 1:
            newton = _newton_step(cm, st, tp, v, cum, u_beta, u_theta)
            if newton is not None:
                candidates.append((newton[:p], newton[p:]))
        candidates.append((step_b, step_t))

        accepted = False
        for cand_b, cand_t in candidates:
            nb = beta + cand_b
            nt = theta + cand_t
            ll_new = cm.trial_loglik(nb, nt)
            if ll_new is not None and ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
                accepted = True
                break
        if not accepted:
            lam = 1.0
            for _ in range(MAX_HALVINGS):
                lam *= 0.5
                nb = beta + lam * step_b
                nt = theta + lam * step_t
                ll_new = cm.trial_loglik(nb, nt)
                if ll_new is not None and ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
                    accepted = True
                    break
        if not accepted:
            converged = small_score
            message = "" if converged else "line search could not improve the log-likelihood"
            break

        beta, theta = nb, nt
        st = cm.state(beta, theta, need_hess=True, strict=False)
        if st is None:  # admissibility was already verified in the trial
            raise DomainError("internal inconsistency: accepted step left the domain")
        ll = ll_new
        iterations += 1
        if track_trace:
            trace.append(ll)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericsWarning)
        k_beta, k_theta = _info_state(cm, st)
    kb_inv, pb = _inv_spd(k_beta)
    kt_inv, pt = _inv_spd(k_theta)
    return FitResult(
        beta_hat=beta,
        theta_hat=theta,
        loglik=ll,
        k_beta_inv=kb_inv,
        k_theta_inv=kt_inv,
        iterations=iterations,
        converged=converged,
        score_norm=snorm,
        used_pinv=used_pinv or pb or pt,
        message=message,
        trace=tuple(trace) if track_trace else (),
    )


def wald_intervals(fit: FitResult, alpha: float) -> np.ndarray:
    """Symmetric normal-quantile intervals, one (lower, upper) row per parameter."""
    if not 0.0 < alpha < 0.5:
        raise DomainError("alpha must lie in (0, 1/2)")
    est = fit.zeta_hat
    half = norm_quantile(1.0 - alpha / 2.0) * fit.se
    return np.column_stack([est - half, est + half])
