"""Vectorized refitting of many pseudo-samples of one model.

The bootstrap refits hundreds of datasets that share one model and (for
fixed-x resampling) one covariate matrix.  This module runs the same
scoring/Newton iteration as fit._fit_loop simultaneously across replicates
with stacked linear algebra, retiring each replicate as it meets the same
convergence criteria.  Only the estimates and convergence flags are
produced; covariance blocks are not needed by the bootstrap aggregation.
"""

from __future__ import annotations

import numpy as np

from .fit import MAX_HALVINGS, MAX_ITER, SCORE_TOL, STEP_TOL
from .model import ModelSpec, PredictorSpec

__all__ = ["batch_refit"]

_RUNNING, _CONVERGED, _FAILED = 0, 1, 2


class _BatchPredictor:
    """Predictor evaluation over stacked parameter rows.

    ``cov`` is either one shared covariate matrix (n, m) or a stack
    (B, n, m) of per-replicate matrices; columns broadcast accordingly.
    """

    def __init__(self, spec: PredictorSpec, cov: np.ndarray):
        self.spec = spec
        self.p = spec.param_count
        self._plain = []
        self._powers = []
        for t in spec.terms:
            col = cov[..., t.cov] if t.cov is not None else None
            if t.kind == "power":
                self._powers.append((t.param, col, np.log(col)))
            else:
                self._plain.append((t.kind, t.param, col))

    def _col(self, col, rows):
        return col if (col is None or col.ndim == 1) else col[rows]

    def eta(self, params: np.ndarray, rows, shape) -> np.ndarray:
        out = np.zeros(shape)
        for kind, j, col in self._plain:
            if kind == "intercept":
                out += params[:, j][:, None]
            elif kind == "linear":
                out += params[:, j][:, None] * self._col(col, rows)
            else:
                out += self._col(col, rows)
        for j, col, _ in self._powers:
            out += self._col(col, rows) ** params[:, j][:, None]
        return out

    def eta_grad(self, params: np.ndarray, rows, shape):
        eta = np.zeros(shape)
        grad = np.zeros(shape + (self.p,))
        for kind, j, col in self._plain:
            if kind == "intercept":
                eta += params[:, j][:, None]
                grad[..., j] += 1.0
            elif kind == "linear":
                c = self._col(col, rows)
                eta += params[:, j][:, None] * c
                grad[..., j] += c
            else:
                eta += self._col(col, rows)
        for j, col, logcol in self._powers:
            xb = self._col(col, rows) ** params[:, j][:, None]
            eta += xb
            grad[..., j] += self._col(logcol, rows) * xb
        return eta, grad

    def hess(self, params: np.ndarray, rows, shape) -> np.ndarray:
        h = np.zeros(shape + (self.p, self.p))
        for j, col, logcol in self._powers:
            lc = self._col(logcol, rows)
            h[..., j, j] += lc * lc * self._col(col, rows) ** params[:, j][:, None]
        return h


def _spd_solve_stack(mats: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Per-slice SPD solve; non-PD slices get a clipped pseudo-inverse."""
    b, k = rhs.shape
    if k == 0:
        return np.zeros((b, 0))
    try:
        c = np.linalg.cholesky(mats)
        return np.linalg.solve(
            np.swapaxes(c, -1, -2), np.linalg.solve(c, rhs[..., None])
        )[..., 0]
    except np.linalg.LinAlgError:
        pass
    x = np.empty((b, k))
    for i in range(b):
        try:
            c = np.linalg.cholesky(mats[i])
            x[i] = np.linalg.solve(c.T, np.linalg.solve(c, rhs[i]))
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(0.5 * (mats[i] + mats[i].T))
            tol = 1e-12 * max(vals.max(initial=0.0), 0.0)
            inv = np.where(vals > tol, 1.0 / np.where(vals > tol, vals, 1.0), 0.0)
            x[i] = (vecs * inv) @ (vecs.T @ rhs[i])
    return x


def _newton_solve_stack(mats: np.ndarray, rhs: np.ndarray):
    """Newton solves where the negated Hessian slice is PD; mask otherwise."""
    b, k = rhs.shape
    try:
        c = np.linalg.cholesky(mats)
        x = np.linalg.solve(
            np.swapaxes(c, -1, -2), np.linalg.solve(c, rhs[..., None])
        )[..., 0]
        return x, np.ones(b, dtype=bool)
    except np.linalg.LinAlgError:
        pass
    x = np.zeros((b, k))
    ok = np.zeros(b, dtype=bool)
    for i in range(b):
        try:
            c = np.linalg.cholesky(mats[i])
            x[i] = np.linalg.solve(c.T, np.linalg.solve(c, rhs[i]))
            ok[i] = True
        except np.linalg.LinAlgError:
            pass
    return x, ok


def batch_refit(
    model: ModelSpec,
    y_stack: np.ndarray,
    covariates: np.ndarray,
    init: np.ndarray,
    *,
    max_iter: int = MAX_ITER,
    score_tol: float = SCORE_TOL,
    step_tol: float = STEP_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Fit every row of ``y_stack`` from a common warm start.

    ``covariates`` is (n, m) shared across rows or (B, n, m) per row.
    Returns (estimates (B, p+q), converged (B,)); non-converged rows carry
    their last iterate, matching the serial fitter's flagged result.
    """
    n_rep = y_stack.shape[0]
    p, q = model.p, model.q
    fam = model.family
    mean_pred = _BatchPredictor(model.mean_pred, covariates)
    disp_pred = _BatchPredictor(model.disp_pred, covariates) if model.disp_pred is not None else None
    mean_link = model.mean_link
    disp_link = model.disp_link

    zeta = np.repeat(np.asarray(init, dtype=float)[None, :], n_rep, axis=0)
    status = np.full(n_rep, _RUNNING, dtype=np.int8)
    ll_all = np.full(n_rep, np.nan)

    def trial_loglik(rows, beta, theta):
        shape = (rows.size, y_stack.shape[1])
        y = y_stack[rows]
        eta1 = mean_pred.eta(beta, rows, shape)
        mu = mean_link.inv(eta1)
        ok = mean_link.eta_valid(eta1).all(axis=-1) & fam.mu_valid(mu).all(axis=-1)
        safe_mu = np.where(fam.mu_valid(mu), mu, 1.0)
        if disp_pred is not None:
            eta2 = disp_pred.eta(theta, rows, shape)
            phi = disp_link.inv(eta2)
            phi_ok = np.isfinite(phi) & (phi > 0.0)
            ok &= disp_link.eta_valid(eta2).all(axis=-1) & phi_ok.all(axis=-1)
            safe_phi = np.where(phi_ok, phi, 1.0)
        else:
            safe_phi = np.broadcast_to(fam.fixed_phi, shape)
        ll = np.sum(safe_phi * fam.t(y, safe_mu) + fam.a(safe_phi, y), axis=-1)
        return np.where(ok & np.isfinite(ll), ll, np.nan)

    def state(rows, beta, theta):
        shape = (rows.size, y_stack.shape[1])
        eta1, xt = mean_pred.eta_grad(beta, rows, shape)
        ev1 = mean_link.eval(eta1)
        st = {
            "mu": ev1.mu, "dmu": ev1.dmu, "d2mu": ev1.d2mu,
            "xt": xt, "xh": mean_pred.hess(beta, rows, shape),
        }
        if disp_pred is not None:
            eta2, zt = disp_pred.eta_grad(theta, rows, shape)
            ev2 = disp_link.eval(eta2)
            st.update(phi=ev2.mu, dphi=ev2.dmu, d2phi=ev2.d2mu, zt=zt,
                      zh=disp_pred.hess(theta, rows, shape))
        else:
            st.update(
                phi=np.broadcast_to(fam.fixed_phi, shape),
                dphi=np.zeros(shape), d2phi=np.zeros(shape),
                zt=np.zeros(shape + (0,)), zh=np.zeros(shape + (0, 0)),
            )
        return st

    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        rows = np.flatnonzero(status == _RUNNING)
        ll_all[rows] = trial_loglik(rows, zeta[rows, :p], zeta[rows, p:])
        status[rows[~np.isfinite(ll_all[rows])]] = _FAILED

        for it in range(max_iter + 1):
            rows = np.flatnonzero(status == _RUNNING)
            if rows.size == 0:
                break
            beta, theta, ll = zeta[rows, :p], zeta[rows, p:], ll_all[rows]
            y = y_stack[rows]
            st = state(rows, beta, theta)
            tp = fam.tprime(y, st["mu"])
            u_beta = np.einsum("bn,bnp->bp", st["phi"] * st["dmu"] * tp, st["xt"])
            if q:
                v = fam.t(y, st["mu"]) + fam.aprime(st["phi"], y)
                u_theta = np.einsum("bn,bnq->bq", st["dphi"] * v, st["zt"])
                snorm = np.maximum(np.abs(u_beta).max(axis=1), np.abs(u_theta).max(axis=1))
            else:
                v = None
                u_theta = np.zeros((rows.size, 0))
                snorm = np.abs(u_beta).max(axis=1)
            small = snorm <= score_tol

            if it == 0 and small.any():
                status[rows[small]] = _CONVERGED
                if small.all():
                    continue
            if it == max_iter:
                break  # leftovers keep status RUNNING -> flagged below

            cum = fam.cumulants(st["mu"], st["phi"])
            w_beta = st["phi"] * (-cum.d2) * st["dmu"] ** 2
            k_beta = np.einsum("bnp,bn,bnq->bpq", st["xt"], w_beta, st["xt"])
            step_b = _spd_solve_stack(k_beta, u_beta)
            if q:
                w_theta = -cum.alpha2 * st["dphi"] ** 2
                k_theta = np.einsum("bnp,bn,bnq->bpq", st["zt"], w_theta, st["zt"])
                step_t = _spd_solve_stack(k_theta, u_theta)
                prop = np.maximum(np.abs(step_b).max(axis=1), np.abs(step_t).max(axis=1))
                scale = np.maximum(1.0, np.maximum(np.abs(beta).max(axis=1), np.abs(theta).max(axis=1)))
            else:
                step_t = np.zeros((rows.size, 0))
                prop = np.abs(step_b).max(axis=1)
                scale = np.maximum(1.0, np.abs(beta).max(axis=1))
            done = small & (prop / scale <= step_tol) & (status[rows] == _RUNNING)
            if done.any():
                status[rows[done]] = _CONVERGED

            run = status[rows] == _RUNNING
            if not run.any():
                continue

            if it >= 1:
                tpp = fam.t2(y, st["mu"])
                wb = st["phi"] * (tpp * st["dmu"] ** 2 + tp * st["d2mu"])
                h_bb = np.einsum("bnp,bn,bnq->bpq", st["xt"], wb, st["xt"])
                h_bb += np.einsum("bn,bnjk->bjk", st["phi"] * tp * st["dmu"], st["xh"])
                if q:
                    wt = cum.alpha2 * st["dphi"] ** 2 + v * st["d2phi"]
                    h_tt = np.einsum("bnp,bn,bnq->bpq", st["zt"], wt, st["zt"])
                    h_tt += np.einsum("bn,bnjk->bjk", v * st["dphi"], st["zh"])
                    h_bt = np.einsum("bnp,bn,bnq->bpq", st["xt"], tp * st["dmu"] * st["dphi"], st["zt"])
                    neg_h = np.empty((rows.size, p + q, p + q))
                    neg_h[:, :p, :p] = -h_bb
                    neg_h[:, :p, p:] = -h_bt
                    neg_h[:, p:, :p] = -np.swapaxes(h_bt, 1, 2)
                    neg_h[:, p:, p:] = -h_tt
                    u_full = np.concatenate([u_beta, u_theta], axis=1)
                else:
                    neg_h = -h_bb
                    u_full = u_beta
                newton, newton_ok = _newton_solve_stack(neg_h[run], u_full[run])
            else:
                newton = np.zeros((int(run.sum()), p + q))
                newton_ok = np.zeros(int(run.sum()), dtype=bool)

            # per-replicate line search: Newton first where available, then
            # the scoring ladder with step halving
            sub = np.flatnonzero(run)          # positions within `rows`
            run_rows = rows[sub]               # global replicate ids
            base_b, base_t = beta[sub], theta[sub]
            base_ll = ll[sub]
            sb, stp = step_b[sub], step_t[sub]
            on_newton = newton_ok.copy()
            lam = np.ones(sub.size)
            halvings = np.zeros(sub.size, dtype=int)
            pending = np.arange(sub.size)
            accepted = np.zeros(sub.size, dtype=bool)
            new_b, new_t = np.array(base_b), np.array(base_t)
            new_ll = np.array(base_ll)
            for _ in range(MAX_HALVINGS + 2):
                if pending.size == 0:
                    break
                cb = np.where(
                    on_newton[pending, None],
                    base_b[pending] + newton[pending, :p],
                    base_b[pending] + lam[pending, None] * sb[pending],
                )
                ct = np.where(
                    on_newton[pending, None],
                    base_t[pending] + newton[pending, p:],
                    base_t[pending] + lam[pending, None] * stp[pending],
                ) if q else base_t[pending]
                ll_cand = trial_loglik(run_rows[pending], cb, ct)
                acc = np.isfinite(ll_cand) & (
                    ll_cand >= base_ll[pending] - 1e-12 * (1.0 + np.abs(base_ll[pending]))
                )
                hit = pending[acc]
                new_b[hit], new_ll[hit] = cb[acc], ll_cand[acc]
                if q:
                    new_t[hit] = ct[acc]
                accepted[hit] = True
                rest = pending[~acc]
                was_newton = on_newton[rest]
                on_newton[rest] = False
                ladder = rest[~was_newton]
                lam[ladder] *= 0.5
                halvings[ladder] += 1
                pending = rest[halvings[rest] <= MAX_HALVINGS]

            stuck = ~accepted
            if stuck.any():
                ids = run_rows[stuck]
                status[ids] = np.where(small[sub][stuck], _CONVERGED, _FAILED)
            ok = np.flatnonzero(accepted)
            if ok.size:
                ids = run_rows[ok]
                zeta[ids, :p] = new_b[ok]
                if q:
                    zeta[ids, p:] = new_t[ok]
                ll_all[ids] = new_ll[ok]

    converged = status == _CONVERGED
    return zeta, converged
