"""Model specification: structured nonlinear predictors and design state.

Predictors are sums of four term kinds -- intercept, linear, power
(covariate raised to a parameter) and offset -- which covers linear models
and the power-nonlinear shapes exercised by the simulation study while
keeping gradients and per-observation Hessians exact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, DataError, DomainError, RankDeficiencyError
from .families import Family
from .links import Link

__all__ = [
    "Term",
    "PredictorSpec",
    "ModelSpec",
    "Dataset",
    "DesignState",
    "parse_predictor",
    "build_model",
    "predictor_eval",
    "design_build",
    "CompiledModel",
]

_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Term:
    """One additive piece of a predictor.

    kind is one of: 'intercept' (param), 'linear' (param * covariate),
    'power' (covariate ** param), 'offset' (covariate).
    """

    kind: str
    param: int | None = None
    cov: int | None = None


@dataclass(frozen=True)
class PredictorSpec:
    terms: tuple[Term, ...]
    param_count: int
    param_names: tuple[str, ...] = ()

    def __post_init__(self):
        used = set()
        for t in self.terms:
            if t.kind not in ("intercept", "linear", "power", "offset"):
                raise ConfigError(f"unknown term kind {t.kind!r}")
            if t.kind != "offset":
                if t.param is None or not (0 <= t.param < self.param_count):
                    raise ConfigError(f"term {t} has an invalid parameter index")
                used.add(t.param)
            if t.kind != "intercept" and t.cov is None:
                raise ConfigError(f"term {t} is missing a covariate index")
        missing = set(range(self.param_count)) - used
        if missing:
            raise ConfigError(f"parameter indices {sorted(missing)} appear in no term")


@dataclass(frozen=True)
class ModelSpec:
    """Family plus links plus predictors for the position and precision sides."""

    family: Family
    mean_link: Link
    mean_pred: PredictorSpec
    disp_link: Link | None = None
    disp_pred: PredictorSpec | None = None
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.family.has_dispersion:
            if self.disp_link is None or self.disp_pred is None:
                raise ConfigError(
                    f"family {self.family.name!r} models its precision; a dispersion "
                    "link and predictor are required"
                )
            overlap = set(self.mean_pred.param_names) & set(self.disp_pred.param_names)
            if overlap:
                raise ConfigError(
                    f"mean and dispersion parameters must be disjoint (shared: {sorted(overlap)})"
                )
        elif self.disp_pred is not None or self.disp_link is not None:
            raise ConfigError(
                f"family {self.family.name!r} has fixed precision "
                f"{self.family.fixed_phi}; no dispersion side is allowed"
            )

    @property
    def p(self) -> int:
        return self.mean_pred.param_count

    @property
    def q(self) -> int:
        return self.disp_pred.param_count if self.disp_pred is not None else 0

    @property
    def param_names(self) -> tuple[str, ...]:
        disp = self.disp_pred.param_names if self.disp_pred is not None else ()
        return self.mean_pred.param_names + disp


@dataclass(frozen=True)
class Dataset:
    """Response vector plus the covariate matrix in model column order."""

    y: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim != 2 or y.ndim != 1 or cov.shape[0] != y.shape[0]:
            raise DataError("dataset shapes do not line up")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "covariates", cov)

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class DesignState:
    """Everything the score, information and bias formulas read at (beta, theta)."""

    eta1: np.ndarray
    mu: np.ndarray
    dmu: np.ndarray
    d2mu: np.ndarray
    xtilde: np.ndarray
    xhess: np.ndarray | None
    eta2: np.ndarray | None
    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    ztilde: np.ndarray
    zhess: np.ndarray | None


# ---------------------------------------------------------------------------
# Predictor grammar: "b0 + b1*x1 + x2^b2" with '+'-separated terms
# ---------------------------------------------------------------------------

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def parse_predictor(text: str, covariate_names) -> PredictorSpec:
    """Parse a predictor formula.

    Identifiers appearing in ``covariate_names`` are covariates; the rest
    become parameters, ordered by first appearance.
    """
    covariate_names = list(covariate_names)
    params: list[str] = []
    terms: list[Term] = []

    def cov_index(name: str) -> int:
        return covariate_names.index(name)

    def param_index(name: str) -> int:
        if name not in params:
            params.append(name)
        return params.index(name)

    def classify(tok: str, known_cov: bool) -> str:
        if not _IDENT.match(tok):
            raise ConfigError(f"bad identifier {tok!r} in predictor {text!r}")
        return "cov" if known_cov else "param"

    for raw in text.split("+"):
        piece = raw.strip()
        if not piece:
            raise ConfigError(f"empty term in predictor {text!r}")
        if "*" in piece:
            left, _, right = piece.partition("*")
            left, right = left.strip(), right.strip()
            kinds = {classify(left, left in covariate_names), classify(right, right in covariate_names)}
            if kinds != {"cov", "param"}:
                raise ConfigError(
                    f"linear term {piece!r} must multiply one parameter by one covariate"
                )
            par, cov = (left, right) if right in covariate_names else (right, left)
            terms.append(Term("linear", param_index(par), cov_index(cov)))
        elif "^" in piece:
            base, _, expo = piece.partition("^")
            base, expo = base.strip(), expo.strip()
            if classify(base, base in covariate_names) != "cov":
                raise ConfigError(f"power term {piece!r}: base {base!r} is not a bound covariate")
            if expo in covariate_names:
                raise ConfigError(f"power term {piece!r}: exponent {expo!r} must be a parameter")
            classify(expo, False)
            terms.append(Term("power", param_index(expo), cov_index(base)))
        elif piece in covariate_names:
            terms.append(Term("offset", None, cov_index(piece)))
        else:
            classify(piece, False)
            terms.append(Term("intercept", param_index(piece), None))
    return PredictorSpec(tuple(terms), len(params), tuple(params))


def build_model(
    family: Family,
    mean_link: Link,
    mean_formula: str,
    disp_link: Link | None = None,
    disp_formula: str | None = None,
    covariate_names=(),
) -> ModelSpec:
    """Convenience constructor wiring predictor formulas into a ModelSpec.

    ``covariate_names`` declares, in column order, which identifiers are
    covariates; every other identifier becomes a free parameter.
    """
    cov_names = list(covariate_names)
    mean_pred = parse_predictor(mean_formula, cov_names)
    disp_pred = None
    if disp_formula is not None:
        disp_pred = parse_predictor(disp_formula, cov_names)
    return ModelSpec(
        family=family,
        mean_link=mean_link,
        mean_pred=mean_pred,
        disp_link=disp_link,
        disp_pred=disp_pred,
        covariate_names=tuple(cov_names),
    )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


class _CompiledPredictor:
    """Predictor bound to a covariate matrix, with precomputed columns."""

    def __init__(self, spec: PredictorSpec, cov: np.ndarray):
        self.spec = spec
        self.p = spec.param_count
        self.n = cov.shape[0]
        self._plain: list[tuple[str, int, np.ndarray | None]] = []
        self._powers: list[tuple[int, np.ndarray, np.ndarray]] = []
        for t in spec.terms:
            if t.kind == "power":
                col = cov[:, t.cov]
                if np.any(col <= 0.0):
                    row = int(np.argmax(col <= 0.0))
                    raise DomainError(
                        "power term requires strictly positive covariate values", row=row
                    )
                self._powers.append((t.param, col, np.log(col)))
            else:
                colv = cov[:, t.cov] if t.cov is not None else None
                self._plain.append((t.kind, t.param if t.param is not None else -1, colv))
        self.is_linear = not self._powers

    def eta_grad(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        eta = np.zeros(self.n)
        grad = np.zeros((self.n, self.p))
        for kind, j, col in self._plain:
            if kind == "intercept":
                eta += params[j]
                grad[:, j] += 1.0
            elif kind == "linear":
                eta += params[j] * col
                grad[:, j] += col
            else:  # offset
                eta += col
        for j, col, logcol in self._powers:
            xb = col ** params[j]
            eta += xb
            grad[:, j] += logcol * xb
        return eta, grad

    def eta(self, params: np.ndarray) -> np.ndarray:
        eta = np.zeros(self.n)
        for kind, j, col in self._plain:
            if kind == "intercept":
                eta += params[j]
            elif kind == "linear":
                eta += params[j] * col
            else:
                eta += col
        for j, col, _ in self._powers:
            eta += col ** params[j]
        return eta

    def hess(self, params: np.ndarray) -> np.ndarray:
        h = np.zeros((self.n, self.p, self.p))
        for j, col, logcol in self._powers:
            h[:, j, j] += logcol * logcol * col ** params[j]
        return h


def predictor_eval(pred: PredictorSpec, covariates, params) -> dict:
    """Evaluate eta, its gradient and Hessian for a single covariate row."""
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    params = np.asarray(params, dtype=float)
    if params.shape != (pred.param_count,):
        raise DataError(
            f"expected {pred.param_count} parameters, got shape {params.shape}"
        )
    comp = _CompiledPredictor(pred, covariates)
    eta, grad = comp.eta_grad(params)
    hess = comp.hess(params)
    return {"eta": float(eta[0]), "grad": grad[0], "hess": hess[0]}


def _rank(matrix: np.ndarray) -> int:
    if matrix.size == 0:
        return 0
    r = scipy.linalg.qr(matrix, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    return int(np.sum(diag > _RANK_RTOL * diag[0]))


class CompiledModel:
    """A ModelSpec bound to one dataset; evaluates design state quickly."""

    def __init__(self, model: ModelSpec, data: Dataset):
        if data.covariates.shape[1] < len(model.covariate_names):
            raise DataError(
                f"model needs {len(model.covariate_names)} covariate columns, "
                f"data has {data.covariates.shape[1]}"
            )
        self.model = model
        self.data = data
        self.n = data.n
        self._mean = _CompiledPredictor(model.mean_pred, data.covariates)
        self._disp = (
            _CompiledPredictor(model.disp_pred, data.covariates)
            if model.disp_pred is not None
            else None
        )
        if not np.all(model.family.y_valid(data.y)):
            row = int(np.argmax(~model.family.y_valid(data.y)))
            raise DataError(
                f"response outside the support of family {model.family.name!r} (row {row})"
            )
        fam = model.family
        # domain checks that a link's image cannot violate are skipped in the
        # trial path (boundary-coincident images stay checked: fp under/overflow
        # can land exactly on the boundary)
        self._mu_check = not (
            model.mean_link.image_lo > fam.mu_lo and model.mean_link.image_hi < fam.mu_hi
        )
        self._eta1_check = model.mean_link.eta_positive
        self._eta2_check = model.disp_link.eta_positive if model.disp_link else False
        self._fixed_phi_vec = (
            np.full(self.n, fam.fixed_phi) if fam.fixed_phi is not None else None
        )
        self._rank_checked = False

    def with_response(self, y: np.ndarray) -> "CompiledModel":
        """Same covariates and compiled predictors, new response vector."""
        new = object.__new__(CompiledModel)
        new.model = self.model
        new.data = Dataset(y=y, covariates=self.data.covariates)
        new.n = self.n
        new._mean = self._mean
        new._disp = self._disp
        new._mu_check = self._mu_check
        new._eta1_check = self._eta1_check
        new._eta2_check = self._eta2_check
        new._fixed_phi_vec = self._fixed_phi_vec
        new._rank_checked = self._rank_checked  # same covariates, same design
        if not np.all(self.model.family.y_valid(y)):
            row = int(np.argmax(~self.model.family.y_valid(y)))
            raise DataError(
                f"response outside the support of family {self.model.family.name!r} (row {row})"
            )
        return new

    def trial_loglik(self, beta: np.ndarray, theta: np.ndarray):
        """Log-likelihood at a candidate point, or None when inadmissible.

        Lean path for the line search: no gradients, no derivative
        evaluations, no state object.
        """
        model = self.model
        eta1 = self._mean.eta(beta)
        if self._eta1_check and not model.mean_link.eta_valid(eta1).all():
            return None
        mu = model.mean_link.inv(eta1)
        if self._mu_check:
            if not model.family.mu_valid(mu).all():
                return None
        elif not np.isfinite(mu).all():
            return None
        if self._disp is not None:
            eta2 = self._disp.eta(theta)
            if self._eta2_check and not model.disp_link.eta_valid(eta2).all():
                return None
            phi = model.disp_link.inv(eta2)
            if not ((phi > 0.0) & np.isfinite(phi)).all():
                return None
        else:
            phi = self._fixed_phi_vec
        y = self.data.y
        ll = float(np.sum(phi * model.family.t(y, mu) + model.family.a(phi, y)))
        return ll if np.isfinite(ll) else None

    def state(
        self,
        beta: np.ndarray,
        theta: np.ndarray,
        *,
        need_hess: bool = False,
        check_rank: bool = False,
        strict: bool = True,
    ) -> DesignState | None:
        """Design state at (beta, theta).

        With ``strict`` the first domain violation raises a DomainError
        carrying the row index; otherwise the method returns None, which the
        line search treats as an inadmissible step.
        """
        model = self.model
        fam = model.family
        eta1, xtilde = self._mean.eta_grad(beta)
        ok = model.mean_link.eta_valid(eta1)
        if not ok.all():
            if strict:
                raise DomainError("mean link: eta outside the invertible range", row=int(np.argmax(~ok)))
            return None
        ev1 = model.mean_link.eval(eta1)
        ok = fam.mu_valid(ev1.mu)
        if not ok.all():
            if strict:
                raise DomainError(f"family {fam.name}: mu outside domain", row=int(np.argmax(~ok)))
            return None

        if self._disp is not None:
            eta2, ztilde = self._disp.eta_grad(theta)
            ok = model.disp_link.eta_valid(eta2)
            if not ok.all():
                if strict:
                    raise DomainError(
                        "dispersion link: eta outside the invertible range", row=int(np.argmax(~ok))
                    )
                return None
            ev2 = model.disp_link.eval(eta2)
            phi, dphi, d2phi = ev2.mu, ev2.dmu, ev2.d2mu
            ok = np.isfinite(phi) & (phi > 0.0)
            if not ok.all():
                if strict:
                    raise DomainError("precision must be positive", row=int(np.argmax(~ok)))
                return None
            zhess = self._disp.hess(theta) if need_hess else None
        else:
            eta2 = None
            ztilde = np.zeros((self.n, 0))
            phi = np.full(self.n, fam.fixed_phi)
            dphi = np.zeros(self.n)
            d2phi = np.zeros(self.n)
            zhess = np.zeros((self.n, 0, 0)) if need_hess else None

        if check_rank:
            p, q = model.p, model.q
            r = _rank(xtilde)
            if r < p:
                raise RankDeficiencyError("mean", r, p)
            if q:
                r = _rank(ztilde)
                if r < q:
                    raise RankDeficiencyError("dispersion", r, q)

        return DesignState(
            eta1=eta1,
            mu=ev1.mu,
            dmu=ev1.dmu,
            d2mu=ev1.d2mu,
            xtilde=xtilde,
            xhess=self._mean.hess(beta) if need_hess else None,
            eta2=eta2,
            phi=phi,
            dphi=dphi,
            d2phi=d2phi,
            ztilde=ztilde,
            zhess=zhess,
        )


def design_build(
    model: ModelSpec,
    data: Dataset,
    beta,
    theta=None,
    *,
    need_hess: bool = True,
    check_rank: bool = True,
) -> DesignState:
    """Build the full design state for (beta, theta) on a dataset."""
    beta = np.asarray(beta, dtype=float)
    theta = np.zeros(0) if theta is None else np.asarray(theta, dtype=float)
    if beta.shape != (model.p,) or theta.shape != (model.q,):
        raise DataError(
            f"parameter shapes {beta.shape}/{theta.shape} do not match model (p={model.p}, q={model.q})"
        )
    return CompiledModel(model, data).state(
        beta, theta, need_hess=need_hess, check_rank=check_rank, strict=True
    )
