"""Link function catalog.

Every link knows its open parameter domain, the forward map eta = g(mu),
and the inverse map together with the first two derivatives of the inverse
(d mu / d eta and d^2 mu / d eta^2) that the scoring, information and bias
formulas consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .specialfns import norm_cdf, norm_pdf, norm_quantile

__all__ = ["LinkEval", "Link", "link_by_name", "LINK_NAMES"]


@dataclass(frozen=True)
class LinkEval:
    """Inverse link value and its first two eta-derivatives."""

    mu: np.ndarray
    dmu: np.ndarray
    d2mu: np.ndarray


class Link:
    """Base class; subclasses fill in the maps for one catalog entry."""

    name: str = ""
    # open interval of valid mu
    mu_lo: float = -np.inf
    mu_hi: float = np.inf
    # range of g^{-1} over valid eta; used to skip redundant domain checks
    image_lo: float = -np.inf
    image_hi: float = np.inf
    # eta restricted to (0, inf)?
    eta_positive: bool = False

    def mu_valid(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        return np.isfinite(mu) & (mu > self.mu_lo) & (mu < self.mu_hi)

    def eta_valid(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if self.eta_positive:
            return np.isfinite(eta) & (eta > 0.0)
        return np.isfinite(eta)

    def apply(self, mu):
        """eta = g(mu).  Raises DomainError outside the mu-domain."""
        arr = np.asarray(mu, dtype=float)
        if not np.all(self.mu_valid(arr)):
            raise DomainError(f"{self.name} link: mu outside ({self.mu_lo}, {self.mu_hi})")
        out = self._apply(arr)
        return float(out) if np.ndim(mu) == 0 else out

    def eval(self, eta) -> LinkEval:
        """mu = g^-1(eta) with d mu/d eta and d^2 mu/d eta^2."""
        arr = np.asarray(eta, dtype=float)
        if not np.all(self.eta_valid(arr)):
            raise DomainError(f"{self.name} link: eta outside the image of the mu-domain")
        mu, dmu, d2mu = self._eval(arr)
        if np.ndim(eta) == 0:
            return LinkEval(float(mu), float(dmu), float(d2mu))
        return LinkEval(mu, dmu, d2mu)

    def inv(self, eta):
        """Unchecked inverse link (mu only); the fast path of eval."""
        return self._inv(eta)

    def _apply(self, mu):
        raise NotImplementedError

    def _inv(self, eta):
        raise NotImplementedError

    def _eval(self, eta):
        raise NotImplementedError


class IdentityLink(Link):
    name = "identity"

    def _apply(self, mu):
        return mu.copy()

    def _inv(self, eta):
        return eta

    def _eval(self, eta):
        return eta.copy(), np.ones_like(eta), np.zeros_like(eta)


class LogLink(Link):
    name = "log"
    mu_lo = 0.0
    image_lo = 0.0

    def _apply(self, mu):
        return np.log(mu)

    def _inv(self, eta):
        return np.exp(eta)

    def _eval(self, eta):
        mu = np.exp(eta)
        return mu, mu, mu.copy()


class LogitLink(Link):
    name = "logit"
    mu_lo = 0.0
    mu_hi = 1.0
    image_lo = 0.0
    image_hi = 1.0

    def _apply(self, mu):
        return np.log(mu / (1.0 - mu))

    def _inv(self, eta):
        return 1.0 / (1.0 + np.exp(-eta))

    def _eval(self, eta):
        mu = 1.0 / (1.0 + np.exp(-eta))
        dmu = mu * (1.0 - mu)
        return mu, dmu, dmu * (1.0 - 2.0 * mu)


class ProbitLink(Link):
    name = "probit"
    mu_lo = 0.0
    mu_hi = 1.0
    image_lo = 0.0
    image_hi = 1.0

    def _apply(self, mu):
        return norm_quantile(mu)

    def _inv(self, eta):
        return norm_cdf(eta)

    def _eval(self, eta):
        dmu = norm_pdf(eta)
        return norm_cdf(eta), dmu, -eta * dmu


class ReciprocalLink(Link):
    name = "reciprocal"
    mu_lo = 0.0
    image_lo = 0.0
    eta_positive = True

    def _apply(self, mu):
        return 1.0 / mu

    def _inv(self, eta):
        return 1.0 / eta

    def _eval(self, eta):
        mu = 1.0 / eta
        return mu, -(mu * mu), 2.0 * mu**3


class SquareReciprocalLink(Link):
    name = "square-reciprocal"
    mu_lo = 0.0
    image_lo = 0.0
    eta_positive = True

    def _apply(self, mu):
        return mu**-2

    def _inv(self, eta):
        return eta**-0.5

    def _eval(self, eta):
        mu = eta**-0.5
        return mu, -0.5 * mu**3, 0.75 * mu**5


class SqrtLink(Link):
    name = "sqrt"
    mu_lo = 0.0
    image_lo = 0.0
    eta_positive = True

    def _apply(self, mu):
        return np.sqrt(mu)

    def _inv(self, eta):
        return eta * eta

    def _eval(self, eta):
        mu = eta * eta
        return mu, 2.0 * eta, np.full_like(eta, 2.0)


class CLogLogLink(Link):
    name = "cloglog"
    mu_lo = 0.0
    mu_hi = 1.0
    image_lo = 0.0
    image_hi = 1.0

    def _apply(self, mu):
        return np.log(-np.log1p(-mu))

    def _inv(self, eta):
        return -np.expm1(-np.exp(eta))

    def _eval(self, eta):
        e = np.exp(eta)
        onem = np.exp(-e)  # 1 - mu, and log(1 - mu) = -e
        mu = -np.expm1(-e)
        dmu = onem * e
        return mu, dmu, dmu * (1.0 - e)


class TangentLink(Link):
    # principal branch: mu restricted to (-pi/2, pi/2)
    name = "tangent"
    mu_lo = -np.pi / 2.0
    mu_hi = np.pi / 2.0
    image_lo = -np.pi / 2.0
    image_hi = np.pi / 2.0

    def _apply(self, mu):
        return np.tan(mu)

    def _inv(self, eta):
        return np.arctan(eta)

    def _eval(self, eta):
        mu = np.arctan(eta)
        c2 = 1.0 / (1.0 + eta * eta)  # cos(mu)^2
        return mu, c2, -2.0 * eta * c2 * c2


_LINKS = {
    link.name: link
    for link in (
        LogitLink(),
        ProbitLink(),
        LogLink(),
        IdentityLink(),
        ReciprocalLink(),
        SquareReciprocalLink(),
        SqrtLink(),
        CLogLogLink(),
        TangentLink(),
    )
}
# config-file spelling for the mu^-2 link
_ALIASES = {"sqrt-reciprocal": "square-reciprocal"}

LINK_NAMES = tuple(sorted(_LINKS))


def link_by_name(name: str) -> Link:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    try:
        return _LINKS[key]
    except KeyError:
        raise DomainError(f"unknown link function {name!r}") from None
