"""Dispersion-model family catalog.

Each family carries the pieces of the density exp{phi * t(y, mu) + a(phi, y)}
needed for likelihood work: t and its mu-derivative, a and its phi-derivative,
the expected-derivative cumulants

    d2 = E[d^2 t / d mu^2],  d3 = E[d^3 t / d mu^3],  d2p = d d2 / d mu,
    alpha2 = E[d^2 a / d phi^2],  alpha3 = E[d^3 a / d phi^3],
    alpha2p = d alpha2 / d phi,

and a sampler for bootstrap and simulation work.  Families with a known
exponential-dispersion structure compute d-cumulants from the variance
function (d2 = -1/V, d2p = V'/V^2, d3 = 2 V'/V^2).

All cumulants here are derived from the stated densities; every samplable
entry is covered by Monte Carlo consistency tests against finite differences
of t and a, so the signs are the ones that make the information matrix
positive definite.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnsupportedFamilyOperation
from .specialfns import bessel_ratio, log_bessel_i0, log_gamma, polygamma

__all__ = ["CumulantEval", "Family", "family_by_name", "FAMILY_NAMES"]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CumulantEval:
    """Cumulant functions at given (mu, phi).

    The alpha entries are None for families with a fixed precision
    parameter (no dispersion structure to model).
    """

    d2: np.ndarray
    d3: np.ndarray
    d2p: np.ndarray
    alpha2: np.ndarray | None = None
    alpha3: np.ndarray | None = None
    alpha2p: np.ndarray | None = None


class Family:
    """Base class for catalog entries.

    Capability flags:
      * ``samplable``       -- has a random variate generator
      * ``has_full_loglik`` -- t and a are both available in closed form
      * ``fixed_phi``       -- precision pinned to a constant (no theta block)
      * ``as_published``    -- cumulants transcribed verbatim from a source
                                table known to be internally inconsistent;
                                excluded from fitting and sampling
    """

    name: str = ""
    kind: str = "exponential-dispersion"
    mu_lo: float = -np.inf
    mu_hi: float = np.inf
    y_lo: float = -np.inf
    y_hi: float = np.inf
    fixed_phi: float | None = None
    samplable: bool = True
    has_full_loglik: bool = True
    as_published: bool = False

    # --- domains ---------------------------------------------------------
    @property
    def has_dispersion(self) -> bool:
        return self.fixed_phi is None

    def mu_valid(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        return np.isfinite(mu) & (mu > self.mu_lo) & (mu < self.mu_hi)

    def y_valid(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.isfinite(y) & (y >= self.y_lo) & (y <= self.y_hi)

    def _check(self, y=None, mu=None, phi=None):
        if y is not None and not np.all(self.y_valid(y)):
            raise DomainError(f"{self.name}: response outside the support")
        if mu is not None and not np.all(self.mu_valid(mu)):
            raise DomainError(f"{self.name}: mu outside the position domain")
        if phi is not None:
            phi = np.asarray(phi, dtype=float)
            if not np.all(np.isfinite(phi) & (phi > 0.0)):
                raise DomainError(f"{self.name}: phi must be positive")

    # --- density pieces ----------------------------------------------------
    def t(self, y, mu):
        raise UnsupportedFamilyOperation(f"{self.name}: t(y, mu) not available")

    def tprime(self, y, mu):
        raise UnsupportedFamilyOperation(f"{self.name}: t'(y, mu) not available")

    def t2(self, y, mu):
        """Second mu-derivative of t; observed-curvature ingredient."""
        raise UnsupportedFamilyOperation(f"{self.name}: t''(y, mu) not available")

    def a2(self, phi, y):
        """Second phi-derivative of a.

        Every catalog entry's a(phi, y) is a1(phi) plus a term linear in
        phi, so this equals the alpha2 cumulant exactly.
        """
        return self._alpha_cumulants(np.asarray(phi, dtype=float))[0]

    def a(self, phi, y):
        raise UnsupportedFamilyOperation(f"{self.name}: a(phi, y) not available")

    def aprime(self, phi, y):
        raise UnsupportedFamilyOperation(f"{self.name}: a'(phi, y) not available")

    def loglik_terms(self, y, mu, phi) -> dict:
        """Validated t, t', a, a' at one or many observations."""
        self._check(y=y, mu=mu, phi=phi)
        return {
            "t": self.t(y, mu),
            "tprime": self.tprime(y, mu),
            "a": self.a(phi, y),
            "aprime": self.aprime(phi, y),
        }

    # --- cumulants ----------------------------------------------------------
    def _d_cumulants(self, mu, phi):
        raise NotImplementedError

    def _alpha_cumulants(self, phi):
        raise UnsupportedFamilyOperation(f"{self.name}: no dispersion structure")

    def cumulants(self, mu, phi) -> CumulantEval:
        self._check(mu=mu, phi=None if self.fixed_phi is not None else phi)
        mu = np.asarray(mu, dtype=float)
        phi = np.asarray(phi, dtype=float)
        d2, d3, d2p = self._d_cumulants(mu, phi)
        if not self.has_dispersion:
            return CumulantEval(d2, d3, d2p)
        a2, a3, a2p = self._alpha_cumulants(phi)
        return CumulantEval(d2, d3, d2p, a2, a3, a2p)

    # --- sampling ----------------------------------------------------------
    def sample(self, mu, phi, rng: np.random.Generator):
        raise UnsupportedFamilyOperation(f"{self.name}: no sampler in the catalog")

    # observation-scale statistic whose expectation tracks mu; used only to
    # seed the optimizer
    def position_stat(self, y):
        return np.asarray(y, dtype=float)


class _EDFamily(Family):
    """Exponential-dispersion helper: d-cumulants from the variance function."""

    def _variance(self, mu):
        raise NotImplementedError

    def _dvariance(self, mu):
        raise NotImplementedError

    def _d_cumulants(self, mu, phi):
        v = self._variance(mu)
        ratio = self._dvariance(mu) / (v * v)
        return -1.0 / v, 2.0 * ratio, ratio


class NormalFamily(_EDFamily):
    name = "normal"

    def _variance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def _dvariance(self, mu):
        return np.zeros_like(np.asarray(mu, dtype=float))

    def t(self, y, mu):
        return -0.5 * (np.asarray(y, float) - mu) ** 2

    def tprime(self, y, mu):
        return np.asarray(y, float) - mu

    def t2(self, y, mu):
        return -np.ones(np.broadcast(y, mu).shape)

    def a(self, phi, y):
        return 0.5 * np.log(phi) - 0.5 * _LOG_2PI + np.zeros_like(np.asarray(y, float))

    def aprime(self, phi, y):
        return 0.5 / phi + np.zeros_like(np.asarray(y, float))

    def _alpha_cumulants(self, phi):
        return -0.5 / phi**2, phi**-3.0, phi**-3.0

    def sample(self, mu, phi, rng):
        mu, phi = np.broadcast_arrays(np.asarray(mu, float), np.asarray(phi, float))
        return mu + rng.standard_normal(mu.shape) / np.sqrt(phi)


class PoissonFamily(_EDFamily):
    name = "poisson"
    mu_lo = 0.0
    y_lo = 0.0
    fixed_phi = 1.0

    def y_valid(self, y):
        y = np.asarray(y, dtype=float)
        return np.isfinite(y) & (y >= 0.0) & (y == np.floor(y))

    def _variance(self, mu):
        return np.asarray(mu, dtype=float)

    def _dvariance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def t(self, y, mu):
        return np.asarray(y, float) * np.log(mu) - mu

    def tprime(self, y, mu):
        return np.asarray(y, float) / mu - 1.0

    def t2(self, y, mu):
        return -np.asarray(y, float) / (mu * mu)

    def a(self, phi, y):
        return -log_gamma(np.asarray(y, float) + 1.0)

    def sample(self, mu, phi, rng):
        return rng.poisson(np.asarray(mu, float)).astype(float)


class BernoulliFamily(_EDFamily):
    """Binary response; the binomial catalog entry."""

    name = "binomial"
    mu_lo = 0.0
    mu_hi = 1.0
    y_lo = 0.0
    y_hi = 1.0
    fixed_phi = 1.0

    def y_valid(self, y):
        y = np.asarray(y, dtype=float)
        return (y == 0.0) | (y == 1.0)

    def _variance(self, mu):
        return mu * (1.0 - mu)

    def _dvariance(self, mu):
        return 1.0 - 2.0 * mu

    def t(self, y, mu):
        y = np.asarray(y, float)
        return y * np.log(mu / (1.0 - mu)) + np.log1p(-mu)

    def tprime(self, y, mu):
        return (np.asarray(y, float) - mu) / (mu * (1.0 - mu))

    def t2(self, y, mu):
        y = np.asarray(y, float)
        v = mu * (1.0 - mu)
        return (-v - (y - mu) * (1.0 - 2.0 * mu)) / (v * v)

    def a(self, phi, y):
        return np.zeros_like(np.asarray(y, float))

    def sample(self, mu, phi, rng):
        mu = np.asarray(mu, float)
        return (rng.random(mu.shape) < mu).astype(float)


class GammaFamily(_EDFamily):
    name = "gamma"
    mu_lo = 0.0
    y_lo = 0.0

    def _variance(self, mu):
        return mu * mu

    def _dvariance(self, mu):
        return 2.0 * mu

    def t(self, y, mu):
        y = np.asarray(y, float)
        return np.log(y / mu) - y / mu

    def tprime(self, y, mu):
        return (np.asarray(y, float) - mu) / (mu * mu)

    def t2(self, y, mu):
        return (mu - 2.0 * np.asarray(y, float)) / mu**3

    def a(self, phi, y):
        return phi * np.log(phi) - log_gamma(phi) - np.log(np.asarray(y, float))

    def aprime(self, phi, y):
        return np.log(phi) + 1.0 - polygamma(0, phi) + np.zeros_like(np.asarray(y, float))

    def _alpha_cumulants(self, phi):
        a2 = 1.0 / phi - polygamma(1, phi)
        a3 = -(phi**-2.0) - polygamma(2, phi)
        return a2, a3, a3

    def sample(self, mu, phi, rng):
        return rng.gamma(shape=phi, scale=np.asarray(mu, float) / phi)


class InverseGaussianFamily(_EDFamily):
    name = "inverse-gaussian"
    mu_lo = 0.0
    y_lo = 0.0

    def _variance(self, mu):
        return mu**3

    def _dvariance(self, mu):
        return 3.0 * mu * mu

    def t(self, y, mu):
        y = np.asarray(y, float)
        return -((y - mu) ** 2) / (2.0 * mu * mu * y)

    def tprime(self, y, mu):
        return (np.asarray(y, float) - mu) / mu**3

    def t2(self, y, mu):
        return (2.0 * mu - 3.0 * np.asarray(y, float)) / mu**4

    def a(self, phi, y):
        y = np.asarray(y, float)
        return 0.5 * np.log(phi) - 0.5 * (_LOG_2PI + 3.0 * np.log(y))

    def aprime(self, phi, y):
        return 0.5 / phi + np.zeros_like(np.asarray(y, float))

    def _alpha_cumulants(self, phi):
        return -0.5 / phi**2, phi**-3.0, phi**-3.0

    def sample(self, mu, phi, rng):
        return rng.wald(np.asarray(mu, float), phi)


class VonMisesFamily(Family):
    """Circular position model: t(y, mu) = cos(y - mu)."""

    name = "von-mises"
    kind = "proper-dispersion"
    mu_lo = -np.pi
    mu_hi = np.pi
    y_lo = -np.pi
    y_hi = np.pi

    def t(self, y, mu):
        return np.cos(np.asarray(y, float) - mu)

    def tprime(self, y, mu):
        return np.sin(np.asarray(y, float) - mu)

    def t2(self, y, mu):
        return -np.cos(np.asarray(y, float) - mu)

    def a(self, phi, y):
        return -_LOG_2PI - log_bessel_i0(phi) + np.zeros_like(np.asarray(y, float))

    def aprime(self, phi, y):
        return -bessel_ratio(phi).r + np.zeros_like(np.asarray(y, float))

    def _d_cumulants(self, mu, phi):
        r = bessel_ratio(phi).r
        z = np.zeros(np.broadcast(mu, phi).shape)
        return -r + z, z, z.copy()

    def _alpha_cumulants(self, phi):
        ev = bessel_ratio(phi)
        return -ev.r1, -ev.r2, -ev.r2

    def sample(self, mu, phi, rng):
        mu, phi = np.broadcast_arrays(np.asarray(mu, float), np.asarray(phi, float))
        return rng.vonmises(mu, phi)


class ReciprocalGammaFamily(Family):
    """Y = 1/X with X gamma-distributed; mu is the expectation of 1/Y."""

    name = "reciprocal-gamma"
    kind = "proper-dispersion"
    mu_lo = 0.0
    y_lo = 0.0

    def t(self, y, mu):
        ym = np.asarray(y, float) * mu
        return -np.log(ym) - 1.0 / ym

    def tprime(self, y, mu):
        return 1.0 / (np.asarray(y, float) * mu * mu) - 1.0 / mu

    def t2(self, y, mu):
        return 1.0 / (mu * mu) - 2.0 / (np.asarray(y, float) * mu**3)

    def a(self, phi, y):
        return phi * np.log(phi) - log_gamma(phi) - np.log(np.asarray(y, float))

    def aprime(self, phi, y):
        return np.log(phi) + 1.0 - polygamma(0, phi) + np.zeros_like(np.asarray(y, float))

    def _d_cumulants(self, mu, phi):
        d2p = 2.0 / mu**3
        return -1.0 / (mu * mu), 2.0 * d2p, d2p

    def _alpha_cumulants(self, phi):
        a2 = 1.0 / phi - polygamma(1, phi)
        a3 = -(phi**-2.0) - polygamma(2, phi)
        return a2, a3, a3

    def sample(self, mu, phi, rng):
        return 1.0 / rng.gamma(shape=phi, scale=np.asarray(mu, float) / phi)

    def position_stat(self, y):
        return 1.0 / np.asarray(y, dtype=float)


class LogGammaFamily(Family):
    """t(y, mu) = (y - mu) - exp(y - mu); mu is the mode, not the mean."""

    name = "log-gamma"
    kind = "proper-dispersion"

    def t(self, y, mu):
        u = np.asarray(y, float) - mu
        return u - np.exp(u)

    def tprime(self, y, mu):
        return np.expm1(np.asarray(y, float) - mu)

    def t2(self, y, mu):
        return -np.exp(np.asarray(y, float) - mu)

    def a(self, phi, y):
        return phi * np.log(phi) - log_gamma(phi) + np.zeros_like(np.asarray(y, float))

    def aprime(self, phi, y):
        return np.log(phi) + 1.0 - polygamma(0, phi) + np.zeros_like(np.asarray(y, float))

    def _d_cumulants(self, mu, phi):
        shape = np.broadcast(mu, phi).shape
        return -np.ones(shape), np.ones(shape), np.zeros(shape)

    def _alpha_cumulants(self, phi):
        a2 = 1.0 / phi - polygamma(1, phi)
        a3 = -(phi**-2.0) - polygamma(2, phi)
        return a2, a3, a3

    def sample(self, mu, phi, rng):
        return np.asarray(mu, float) + np.log(rng.gamma(shape=phi, scale=1.0 / phi))


class GHSFamily(_EDFamily):
    """Generalized hyperbolic secant with V(mu) = 1 + mu^2, unit precision."""

    name = "ghs"
    fixed_phi = 1.0

    def _variance(self, mu):
        return 1.0 + mu * mu

    def _dvariance(self, mu):
        return 2.0 * mu

    def t(self, y, mu):
        return np.asarray(y, float) * np.arctan(mu) - 0.5 * np.log1p(mu * mu)

    def tprime(self, y, mu):
        return (np.asarray(y, float) - mu) / (1.0 + mu * mu)

    def t2(self, y, mu):
        y = np.asarray(y, float)
        v = 1.0 + mu * mu
        return (-v - 2.0 * mu * (y - mu)) / (v * v)

    def a(self, phi, y):
        # -log(2 cosh(pi y / 2)), written to avoid overflow
        z = np.abs(0.5 * np.pi * np.asarray(y, float))
        return -(z + np.log1p(np.exp(-2.0 * z)))

    def sample(self, mu, phi, rng):
        mu = np.atleast_1d(np.asarray(mu, float))
        theta = np.arctan(mu)
        lam_r = 0.5 * np.pi - theta
        lam_l = 0.5 * np.pi + theta
        out = np.empty(mu.shape)
        todo = np.ones(mu.shape, dtype=bool)
        # exponentially tilted hyperbolic secant via a two-sided
        # exponential envelope; acceptance probability is at least 1/2
        while todo.any():
            idx = np.flatnonzero(todo)
            u = rng.random(idx.size)
            right = u < lam_l[idx] / np.pi
            x = np.where(
                right,
                rng.exponential(1.0, idx.size) / lam_r[idx],
                -rng.exponential(1.0, idx.size) / lam_l[idx],
            )
            accept = rng.random(idx.size) < 1.0 / (1.0 + np.exp(-np.pi * np.abs(x)))
            out[idx[accept]] = x[accept]
            todo[idx[accept]] = False
        return out if out.size > 1 else out.reshape(np.shape(mu))


class NegativeBinomialAsPublished(Family):
    """Cumulants transcribed verbatim from the source table.

    The printed d2 and d3 mix (1 - mu) and (1 + mu) and cannot both come
    from one variance function, so this entry is reference-only: no
    sampler, no likelihood, excluded from fitting.
    """

    name = "negative-binomial"
    mu_lo = 0.0
    mu_hi = 1.0
    samplable = False
    has_full_loglik = False
    as_published = True

    def _d_cumulants(self, mu, phi):
        d2 = 1.0 / mu - 1.0 / (1.0 - mu)
        d2p = -(1.0 / mu**2 - 1.0 / (1.0 - mu) ** 2)
        d3 = 2.0 / (1.0 + mu) ** 2 - 2.0 / mu**2
        return d2, d3, d2p


class ReciprocalInverseGaussianFamily(Family):
    """Cumulant-only entry; the full t(y, mu) is not specified here."""

    name = "reciprocal-inverse-gaussian"
    kind = "proper-dispersion"
    mu_lo = 0.0
    y_lo = 0.0
    samplable = False
    has_full_loglik = False

    def _d_cumulants(self, mu, phi):
        return -1.0 / mu, np.zeros_like(np.asarray(mu, float)), 1.0 / mu**2

    def _alpha_cumulants(self, phi):
        return -0.5 / phi**2, phi**-3.0, phi**-3.0


def power_variance_cumulant_generator(delta: float, theta):
    """Cumulant generator b_delta(theta) of the power-variance class."""
    theta = np.asarray(theta, dtype=float)
    if delta == 1.0:
        return np.exp(theta)
    if delta == 2.0:
        return -np.log(-theta)
    return ((1.0 - delta) * theta) ** ((delta - 2.0) / (delta - 1.0)) / (2.0 - delta)


class PowerVarianceFamily(_EDFamily):
    """Tweedie-type entry with V(mu) = mu^p.

    Full likelihood and sampling are wired up only for p in {0, 2, 3}
    (normal, gamma, inverse Gaussian); other exponents expose t and the
    d-cumulants but no normalizing a(phi, y).
    """

    kind = "exponential-dispersion"

    def __init__(self, p: float):
        self.p = float(p)
        self.name = f"power-variance({p:g})"
        self.mu_lo = -np.inf if self.p == 0.0 else 0.0
        self.y_lo = -np.inf if self.p == 0.0 else 0.0
        full = self.p in (0.0, 2.0, 3.0)
        self.samplable = full
        self.has_full_loglik = full

    def _variance(self, mu):
        return mu**self.p

    def _dvariance(self, mu):
        return self.p * mu ** (self.p - 1.0)

    def t(self, y, mu):
        y = np.asarray(y, float)
        p = self.p
        if p == 1.0:
            return y * np.log(mu) - mu
        if p == 2.0:
            return -y / mu - np.log(mu)
        return y * mu ** (1.0 - p) / (1.0 - p) - mu ** (2.0 - p) / (2.0 - p)

    def tprime(self, y, mu):
        return (np.asarray(y, float) - mu) * mu**-self.p

    def t2(self, y, mu):
        return -(mu**-self.p) * (1.0 + self.p * (np.asarray(y, float) - mu) / mu)

    def a(self, phi, y):
        y = np.asarray(y, float)
        if self.p == 0.0:
            return 0.5 * np.log(phi) - 0.5 * _LOG_2PI - 0.5 * phi * y * y
        if self.p == 2.0:
            return phi * np.log(phi) - log_gamma(phi) + (phi - 1.0) * np.log(y)
        if self.p == 3.0:
            return 0.5 * np.log(phi) - 0.5 * (_LOG_2PI + 3.0 * np.log(y)) - 0.5 * phi / y
        raise UnsupportedFamilyOperation(f"{self.name}: a(phi, y) only for p in {{0, 2, 3}}")

    def aprime(self, phi, y):
        y = np.asarray(y, float)
        if self.p == 0.0:
            return 0.5 / phi - 0.5 * y * y
        if self.p == 2.0:
            return np.log(phi) + 1.0 - polygamma(0, phi) + np.log(y)
        if self.p == 3.0:
            return 0.5 / phi - 0.5 / y
        raise UnsupportedFamilyOperation(f"{self.name}: a'(phi, y) only for p in {{0, 2, 3}}")

    def _alpha_cumulants(self, phi):
        if self.p == 2.0:
            a2 = 1.0 / phi - polygamma(1, phi)
            a3 = -(phi**-2.0) - polygamma(2, phi)
            return a2, a3, a3
        if self.p in (0.0, 3.0):
            return -0.5 / phi**2, phi**-3.0, phi**-3.0
        raise UnsupportedFamilyOperation(f"{self.name}: alpha cumulants only for p in {{0, 2, 3}}")

    def sample(self, mu, phi, rng):
        mu = np.asarray(mu, float)
        if self.p == 0.0:
            return mu + rng.standard_normal(mu.shape) / np.sqrt(phi)
        if self.p == 2.0:
            return rng.gamma(shape=phi, scale=mu / phi)
        if self.p == 3.0:
            return rng.wald(mu, phi)
        raise UnsupportedFamilyOperation(f"{self.name}: sampler only for p in {{0, 2, 3}}")


class ExponentialVarianceFamily(_EDFamily):
    """V(mu) = exp(b mu); cumulants and t only, no closed-form a(phi, y)."""

    kind = "exponential-dispersion"
    samplable = False
    has_full_loglik = False

    def __init__(self, b: float):
        if b == 0.0:
            raise DomainError("exponential-variance rate must be nonzero")
        self.b = float(b)
        self.name = f"exponential-variance({b:g})"

    def _variance(self, mu):
        return np.exp(self.b * mu)

    def _dvariance(self, mu):
        return self.b * np.exp(self.b * mu)

    def t(self, y, mu):
        b = self.b
        return np.exp(-b * mu) * (b * mu + 1.0 - b * np.asarray(y, float)) / (b * b)

    def tprime(self, y, mu):
        return (np.asarray(y, float) - mu) * np.exp(-self.b * mu)

    def t2(self, y, mu):
        return -(1.0 + self.b * (np.asarray(y, float) - mu)) * np.exp(-self.b * mu)


class _ConstantCVFamily(Family):
    """Known coefficient of variation c, unit precision, V-like mu^-2 scaling:
    d2 = -k2 mu^-2, d3 = k3 mu^-3, d2p = 2 k2 mu^-3."""

    kind = "constant-cv"
    fixed_phi = 1.0
    mu_lo = 0.0

    def __init__(self, c: float):
        if c <= 0.0:
            raise DomainError("coefficient of variation must be positive")
        self.c = float(c)
        self.name = f"{self.basename}({c:g})"

    basename = ""
    k2: float
    k3: float

    def _d_cumulants(self, mu, phi):
        return -self.k2 / mu**2, self.k3 / mu**3, 2.0 * self.k2 / mu**3


class CVNormalFamily(_ConstantCVFamily):
    basename = "cv-normal"

    def __init__(self, c):
        super().__init__(c)
        c2 = self.c * self.c
        self.k2 = (1.0 + 2.0 * c2) / c2
        self.k3 = (6.0 + 10.0 * c2) / c2

    def t(self, y, mu):
        y = np.asarray(y, float)
        return -((y - mu) ** 2) / (2.0 * self.c**2 * mu * mu) - np.log(mu)

    def tprime(self, y, mu):
        y = np.asarray(y, float)
        return y * (y - mu) / (self.c**2 * mu**3) - 1.0 / mu

    def t2(self, y, mu):
        y = np.asarray(y, float)
        return -y / (self.c**2 * mu**3) - 3.0 * y * (y - mu) / (self.c**2 * mu**4) + 1.0 / (mu * mu)

    def a(self, phi, y):
        return -math.log(self.c) - 0.5 * _LOG_2PI + np.zeros_like(np.asarray(y, float))

    def sample(self, mu, phi, rng):
        mu = np.asarray(mu, float)
        return mu * (1.0 + self.c * rng.standard_normal(mu.shape))


class CVInverseGaussianFamily(_ConstantCVFamily):
    basename = "cv-inverse-gaussian"
    y_lo = 0.0

    def __init__(self, c):
        super().__init__(c)
        c2 = self.c * self.c
        # k2 derived from the IG(mu, c^2 mu^2) density itself (the value the
        # Monte Carlo moment check reproduces)
        self.k2 = 0.5 * (2.0 + c2) / c2
        self.k3 = (3.0 + c2) / c2

    def t(self, y, mu):
        y = np.asarray(y, float)
        return -(y / mu + mu / y - 2.0) / (2.0 * self.c**2) + 0.5 * np.log(mu)

    def tprime(self, y, mu):
        y = np.asarray(y, float)
        return (y / mu**2 - 1.0 / y) / (2.0 * self.c**2) + 0.5 / mu

    def t2(self, y, mu):
        return -np.asarray(y, float) / (self.c**2 * mu**3) - 0.5 / (mu * mu)

    def a(self, phi, y):
        y = np.asarray(y, float)
        return -math.log(self.c) - 0.5 * (_LOG_2PI + 3.0 * np.log(y))

    def sample(self, mu, phi, rng):
        mu = np.asarray(mu, float)
        return rng.wald(mu, mu / self.c**2)


class CVLogNormalFamily(_ConstantCVFamily):
    basename = "cv-lognormal"
    y_lo = 0.0

    def __init__(self, c):
        super().__init__(c)
        self.s2 = math.log1p(self.c**2)
        self.k2 = 1.0 / self.s2
        self.k3 = 3.0 / self.s2

    def t(self, y, mu):
        v = np.log(np.asarray(y, float)) - np.log(mu) + 0.5 * self.s2
        return -(v * v) / (2.0 * self.s2)

    def tprime(self, y, mu):
        v = np.log(np.asarray(y, float)) - np.log(mu) + 0.5 * self.s2
        return v / (self.s2 * mu)

    def t2(self, y, mu):
        v = np.log(np.asarray(y, float)) - np.log(mu) + 0.5 * self.s2
        return -(1.0 + v) / (self.s2 * mu * mu)

    def a(self, phi, y):
        y = np.asarray(y, float)
        return -np.log(y) - 0.5 * math.log(2.0 * math.pi * self.s2)

    def sample(self, mu, phi, rng):
        mu = np.asarray(mu, float)
        s = math.sqrt(self.s2)
        return np.exp(np.log(mu) - 0.5 * self.s2 + s * rng.standard_normal(mu.shape))


class CVWeibullFamily(_ConstantCVFamily):
    """Weibull with known shape c; mu is the mean."""

    basename = "cv-weibull"
    y_lo = 0.0

    def __init__(self, c):
        super().__init__(c)
        self.gconst = math.exp(log_gamma(1.0 + 1.0 / self.c))
        self.k2 = self.c**2
        self.k3 = self.c**2 * (self.c + 3.0)

    def t(self, y, mu):
        y = np.asarray(y, float)
        return -((self.gconst * y / mu) ** self.c) - self.c * np.log(mu)

    def tprime(self, y, mu):
        return (self.c / mu) * ((self.gconst * np.asarray(y, float) / mu) ** self.c - 1.0)

    def t2(self, y, mu):
        w = (self.gconst * np.asarray(y, float) / mu) ** self.c
        return (self.c / (mu * mu)) * (1.0 - w - self.c * w)

    def a(self, phi, y):
        y = np.asarray(y, float)
        return (self.c - 1.0) * np.log(y) + math.log(self.c) + self.c * math.log(self.gconst)

    def sample(self, mu, phi, rng):
        mu = np.asarray(mu, float)
        return (mu / self.gconst) * rng.weibull(self.c, size=mu.shape)


_PLAIN = {
    f.name: f
    for f in (
        NormalFamily(),
        PoissonFamily(),
        BernoulliFamily(),
        GammaFamily(),
        InverseGaussianFamily(),
        VonMisesFamily(),
        ReciprocalGammaFamily(),
        LogGammaFamily(),
        GHSFamily(),
        NegativeBinomialAsPublished(),
        ReciprocalInverseGaussianFamily(),
    )
}

_PARAMETRIC = {
    "power-variance": PowerVarianceFamily,
    "exponential-variance": ExponentialVarianceFamily,
    "cv-normal": CVNormalFamily,
    "cv-inverse-gaussian": CVInverseGaussianFamily,
    "cv-lognormal": CVLogNormalFamily,
    "cv-weibull": CVWeibullFamily,
}

FAMILY_NAMES = tuple(sorted(_PLAIN)) + tuple(f"{k}(<value>)" for k in sorted(_PARAMETRIC))

_PARAM_RE = re.compile(r"^([a-z-]+)\(\s*([-+0-9.eE]+)\s*\)$")


def family_by_name(name: str) -> Family:
    """Resolve a catalog name like 'gamma' or 'power-variance(1.5)'."""
    key = name.strip().lower()
    if key in _PLAIN:
        return _PLAIN[key]
    m = _PARAM_RE.match(key)
    if m and m.group(1) in _PARAMETRIC:
        try:
            value = float(m.group(2))
        except ValueError:
            raise DomainError(f"bad family parameter in {name!r}") from None
        return _PARAMETRIC[m.group(1)](value)
    raise DomainError(f"unknown family {name!r}")
