"""Special functions used by the family catalog.

Polygamma functions and the modified-Bessel ratio are implemented here
directly (argument reduction plus asymptotic series) so their accuracy can
be pinned against independent oracles; routine pieces (log-gamma, the
normal error function) delegate to the platform libraries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc as _erfc
from scipy.special import gammaln as _gammaln

from .errors import DomainError

__all__ = [
    "log_gamma",
    "polygamma",
    "bessel_i0e",
    "bessel_i1e",
    "log_bessel_i0",
    "BesselRatioEval",
    "bessel_ratio",
    "norm_cdf",
    "norm_pdf",
    "norm_quantile",
]


def log_gamma(x):
    """log Gamma(x) for x > 0 (scalar or array)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError("log_gamma requires x > 0")
    out = _gammaln(x)
    return float(out) if out.ndim == 0 else out


# Upward recurrence target; the B_14-truncated series is good to ~1e-15
# relative error from here on.
_PSI_XMIN = 12.0

# Horner coefficients of the de Moivre expansions in powers of 1/x^2:
# psi:   B_2n / (2n),  psi': B_2n,  psi'': (2n+1) B_2n   for n = 1..7
_PSI0_C = (1 / 12, -1 / 120, 1 / 252, -1 / 240, 1 / 132, -691 / 32760, 1 / 12)
_PSI1_C = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6)
_PSI2_C = (1 / 2, -1 / 6, 1 / 6, -3 / 10, 5 / 6, -691 / 210, 35 / 2)


def _horner(coeffs, u):
    acc = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = c + u * acc
    return acc


def _psi_asymptotic(m: int, x):
    """psi^(m)(x) for x >= _PSI_XMIN via the de Moivre expansion."""
    inv = 1.0 / x
    inv2 = inv * inv
    if m == 0:
        return np.log(x) - 0.5 * inv - inv2 * _horner(_PSI0_C, inv2)
    if m == 1:
        return inv + 0.5 * inv2 + inv * inv2 * _horner(_PSI1_C, inv2)
    return -inv2 - inv * inv2 - inv2 * inv2 * _horner(_PSI2_C, inv2)


def _psi_scalar(m: int, x: float) -> float:
    corr = 0.0
    if m == 0:
        while x < _PSI_XMIN:
            corr += 1.0 / x
            x += 1.0
        inv = 1.0 / x
        inv2 = inv * inv
        return math.log(x) - 0.5 * inv - inv2 * _horner(_PSI0_C, inv2) - corr
    if m == 1:
        while x < _PSI_XMIN:
            corr += 1.0 / (x * x)
            x += 1.0
        inv = 1.0 / x
        inv2 = inv * inv
        return inv + 0.5 * inv2 + inv * inv2 * _horner(_PSI1_C, inv2) + corr
    while x < _PSI_XMIN:
        corr += 2.0 / (x * x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    return -inv2 - inv * inv2 - inv2 * inv2 * _horner(_PSI2_C, inv2) - corr


def polygamma(m: int, x):
    """Polygamma function psi^(m)(x), the (m+1)-th log-gamma derivative.

    Supports m in {0, 1, 2} and x > 0 (scalar or array).  Arguments below
    the asymptotic range are shifted up with the recurrence
    psi^(m)(x) = psi^(m)(x+1) - (-1)^m m! x^-(m+1).
    """
    if m not in (0, 1, 2):
        raise DomainError(f"polygamma order must be 0, 1 or 2 (got {m})")
    if np.ndim(x) == 0:
        xf = float(x)
        if not math.isfinite(xf) or xf <= 0.0:
            raise DomainError("polygamma requires finite x > 0")
        return _psi_scalar(m, xf)
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)) or np.any(x_arr <= 0.0):
        raise DomainError("polygamma requires finite x > 0")
    shape = x_arr.shape
    flat = x_arr.ravel()
    shift = np.maximum(0.0, np.ceil(_PSI_XMIN - flat))
    out = _psi_asymptotic(m, flat + shift)
    kmax = int(shift.max(initial=0.0))
    if kmax:
        # subtract the recurrence terms over a (kmax, n) grid in one pass
        j = np.arange(kmax, dtype=float)[:, None]
        base = flat[None, :] + j
        if m == 0:
            terms = 1.0 / base
        elif m == 1:
            terms = -1.0 / (base * base)
        else:
            terms = 2.0 / (base * base * base)
        out -= np.where(j < shift[None, :], terms, 0.0).sum(axis=0)
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# Modified Bessel functions of the first kind, orders 0 and 1
# ---------------------------------------------------------------------------

# Power series below, scaled asymptotic series above.  At the crossover the
# power series needs ~55 terms and the asymptotic tail is ~e^(-2x) ~ 2e-16.
_BESSEL_XSWITCH = 18.0


def _i01_series(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unscaled (I0, I1) by the ascending power series, x <= ~18."""
    q = 0.25 * x * x
    t0 = np.ones_like(x)
    t1 = np.ones_like(x)
    s0 = t0.copy()
    s1 = t1.copy()
    for k in range(1, 60):
        t0 = t0 * q / (k * k)
        t1 = t1 * q / (k * (k + 1))
        s0 += t0
        s1 += t1
        if np.all(t0 <= 1e-18 * s0):
            break
    return s0, 0.5 * x * s1


def _i01_asymptotic_scaled(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exponentially scaled (I0, I1) by the large-argument expansion."""
    s0 = np.ones_like(x)
    s1 = np.ones_like(x)
    t0 = np.ones_like(x)
    t1 = np.ones_like(x)
    for k in range(1, 30):
        odd = 2 * k - 1
        t0 = t0 * (odd * odd) / (8.0 * k * x)
        t1 = t1 * (odd * odd - 4.0) / (8.0 * k * x)
        s0 += t0
        s1 += t1
        if np.all(np.abs(t0) <= 1e-17 * np.abs(s0)):
            break
    pref = 1.0 / np.sqrt(2.0 * np.pi * x)
    return pref * s0, pref * s1


def _i01e(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    small = x <= _BESSEL_XSWITCH
    i0e = np.empty_like(x)
    i1e = np.empty_like(x)
    if small.any():
        xs = x[small]
        i0, i1 = _i01_series(xs)
        scale = np.exp(-xs)
        i0e[small] = i0 * scale
        i1e[small] = i1 * scale
    if (~small).any():
        xl = x[~small]
        i0e[~small], i1e[~small] = _i01_asymptotic_scaled(xl)
    return i0e, i1e


def _as_positive_array(x, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"{name} requires finite positive argument")
    return arr, scalar


def bessel_i0e(x):
    """exp(-x) * I0(x) for x > 0."""
    arr, scalar = _as_positive_array(x, "bessel_i0e")
    out = _i01e(arr)[0]
    return float(out[0]) if scalar else out


def bessel_i1e(x):
    """exp(-x) * I1(x) for x > 0."""
    arr, scalar = _as_positive_array(x, "bessel_i1e")
    out = _i01e(arr)[1]
    return float(out[0]) if scalar else out


def log_bessel_i0(x):
    """log I0(x) for x > 0, safe against overflow for large x."""
    arr, scalar = _as_positive_array(x, "log_bessel_i0")
    out = np.log(_i01e(arr)[0]) + arr
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class BesselRatioEval:
    """The ratio I1(phi)/I0(phi) with its first two derivatives in phi."""

    r: np.ndarray
    r1: np.ndarray
    r2: np.ndarray


def bessel_ratio(phi) -> BesselRatioEval:
    """Evaluate r(phi) = I1(phi)/I0(phi) together with r'(phi), r''(phi).

    The derivatives come from the exact recurrences I0' = I1 and
    I1' = I0 - I1/phi, which give r' = 1 - r/phi - r^2 and
    r'' = -r'/phi + r/phi^2 - 2 r r'.
    """
    arr, scalar = _as_positive_array(phi, "bessel_ratio")
    i0e, i1e = _i01e(arr)
    r = i1e / i0e
    r1 = 1.0 - r / arr - r * r
    r2 = -r1 / arr + r / (arr * arr) - 2.0 * r * r1
    if scalar:
        return BesselRatioEval(float(r[0]), float(r1[0]), float(r2[0]))
    return BesselRatioEval(r, r1, r2)


# ---------------------------------------------------------------------------
# Standard normal distribution helpers (probit link, interval quantiles)
# ---------------------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    """Standard normal distribution function."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * _erfc(-x / _SQRT2)
    return float(out) if out.ndim == 0 else out


def norm_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


# Acklam's rational approximation to the normal quantile, then one Newton
# correction with the erfc-based distribution function.
_ACK_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_ACK_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_ACK_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_ACK_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)


def _norm_quantile_raw(p: np.ndarray) -> np.ndarray:
    out = np.empty_like(p)
    p_low = 0.02425
    lo = p < p_low
    hi = p > 1.0 - p_low
    mid = ~(lo | hi)
    if mid.any():
        q = p[mid] - 0.5
        r = q * q
        num = ((((_ACK_A[0] * r + _ACK_A[1]) * r + _ACK_A[2]) * r + _ACK_A[3]) * r + _ACK_A[4]) * r + _ACK_A[5]
        den = ((((_ACK_B[0] * r + _ACK_B[1]) * r + _ACK_B[2]) * r + _ACK_B[3]) * r + _ACK_B[4]) * r + 1.0
        out[mid] = num * q / den
    for mask, sign in ((lo, 1.0), (hi, -1.0)):
        if mask.any():
            pp = p[mask] if sign > 0 else 1.0 - p[mask]
            q = np.sqrt(-2.0 * np.log(pp))
            num = ((((_ACK_C[0] * q + _ACK_C[1]) * q + _ACK_C[2]) * q + _ACK_C[3]) * q + _ACK_C[4]) * q + _ACK_C[5]
            den = (((_ACK_D[0] * q + _ACK_D[1]) * q + _ACK_D[2]) * q + _ACK_D[3]) * q + 1.0
            out[mask] = sign * num / den
    return out


def norm_quantile(p):
    """Standard normal quantile for p in (0, 1)."""
    arr = np.asarray(p, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("norm_quantile requires 0 < p < 1")
    x = _norm_quantile_raw(arr)
    x = x - (0.5 * _erfc(-x / _SQRT2) - arr) / (_INV_SQRT_2PI * np.exp(-0.5 * x * x))
    return float(x[0]) if scalar else x
