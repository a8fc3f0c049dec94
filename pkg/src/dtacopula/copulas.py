"""Bivariate copula densities, distribution functions and dependence measures.

Five families are supported: Gaussian, Frank, Farlie-Gumbel-Morgenstern
and the Clayton copula rotated by 90 and 270 degrees. The private
``_log_density`` / ``link`` helpers are written against :mod:`._dual` so the
model code can differentiate through them.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy import integrate, special

from . import _dual as dm

CLAMP_EPS = 1e-12
_FRANK_SERIES = 1e-4


class CopulaFamily(str, enum.Enum):
    GAUSS = "gauss"
    FRANK = "frank"
    FGM = "fgm"
    C90 = "c90"
    C270 = "c270"

    @classmethod
    def parse(cls, tag) -> "CopulaFamily":
        if isinstance(tag, cls):
            return tag
        key = str(tag).strip().lower()
        if key == "270":
            key = "c270"
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown copula family {tag!r}; expected one of {valid}") from None


class CopulaDomainError(ValueError):
    """Association parameter outside the family's admissible range."""


class UnsupportedFamilyError(ValueError):
    """Operation has no closed form for the requested family."""


def check_theta(family, theta):
    family = CopulaFamily.parse(family)
    t = np.asarray(theta, dtype=float)
    if np.isnan(t).any():
        raise ValueError("association parameter is NaN")
    if family in (CopulaFamily.GAUSS, CopulaFamily.FGM):
        ok = np.abs(t) < 1.0
        rng = "(-1, 1)"
    elif family is CopulaFamily.FRANK:
        ok = np.isfinite(t)
        rng = "the real line"
    else:
        ok = (t > 0.0) & np.isfinite(t)
        rng = "(0, inf)"
    if not np.all(ok):
        raise CopulaDomainError(f"{family.value} parameter must lie in {rng}, got {theta!r}")
    return family


def _check_unit(*xs):
    for x in xs:
        if np.isnan(np.asarray(x, dtype=float)).any():
            raise ValueError("copula argument is NaN")


# ---------------------------------------------------------------------------
# densities (dual-compatible kernels, no validation)


def _log_clayton(u, v, theta):
    a = -theta * dm.log(u)
    b = -theta * dm.log(v)
    m = dm.where(a > b, a, b)
    with np.errstate(over="ignore", invalid="ignore"):
        small = dm.log1p(dm.expm1(a) + dm.expm1(b))
        big = m + dm.log(dm.exp(a - m) + dm.exp(b - m) - dm.exp(-m))
    lse = dm.where(dm.value(m) < 1.0, small, big)
    return (
        dm.log1p(theta)
        - (1.0 + theta) * (dm.log(u) + dm.log(v))
        - (2.0 * theta + 1.0) / theta * lse
    )


def _log_frank(u, v, theta):
    tv = np.asarray(dm.value(theta))
    neg = tv < 0.0
    t = dm.absolute(theta)
    w = dm.where(neg, 1.0 - v, v)
    with np.errstate(divide="ignore", invalid="ignore"):
        em = -dm.expm1(-t)
        den = em - dm.expm1(-t * u) * dm.expm1(-t * w)
        exact = dm.log(t) + dm.log(em) - t * (u + w) - 2.0 * dm.log(den)
    a = (2.0 * u - 1.0) * (2.0 * v - 1.0)
    series = 0.5 * theta * a + theta * theta * (u * v * (1.0 - u) * (1.0 - v) - 1.0 / 24.0)
    return dm.where(np.abs(tv) < _FRANK_SERIES, series, exact)


def _log_density(family: CopulaFamily, u, v, theta):
    if family is CopulaFamily.GAUSS:
        z1 = dm.ndtri(u)
        z2 = dm.ndtri(v)
        r2 = theta * theta
        return -0.5 * dm.log1p(-r2) + (
            2.0 * theta * z1 * z2 - r2 * (z1 * z1 + z2 * z2)
        ) / (2.0 * (1.0 - r2))
    if family is CopulaFamily.FGM:
        return dm.log1p(theta * (2.0 * u - 1.0) * (2.0 * v - 1.0))
    if family is CopulaFamily.FRANK:
        return _log_frank(u, v, theta)
    if family is CopulaFamily.C90:
        return _log_clayton(1.0 - u, v, theta)
    if family is CopulaFamily.C270:
        return _log_clayton(u, 1.0 - v, theta)
    raise UnsupportedFamilyError(family)


def clamp(x):
    return dm.clip(x, CLAMP_EPS, 1.0 - CLAMP_EPS)


def log_density(family, u, v, theta):
    """log c(u, v; theta) with u, v clamped into [1e-12, 1 - 1e-12]."""
    family = check_theta(family, theta)
    _check_unit(u, v)
    u = np.clip(np.asarray(u, dtype=float), CLAMP_EPS, 1.0 - CLAMP_EPS)
    v = np.clip(np.asarray(v, dtype=float), CLAMP_EPS, 1.0 - CLAMP_EPS)
    theta = np.asarray(theta, dtype=float)
    out = _log_density(family, u, v, theta)
    return float(out) if np.ndim(out) == 0 else out


def density(family, u, v, theta):
    return np.exp(log_density(family, u, v, theta))


# ---------------------------------------------------------------------------
# distribution functions


def _clayton_cdf(u, v, theta):
    if u <= 0.0 or v <= 0.0:
        return 0.0
    s = u ** (-theta) + v ** (-theta) - 1.0
    return s ** (-1.0 / theta)


def _bvn_cdf(h, k, rho):
    """Standard bivariate normal CDF via Plackett's integral over asin(rho)."""
    base = special.ndtr(h) * special.ndtr(k)
    if rho == 0.0:
        return base

    def integrand(t):
        c2 = math.cos(t) ** 2
        return math.exp(-(h * h + k * k - 2.0 * h * k * math.sin(t)) / (2.0 * c2))

    val, _ = integrate.quad(integrand, 0.0, math.asin(rho), epsabs=1e-14, epsrel=1e-12, limit=200)
    return base + val / (2.0 * math.pi)


def _cdf_scalar(family, u, v, theta):
    if u <= 0.0 or v <= 0.0:
        return 0.0
    if u >= 1.0:
        return v
    if v >= 1.0:
        return u
    if family is CopulaFamily.GAUSS:
        return _bvn_cdf(special.ndtri(u), special.ndtri(v), theta)
    if family is CopulaFamily.FGM:
        return u * v * (1.0 + theta * (1.0 - u) * (1.0 - v))
    if family is CopulaFamily.FRANK:
        if theta == 0.0:
            return u * v
        return -math.log1p(math.expm1(-theta * u) * math.expm1(-theta * v) / math.expm1(-theta)) / theta
    if family is CopulaFamily.C90:
        return v - _clayton_cdf(1.0 - u, v, theta)
    return u - _clayton_cdf(u, 1.0 - v, theta)


def cdf(family, u, v, theta):
    """Copula distribution function C(u, v; theta)."""
    family = check_theta(family, theta)
    _check_unit(u, v)
    u, v, theta = np.broadcast_arrays(
        np.asarray(u, float), np.asarray(v, float), np.asarray(theta, float)
    )
    out = np.empty(u.shape)
    for idx in np.ndindex(u.shape):
        out[idx] = _cdf_scalar(family, float(u[idx]), float(v[idx]), float(theta[idx]))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# conditional distributions h(v | u) = dC/du and their inverses


def _log1pexp(s):
    return dm.where(s > 0.0, s, 0.0) + dm.log1p(dm.exp(-dm.absolute(s)))


def _clayton_h(v, u, theta):
    # u^(-theta-1) (u^-theta + v^-theta - 1)^(-1/theta - 1)
    a = -theta * dm.log(u)
    b = -theta * dm.log(v)
    s = dm.log(dm.exp(a) + dm.expm1(b))
    return dm.exp((1.0 + theta) / theta * a - (1.0 + 1.0 / theta) * s)


def _clayton_h_inv(w, u, theta):
    k = -theta / (1.0 + theta) * dm.log(w)
    s = dm.log(dm.expm1(k)) - theta * dm.log(u)
    return dm.exp(-_log1pexp(s) / theta)


def _conditional_cdf(family, v, u, theta):
    if family is CopulaFamily.GAUSS:
        r = theta
        return dm.ndtr((dm.ndtri(v) - r * dm.ndtri(u)) / dm.sqrt(1.0 - r * r))
    if family is CopulaFamily.FGM:
        return v * (1.0 + theta * (1.0 - v) * (1.0 - 2.0 * u))
    if family is CopulaFamily.FRANK:
        with np.errstate(divide="ignore", invalid="ignore"):
            eu = dm.exp(-theta * u)
            num = eu * dm.expm1(-theta * v)
            exact = num / (dm.expm1(-theta) + dm.expm1(-theta * u) * dm.expm1(-theta * v))
        return dm.where(np.asarray(dm.value(theta)) == 0.0, v, exact)
    if family is CopulaFamily.C90:
        return _clayton_h(v, 1.0 - u, theta)
    if family is CopulaFamily.C270:
        return 1.0 - _clayton_h(1.0 - v, u, theta)
    raise UnsupportedFamilyError(family)


def _conditional_quantile(family, w, u, theta):
    if family is CopulaFamily.GAUSS:
        r = theta
        return dm.ndtr(r * dm.ndtri(u) + dm.sqrt(1.0 - r * r) * dm.ndtri(w))
    if family is CopulaFamily.FGM:
        a = theta * (1.0 - 2.0 * u)
        return 2.0 * w / ((1.0 + a) + dm.sqrt((1.0 + a) * (1.0 + a) - 4.0 * a * w))
    if family is CopulaFamily.FRANK:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = w * dm.expm1(-theta) / (w + (1.0 - w) * dm.exp(-theta * u))
            exact = -dm.log1p(ratio) / theta
        return dm.where(np.asarray(dm.value(theta)) == 0.0, w, exact)
    if family is CopulaFamily.C90:
        return _clayton_h_inv(w, 1.0 - u, theta)
    if family is CopulaFamily.C270:
        return 1.0 - _clayton_h_inv(1.0 - w, u, theta)
    raise UnsupportedFamilyError(family)


def conditional_cdf(family, v, u, theta):
    """h(v | u) = P(V <= v | U = u)."""
    family = check_theta(family, theta)
    _check_unit(u, v)
    u = np.clip(np.asarray(u, dtype=float), CLAMP_EPS, 1.0 - CLAMP_EPS)
    v = np.clip(np.asarray(v, dtype=float), CLAMP_EPS, 1.0 - CLAMP_EPS)
    with np.errstate(over="ignore"):
        out = _conditional_cdf(family, v, u, np.asarray(theta, float))
    return float(out) if np.ndim(out) == 0 else out


def conditional_quantile(family, w, u, theta):
    """Inverse of :func:`conditional_cdf` in ``v``."""
    family = check_theta(family, theta)
    _check_unit(u, w)
    u = np.clip(np.asarray(u, dtype=float), CLAMP_EPS, 1.0 - CLAMP_EPS)
    w = np.clip(np.asarray(w, dtype=float), CLAMP_EPS, 1.0 - CLAMP_EPS)
    out = _conditional_quantile(family, w, u, np.asarray(theta, float))
    return float(out) if np.ndim(out) == 0 else out


def sample(family, theta, size, rng=None) -> np.ndarray:
    """Draw ``size`` pairs (u, v) by conditional inversion."""
    family = check_theta(family, theta)
    rng = np.random.default_rng(rng)
    u = rng.uniform(size=size)
    w = rng.uniform(size=size)
    return np.column_stack([u, conditional_quantile(family, w, u, theta)])


# ---------------------------------------------------------------------------
# dependence measures


def _debye_integrand(t, j):
    if abs(t) < 1e-8:
        return t ** (j - 1) * (1.0 - 0.5 * t)
    return t**j / math.expm1(t)


def debye(j: int, delta: float) -> float:
    """Debye function D_j(delta) = j / delta^j * int_0^delta t^j / (e^t - 1) dt.

    D_j(0) is defined by its limit, 1.
    """
    if j not in (1, 2):
        raise ValueError("Debye order must be 1 or 2")
    delta = float(delta)
    if delta == 0.0:
        return 1.0
    val, _ = integrate.quad(_debye_integrand, 0.0, delta, args=(j,), epsabs=1e-14, epsrel=1e-12)
    return j * val / delta**j


def _frank_tau(theta: float) -> float:
    if abs(theta) < _FRANK_SERIES:
        return theta / 9.0
    return 1.0 + 4.0 * (debye(1, theta) - 1.0) / theta


def kendall_tau(family, theta):
    """Kendall's tau implied by the association parameter."""
    family = check_theta(family, theta)
    return _kendall_tau(family, theta)


def _kendall_tau(family, theta):
    # no domain check: saturated links (tanh -> +-1) still give the limiting tau
    t = np.asarray(theta, dtype=float)
    if family is CopulaFamily.GAUSS:
        out = 2.0 / np.pi * np.arcsin(t)
    elif family is CopulaFamily.FGM:
        out = 2.0 * t / 9.0
    elif family is CopulaFamily.FRANK:
        out = np.vectorize(_frank_tau, otypes=[float])(t)
    else:
        # rotations by 90/270 degrees mirror Clayton's tau to negative dependence
        out = -t / (t + 2.0)
    return float(out) if np.ndim(out) == 0 else out


def spearman_rho(family, theta):
    """Spearman's rho; closed forms exist for FGM and Frank only."""
    family = CopulaFamily.parse(family)
    if family not in (CopulaFamily.FGM, CopulaFamily.FRANK):
        raise UnsupportedFamilyError(f"no Spearman's rho formula for {family.value}")
    check_theta(family, theta)
    theta = float(theta)
    if family is CopulaFamily.FGM:
        return theta / 3.0
    if abs(theta) < _FRANK_SERIES:
        return theta / 6.0
    return 1.0 - 12.0 * (debye(1, theta) - debye(2, theta)) / theta


# ---------------------------------------------------------------------------
# unconstrained parameterization


def link(family: CopulaFamily, eta):
    """Map a linear predictor onto the family's parameter domain."""
    if family in (CopulaFamily.GAUSS, CopulaFamily.FGM):
        return dm.tanh(eta)
    if family is CopulaFamily.FRANK:
        return eta
    return dm.exp(eta)


def to_unconstrained(family, theta) -> float:
    family = check_theta(family, theta)
    if family in (CopulaFamily.GAUSS, CopulaFamily.FGM):
        return float(np.arctanh(theta))
    if family is CopulaFamily.FRANK:
        return float(theta)
    return float(np.log(theta))


def from_unconstrained(family, t: float) -> tuple[float, float]:
    """Return ``(theta, log|dtheta/dt|)``."""
    family = CopulaFamily.parse(family)
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("unconstrained value must be finite")
    if family in (CopulaFamily.GAUSS, CopulaFamily.FGM):
        # log(1 - tanh(t)^2) = 2 (log 2 - |t| - log1p(exp(-2|t|)))
        a = abs(t)
        return math.tanh(t), 2.0 * (math.log(2.0) - a - math.log1p(math.exp(-2.0 * a)))
    if family is CopulaFamily.FRANK:
        return t, 0.0
    return math.exp(t), t
