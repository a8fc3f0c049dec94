"""Regularized incomplete beta function with derivatives in all arguments.

The shape-parameter derivatives have no closed form, so the continued
fraction is differentiated alongside its evaluation (a forward-mode pass
with two tangents, written out by hand so numba can compile it).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_EPS = 1e-16
_FPMIN = 1e-300
_MAXIT = 100_000


@njit(cache=True)
def digamma(x):
    """psi(x) for x > 0 via recurrence and the asymptotic series."""
    r = 0.0
    while x < 6.0:
        r -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    return (
        r
        + math.log(x)
        - 0.5 / x
        - f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f / 132))))
    )


@njit(cache=True)
def _cf(a, b, x):
    """Lentz continued fraction for I_x(a,b) with d/da, d/db of its value."""
    qab = a + b
    qap = a + 1.0
    c, c_a, c_b = 1.0, 0.0, 0.0
    d = 1.0 - qab * x / qap
    d_a = -x * (1.0 - b) / (qap * qap)
    d_b = -x / qap
    if abs(d) < _FPMIN:
        d, d_a, d_b = _FPMIN, 0.0, 0.0
    d = 1.0 / d
    d_a = -d_a * d * d
    d_b = -d_b * d * d
    h, h_a, h_b = d, d_a, d_b
    for m in range(1, _MAXIT):
        m2 = 2.0 * m
        for step in range(2):
            if step == 0:
                num = m * (b - m) * x
                den = (a + m2 - 1.0) * (a + m2)
                aa = num / den
                aa_a = -num * (2.0 * a + 2.0 * m2 - 1.0) / (den * den)
                aa_b = m * x / den
            else:
                num = (a + m) * (qab + m) * x
                den = (a + m2) * (a + m2 + 1.0)
                num_a = x * ((qab + m) + (a + m))
                num_b = x * (a + m)
                aa = -num / den
                aa_a = -(num_a * den - num * (2.0 * a + 2.0 * m2 + 1.0)) / (den * den)
                aa_b = -num_b / den
            # d <- 1 / (1 + aa d)
            dn = 1.0 + aa * d
            dn_a = aa_a * d + aa * d_a
            dn_b = aa_b * d + aa * d_b
            if abs(dn) < _FPMIN:
                dn, dn_a, dn_b = _FPMIN, 0.0, 0.0
            # c <- 1 + aa / c
            cn = 1.0 + aa / c
            cn_a = aa_a / c - (aa / c) * (c_a / c)
            cn_b = aa_b / c - (aa / c) * (c_b / c)
            if abs(cn) < _FPMIN:
                cn, cn_a, cn_b = _FPMIN, 0.0, 0.0
            d = 1.0 / dn
            d_a = -dn_a * d * d
            d_b = -dn_b * d * d
            c, c_a, c_b = cn, cn_a, cn_b
            delta = d * c
            delta_a = d_a * c + d * c_a
            delta_b = d_b * c + d * c_b
            h_a = h_a * delta + h * delta_a
            h_b = h_b * delta + h * delta_b
            h = h * delta
        if (
            abs(delta - 1.0) < _EPS
            and abs(delta_a) <= _EPS * (abs(h_a) / max(abs(h), 1e-300) + 1.0)
            and abs(delta_b) <= _EPS * (abs(h_b) / max(abs(h), 1e-300) + 1.0)
        ):
            break
    return h, h_a, h_b


@njit(cache=True)
def _front(a, b, x):
    lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return math.exp(a * math.log(x) + b * math.log1p(-x) - lbeta - math.log(a))


@njit(cache=True)
def _betainc_one(a, b, x):
    """Return (I, dI/da, dI/db, dI/dx) for a single point."""
    if not (a > 0.0 and b > 0.0 and math.isfinite(a) and math.isfinite(b) and x == x):
        return math.nan, math.nan, math.nan, math.nan
    if x <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    if x >= 1.0:
        return 1.0, 0.0, 0.0, 0.0
    lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    dens = math.exp((a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - lbeta)
    psi_ab = digamma(a + b)
    if x < (a + 1.0) / (a + b + 2.0):
        front = _front(a, b, x)
        h, h_a, h_b = _cf(a, b, x)
        lf_a = math.log(x) - digamma(a) + psi_ab - 1.0 / a
        lf_b = math.log1p(-x) - digamma(b) + psi_ab
        val = front * h
        return val, front * (h_a + lf_a * h), front * (h_b + lf_b * h), dens
    # symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
    y = 1.0 - x
    front = _front(b, a, y)
    h, h_b, h_a = _cf(b, a, y)
    lf_b = math.log(y) - digamma(b) + psi_ab - 1.0 / b
    lf_a = math.log1p(-y) - digamma(a) + psi_ab
    val = front * h
    return 1.0 - val, -front * (h_a + lf_a * h), -front * (h_b + lf_b * h), dens


@njit(cache=True)
def _betainc_grad(a, b, x):
    n = a.shape[0]
    val = np.empty(n)
    da = np.empty(n)
    db = np.empty(n)
    dx = np.empty(n)
    for i in range(n):
        val[i], da[i], db[i], dx[i] = _betainc_one(a[i], b[i], x[i])
    return val, da, db, dx


def betainc_grad(a, b, x):
    """Vectorized I_x(a,b) with partials w.r.t. a, b and x (1-D float arrays)."""
    return _betainc_grad(
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(x, dtype=np.float64),
    )
