"""Forward-mode automatic differentiation with vector-valued dual numbers.

A :class:`Dual` carries a value array together with the Jacobian of that
value with respect to every coordinate of a seed vector, so a single pass
through model code yields the full gradient. The module-level math
functions accept plain floats/arrays or duals, which lets one piece of
model code serve both the log-density and its gradient.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ._special import betainc_grad


class Dual:
    """Array value plus tangents; ``der`` has shape ``val.shape + (dim,)``."""

    __slots__ = ("val", "der")
    __array_priority__ = 1000

    def __init__(self, val, der):
        self.val = val
        self.der = der

    @classmethod
    def seed(cls, x) -> "Dual":
        x = np.asarray(x, dtype=float)
        return cls(x, np.eye(x.size).reshape(x.shape + (x.size,)))

    @property
    def shape(self):
        return np.shape(self.val)

    @property
    def dim(self) -> int:
        return self.der.shape[-1]

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Dual(val={self.val!r}, dim={self.dim})"

    def __getitem__(self, idx):
        return Dual(self.val[idx], self.der[idx])

    # arithmetic -----------------------------------------------------------
    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        val = self.val + other
        if np.shape(val) == np.shape(self.val):
            return Dual(val, self.der)
        return Dual(val, np.broadcast_to(self.der, np.shape(val) + (self.dim,)))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.der * _t(other.val) + other.der * _t(self.val),
            )
        if isinstance(other, float):
            return Dual(self.val * other, self.der * other)
        return Dual(self.val * other, self.der * _t(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            val = self.val / other.val
            return Dual(val, (self.der - other.der * _t(val)) / _t(other.val))
        return Dual(self.val / other, self.der / _t(other))

    def __rtruediv__(self, other):
        val = other / self.val
        return Dual(val, -self.der * _t(val / self.val))

    def __pow__(self, power):
        if isinstance(power, Dual):
            return exp(power * log(self))
        return Dual(self.val**power, self.der * _t(power * self.val ** (power - 1)))

    def __rpow__(self, base):
        val = base**self.val
        return Dual(val, self.der * _t(val * np.log(base)))

    def __rmatmul__(self, mat):
        mat = np.asarray(mat)
        return Dual(mat @ self.val, mat @ self.der)

    # comparisons act on values only
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)

    def sum(self, axis=None):
        if axis is None:
            return Dual(np.sum(self.val), self.der.reshape(-1, self.dim).sum(axis=0))
        if axis < 0:
            axis -= 1
        return Dual(np.sum(self.val, axis=axis), self.der.sum(axis=axis))

    @property
    def T(self):
        nd = np.ndim(self.val)
        return Dual(self.val.T, np.transpose(self.der, tuple(range(nd))[::-1] + (nd,)))


def _t(x):
    """Append a tangent axis to a plain factor."""
    if isinstance(x, np.ndarray):
        return x[..., None]
    return np.asarray(x)[..., None]


def value(x):
    return x.val if isinstance(x, Dual) else x


def _unary(f, df):
    def op(x):
        if isinstance(x, Dual):
            return Dual(f(x.val), x.der * _t(df(x.val)))
        return f(x)

    op.__name__ = f.__name__
    return op


def _expit_prime(x):
    s = special.expit(x)
    return s * (1.0 - s)


exp = _unary(np.exp, np.exp)
log = _unary(np.log, lambda x: 1.0 / x)
log1p = _unary(np.log1p, lambda x: 1.0 / (1.0 + x))
expm1 = _unary(np.expm1, np.exp)
sqrt = _unary(np.sqrt, lambda x: 0.5 / np.sqrt(x))
tanh = _unary(np.tanh, lambda x: 1.0 - np.tanh(x) ** 2)
arcsin = _unary(np.arcsin, lambda x: 1.0 / np.sqrt(1.0 - x * x))
expit = _unary(special.expit, _expit_prime)
gammaln = _unary(special.gammaln, special.digamma)
ndtri = _unary(special.ndtri, lambda p: np.sqrt(2.0 * np.pi) * np.exp(0.5 * special.ndtri(p) ** 2))
absolute = _unary(np.abs, np.sign)
ndtr = _unary(special.ndtr, lambda z: np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi))


def log_expit(x):
    """log(1 / (1 + exp(-x))) without overflow."""
    return _log_expit(x)


_log_expit = _unary(special.log_expit, lambda x: special.expit(-x))


def betaln(a, b):
    return gammaln(a) + gammaln(b) - gammaln(a + b)


def square(x):
    return x * x


def where(cond, a, b):
    """Elementwise select; tangents of the unselected branch are discarded."""
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.where(cond, a, b)
    dim = a.dim if isinstance(a, Dual) else b.dim
    av, bv = value(a), value(b)
    val = np.where(cond, av, bv)
    shape = np.shape(val) + (dim,)
    ad = np.broadcast_to(a.der, shape) if isinstance(a, Dual) else 0.0
    bd = np.broadcast_to(b.der, shape) if isinstance(b, Dual) else 0.0
    return Dual(val, np.where(_t(cond), ad, bd))


def clip(x, lo, hi):
    if isinstance(x, Dual):
        inside = (x.val > lo) & (x.val < hi)
        return Dual(np.clip(x.val, lo, hi), x.der * _t(inside))
    return np.clip(x, lo, hi)


def betainc(a, b, x):
    """Regularized incomplete beta I_x(a, b), differentiable in all arguments."""
    if not any(isinstance(z, Dual) for z in (a, b, x)):
        av, bv, xv = np.broadcast_arrays(
            np.asarray(a, float), np.asarray(b, float), np.asarray(x, float)
        )
        out = betainc_grad(av.ravel(), bv.ravel(), xv.ravel())[0]
        return out.reshape(av.shape) if av.ndim else float(out[0])
    av, bv, xv = np.broadcast_arrays(
        np.asarray(value(a), float), np.asarray(value(b), float), np.asarray(value(x), float)
    )
    shape = av.shape
    val, da, db, dx = (
        arr.reshape(shape) for arr in betainc_grad(av.ravel(), bv.ravel(), xv.ravel())
    )
    der = 0.0
    for arg, partial in ((a, da), (b, db), (x, dx)):
        if isinstance(arg, Dual):
            der = der + arg.der * _t(partial)
    return Dual(val, np.broadcast_to(der, shape + (der.shape[-1],)))


def betaincinv(a, b, y):
    """Inverse of I_x(a, b) in x; tangents follow from the implicit function theorem."""
    av, bv, yv = np.broadcast_arrays(
        np.asarray(value(a), float), np.asarray(value(b), float), np.asarray(value(y), float)
    )
    x = special.betaincinv(av, bv, yv)
    if not any(isinstance(z, Dual) for z in (a, b, y)):
        return x if x.ndim else float(x)
    shape = av.shape
    _, da, db, dx = (arr.reshape(shape) for arr in betainc_grad(av.ravel(), bv.ravel(), x.ravel()))
    der = 0.0
    for arg, partial in ((a, -da / dx), (b, -db / dx), (y, 1.0 / dx)):
        if isinstance(arg, Dual):
            der = der + arg.der * _t(partial)
    return Dual(x, np.broadcast_to(der, shape + (der.shape[-1],)))


def value_and_grad(fn, x):
    """Evaluate scalar ``fn`` at ``x`` and its gradient in one forward pass."""
    out = fn(Dual.seed(x))
    if not isinstance(out, Dual):
        return float(out), np.zeros(np.size(x))
    return float(out.val), np.asarray(out.der, dtype=float).reshape(-1)
