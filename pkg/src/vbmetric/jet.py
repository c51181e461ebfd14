"""Second-order forward-mode differentiation (truncated Taylor jets).

A :class:`Jet` carries a complex value together with its gradient and Hessian
with respect to ``K`` *real* coordinates.  Complex variables are seeded as
``x + i y`` so conjugation is simply entrywise conjugation, and Wirtinger
derivatives are recovered from the real ones.  Arithmetic broadcasts over a
leading batch shape.
"""

from __future__ import annotations

import numpy as np


class Jet:
    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 100.0

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @property
    def nvars(self) -> int:
        return self.grad.shape[-1]

    @staticmethod
    def seed(values, k: int, nreal: int) -> "Jet":
        """Jet for complex variable number ``k`` among ``nreal // 2`` variables."""
        values = np.asarray(values, dtype=complex)
        grad = np.zeros(values.shape + (nreal,), dtype=complex)
        grad[..., 2 * k] = 1.0
        grad[..., 2 * k + 1] = 1j
        hess = np.zeros(values.shape + (nreal, nreal), dtype=complex)
        return Jet(values, grad, hess)

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        other = np.asarray(other, dtype=complex)
        shape = np.broadcast_shapes(other.shape, self.val.shape)
        k = self.nvars
        return Jet(
            np.broadcast_to(other, shape),
            np.zeros(shape + (k,), dtype=complex),
            np.zeros(shape + (k, k), dtype=complex),
        )

    def _chain(self, f0, f1, f2) -> "Jet":
        g = self.grad
        f1e = f1[..., None]
        hess = f1[..., None, None] * self.hess + f2[..., None, None] * (g[..., :, None] * g[..., None, :])
        return Jet(f0, f1e * g, hess)

    def __add__(self, other):
        o = self._lift(other)
        return Jet(self.val + o.val, self.grad + o.grad, self.hess + o.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, -self.hess)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        o = self._lift(other)
        a, b = self, o
        val = a.val * b.val
        grad = a.val[..., None] * b.grad + b.val[..., None] * a.grad
        outer = a.grad[..., :, None] * b.grad[..., None, :]
        hess = (
            a.val[..., None, None] * b.hess
            + b.val[..., None, None] * a.hess
            + outer
            + np.swapaxes(outer, -1, -2)
        )
        return Jet(val, grad, hess)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.val
        inv = 1.0 / v
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def __pow__(self, p):
        if isinstance(p, Jet):
            return jexp(p * jlog(self))
        p = complex(p) if np.iscomplexobj(p) else float(p)
        v = self.val
        if p == 2:
            return self * self
        return self._chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __rpow__(self, base):
        return jexp(self * np.log(np.asarray(base, dtype=complex)))

    def conj(self) -> "Jet":
        return Jet(np.conj(self.val), np.conj(self.grad), np.conj(self.hess))

    def wirtinger(self, nvars: int | None = None):
        """Return ``(d, dbar, dd)`` Wirtinger derivatives for the complex variables."""
        m = self.nvars // 2 if nvars is None else nvars
        g = self.grad
        gx, gy = g[..., 0::2][..., :m], g[..., 1::2][..., :m]
        d = 0.5 * (gx - 1j * gy)
        dbar = 0.5 * (gx + 1j * gy)
        h = self.hess
        hxx = h[..., 0::2, 0::2][..., :m, :m]
        hyy = h[..., 1::2, 1::2][..., :m, :m]
        hxy = h[..., 0::2, 1::2][..., :m, :m]
        hyx = h[..., 1::2, 0::2][..., :m, :m]
        dd = 0.25 * (hxx + hyy + 1j * (hxy - hyx))
        return d, dbar, dd


def jexp(x):
    if isinstance(x, Jet):
        e = np.exp(x.val)
        return x._chain(e, e, e)
    return np.exp(x)


def jlog(x):
    if isinstance(x, Jet):
        v = x.val
        inv = 1.0 / v
        return x._chain(np.log(v), inv, -inv * inv)
    return np.log(x)


def jsin(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.val), np.cos(x.val)
        return x._chain(s, c, -s)
    return np.sin(x)


def jcos(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.val), np.cos(x.val)
        return x._chain(c, -s, -c)
    return np.cos(x)


def jsqrt(x):
    if isinstance(x, Jet):
        return x**0.5
    return np.sqrt(x)


def jconj(x):
    if isinstance(x, Jet):
        return x.conj()
    return np.conj(x)


def value_of(x):
    return x.val if isinstance(x, Jet) else x
