"""Truncated Taylor arithmetic.

A :class:`Jet` stores the normalized Taylor coefficients ``c[k] = f^(k)(0) / k!``
of a function of one scalar parameter ``s``, truncated at a fixed order.  The
coefficients are ``jax.numpy`` arrays of shape ``(order + 1, *shape)``, so a
single jet can carry a vector quantity and the arithmetic can be traced and
compiled by JAX.

Only the operations the Hamiltonians and monitors in this package need are
provided: ``+ - * /``, real powers, ``abs``, component indexing, summation over
trailing axes and left multiplication by a constant matrix.
"""

from __future__ import annotations

import math
from typing import Callable

import jax.numpy as jnp
import numpy as np

MAX_ORDER = 4


def _expand(c, ndim):
    # right-pad the value shape with singleton axes so it broadcasts like numpy
    extra = ndim - (c.ndim - 1)
    if extra <= 0:
        return c
    return c.reshape(c.shape[:1] + (1,) * extra + c.shape[1:])


def _const_ndim(x):
    return jnp.ndim(x)


def _convolve(a, b):
    # truncated Cauchy product as one lower-triangular Toeplitz contraction
    K = a.shape[0]
    k, j = np.indices((K, K))
    mask = (k >= j).astype(float).reshape((K, K) + (1,) * (a.ndim - 1))
    T = a[np.clip(k - j, 0, K - 1)] * mask
    return (T * b[None]).sum(1)


class Jet:
    """Truncated Taylor polynomial ``sum_k c[k] s^k`` with array coefficients."""

    __slots__ = ("c",)
    __array_ufunc__ = None  # numpy operands defer to the reflected jet operators

    def __init__(self, coeffs):
        self.c = jnp.asarray(coeffs)

    # -- construction -----------------------------------------------------
    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = jnp.asarray(value)
        zeros = jnp.zeros((order,) + value.shape, dtype=value.dtype)
        return cls(jnp.concatenate([value[None], zeros]))

    @classmethod
    def variable(cls, value, direction, order: int) -> "Jet":
        """Jet of ``value + s * direction``."""
        value = jnp.asarray(value, dtype=float)
        direction = jnp.broadcast_to(jnp.asarray(direction, dtype=float), value.shape)
        if order == 0:
            return cls(value[None])
        zeros = jnp.zeros((order - 1,) + value.shape)
        return cls(jnp.concatenate([value[None], direction[None], zeros]))

    # -- inspection -------------------------------------------------------
    @property
    def order(self) -> int:
        return self.c.shape[0] - 1

    @property
    def shape(self):
        return self.c.shape[1:]

    @property
    def ndim(self) -> int:
        return self.c.ndim - 1

    @property
    def value(self):
        return self.c[0]

    @property
    def coefficients(self):
        return self.c[1:]

    def derivatives(self):
        """Derivatives ``d^k/ds^k`` for ``k = 1..order``."""
        fact = jnp.asarray([math.factorial(k) for k in range(1, self.order + 1)], dtype=float)
        return _expand(fact, self.ndim) * self.c[1:] if self.order else self.c[1:]

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, shape={self.shape}, c={self.c!r})"

    # -- helpers ----------------------------------------------------------
    def _pair(self, other: "Jet"):
        a, b = self.c, other.c
        k = min(a.shape[0], b.shape[0])
        a, b = a[:k], b[:k]
        nd = max(a.ndim, b.ndim) - 1
        return _expand(a, nd), _expand(b, nd)

    def _with_const(self, x):
        return _expand(self.c, _const_ndim(x))

    # -- arithmetic -------------------------------------------------------
    def __neg__(self):
        return Jet(-self.c)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = self._pair(other)
            return Jet(a + b)
        c = self._with_const(other)
        head = c[0] + other
        tail = jnp.broadcast_to(c[1:], c[1:].shape[:1] + head.shape)
        return Jet(jnp.concatenate([head[None], tail]))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self._pair(other)
            return Jet(_convolve(a, b))
        return Jet(self._with_const(other) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self._with_const(other) / other)
        a, b = self._pair(other)
        out = []
        for k in range(a.shape[0]):
            acc = a[k]
            for j in range(1, k + 1):
                acc = acc - b[j] * out[k - j]
            out.append(acc / b[0])
        return Jet(jnp.stack(out))

    def __rtruediv__(self, other):
        return Jet.constant(jnp.broadcast_to(other, self.shape), self.order) / self

    def __pow__(self, alpha):
        if isinstance(alpha, Jet):
            raise TypeError("jet exponents are not supported")
        if isinstance(alpha, (int, np.integer)) or (isinstance(alpha, float) and alpha.is_integer()):
            m = int(alpha)
            if 0 <= m <= 2 * MAX_ORDER:
                if m == 0:
                    return Jet.constant(jnp.ones(self.shape), self.order)
                out = self
                for _ in range(m - 1):
                    out = out * self
                return out
        # y = x^alpha  <=>  x y' = alpha x' y, solved coefficient by coefficient
        x = self.c
        y = [x[0] ** alpha]
        for k in range(1, x.shape[0]):
            acc = sum((alpha * j - (k - j)) * x[j] * y[k - j] for j in range(1, k + 1))
            y.append(acc / (k * x[0]))
        return Jet(jnp.stack(y))

    def sqrt(self):
        return self ** 0.5

    def __abs__(self):
        return Jet(self.c * jnp.sign(self.c[0]))

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.c[(slice(None),) + idx])

    def sum(self, axis=-1):
        if axis is None:
            return Jet(self.c.reshape(self.c.shape[0], -1).sum(-1))
        axis = axis if axis < 0 else axis + 1
        return Jet(self.c.sum(axis))

    def __rmatmul__(self, matrix):
        # constant matrix times a vector jet
        return Jet(self.c @ jnp.asarray(matrix).T)


def coefficient(x, k: int):
    """k-th Taylor coefficient of ``x``; plain values are treated as constants."""
    if isinstance(x, Jet):
        if k <= x.order:
            return x.c[k]
        return jnp.zeros_like(x.c[0])
    x = jnp.asarray(x)
    return x if k == 0 else jnp.zeros_like(x)


def jet_lift(f: Callable, x, direction, order: int) -> Jet:
    """Jet of ``s -> f(x + s * direction)`` at ``s = 0``.

    ``f`` must be written with operations :class:`Jet` supports.  The returned
    jet's :meth:`Jet.derivatives` are the directional derivatives up to
    ``order``.
    """
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must lie in [0, {MAX_ORDER}], got {order}")
    x = jnp.asarray(x, dtype=float)
    y = f(Jet.variable(x, direction, order))
    if not isinstance(y, Jet):
        y = Jet.constant(y, order)
    if not bool(jnp.all(jnp.isfinite(y.c))):
        raise ValueError("non-finite derivative")
    return y
