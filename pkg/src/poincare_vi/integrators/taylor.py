"""Taylor expansion of the extended flow by jet recursion.

If ``x(s) = sum_k x_k s^k`` solves ``x' = f(x)`` then ``x_{k+1} = f(x)_k / (k+1)``,
where ``f(x)_k`` only involves ``x_0..x_k``.  Each pass therefore evaluates the
vector field on a jet one order longer than the last.
"""

from __future__ import annotations

from functools import partial

import jax
import jax.numpy as jnp

from ..core.jet import MAX_ORDER, Jet, coefficient
from ..poincare import ExtendedState, PoincareSystem


def flow_coefficients(sys: PoincareSystem, q, qt, p, pt, order: int, reduced: bool = False):
    """Normalized Taylor coefficients of the flow through ``(q, qt, p, pt)``.

    Returns four arrays with a leading axis of length ``order + 1``.  With
    ``reduced`` the level-set form of the vector field is expanded instead.
    """
    field = sys.level_set_vector_field if reduced else sys.vector_field
    comps = [[jnp.asarray(v, dtype=float)] for v in (q, qt, p, pt)]
    for k in range(order):
        jets = [Jet(jnp.stack(c)) for c in comps]
        rates = field(*jets)
        for c, r in zip(comps, rates):
            c.append(coefficient(r, k) / (k + 1))
    return tuple(jnp.stack(c) for c in comps)


def evaluate_polynomial(coeffs, tau, order: int):
    """``sum_{k <= order} coeffs[k] tau^k`` by Horner's rule."""
    out = coeffs[order]
    for k in range(order - 1, -1, -1):
        out = coeffs[k] + tau * out
    return out


def increment_polynomial(coeffs, tau, order: int):
    """Same as :func:`evaluate_polynomial` minus the constant term."""
    if order == 0:
        return jnp.zeros_like(coeffs[0])
    out = coeffs[order]
    for k in range(order - 1, 0, -1):
        out = coeffs[k] + tau * out
    return tau * out


@partial(jax.jit, static_argnames=("r",))
def _taylor_flow(sys, x, h, r):
    coeffs = flow_coefficients(sys, *x, r)
    return ExtendedState(*(evaluate_polynomial(c, h, r) for c in coeffs))


def taylor_flow(sys: PoincareSystem, x0: ExtendedState, h: float, r: int) -> ExtendedState:
    """Order-``r`` Taylor approximation of the extended flow over fictive time ``h``."""
    if not 1 <= r <= MAX_ORDER:
        raise ValueError(f"Taylor order must lie in [1, {MAX_ORDER}], got {r}")
    x = ExtendedState(*(jnp.asarray(v, dtype=float) for v in x0))
    out = _taylor_flow(sys, x, jnp.asarray(h, dtype=float), r)
    if not all(bool(jnp.all(jnp.isfinite(v))) for v in out):
        raise FloatingPointError("Taylor flow produced non-finite values")
    return ExtendedState(*(jax.device_get(v) for v in out))
