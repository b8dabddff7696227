"""Dense partial-pivot Gaussian elimination for the tiny systems met here."""

from __future__ import annotations

import jax
import jax.numpy as jnp
import numpy as np

PIVOT_RTOL = 1e-14


class SingularMatrixError(ArithmeticError):
    pass


def gauss_solve(A, b):
    """Solve ``A x = b``; returns ``(x, ok)`` and is traceable by JAX.

    ``ok`` is false when a pivot falls below ``PIVOT_RTOL * ||A||_inf``.  The
    loops unroll at trace time, which is fine for dimensions up to ~10.
    """
    A = jnp.asarray(A, dtype=float)
    b = jnp.asarray(b, dtype=float)
    n = A.shape[0]
    norm = jnp.max(jnp.sum(jnp.abs(A), axis=1))
    threshold = PIVOT_RTOL * norm
    ok = norm > 0
    for k in range(n):
        piv = k + jnp.argmax(jnp.abs(A[k:, k]))
        rows = jnp.array([k, 0]).at[1].set(piv)
        A = A.at[rows].set(A[rows[::-1]])
        b = b.at[rows].set(b[rows[::-1]])
        ok = ok & (jnp.abs(A[k, k]) >= threshold)
        if k + 1 < n:
            factors = A[k + 1:, k] / A[k, k]
            A = A.at[k + 1:, k:].add(-factors[:, None] * A[k, k:][None, :])
            b = b.at[k + 1:].add(-factors * b[k])
    x = jnp.zeros(n)
    for k in range(n - 1, -1, -1):
        x = x.at[k].set((b[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k])
    return x, ok


_gauss_solve_jit = jax.jit(gauss_solve)


def solve_linear(A, b) -> np.ndarray:
    """Solve a small dense system, raising :class:`SingularMatrixError`."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
        raise ValueError(f"incompatible shapes {A.shape} and {b.shape}")
    x, ok = _gauss_solve_jit(A, b)
    if not bool(ok):
        raise SingularMatrixError("matrix is singular to working precision")
    return np.asarray(x)
