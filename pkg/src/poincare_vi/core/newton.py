"""Newton iteration for the implicit equations of the one-step maps.

Two flavours share the same stopping rule.  :func:`newton_solve` is a plain
Python loop over numpy arrays that raises on failure; :func:`newton_iterate`
is built on ``lax.while_loop`` so it can live inside compiled steppers, and
reports failure through a flag instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import jax
import jax.numpy as jnp
import numpy as np

from .linalg import SingularMatrixError, gauss_solve, solve_linear


@dataclass(frozen=True)
class NewtonConfig:
    tolerance: float = 1e-12
    max_iterations: int = 50
    fd_step: float = 1e-6

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")


class NewtonError(RuntimeError):
    def __init__(self, message, residual_norm=float("nan"), iterations=0):
        super().__init__(f"{message} (residual norm {residual_norm:.3e} after {iterations} iterations)")
        self.residual_norm = residual_norm
        self.iterations = iterations


def fd_jacobian(fun, x, step):
    """Central finite-difference Jacobian of ``fun`` at ``x`` (traceable)."""
    n = x.shape[0]
    delta = step * jnp.maximum(1.0, jnp.linalg.norm(x))
    E = delta * jnp.eye(n)
    cols = jax.vmap(lambda e: (fun(x + e) - fun(x - e)) / (2 * delta))(E)
    return cols.T


def newton_solve(residual: Callable, x0, cfg: NewtonConfig = NewtonConfig(),
                 jacobian: Optional[Callable] = None) -> np.ndarray:
    """Solve ``residual(x) = 0`` starting from ``x0``.

    Uses ``jacobian`` when supplied, else central differences with step
    ``cfg.fd_step * max(1, ||x||)``.
    """
    x = np.array(x0, dtype=float, ndmin=1)
    for it in range(cfg.max_iterations + 1):
        r = np.asarray(residual(x), dtype=float).reshape(-1)
        if r.shape != x.shape:
            raise ValueError(f"residual has dimension {r.size}, unknown has {x.size}")
        norm = float(np.linalg.norm(r))
        if not np.isfinite(norm):
            raise NewtonError("non-finite residual", norm, it)
        if norm <= cfg.tolerance:
            return x
        if it == cfg.max_iterations:
            raise NewtonError("Newton iteration did not converge", norm, it)
        if jacobian is not None:
            J = np.asarray(jacobian(x), dtype=float).reshape(x.size, x.size)
        else:
            delta = cfg.fd_step * max(1.0, float(np.linalg.norm(x)))
            J = np.empty((x.size, x.size))
            for j in range(x.size):
                e = np.zeros_like(x)
                e[j] = delta
                J[:, j] = (np.asarray(residual(x + e)).reshape(-1) - np.asarray(residual(x - e)).reshape(-1)) / (2 * delta)
        try:
            x = x + solve_linear(J, -r)
        except SingularMatrixError as exc:
            raise NewtonError("singular Jacobian", norm, it) from exc
    raise AssertionError("unreachable")


class NewtonResult(NamedTuple):
    x: jax.Array
    iterations: jax.Array
    residual_norm: jax.Array
    converged: jax.Array


def newton_iterate(residual: Callable, jacobian: Callable, x0, cfg: NewtonConfig) -> NewtonResult:
    """Traceable Newton loop; ``converged`` is false on any failure."""

    def cond(state):
        x, r, it, ok = state
        norm = jnp.linalg.norm(r)
        return ok & (norm > cfg.tolerance) & (it < cfg.max_iterations)

    def body(state):
        x, r, it, ok = state
        dx, solved = gauss_solve(jacobian(x), -r)
        x = x + dx
        r = residual(x)
        ok = solved & jnp.all(jnp.isfinite(r))
        return x, r, it + 1, ok

    r0 = residual(x0)
    x, r, it, ok = jax.lax.while_loop(cond, body, (x0, r0, jnp.asarray(0), jnp.all(jnp.isfinite(r0))))
    norm = jnp.linalg.norm(r)
    return NewtonResult(x, it, norm, ok & (norm <= cfg.tolerance))


def newton_iterate_fused(evaluate: Callable, x0, cfg: NewtonConfig):
    """Newton loop around ``evaluate(x) -> (r, J, aux)`` traced once.

    The loop body evaluates at the current iterate and only then decides
    whether to stop, so ``aux`` always belongs to the returned ``x`` and the
    (possibly expensive) ``evaluate`` appears a single time in the program.
    Returns ``(NewtonResult, aux)``.
    """
    r_shape, J_shape, aux_shape = jax.eval_shape(evaluate, x0)
    zeros = lambda s: jnp.zeros(s.shape, s.dtype)

    def cond(state):
        x, r, aux, it, done, ok = state
        return ~done

    def body(state):
        x, _, _, it, _, _ = state
        r, J, aux = evaluate(x)
        norm = jnp.linalg.norm(r)
        finite = jnp.all(jnp.isfinite(r))
        converged = finite & (norm <= cfg.tolerance)
        dx, solved = gauss_solve(J, -r)
        stop = converged | ~finite | ~solved | (it >= cfg.max_iterations)
        x = jnp.where(stop, x, x + dx)
        return x, r, aux, it + jnp.where(stop, 0, 1), stop, converged

    init = (x0, zeros(r_shape), jax.tree_util.tree_map(zeros, aux_shape),
            jnp.asarray(0), jnp.asarray(False), jnp.asarray(False))
    x, r, aux, it, _, ok = jax.lax.while_loop(cond, body, init)
    return NewtonResult(x, it, jnp.linalg.norm(r), ok), aux
