"""Hamiltonian system contract.

Every evaluator is written with plain arithmetic, ``**``, ``abs`` and
``.sum(-1)`` so that it accepts numpy/JAX arrays and :class:`~poincare_vi.core.jet.Jet`
values alike.  That single code path is what the Taylor integrators
differentiate.
"""

from __future__ import annotations

from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np


class PhaseState(NamedTuple):
    q: np.ndarray
    p: np.ndarray


def phase_state(q, p) -> PhaseState:
    """Validated :class:`PhaseState` with float arrays of equal length."""
    q = np.array(q, dtype=float, ndmin=1)
    p = np.array(p, dtype=float, ndmin=1)
    if q.ndim != 1 or q.shape != p.shape:
        raise ValueError(f"q and p must be vectors of equal length, got {q.shape} and {p.shape}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        raise ValueError("phase state has non-finite entries")
    return PhaseState(q, p)


class HamiltonianSystem:
    """Autonomous Hamiltonian ``H(q, p)`` with first partial derivatives."""

    n: int
    separable = False

    def hamiltonian(self, q, p):
        raise NotImplementedError

    def grad_q(self, q, p):
        raise NotImplementedError

    def grad_p(self, q, p):
        raise NotImplementedError

    def hess_pp(self, q, p):
        """Momentum Hessian, by forward-mode AD on ``grad_p``."""
        return jax.jacfwd(lambda pp: jnp.asarray(self.grad_p(q, pp)))(jnp.asarray(p, dtype=float))


def _apply(matrix, v):
    if matrix is None:
        return v
    return jnp.asarray(matrix) @ v


class SeparableSystem(HamiltonianSystem):
    """``H = 1/2 p^T M^-1 p + V(q)``.

    Subclasses supply ``potential``, ``grad_potential`` and
    ``hessvec_potential`` in generic arithmetic, plus dense ``hess_potential``
    and ``third_potential`` tensors for inspection.  ``mass_inv`` is ``None``
    for the identity.
    """

    separable = True
    mass_inv = None

    def minv(self, p):
        return _apply(self.mass_inv, p)

    def kinetic(self, p):
        return 0.5 * (p * self.minv(p)).sum(-1)

    def potential(self, q):
        raise NotImplementedError

    def grad_potential(self, q):
        raise NotImplementedError

    def hessvec_potential(self, q, v):
        raise NotImplementedError

    def hess_potential(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return np.stack([np.asarray(self.hessvec_potential(q, e)) for e in np.eye(q.size)], axis=1)

    def third_potential(self, q) -> np.ndarray:
        return np.asarray(jax.jacfwd(lambda x: jnp.asarray(self.hess_potential_traced(x)))(jnp.asarray(q, dtype=float)))

    def hess_potential_traced(self, q):
        return jnp.stack([self.hessvec_potential(q, e) for e in jnp.eye(q.shape[0])], axis=1)

    def mass_inv_matrix(self) -> np.ndarray:
        if self.mass_inv is None:
            return np.eye(self.n)
        return np.asarray(self.mass_inv, dtype=float)

    def hamiltonian(self, q, p):
        return self.kinetic(p) + self.potential(q)

    def separable_hamiltonian(self, q, p):
        return self.kinetic(p) + self.potential(q)

    def grad_q(self, q, p):
        return self.grad_potential(q)

    def grad_p(self, q, p):
        return self.minv(p)

    def hess_pp(self, q, p):
        return jnp.asarray(self.mass_inv_matrix())
