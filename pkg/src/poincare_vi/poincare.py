"""Poincare-transformed Hamiltonian on extended phase space.

The extended Hamiltonian is ``Hbar(qbar, pbar) = g(q, p, p^t) (H(q, p) + p^t)``
with ``qbar = (q, q^t)`` and ``pbar = (p, p^t)``.  The physical time ``q^t``
advances at rate ``dHbar/dp^t`` per unit of fictive time.  Because the base
Hamiltonian is autonomous, ``p^t`` is a constant of motion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .core.jet import Jet
from .core.system import HamiltonianSystem, phase_state
from .monitors import Monitor, MonitorPositivityError


class ExtendedState(NamedTuple):
    q: np.ndarray
    qt: float
    p: np.ndarray
    pt: float

    @property
    def qbar(self):
        return jnp.concatenate([jnp.asarray(self.q), jnp.atleast_1d(self.qt)])

    @property
    def pbar(self):
        return jnp.concatenate([jnp.asarray(self.p), jnp.atleast_1d(self.pt)])

    def as_vector(self):
        """``(q, q^t, p, p^t)`` stacked, matching the canonical pairing ``(qbar, pbar)``."""
        return jnp.concatenate([self.qbar, self.pbar])

    @classmethod
    def from_vector(cls, v, n: int) -> "ExtendedState":
        return cls(v[:n], v[n], v[n + 1:2 * n + 1], v[2 * n + 1])

    @classmethod
    def from_bars(cls, qbar, pbar) -> "ExtendedState":
        n = qbar.shape[0] - 1
        return cls(qbar[:n], qbar[n], pbar[:n], pbar[n])


@dataclass(frozen=True)
class PoincareSystem:
    base: HamiltonianSystem
    monitor: Monitor

    @property
    def n(self) -> int:
        return self.base.n

    def energy_offset(self, q, p, pt):
        return self.base.hamiltonian(q, p) + pt

    def hamiltonian(self, q, qt, p, pt):
        return self.monitor.partials(q, p, pt)[0] * self.energy_offset(q, p, pt)

    def vector_field(self, q, qt, p, pt):
        """Rates ``(dq, dq^t, dp, dp^t)`` of the full transformed equations.

        ``dp^t`` is exactly zero.  Monitor gradients enter multiplied by
        ``H + p^t``, so they matter only off the zero level set.
        """
        E = self.energy_offset(q, p, pt)
        g, gq, gp, gpt = self.monitor.partials(q, p, pt)
        dq = g * self.base.grad_p(q, p)
        if not self.monitor.p_independent:
            dq = dq + gp * E
        dqt = g
        if self.monitor.pt_dependent:
            dqt = dqt + gpt * E
        dp = -(gq * E) - g * self.base.grad_q(q, p)
        dpt = 0.0 if isinstance(pt, Jet) else jnp.zeros_like(jnp.asarray(pt, dtype=float))
        return dq, dqt, dp, dpt

    def level_set_vector_field(self, q, qt, p, pt):
        """Rates with the ``(H + p^t)`` terms dropped: exact on ``Hbar = 0`` only."""
        g = self.monitor.partials(q, p, pt)[0]
        dpt = 0.0 if isinstance(pt, Jet) else jnp.zeros_like(jnp.asarray(pt, dtype=float))
        return g * self.base.grad_p(q, p), g, -(g * self.base.grad_q(q, p)), dpt


jax.tree_util.register_dataclass(PoincareSystem, data_fields=["base", "monitor"], meta_fields=[])


def init_extended(sys, q0, p0, t0: float = 0.0) -> ExtendedState:
    """Extended state ``((q0, t0), (p0, -H(q0, p0)))`` on the zero level set.

    ``sys`` may be the base system or a :class:`PoincareSystem` wrapping it.
    """
    if isinstance(sys, PoincareSystem):
        sys = sys.base
    s = phase_state(q0, p0)
    H = float(sys.hamiltonian(s.q, s.p))
    if not np.isfinite(H):
        raise ValueError(f"Hamiltonian is not finite at q={s.q}, p={s.p}")
    return ExtendedState(s.q, float(t0), s.p, -H)


def _unpack(x):
    return (jnp.asarray(x.q, dtype=float), jnp.asarray(x.qt, dtype=float),
            jnp.asarray(x.p, dtype=float), jnp.asarray(x.pt, dtype=float))


def extended_hamiltonian(sys: PoincareSystem, x: ExtendedState) -> float:
    q, qt, p, pt = _unpack(x)
    g = float(sys.monitor.partials(q, p, pt)[0])
    if not (np.isfinite(g) and g > 0):
        raise MonitorPositivityError(f"{sys.monitor.name} monitor is not positive (g = {g})")
    return g * float(sys.energy_offset(q, p, pt))


def extended_vector_field(sys: PoincareSystem, x: ExtendedState):
    """``(qbar_dot, pbar_dot)`` as numpy vectors of length ``n + 1``."""
    dq, dqt, dp, dpt = sys.vector_field(*_unpack(x))
    qdot = np.concatenate([np.asarray(dq, dtype=float).reshape(-1), [float(dqt)]])
    pdot = np.concatenate([np.asarray(dp, dtype=float).reshape(-1), [float(dpt)]])
    return qdot, pdot


def degeneracy_block(sys: PoincareSystem, x: ExtendedState):
    """Momentum block of the extended Hessian and its determinant.

    ``dH/dp grad_p g^T + g d2H/dp2 + grad_p g dH/dp^T``; a nonzero determinant
    is what the implicit momentum solve of the one-step maps relies on.
    """
    q, qt, p, pt = _unpack(x)
    g, _, gp, _ = sys.monitor.partials(q, p, pt)
    Hp = jnp.asarray(sys.base.grad_p(q, p))
    gp = jnp.broadcast_to(jnp.asarray(gp, dtype=float), Hp.shape)
    block = jnp.outer(Hp, gp) + g * jnp.asarray(sys.base.hess_pp(q, p)) + jnp.outer(gp, Hp)
    block = np.asarray(block, dtype=float)
    return block, float(np.linalg.det(block))


def extended_momentum_hessian(sys: PoincareSystem, x: ExtendedState) -> np.ndarray:
    """Full ``(n+1) x (n+1)`` Hessian of ``Hbar`` in ``pbar``, by forward-mode AD."""
    q, qt, p, pt = _unpack(x)
    n = q.shape[0]

    def hbar(pbar):
        return sys.hamiltonian(q, qt, pbar[:n], pbar[n])

    pbar = jnp.concatenate([p, pt[None]])
    return np.asarray(jax.jacfwd(jax.grad(hbar))(pbar))
