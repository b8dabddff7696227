"""Classical fixed-step methods on the base system.

They ignore the monitor: the physical step equals the fictive step, ``q^t``
advances by ``h`` and ``p^t`` is carried along unchanged, which lets them run
through the same driver as the adaptive maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from ..core.system import PhaseState, SeparableSystem, phase_state
from ..poincare import ExtendedState, PoincareSystem
from .base import OK, StepOutput, Stepper, finalize


def _require_separable(sys):
    if not getattr(sys, "separable", False):
        raise TypeError("fixed-step reference methods need a separable system")


def symplectic_euler_b(base: SeparableSystem, q, p, h):
    p1 = p - h * base.grad_potential(q)
    return q + h * base.minv(p1), p1


def stormer_verlet(base: SeparableSystem, q, p, h):
    p_half = p - 0.5 * h * base.grad_potential(q)
    q1 = q + h * base.minv(p_half)
    return q1, p_half - 0.5 * h * base.grad_potential(q1)


def explicit_euler(base, q, p, h):
    return q + h * base.grad_p(q, p), p - h * base.grad_q(q, p)


class _FixedStepper(Stepper):
    adaptive = False
    _map = None

    def step(self, sys: PoincareSystem, x: ExtendedState, h) -> StepOutput:
        _require_separable(sys.base)
        q1, p1 = type(self)._map(sys.base, x.q, x.p, h)
        return finalize(x, q1, h * jnp.ones_like(x.qt), p1, jnp.ones_like(x.qt), 0, OK)


@dataclass(frozen=True)
class SymplecticEulerFixed(_FixedStepper):
    name = "euler-b-fixed"
    _map = staticmethod(symplectic_euler_b)


@dataclass(frozen=True)
class StormerVerletFixed(_FixedStepper):
    name = "stormer-verlet"
    _map = staticmethod(stormer_verlet)


@dataclass(frozen=True)
class ExplicitEulerFixed(_FixedStepper):
    name = "explicit-euler"
    _map = staticmethod(explicit_euler)


def _phase_step(fn, sys, s, h) -> PhaseState:
    _require_separable(sys)
    s = phase_state(*s)
    q1, p1 = fn(sys, jnp.asarray(s.q), jnp.asarray(s.p), h)
    return PhaseState(np.asarray(q1), np.asarray(p1))


def stormer_verlet_step(sys: SeparableSystem, s: PhaseState, h: float) -> PhaseState:
    """Half kick, drift, half kick."""
    return _phase_step(stormer_verlet, sys, s, h)


def symplectic_euler_b_step(sys: SeparableSystem, s: PhaseState, h: float) -> PhaseState:
    """Classical symplectic Euler-B: kick with the old position, then drift."""
    return _phase_step(symplectic_euler_b, sys, s, h)


def explicit_euler_step(sys, s: PhaseState, h: float) -> PhaseState:
    return _phase_step(explicit_euler, sys, s, h)
