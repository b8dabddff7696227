"""Adaptive symplectic Euler-B on the transformed system.

``pbar_1 = pbar_0 - h dHbar/dqbar(qbar_0, pbar_1)`` and
``qbar_1 = qbar_0 + h dHbar/dpbar(qbar_0, pbar_1)``.  ``p^t`` is copied, the
momentum equation is solved by Newton, and the position and physical time
updates are explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp

from ..core.newton import NewtonConfig, newton_iterate
from ..poincare import ExtendedState, PoincareSystem
from .base import OK, NEWTON_FAILED, StepOutput, Stepper, finalize, run_step, StepResult


@dataclass(frozen=True)
class EulerB(Stepper):
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    name = "euler-b"

    def step(self, sys: PoincareSystem, x: ExtendedState, h) -> StepOutput:
        q0, qt0, p0, pt0 = x
        base, mon = sys.base, sys.monitor
        if base.separable and mon.p_independent and not mon.pt_dependent:
            g, gq, _, _ = mon.partials(q0, p0, pt0)
            dV = base.grad_potential(q0)
            V = base.potential(q0)
            n = q0.shape[0]

            def residual(p1):
                return p1 - p0 + h * (g * dV + gq * (base.kinetic(p1) + V + pt0))

            def jacobian(p1):
                return jnp.eye(n) + h * jnp.outer(gq, base.minv(p1))

            sol = newton_iterate(residual, jacobian, p0, self.newton)
            p1 = sol.x
            dt = h * g
            q1 = q0 + dt * base.minv(p1)
        else:
            g = mon.partials(q0, p0, pt0)[0]

            def residual(p1):
                return p1 - p0 - h * sys.vector_field(q0, qt0, p1, pt0)[2]

            sol = newton_iterate(residual, jax.jacfwd(residual), p0, self.newton)
            p1 = sol.x
            dq, dqt, _, _ = sys.vector_field(q0, qt0, p1, pt0)
            q1 = q0 + h * dq
            dt = h * dqt
        status = jnp.where(sol.converged, OK, NEWTON_FAILED)
        return finalize(x, q1, dt, p1, jnp.asarray(g, dtype=float), sol.iterations, status)


def euler_b_adaptive_step(sys: PoincareSystem, x0: ExtendedState, h: float,
                          cfg: NewtonConfig = NewtonConfig()) -> StepResult:
    return run_step(EulerB(cfg), sys, x0, h)
