"""Shared step-map plumbing.

A stepper is a small frozen (hashable) object whose ``step(sys, x, h)`` is
traceable by JAX and returns a :class:`StepOutput`.  Failures are reported
through ``status`` so steps can run inside compiled loops; the eager wrappers
turn a bad status into :class:`StepError`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from ..poincare import ExtendedState, PoincareSystem

OK = 0
NEWTON_FAILED = 1
INNER_NEWTON_FAILED = 2
NOT_POSITIVE = 3
NOT_FINITE = 4

STATUS_MESSAGES = {
    OK: "ok",
    NEWTON_FAILED: "Newton iteration for the new momentum did not converge",
    INNER_NEWTON_FAILED: "inner Newton solve of the Taylor momentum map did not converge",
    NOT_POSITIVE: "monitor function is not positive",
    NOT_FINITE: "step produced non-finite values",
}

G_FLOOR = 1e-14


class StepError(RuntimeError):
    def __init__(self, status: int, detail: str = ""):
        msg = STATUS_MESSAGES.get(int(status), f"status {status}")
        super().__init__(f"{msg}{': ' + detail if detail else ''}")
        self.status = int(status)


class StepOutput(NamedTuple):
    state: ExtendedState
    dt: jax.Array          # physical time increment q^t_1 - q^t_0
    g: jax.Array           # monitor value at the start of the step
    iterations: jax.Array
    status: jax.Array


@dataclass(frozen=True)
class StepResult:
    state: ExtendedState
    h_fictive: float
    h_physical: float
    newton_iterations: int


def as_state(x) -> ExtendedState:
    return ExtendedState(jnp.asarray(x.q, dtype=float), jnp.asarray(x.qt, dtype=float),
                         jnp.asarray(x.p, dtype=float), jnp.asarray(x.pt, dtype=float))


def finalize(x0: ExtendedState, q1, dt, p1, g0, iterations, status):
    """Assemble a :class:`StepOutput`, folding positivity/finiteness checks into ``status``."""
    finite = jnp.all(jnp.isfinite(q1)) & jnp.all(jnp.isfinite(p1)) & jnp.isfinite(dt)
    # a degenerate monitor explains any solver failure that follows from it
    status = jnp.where(~(jnp.isfinite(g0) & (g0 > G_FLOOR)), NOT_POSITIVE,
                       jnp.where(status != OK, status, jnp.where(finite, OK, NOT_FINITE)))
    state = ExtendedState(q1, x0.qt + dt, p1, x0.pt)
    return StepOutput(state, dt, g0, jnp.asarray(iterations), status)


def monitor_value(sys: PoincareSystem, x: ExtendedState):
    return jnp.asarray(sys.monitor.partials(x.q, x.p, x.pt)[0], dtype=float)


class Stepper:
    name = "stepper"
    adaptive = True

    def step(self, sys: PoincareSystem, x: ExtendedState, h) -> StepOutput:
        raise NotImplementedError


def _step_impl(stepper, sys, x, h):
    return stepper.step(sys, x, h)


step_jit = jax.jit(_step_impl, static_argnums=0)


def run_step(stepper: Stepper, sys: PoincareSystem, x0: ExtendedState, h: float) -> StepResult:
    """Eagerly apply one step, raising :class:`StepError` on failure."""
    out = step_jit(stepper, sys, as_state(x0), jnp.asarray(h, dtype=float))
    if int(out.status) != OK:
        raise StepError(int(out.status), f"h={h}, state={tuple(np.asarray(v) for v in x0)}")
    state = ExtendedState(*(np.asarray(v) for v in out.state))
    return StepResult(state, float(h), float(out.dt), int(out.iterations))
