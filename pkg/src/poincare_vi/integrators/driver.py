"""Trajectory driver: constant fictive step until the physical time hits ``t_end``.

Steps run inside a compiled ``lax.while_loop`` in chunks; each chunk writes
its accepted steps into preallocated buffers that the host drains into
running statistics, an optional in-memory record and an optional sink (used
for CSV streaming).  Physical time is accumulated with Kahan compensation so
``N`` steps of ``h`` land on ``N h`` without round-off drift.

When a full step would overshoot ``t_end``, the final fictive step is found
by a bracketed secant (Illinois) iteration on ``h``.  For a monitor that
depends on ``q`` only, Euler-B's ``dt = h g(q_0)`` is linear in ``h`` and the
first secant step is already exact.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Optional

import jax
import jax.numpy as jnp
import numpy as np

from ..poincare import ExtendedState, PoincareSystem, degeneracy_block
from .base import NOT_POSITIVE, OK, STATUS_MESSAGES, Stepper, as_state

log = logging.getLogger(__name__)

RUNNING, LANDED, OVERSHOT, FAILED, PROBED = range(5)


@dataclass(frozen=True)
class DriverConfig:
    chunk: int = 1 << 16
    max_steps: int = 10 ** 8
    landing_tol: float = 1e-10
    finish_tol: float = 1e-12
    finish_iterations: int = 60
    record: bool = True
    check_degeneracy: bool = False

    def __post_init__(self):
        if self.chunk < 1 or self.max_steps < 1:
            raise ValueError("chunk and max_steps must be positive")
        if not 0 < self.finish_tol <= self.landing_tol:
            raise ValueError("need 0 < finish_tol <= landing_tol")


class StepRecord(NamedTuple):
    step: int
    tau: float
    t: float
    h_fictive: float
    h_physical: float
    q: np.ndarray
    p: np.ndarray
    pt: float
    energy_error: float
    g: float
    newton_iterations: int


@dataclass
class TrajectoryChunk:
    """Accepted steps from one compiled call, as columns."""
    step: np.ndarray
    tau: np.ndarray
    t: np.ndarray
    h_fictive: np.ndarray
    h_physical: np.ndarray
    q: np.ndarray
    p: np.ndarray
    pt: np.ndarray
    energy_error: np.ndarray
    g: np.ndarray
    newton_iterations: np.ndarray

    def __len__(self):
        return len(self.step)


_COLUMNS = tuple(TrajectoryChunk.__dataclass_fields__)


@dataclass
class Trajectory:
    initial_state: ExtendedState
    H0: float
    h: float
    t_end: float
    stepper: str
    steps: int = 0
    final_state: Optional[ExtendedState] = None
    max_energy_error: float = 0.0
    min_dt: float = np.inf
    max_dt: float = -np.inf
    min_g: float = np.inf
    max_g: float = -np.inf
    newton_iterations: int = 0
    wall_time: float = 0.0
    columns: Optional[TrajectoryChunk] = None
    _chunks: list = field(default_factory=list, repr=False)
    _fit: np.ndarray = field(default_factory=lambda: np.zeros(5), repr=False)

    def __len__(self):
        return self.steps

    @property
    def final_time(self) -> float:
        return float(self.final_state.qt)

    @property
    def energy_drift_slope(self) -> float:
        """Least-squares slope of ``|H - H0|`` against ``t``, initial point included."""
        n, st, stt, se, ste = self._fit
        den = n * stt - st * st
        return float((n * ste - st * se) / den) if n > 1 and den > 0 else 0.0

    def records(self) -> Iterator[StepRecord]:
        if self.columns is None:
            raise ValueError("trajectory was run without recording")
        c = self.columns
        for i in range(len(c)):
            yield StepRecord(*(getattr(c, name)[i] for name in _COLUMNS))

    def __getitem__(self, i) -> StepRecord:
        if self.columns is None:
            raise ValueError("trajectory was run without recording")
        return StepRecord(*(getattr(self.columns, name)[i] for name in _COLUMNS))

    def _absorb(self, chunk: TrajectoryChunk, keep: bool):
        k = len(chunk)
        if k == 0:
            return
        self.steps += k
        e = chunk.energy_error
        self.max_energy_error = max(self.max_energy_error, float(e.max()))
        self.min_dt = min(self.min_dt, float(chunk.h_physical.min()))
        self.max_dt = max(self.max_dt, float(chunk.h_physical.max()))
        self.min_g = min(self.min_g, float(chunk.g.min()))
        self.max_g = max(self.max_g, float(chunk.g.max()))
        self.newton_iterations += int(chunk.newton_iterations.sum())
        t = chunk.t
        self._fit += (k, t.sum(), (t * t).sum(), e.sum(), (t * e).sum())
        if keep:
            self._chunks.append(chunk)

    def _seal(self):
        if self._chunks:
            self.columns = TrajectoryChunk(*(np.concatenate([getattr(c, n) for c in self._chunks])
                                             for n in _COLUMNS))
        self._chunks = []


class IntegrationError(RuntimeError):
    """A step failed or the budget ran out; ``trajectory`` holds what was done."""

    def __init__(self, message: str, trajectory: Trajectory, status: int = OK):
        super().__init__(message)
        self.trajectory = trajectory
        self.status = status


class StepBudgetError(IntegrationError):
    pass


class _Carry(NamedTuple):
    x: ExtendedState
    comp: jax.Array
    k: jax.Array
    flag: jax.Array
    status: jax.Array
    t_try: jax.Array
    bufs: tuple


def _advance(stepper, chunk, sys, x, comp, h, t_end, n_max, land_tol, probe):
    n = x.q.shape[0]
    bufs = (jnp.zeros((chunk, n)), jnp.zeros((chunk, n)), jnp.zeros(chunk), jnp.zeros(chunk),
            jnp.zeros(chunk), jnp.zeros(chunk), jnp.zeros(chunk, dtype=jnp.int32), jnp.zeros(chunk))

    def cond(c):
        return (c.k < n_max) & (c.flag == RUNNING)

    def body(c):
        out = stepper.step(sys, c.x, h)
        status = jnp.where((out.status == OK) & ~(out.dt > 0), NOT_POSITIVE, out.status)
        y = out.dt - c.comp
        t_new = c.x.qt + y
        comp = (t_new - c.x.qt) - y
        landed = jnp.abs(t_new - t_end) <= land_tol
        over = (t_new > t_end) & ~landed
        bad = status != OK
        accept = ~bad & ~over & ~probe
        flag = jnp.where(bad, FAILED, jnp.where(probe, PROBED, jnp.where(
            over, OVERSHOT, jnp.where(landed, LANDED, RUNNING))))
        x1 = ExtendedState(out.state.q, t_new, out.state.p, out.state.pt)
        x = jax.tree_util.tree_map(lambda a, b: jnp.where(accept, a, b), x1, c.x)
        H = sys.base.hamiltonian(out.state.q, out.state.p)
        row = (out.state.q, out.state.p, t_new, out.dt, out.g, H, out.iterations.astype(jnp.int32), out.state.pt)
        bufs = tuple(b.at[c.k].set(v) for b, v in zip(c.bufs, row))
        return _Carry(x, jnp.where(accept, comp, c.comp), c.k + accept.astype(c.k.dtype), flag,
                      status, t_new, bufs)

    init = _Carry(x, comp, jnp.asarray(0), jnp.asarray(RUNNING), jnp.asarray(OK),
                  jnp.asarray(x.qt), bufs)
    return jax.lax.while_loop(cond, body, init)


_advance_jit = jax.jit(_advance, static_argnums=(0, 1))


def _check_degeneracy(sys, x, where):
    try:
        _, det = degeneracy_block(sys, x)
    except Exception as exc:  # diagnostic only
        log.warning("degeneracy check failed at %s: %s", where, exc)
        return
    if not np.isfinite(det) or abs(det) < 1e-12:
        log.warning("momentum block is (near) singular at %s: det = %.3e", where, det)


def integrate(sys: PoincareSystem, stepper: Stepper, x0: ExtendedState, h: float, t_end: float,
              cfg: DriverConfig = DriverConfig(),
              sink: Optional[Callable[[TrajectoryChunk], None]] = None) -> Trajectory:
    """Integrate from ``x0`` with fictive step ``h`` until ``q^t = t_end``."""
    x = as_state(x0)
    t0 = float(x.qt)
    if not (np.isfinite(h) and h > 0):
        raise ValueError(f"fictive step must be positive, got {h}")
    if not (np.isfinite(t_end) and t_end > t0):
        raise ValueError(f"t_end = {t_end} must exceed the initial time {t0}")
    H0 = float(sys.base.hamiltonian(x.q, x.p))
    traj = Trajectory(ExtendedState(*(np.asarray(v) for v in x)), H0, float(h), float(t_end),
                      stepper.name)
    if cfg.check_degeneracy:
        _check_degeneracy(sys, x, "initial state")
    start = time.perf_counter()
    comp = jnp.asarray(0.0)
    tau = 0.0
    args = dict(t_end=jnp.asarray(float(t_end)), land_tol=jnp.asarray(cfg.landing_tol))

    def run(x, comp, h_now, n_max, probe):
        return _advance_jit(stepper, cfg.chunk, sys, x, comp, jnp.asarray(float(h_now)),
                            n_max=jnp.asarray(n_max), probe=jnp.asarray(probe), **args)

    def drain(c, h_now):
        nonlocal tau
        k = int(c.k)
        q, p, t, dt, g, H, its, pt = (np.asarray(b[:k]) for b in c.bufs)
        taus = tau + h_now * np.arange(1, k + 1)
        if k:
            tau = float(taus[-1])
        chunk = TrajectoryChunk(np.arange(traj.steps + 1, traj.steps + k + 1), taus, t,
                                np.full(k, float(h_now)), dt, q, p,
                                pt, np.abs(H - H0), g, its)
        traj._absorb(chunk, cfg.record)
        if sink is not None and k:
            sink(chunk)

    def finish(state, reason, status=OK, budget=False):
        traj.final_state = ExtendedState(*(np.asarray(v) for v in state))
        traj.wall_time = time.perf_counter() - start
        traj._seal()
        if reason:
            raise (StepBudgetError if budget else IntegrationError)(reason, traj, status)
        return traj

    while True:
        if cfg.check_degeneracy and traj.steps:
            _check_degeneracy(sys, x, f"step {traj.steps}")
        n_max = min(cfg.chunk, cfg.max_steps - traj.steps)
        if n_max <= 0:
            return finish(x, f"step budget of {cfg.max_steps} exhausted at t = {float(x.qt):.17g}",
                          budget=True)
        c = run(x, comp, h, n_max, False)
        drain(c, h)
        x, comp = c.x, c.comp
        flag = int(c.flag)
        if flag == LANDED:
            return finish(x, None)
        if flag == FAILED:
            status = int(c.status)
            return finish(x, f"{STATUS_MESSAGES.get(status, status)} at step {traj.steps + 1}, "
                             f"t = {float(x.qt):.17g}", status)
        if flag == OVERSHOT:
            break

    # bracketed secant on the fictive step: f(s) = t(s) - t_end, f(0) < 0 < f(h)
    a, fa = 0.0, float(x.qt - comp) - t_end
    b, fb = float(h), float(c.t_try) - t_end
    side = 0
    s = b
    for _ in range(cfg.finish_iterations):
        s = b - fb * (b - a) / (fb - fa)
        if not a < s < b:
            s = 0.5 * (a + b)
        probe = run(x, comp, s, 1, True)
        if int(probe.status) != OK:
            status = int(probe.status)
            return finish(x, f"finishing step failed: {STATUS_MESSAGES.get(status, status)}", status)
        fs = float(probe.t_try) - t_end
        if abs(fs) <= cfg.finish_tol:
            break
        if fs > 0:
            b, fb = s, fs
            if side == 1:
                fa *= 0.5
            side = 1
        else:
            a, fa = s, fs
            if side == -1:
                fb *= 0.5
            side = -1
    else:
        return finish(x, f"finishing step did not converge (|t - t_end| = {abs(fs):.3e})")
    c = run(x, comp, s, 1, False)
    drain(c, s)
    if int(c.flag) != LANDED:
        return finish(c.x, "finishing step did not land on t_end", int(c.status))
    return finish(c.x, None)
