"""Experiment drivers behind the command-line interface."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, TextIO

import jax.numpy as jnp
import numpy as np

from ..integrators import (HTVI4, HTVI4_FULL, DriverConfig, EulerB, ExplicitEulerFixed, Htvi,
                           IntegrationError, StormerVerletFixed, SymplecticEulerFixed, integrate)
from ..integrators.base import OK, StepError, as_state, step_jit
from ..monitors import make_monitor
from ..poincare import ExtendedState, PoincareSystem, init_extended
from ..problems import FreeParticle, HarmonicOscillator, KeplerProblem
from .config import ConfigError, RunConfig, load_config
from .csvio import CsvWriter

PRESET_DIR = Path(__file__).parent / "presets"


@dataclass
class Setup:
    base: object
    system: PoincareSystem
    stepper: object
    x0: ExtendedState


def make_problem(cfg: RunConfig):
    if cfg.problem == "kepler":
        return KeplerProblem(cfg.ecc)
    if cfg.problem == "harmonic":
        return HarmonicOscillator(cfg.dim)
    return FreeParticle(cfg.dim)


def make_stepper(cfg: RunConfig):
    return {
        "euler-b": lambda: EulerB(),
        "htvi4": lambda: Htvi(HTVI4 if cfg.expansion == "reduced" else HTVI4_FULL),
        "euler-b-fixed": SymplecticEulerFixed,
        "stormer-verlet": StormerVerletFixed,
        "explicit-euler": ExplicitEulerFixed,
    }[cfg.integrator]()


def build(cfg: RunConfig) -> Setup:
    cfg.validate()
    base = make_problem(cfg)
    s = base.initial_conditions()
    H0 = float(base.hamiltonian(jnp.asarray(s.q), jnp.asarray(s.p)))
    bounds = cfg.bounds
    try:
        mon = make_monitor(cfg.monitor, base, h=cfg.h, tol=cfg.tol, gamma=cfg.gamma, H0=H0,
                           g_min=bounds[0] if bounds else None, g_max=bounds[1] if bounds else None,
                           fourth_root=cfg.fourth_root)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    system = PoincareSystem(base, mon)
    return Setup(base, system, make_stepper(cfg), init_extended(base, s.q, s.p))


def global_error(base, state) -> float:
    """Euclidean (q, p) distance to the analytic solution at the state's physical time."""
    ref = base.reference_state(float(state.qt))
    return float(np.linalg.norm(np.concatenate([np.ravel(state.q) - ref.q, np.ravel(state.p) - ref.p])))


@dataclass
class RunSummary:
    label: str
    integrator: str
    monitor: str
    h: float
    steps: int
    max_energy_error: float
    global_error: float
    min_dt: float
    max_dt: float
    min_g: float
    max_g: float
    energy_drift_slope: float
    final_time: float
    newton_iterations: int
    wall_time: float

    HEADER = ("label", "integrator", "monitor", "h", "steps", "min_dt", "max_dt", "min_g", "max_g",
              "energy_error", "global_error", "time_s")

    def row(self) -> str:
        return (f"{self.label:<18} {self.integrator:<14} {self.monitor:<10} {self.h:<8.3g} "
                f"{self.steps:>9d} {self.min_dt:10.3e} {self.max_dt:10.3e} {self.min_g:10.3e} "
                f"{self.max_g:10.3e} {self.max_energy_error:10.3e} {self.global_error:10.3e} "
                f"{self.wall_time:8.2f}")

    @classmethod
    def header(cls) -> str:
        return (f"{'label':<18} {'integrator':<14} {'monitor':<10} {'h':<8} {'steps':>9} {'min_dt':>10} "
                f"{'max_dt':>10} {'min_g':>10} {'max_g':>10} {'energy_err':>10} {'global_err':>10} "
                f"{'time_s':>8}")


def _label(cfg: RunConfig) -> str:
    if cfg.label:
        return cfg.label
    return f"{cfg.integrator}/{cfg.monitor}"


def summarize(cfg: RunConfig, setup: Setup, traj) -> RunSummary:
    return RunSummary(_label(cfg), setup.stepper.name, cfg.monitor, cfg.h, traj.steps,
                      traj.max_energy_error, global_error(setup.base, traj.final_state),
                      traj.min_dt, traj.max_dt, traj.min_g, traj.max_g, traj.energy_drift_slope,
                      traj.final_time, traj.newton_iterations, traj.wall_time)


def cmd_run(cfg: RunConfig, out: Optional[TextIO] = None, record: bool = False,
            driver: Optional[DriverConfig] = None):
    """Integrate one configuration; returns ``(RunSummary, Trajectory)``.

    With ``cfg.csv`` set, rows are streamed to the file as chunks complete, so
    a failed run still leaves the steps it managed on disk.
    """
    setup = build(cfg)
    driver = driver or DriverConfig(record=record, max_steps=cfg.max_steps)
    writer = None
    if cfg.csv:
        writer = CsvWriter(cfg.csv, setup.base.n)
        writer.write_initial(setup.x0)
    try:
        traj = integrate(setup.system, setup.stepper, setup.x0, cfg.h, cfg.t_end, driver, sink=writer)
    finally:
        if writer is not None:
            writer.close()
    summary = summarize(cfg, setup, traj)
    if out is not None:
        print(RunSummary.header(), file=out)
        print(summary.row(), file=out)
    return summary, traj


@dataclass
class ConvergenceResult:
    hs: np.ndarray
    errors: np.ndarray
    steps: np.ndarray
    slope: float


def fit_slope(hs, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    x, y = np.log(np.asarray(hs, float)), np.log(np.asarray(errors, float))
    return float(np.polyfit(x, y, 1)[0])


def cmd_convergence(cfg: RunConfig, hs: Sequence[float], out: Optional[TextIO] = None) -> ConvergenceResult:
    hs = [float(h) for h in hs]
    if len(hs) < 3:
        raise ConfigError("convergence study needs at least 3 step sizes")
    for a, b in zip(hs, hs[1:]):
        if not math.isclose(a, 2 * b, rel_tol=1e-9):
            raise ConfigError(f"each step size must halve the previous one ({a} -> {b})")
    errors, steps = [], []
    for h in hs:
        summary, _ = cmd_run(cfg.replace(h=h, csv=None))
        errors.append(summary.global_error)
        steps.append(summary.steps)
    if min(errors) <= 0:
        raise ConfigError("zero global error; cannot fit a slope")
    slope = fit_slope(hs, errors)
    if out is not None:
        print(f"{'h':>10} {'steps':>9} {'global_error':>14}", file=out)
        for h, n, e in zip(hs, steps, errors):
            print(f"{h:10.4g} {n:9d} {e:14.6e}", file=out)
        print(f"slope = {slope:.4f}", file=out)
    return ConvergenceResult(np.array(hs), np.array(errors), np.array(steps), slope)


def preset_names() -> List[str]:
    return sorted(p.name for p in PRESET_DIR.iterdir() if p.is_dir())


def load_preset(name: str) -> List[RunConfig]:
    folder = PRESET_DIR / name
    if not folder.is_dir():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return [load_config(p) for p in sorted(folder.glob("*.cfg"))]


@dataclass
class TableRow:
    config: RunConfig
    summary: Optional[RunSummary] = None
    error: Optional[str] = None


def _table_line(cells, widths):
    return " ".join(f"{c:>{w}}" for c, w in zip(cells, widths))


_TABLE_COLS = ("Method", "Monitor", "h", "min Step", "max Step", "min g", "max g", "Energy Error",
               "Global Error", "Steps", "Time", "ref Steps", "ref Global")
_TABLE_W = (14, 10, 8, 10, 10, 9, 9, 12, 12, 9, 8, 11, 12)


def cmd_table(preset: str, out: Optional[TextIO] = None, rows: Optional[Sequence[int]] = None,
              max_steps: Optional[int] = None) -> List[TableRow]:
    """Run every row of a preset; a failing row is reported and the rest still run."""
    configs = load_preset(preset)
    if rows is not None:
        configs = [configs[i] for i in rows]
    if out is not None:
        print(_table_line(_TABLE_COLS, _TABLE_W), file=out)
    result = []
    for cfg in configs:
        if max_steps is not None:
            cfg = cfg.replace(max_steps=max_steps)
        row = TableRow(cfg)
        try:
            row.summary, _ = cmd_run(cfg)
        except (IntegrationError, StepError, ArithmeticError, ValueError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        result.append(row)
        if out is not None:
            s = row.summary
            bounded = cfg.bounds is not None
            ref = (str(cfg.ref_steps) if cfg.ref_steps else "-",
                   f"{cfg.ref_global_error:.2e}" if cfg.ref_global_error else "-")
            if s is None:
                print(f"{cfg.label or cfg.integrator}: FAILED ({row.error})", file=out)
                continue
            cells = (s.integrator, cfg.monitor if cfg.monitor != "none" else "-", f"{cfg.h:.3g}",
                     f"{s.min_dt:.2e}", f"{s.max_dt:.2e}",
                     f"{cfg.bounds[0]:.3g}" if bounded else "-", f"{cfg.bounds[1]:.3g}" if bounded else "-",
                     f"{s.max_energy_error:.2e}", f"{s.global_error:.2e}", str(s.steps),
                     f"{s.wall_time:.1f}") + ref
            print(_table_line(cells, _TABLE_W), file=out)
    return result


# --- symplecticity ---------------------------------------------------------

def canonical_form(m: int) -> np.ndarray:
    """``[[0, I], [-I, 0]]`` for ``m`` position/momentum pairs."""
    I = np.eye(m)
    Z = np.zeros((m, m))
    return np.block([[Z, I], [-I, Z]])


def symplectic_deviation(J: np.ndarray) -> float:
    """``||J^T Omega J - Omega||`` in the induced infinity norm (max absolute row sum)."""
    m = J.shape[0] // 2
    W = canonical_form(m)
    return float(np.abs(J.T @ W @ J - W).sum(axis=1).max())


def _step_vector(stepper, system, n, h, v):
    x = ExtendedState(jnp.asarray(v[:n]), jnp.asarray(v[n]), jnp.asarray(v[n + 1:2 * n + 1]),
                      jnp.asarray(v[2 * n + 1]))
    out = step_jit(stepper, system, x, jnp.asarray(float(h)))
    if int(out.status) != OK:
        raise StepError(int(out.status), "during symplecticity check")
    s = out.state
    return np.concatenate([np.ravel(s.q), [float(s.qt)], np.ravel(s.p), [float(s.pt)]])


def step_jacobians(stepper, system, x: ExtendedState, h: float, fd_step: float = 1e-6):
    """Central-difference Jacobians of one step: extended ``(2n+2)`` and reduced ``(2n)``.

    The extended map acts on ``(q, q^t, p, p^t)``; the reduced map is
    ``(q, p) -> (q_1, p_1)`` at fixed ``q^t, p^t``.
    """
    n = int(np.size(x.q))
    v0 = np.concatenate([np.ravel(x.q), [float(x.qt)], np.ravel(x.p), [float(x.pt)]])
    m = v0.size
    J = np.empty((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = fd_step
        vp, vm = v0 + e, v0 - e
        # divide by the spacing actually represented, not 2 fd_step
        J[:, j] = (_step_vector(stepper, system, n, h, vp)
                   - _step_vector(stepper, system, n, h, vm)) / (vp[j] - vm[j])
    base_idx = np.r_[0:n, n + 1:2 * n + 1]
    return J, J[np.ix_(base_idx, base_idx)]


@dataclass
class SymplecticityResult:
    extended: float
    reduced: float
    per_state_extended: np.ndarray = field(repr=False)
    per_state_reduced: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)


def sample_states(base, samples: int, seed: int = 0):
    """Initialized states on the reference orbit: ``t = 0`` plus ``samples - 1`` seeded times."""
    rng = np.random.default_rng(seed)
    period = 2 * math.pi
    times = np.concatenate([[0.0], rng.uniform(0.0, period, max(samples - 1, 0))])[:samples]
    return [init_extended(base, *base.reference_state(float(t)), t0=float(t)) for t in times], times


def cmd_symplecticity(cfg: RunConfig, samples: int = 20, seed: int = 0,
                      out: Optional[TextIO] = None, fd_step: float = 1e-6) -> SymplecticityResult:
    setup = build(cfg)
    states, times = sample_states(setup.base, samples, seed)
    ext, red = [], []
    for x in states:
        J, Jr = step_jacobians(setup.stepper, setup.system, as_state(x), cfg.h, fd_step)
        ext.append(symplectic_deviation(J))
        red.append(symplectic_deviation(Jr))
    res = SymplecticityResult(max(ext), max(red), np.array(ext), np.array(red), times)
    if out is not None:
        print(f"{setup.stepper.name} / {cfg.monitor}, h = {cfg.h}, {samples} states: "
              f"extended {res.extended:.3e}, reduced {res.reduced:.3e}", file=out)
    return res
