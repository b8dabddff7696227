"""Test systems with analytic derivatives and exact reference solutions.

Units are chosen so that the Kepler orbit has gravitational parameter 1 and
semi-major axis 1: the energy is -1/2 for every eccentricity and the period is
2*pi.  Orbits start at perihelion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import jax
import numpy as np

from .core.system import PhaseState, SeparableSystem, phase_state


class SingularityError(ValueError):
    pass


@dataclass(frozen=True)
class KeplerProblem(SeparableSystem):
    """Planar two-body problem ``H = |p|^2/2 - 1/|q|``."""

    eccentricity: float = 0.0
    n: int = field(default=2, init=False, repr=False)

    def hamiltonian(self, q, p):
        return 0.5 * (p * p).sum(-1) - ((q * q).sum(-1)) ** -0.5

    def potential(self, q):
        return -((q * q).sum(-1)) ** -0.5

    def grad_potential(self, q):
        r2 = (q * q).sum(-1)
        return q * r2 ** -1.5

    def hessvec_potential(self, q, v):
        r2 = (q * q).sum(-1)
        return v * r2 ** -1.5 - 3.0 * q * ((q * v).sum(-1) * r2 ** -2.5)

    def hess_potential(self, q):
        q = _regular_point(q)
        r2 = q @ q
        return np.eye(q.size) * r2 ** -1.5 - 3.0 * np.outer(q, q) * r2 ** -2.5

    def third_potential(self, q):
        q = _regular_point(q)
        r2 = q @ q
        eye = np.eye(q.size)
        sym = np.einsum("ij,k->ijk", eye, q) + np.einsum("ik,j->ijk", eye, q) + np.einsum("jk,i->ijk", eye, q)
        return -3.0 * sym * r2 ** -2.5 + 15.0 * np.einsum("i,j,k->ijk", q, q, q) * r2 ** -3.5

    def initial_conditions(self) -> PhaseState:
        return kepler_initial_conditions(self.eccentricity)

    def reference_state(self, t: float) -> PhaseState:
        return kepler_reference_state(t, self.eccentricity)

    def angular_momentum(self, q, p):
        return q[..., 0] * p[..., 1] - q[..., 1] * p[..., 0]


@dataclass(frozen=True)
class HarmonicOscillator(SeparableSystem):
    """``H = (|p|^2 + |q|^2) / 2``; the flow is a rotation in each (q_i, p_i) plane."""

    n: int = 1

    def hamiltonian(self, q, p):
        return 0.5 * ((p * p).sum(-1) + (q * q).sum(-1))

    def potential(self, q):
        return 0.5 * (q * q).sum(-1)

    def grad_potential(self, q):
        return 1.0 * q

    def hessvec_potential(self, q, v):
        return 1.0 * v

    def hess_potential(self, q):
        return np.eye(self.n)

    def third_potential(self, q):
        return np.zeros((self.n,) * 3)

    def initial_conditions(self) -> PhaseState:
        q = np.zeros(self.n)
        q[0] = 1.0
        return PhaseState(q, np.zeros(self.n))

    def reference_state(self, t: float) -> PhaseState:
        s0 = self.initial_conditions()
        return self.exact_flow(s0.q, s0.p, t)

    @staticmethod
    def exact_flow(q0, p0, t) -> PhaseState:
        c, s = math.cos(t), math.sin(t)
        q0 = np.asarray(q0, dtype=float)
        p0 = np.asarray(p0, dtype=float)
        return PhaseState(c * q0 + s * p0, -s * q0 + c * p0)


@dataclass(frozen=True)
class FreeParticle(SeparableSystem):
    """``H = |p|^2 / 2``."""

    n: int = 1

    def potential(self, q):
        return 0.0 * (q * q).sum(-1)

    def grad_potential(self, q):
        return 0.0 * q

    def hessvec_potential(self, q, v):
        return 0.0 * v

    def hess_potential(self, q):
        return np.zeros((self.n, self.n))

    def third_potential(self, q):
        return np.zeros((self.n,) * 3)

    def initial_conditions(self) -> PhaseState:
        return PhaseState(np.zeros(self.n), np.ones(self.n))

    def reference_state(self, t: float) -> PhaseState:
        s0 = self.initial_conditions()
        return PhaseState(s0.q + t * s0.p, s0.p.copy())


jax.tree_util.register_dataclass(KeplerProblem, data_fields=["eccentricity"], meta_fields=[])
jax.tree_util.register_dataclass(HarmonicOscillator, data_fields=[], meta_fields=["n"])
jax.tree_util.register_dataclass(FreeParticle, data_fields=[], meta_fields=["n"])


def _regular_point(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if not np.any(q):
        raise SingularityError("Kepler potential is singular at q = 0 (collision)")
    return q


def _check_eccentricity(e: float) -> float:
    e = float(e)
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must lie in [0, 1), got {e}")
    return e


def kepler_initial_conditions(e: float) -> PhaseState:
    """Perihelion state of the unit-energy orbit with eccentricity ``e``."""
    e = _check_eccentricity(e)
    return phase_state([1.0 - e, 0.0], [0.0, math.sqrt((1.0 + e) / (1.0 - e))])


def kepler_equation_solve(mean_anomaly: float, e: float, tol: float = 1e-14) -> float:
    """Eccentric anomaly ``E`` with ``E - e sin E = mean_anomaly``.

    Newton from ``M + e sin M`` inside the bracket ``[M - e, M + e]``, with a
    bisection step whenever the Newton iterate leaves the bracket.
    """
    e = _check_eccentricity(e)
    turns = round(mean_anomaly / (2.0 * math.pi))
    M = mean_anomaly - 2.0 * math.pi * turns
    lo, hi = M - e, M + e
    E = M + e * math.sin(M)
    for _ in range(200):
        f = E - e * math.sin(E) - M
        if abs(f) <= tol:
            break
        if f < 0.0:
            lo = E
        else:
            hi = E
        step = E - f / (1.0 - e * math.cos(E))
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if step == E:
            break
        E = step
    return E + 2.0 * math.pi * turns


def kepler_reference_state(t: float, e: float) -> PhaseState:
    """Exact state at time ``t`` on the orbit started by :func:`kepler_initial_conditions`."""
    E = kepler_equation_solve(t, e)
    c, s = math.cos(E), math.sin(E)
    b = math.sqrt(1.0 - e * e)
    rate = 1.0 / (1.0 - e * c)
    return PhaseState(np.array([c - e, b * s]), np.array([-s * rate, b * c * rate]))


class DerivativeBundle(NamedTuple):
    potential: Callable
    gradient: Callable
    hessian: Callable
    third: Callable


def derivative_bundle(problem: SeparableSystem) -> DerivativeBundle:
    """Eager numpy evaluators for ``V`` and its first three derivatives."""

    def checked(fn):
        def wrapper(q):
            q = np.asarray(q, dtype=float)
            if isinstance(problem, KeplerProblem):
                _regular_point(q)
            return np.asarray(fn(q))

        return wrapper

    return DerivativeBundle(
        checked(problem.potential),
        checked(problem.grad_potential),
        checked(problem.hess_potential),
        checked(problem.third_potential),
    )
