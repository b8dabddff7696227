"""Hamiltonian Taylor variational integrators on the transformed system.

The discrete right Hamiltonian is assembled from Taylor expansions of the
extended flow:

1. solve ``pi_p Psi_h^(r)(qbar_0, pt_0) = pbar_1`` for the initial momentum
   ``pt_0`` of the expansion (its time component is ``p^t_1`` exactly);
2. stages ``xbar_i = Psi_{c_i h}^(r)(qbar_0, pt_0)`` at the quadrature nodes and
   the boundary term ``qt_1 = pi_q Psi_h^(r+1)(qbar_0, pt_0)``;
3. ``Hd(qbar_0, pbar_1) = pbar_1 . qt_1 - h sum_i b_i [pbar_i . dHbar/dpbar(xbar_i) - Hbar(xbar_i)]``.

The map follows from ``pbar_0 = D1 Hd`` (solved for ``p_1`` by Newton) and
``qbar_1 = D2 Hd`` (explicit).  Both derivatives come from forward-mode
differentiation of the assembly at the converged ``pt_0``, with the inner
solve differentiated through the implicit function theorem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import jax
import jax.numpy as jnp
import numpy as np

from ..core.linalg import gauss_solve
from ..core.newton import NewtonConfig, NewtonError, newton_iterate_fused
from ..poincare import ExtendedState, PoincareSystem
from .base import (INNER_NEWTON_FAILED, NEWTON_FAILED, OK, StepOutput, Stepper, StepResult,
                   finalize, monitor_value, run_step)
from .taylor import evaluate_polynomial, flow_coefficients, increment_polynomial


@dataclass(frozen=True)
class Quadrature:
    nodes: Tuple[float, ...]
    weights: Tuple[float, ...]
    order: int


def quadrature(nodes, weights, order: int) -> Quadrature:
    nodes = tuple(float(c) for c in nodes)
    weights = tuple(float(b) for b in weights)
    if len(nodes) != len(weights) or not nodes:
        raise ValueError("need as many weights as nodes, at least one")
    if abs(sum(weights) - 1.0) > 1e-14:
        raise ValueError("quadrature weights must sum to 1")
    if any(not 0.0 <= c <= 1.0 for c in nodes) or list(nodes) != sorted(nodes):
        raise ValueError("nodes must be ascending in [0, 1]")
    return Quadrature(nodes, weights, int(order))


LEFT_RECTANGLE = quadrature([0.0], [1.0], 1)
SIMPSON = quadrature([0.0, 0.5, 1.0], [1 / 6, 2 / 3, 1 / 6], 4)


@dataclass(frozen=True)
class HtviScheme:
    """Taylor order ``r``, quadrature rule and the field the expansions follow.

    ``expansion="reduced"`` expands (and takes stage velocities from) the
    level-set form ``(g dH/dp, g, -g dH/dq, 0)``; ``"full"`` uses the complete
    transformed field.  Both agree on ``Hbar = 0`` and both give a symplectic
    map, since the map is generated by ``Hd`` whatever approximations went into it.
    """
    taylor_order: int
    quadrature: Quadrature
    expansion: str = "reduced"

    def __post_init__(self):
        if not 0 <= self.taylor_order <= 3:
            raise ValueError("Taylor order must lie in [0, 3]")
        if self.expansion not in ("reduced", "full"):
            raise ValueError("expansion must be 'reduced' or 'full'")

    @property
    def reduced(self) -> bool:
        return self.expansion == "reduced"

    @property
    def order(self) -> int:
        return min(self.taylor_order + 1, self.quadrature.order)


EULER_B_SCHEME = HtviScheme(0, LEFT_RECTANGLE)
HTVI4 = HtviScheme(3, SIMPSON)
HTVI4_FULL = HtviScheme(3, SIMPSON, "full")


def _momentum_map(sys, scheme, z, w, h):
    n = z.shape[0] - 1
    r = scheme.taylor_order
    _, _, cp, _ = flow_coefficients(sys, z[:n], z[n], w[:n], w[n], r, scheme.reduced)
    return evaluate_polynomial(cp, h, r)


def _assembly(sys, scheme, z, w, h):
    """``(P, Q, S)`` and the physical-time increment of the boundary term."""
    n = z.shape[0] - 1
    r = scheme.taylor_order
    cq, cqt, cp, cpt = flow_coefficients(sys, z[:n], z[n], w[:n], w[n], r + 1, scheme.reduced)
    field = sys.level_set_vector_field if scheme.reduced else sys.vector_field
    P = evaluate_polynomial(cp, h, r)
    Qb = evaluate_polynomial(cq, h, r + 1)
    qt_inc = increment_polynomial(cqt, h, r + 1)
    S = 0.0
    for c, b in zip(scheme.quadrature.nodes, scheme.quadrature.weights):
        tau = c * h
        xs = tuple(evaluate_polynomial(k, tau, r) for k in (cq, cqt, cp, cpt))
        dq, dqt, _, _ = field(*xs)
        S = S + b * ((xs[2] * dq).sum() + xs[3] * dqt - sys.hamiltonian(*xs))
    Q = jnp.concatenate([Qb, (z[n] + qt_inc)[None]])
    return P, Q, S, qt_inc


def _inner_solve(sys, scheme, z, pbar1, h, cfg):
    n = z.shape[0] - 1

    def residual(wb):
        res = _momentum_map(sys, scheme, z, jnp.concatenate([wb, pbar1[n:]]), h) - pbar1[:n]
        return res, res

    def evaluate(wb):
        J, res = jax.jacfwd(residual, has_aux=True)(wb)
        return res, J, ()

    sol, _ = newton_iterate_fused(evaluate, pbar1[:n], cfg)
    return jnp.concatenate([sol.x, pbar1[n:]]), sol


def _legendre(sys, scheme, z, pbar1, h, cfg):
    """``D1 Hd``, the new base position and the physical-time increment."""
    n = z.shape[0] - 1
    w, inner = _inner_solve(sys, scheme, z, pbar1, h, cfg)

    def packed(u):
        P, Q, S, qt_inc = _assembly(sys, scheme, u[:n + 1], u[n + 1:], h)
        out = jnp.concatenate([P, Q, S[None]])
        return out, (out, qt_inc)

    J, (vals, qt_inc) = jax.jacfwd(packed, has_aux=True)(jnp.concatenate([z, w]))
    Q = vals[n:2 * n + 1]
    Pz, Pw = J[:n, :n + 1], J[:n, n + 1:]
    Qz, Qw = J[n:2 * n + 1, :n + 1], J[n:2 * n + 1, n + 1:]
    Sz, Sw = J[2 * n + 1, :n + 1], J[2 * n + 1, n + 1:]
    lam = Qw.T @ pbar1 - h * Sw
    mu, solved = gauss_solve(Pw[:, :n].T, lam[:n])
    D1 = Qz.T @ pbar1 - h * Sz - Pz.T @ mu
    q1 = Q[:n] + mu
    dt = qt_inc + lam[n] - mu @ Pw[:, n]
    ok = inner.converged & solved
    return D1, q1, dt, ok


@dataclass(frozen=True)
class Htvi(Stepper):
    scheme: HtviScheme = HTVI4
    newton: NewtonConfig = field(default_factory=NewtonConfig)

    @property
    def name(self):
        s = self.scheme
        if s.taylor_order == 3 and s.quadrature == SIMPSON:
            return "htvi4" if s.reduced else "htvi4-full"
        return f"htvi(r={s.taylor_order}, {s.expansion})"

    def step(self, sys: PoincareSystem, x: ExtendedState, h) -> StepOutput:
        q0, qt0, p0, pt0 = x
        z = jnp.concatenate([q0, qt0[None]])
        cfg = self.newton

        n = q0.shape[0]

        def one(p1):
            D1, q1, dt, ok = _legendre(sys, self.scheme, z, jnp.concatenate([p1, pt0[None]]), h, cfg)
            return jnp.where(ok, D1[:n] - p0, jnp.nan), q1, dt, ok

        def evaluate(p1):
            # residual at p1 and its central-difference Jacobian in one batched call
            delta = cfg.fd_step * jnp.maximum(1.0, jnp.linalg.norm(p1))
            E = delta * jnp.eye(n)
            res, q1, dt, ok = jax.vmap(one)(jnp.concatenate([p1[None], p1 + E, p1 - E]))
            J = ((res[1:n + 1] - res[n + 1:]) / (2 * delta)).T
            return res[0], J, (q1[0], dt[0], ok[0])

        g0 = monitor_value(sys, x)
        if sys.base.separable:
            guess = p0 - h * g0 * sys.base.grad_potential(q0)
        else:
            guess = p0
        sol, (q1, dt, ok) = newton_iterate_fused(evaluate, guess, cfg)
        status = jnp.where(~sol.converged, NEWTON_FAILED, jnp.where(ok, OK, INNER_NEWTON_FAILED))
        return finalize(x, q1, dt, sol.x, g0, sol.iterations, status)


def htvi_step(sys: PoincareSystem, scheme: HtviScheme, x0: ExtendedState, h: float,
              cfg: NewtonConfig = NewtonConfig()) -> StepResult:
    return run_step(Htvi(scheme, cfg), sys, x0, h)


def _hd_impl(sys, scheme, cfg, qbar0, pbar1, h):
    w, inner = _inner_solve(sys, scheme, qbar0, pbar1, h, cfg)
    _, Q, S, _ = _assembly(sys, scheme, qbar0, w, h)
    return pbar1 @ Q - h * S, inner.converged, inner.residual_norm, inner.iterations


_hd_jit = jax.jit(_hd_impl, static_argnums=(1, 2))


def htvi_discrete_hamiltonian(sys: PoincareSystem, scheme: HtviScheme, qbar0, pbar1, h: float,
                              cfg: NewtonConfig = NewtonConfig()) -> float:
    """Value of the discrete right Hamiltonian ``Hd(qbar_0, pbar_1; h)``."""
    qbar0 = jnp.asarray(qbar0, dtype=float)
    pbar1 = jnp.asarray(pbar1, dtype=float)
    val, ok, norm, its = _hd_jit(sys, scheme, cfg, qbar0, pbar1, jnp.asarray(h, dtype=float))
    if not bool(ok):
        raise NewtonError("inner Taylor momentum solve did not converge", float(norm), int(its))
    return float(val)


def htvi_legendre(sys: PoincareSystem, scheme: HtviScheme, qbar0, pbar1, h: float,
                  cfg: NewtonConfig = NewtonConfig()):
    """``(D1 Hd, D2 Hd)`` at ``(qbar_0, pbar_1)``, mainly for checking against finite differences."""
    D1, q1, dt, ok = _legendre_jit(sys, scheme, cfg, jnp.asarray(qbar0, dtype=float),
                                   jnp.asarray(pbar1, dtype=float), jnp.asarray(h, dtype=float))
    if not bool(ok):
        raise NewtonError("inner Taylor momentum solve did not converge")
    qbar0 = np.asarray(qbar0, dtype=float)
    return np.asarray(D1), np.concatenate([np.asarray(q1), [qbar0[-1] + float(dt)]])


_legendre_jit = jax.jit(lambda sys, scheme, cfg, z, pb, h: _legendre(sys, scheme, z, pb, h, cfg),
                        static_argnums=(1, 2))
