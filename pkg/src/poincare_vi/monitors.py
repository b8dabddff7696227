"""Monitor functions ``g(q, p, p^t) = dt/dtau`` with analytic partials.

``partials`` returns ``(g, dg/dq, dg/dp, dg/dp^t)`` in generic arithmetic, so
it works on arrays inside compiled code and on jets inside the Taylor
recursions.  Monitors that are naturally a reciprocal ``g = 1/w`` also expose
``reciprocal_partials``; :class:`BoundedMonitor` uses that form so a vanishing
``w`` maps cleanly onto the upper bound.

The ``__call__``/``gradient`` methods are eager conveniences that raise
:class:`MonitorPositivityError` where ``g`` is not a positive finite number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np

from .core.jet import Jet
from .core.system import SeparableSystem


class MonitorPositivityError(ValueError):
    pass


def _zeros_like(x):
    if isinstance(x, Jet):
        return 0.0 * x
    return jnp.zeros_like(jnp.asarray(x, dtype=float))


def _sign(x):
    if isinstance(x, Jet):
        return jnp.sign(x.value)
    return jnp.sign(x)


class Monitor:
    name = "monitor"
    p_independent = True
    pt_dependent = False

    def partials(self, q, p, pt):
        raise NotImplementedError

    def reciprocal_partials(self, q, p, pt):
        return None

    def __call__(self, q, p=None, pt=0.0) -> float:
        return self.gradient(q, p, pt)[0]

    def gradient(self, q, p=None, pt=0.0):
        q = jnp.asarray(q, dtype=float)
        p = jnp.zeros_like(q) if p is None else jnp.asarray(p, dtype=float)
        g, gq, gp, gpt = self.partials(q, p, jnp.asarray(pt, dtype=float))
        g = float(g)
        if not (np.isfinite(g) and g > 0.0):
            raise MonitorPositivityError(
                f"{self.name} monitor is not positive (g = {g}) at q={np.asarray(q)}, p={np.asarray(p)}, pt={float(pt)}"
            )
        return g, np.asarray(gq, dtype=float), np.asarray(gp, dtype=float) * np.ones(q.shape), float(gpt)


def _from_reciprocal(w, wq, wp, wpt):
    g = 1.0 / w
    s = -(g * g)
    return g, s * wq, s * wp, s * wpt


@dataclass(frozen=True)
class ConstantMonitor(Monitor):
    """``g`` identically equal to ``value``: the untransformed system when ``value = 1``."""

    value: float = 1.0
    name = "constant"

    def partials(self, q, p, pt):
        return self.value, _zeros_like(q), _zeros_like(p), 0.0


@dataclass(frozen=True)
class TruncErrorMonitor(Monitor):
    """``g = tol / ||(h^2/2) M^-1 grad V(q)||`` (or its fourth root)."""

    system: SeparableSystem
    tol: float
    h: float
    fourth_root: bool = False
    name = "trunc"

    def reciprocal_partials(self, q, p, pt):
        u = self.system.minv(self.system.grad_potential(q))
        norm = ((u * u).sum(-1)) ** 0.5
        scale = 0.5 * self.h * self.h / self.tol
        dnorm = self.system.hessvec_potential(q, self.system.minv(u)) / norm
        kappa = 0.25 if self.fourth_root else 1.0
        w = (scale * norm) ** kappa
        wq = (kappa * w / norm) * dnorm
        return w, wq, _zeros_like(p), 0.0

    def partials(self, q, p, pt):
        g, gq, _, _ = _from_reciprocal(*self.reciprocal_partials(q, p, pt))
        return g, gq, _zeros_like(p), 0.0


@dataclass(frozen=True)
class ArclengthMonitor(Monitor):
    """``g = (2 (H0 - V) + grad V^T M^-1 grad V)^(-1/2)``."""

    system: SeparableSystem
    H0: float
    name = "arclength"

    def partials(self, q, p, pt):
        sys = self.system
        dV = sys.grad_potential(q)
        mdV = sys.minv(dV)
        A = 2.0 * (self.H0 - sys.potential(q)) + (dV * mdV).sum(-1)
        dA = -2.0 * dV + 2.0 * sys.hessvec_potential(q, mdV)
        g = A ** -0.5
        return g, (-0.5 * A ** -1.5) * dA, _zeros_like(p), 0.0


@dataclass(frozen=True)
class PowerMonitor(Monitor):
    """``g = (q^T q)^gamma``."""

    gamma: float = 1.0
    name = "power"

    def partials(self, q, p, pt):
        s = (q * q).sum(-1)
        g = s ** self.gamma
        gq = (2.0 * self.gamma * s ** (self.gamma - 1.0)) * q
        return g, gq, _zeros_like(p), 0.0


@dataclass(frozen=True)
class EnergyLagrangianMonitor(Monitor):
    """``g = 1 / |p^t - L(q, M^-1 p)|`` with ``L = 1/2 p^T M^-1 p - V(q)``."""

    system: SeparableSystem
    name = "energy"
    p_independent = False
    pt_dependent = True

    def reciprocal_partials(self, q, p, pt):
        sys = self.system
        D = pt - sys.kinetic(p) + sys.potential(q)
        s = _sign(D)
        return abs(D), s * sys.grad_potential(q), -s * sys.minv(p), s + 0.0 * D

    def partials(self, q, p, pt):
        return _from_reciprocal(*self.reciprocal_partials(q, p, pt))


@dataclass(frozen=True)
class BoundedMonitor(Monitor):
    """``g_hat = b (g + a) / (g + b)``, squeezing the inner monitor into ``(a, b)``."""

    inner: Monitor
    a: float
    b: float

    @property
    def name(self):
        return f"bounded-{self.inner.name}"

    @property
    def p_independent(self):
        return self.inner.p_independent

    @property
    def pt_dependent(self):
        return self.inner.pt_dependent

    def _squeeze(self, v):
        # rounding can push a + (b - a) t a few ulps outside [a, b]
        return v if isinstance(v, Jet) else jnp.clip(v, self.a, self.b)

    def transform(self, g):
        # algebraically b (g + a) / (g + b); anchored at a so g = 0 maps to a exactly
        if isinstance(g, Jet):
            return self.a + (self.b - self.a) * g / (g + self.b)
        g = jnp.asarray(g, dtype=float)
        t = jnp.where(jnp.isinf(g), 1.0, g / (g + self.b))
        return self._squeeze(self.a + (self.b - self.a) * t)

    def partials(self, q, p, pt):
        a, b = self.a, self.b
        rec = self.inner.reciprocal_partials(q, p, pt)
        if rec is not None:
            w, wq, wp, wpt = rec
            denom = 1.0 + b * w
            ghat = self._squeeze(a + (b - a) / denom)
            factor = -b * (b - a) / (denom * denom)
        else:
            g, gq, gp, gpt = self.inner.partials(q, p, pt)
            ghat = self.transform(g)
            factor = b * (b - a) / ((g + b) * (g + b))
            wq, wp, wpt = gq, gp, gpt
        gp_hat = _zeros_like(p) if self.p_independent else factor * wp
        gpt_hat = 0.0 if not self.pt_dependent else factor * wpt
        return ghat, factor * wq, gp_hat, gpt_hat


for _cls, _data, _meta in [
    (ConstantMonitor, ["value"], []),
    (TruncErrorMonitor, ["system", "tol", "h"], ["fourth_root"]),
    (ArclengthMonitor, ["system", "H0"], []),
    (PowerMonitor, ["gamma"], []),
    (EnergyLagrangianMonitor, ["system"], []),
    (BoundedMonitor, ["inner", "a", "b"], []),
]:
    jax.tree_util.register_dataclass(_cls, data_fields=_data, meta_fields=_meta)


def _require_separable(sys, what):
    if not getattr(sys, "separable", False):
        raise TypeError(f"{what} monitor needs a separable system")


def constant_monitor(value: float = 1.0) -> ConstantMonitor:
    if not value > 0:
        raise ValueError("constant monitor must be positive")
    return ConstantMonitor(float(value))


def trunc_error_monitor(tol: float, h: float, sys: SeparableSystem, fourth_root: bool = False) -> TruncErrorMonitor:
    if not (tol > 0 and h > 0):
        raise ValueError("tol and h must be positive")
    _require_separable(sys, "truncation-error")
    return TruncErrorMonitor(sys, float(tol), float(h), bool(fourth_root))


def arclength_monitor(sys: SeparableSystem, H0: float) -> ArclengthMonitor:
    _require_separable(sys, "arclength")
    return ArclengthMonitor(sys, float(H0))


def power_monitor(gamma: float) -> PowerMonitor:
    return PowerMonitor(float(gamma))


def energy_lagrangian_monitor(sys: SeparableSystem) -> EnergyLagrangianMonitor:
    _require_separable(sys, "energy")
    return EnergyLagrangianMonitor(sys)


def bounded_monitor(inner: Monitor, dt_min: float, dt_max: float, dtau: float) -> BoundedMonitor:
    if not (0 < dt_min < dt_max):
        raise ValueError("need 0 < dt_min < dt_max")
    if not dtau > 0:
        raise ValueError("dtau must be positive")
    return BoundedMonitor(inner, dt_min / dtau, dt_max / dtau)


def bounded_by_g(inner: Monitor, g_min: float, g_max: float) -> BoundedMonitor:
    """Bounded wrapper parametrized directly by the limits ``a = g_min``, ``b = g_max``."""
    return bounded_monitor(inner, g_min, g_max, 1.0)


MONITOR_NAMES = ("none", "trunc", "arclength", "power", "energy")


def make_monitor(name: str, sys, *, h: Optional[float] = None, tol: Optional[float] = None,
                 gamma: float = 1.0, H0: Optional[float] = None, g_min: Optional[float] = None,
                 g_max: Optional[float] = None, fourth_root: bool = False) -> Monitor:
    """Monitor by name, optionally wrapped in :class:`BoundedMonitor`."""
    if name == "none":
        mon = constant_monitor(1.0)
    elif name == "trunc":
        mon = trunc_error_monitor(tol, h, sys, fourth_root)
    elif name == "arclength":
        mon = arclength_monitor(sys, H0)
    elif name == "power":
        mon = power_monitor(gamma)
    elif name == "energy":
        mon = energy_lagrangian_monitor(sys)
    else:
        raise ValueError(f"unknown monitor {name!r}; expected one of {MONITOR_NAMES}")
    if g_min is not None or g_max is not None:
        mon = bounded_by_g(mon, g_min, g_max)
    return mon
