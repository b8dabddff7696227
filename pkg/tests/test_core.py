import math

import jax
import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from jax.experimental import jet as jax_jet

from poincare_vi.core import (HamiltonianSystem, Jet, NewtonConfig, NewtonError, SingularMatrixError,
                              gauss_solve, jet_lift, newton_solve, phase_state, solve_linear)
from poincare_vi.problems import HarmonicOscillator, KeplerProblem

finite = st.floats(-2.0, 2.0, allow_nan=False)


# --- jets -------------------------------------------------------------------

def test_jet_lift_square():
    y = jet_lift(lambda x: x[0] * x[0], [3.0], [1.0], 2)
    assert float(y.value) == 9.0
    assert np.allclose(np.asarray(y.derivatives()), [6.0, 2.0])


def test_jet_lift_product_direction():
    y = jet_lift(lambda x: x[0] * x[1], [1.0, 2.0], [1.0, 0.0], 1)
    assert float(y.value) == 2.0
    assert np.allclose(np.asarray(y.derivatives()), [2.0])


def test_jet_lift_order_zero_is_plain_value():
    f = lambda x: (x * x).sum() ** 0.5 + 1.0 / x[0]
    y = jet_lift(f, [3.0, 4.0], [1.0, 1.0], 0)
    assert y.order == 0
    assert float(y.value) == pytest.approx(5.0 + 1.0 / 3.0, rel=1e-15)
    assert np.asarray(y.derivatives()).shape[0] == 0


def test_jet_lift_rejects_bad_order_and_nonfinite():
    with pytest.raises(ValueError):
        jet_lift(lambda x: x, [1.0], [1.0], 5)
    with pytest.raises(ValueError, match="non-finite"):
        jet_lift(lambda x: 1.0 / x[0], [0.0], [1.0], 2)


@settings(max_examples=30)
@given(a=finite, b=finite)
def test_order_zero_arithmetic_equals_reals(a, b):
    x = Jet(jnp.array([a]))
    y = Jet(jnp.array([b + 3.0]))
    for got, want in [(x + y, a + b + 3.0), (x - y, a - b - 3.0), (x * y, a * (b + 3.0)), (x / y, a / (b + 3.0))]:
        assert float(got.value) == pytest.approx(want, rel=1e-15, abs=1e-300)


def _field(x):
    # exercises products, quotients, powers and sums
    r2 = (x * x).sum()
    return x[0] * x[1] / (1.0 + r2) + (0.5 + r2) ** 1.5 - (2.0 + x[1] * x[1]) ** -0.5


@jax.jit
def _mine(x, d):
    y = _field(Jet.variable(x, d, 4))
    return jnp.concatenate([y.value[None], y.derivatives()])


@jax.jit
def _oracle(x, d):
    # jax's jet takes derivative (not normalized) series of the input path
    primal, series = jax_jet.jet(_field, (x,), ((d,) + (jnp.zeros(2),) * 3,))
    return jnp.concatenate([primal[None], jnp.stack(series)])


@settings(max_examples=200)
@given(x0=finite, x1=finite, d0=finite, d1=finite)
def test_jet_matches_jax_jet_oracle(x0, x1, d0, d1):
    x = jnp.array([x0, x1])
    d = jnp.array([d0, d1])
    np.testing.assert_allclose(np.asarray(_mine(x, d)), np.asarray(_oracle(x, d)), rtol=1e-10, atol=1e-10)


_plain = jax.jit(_field)


@given(x0=finite, x1=finite, d0=finite, d1=finite)
def test_jet_matches_finite_differences(x0, x1, d0, d1):
    x = np.array([x0, x1])
    d = np.array([d0, d1])
    y = np.asarray(_mine(jnp.asarray(x), jnp.asarray(d)))
    phi = lambda s: float(_plain(jnp.asarray(x + s * d)))
    eps = 1e-3
    f = [phi(k * eps) for k in (-2, -1, 0, 1, 2)]
    fd = [(f[3] - f[1]) / (2 * eps),
          (f[3] - 2 * f[2] + f[1]) / eps ** 2,
          (f[4] - 2 * f[3] + 2 * f[1] - f[0]) / (2 * eps ** 3)]
    for k in range(3):
        scale = max(1.0, abs(y[k + 1]))
        assert abs(y[k + 1] - fd[k]) <= 1e-5 * scale * 10 ** k, (k, y[k + 1], fd[k])


def test_jet_truncated_product_rule():
    a = Jet(jnp.array([1.0, 2.0, 3.0]))
    b = Jet(jnp.array([4.0, 5.0, 6.0]))
    c = np.asarray((a * b).c)
    assert np.allclose(c, [4.0, 5.0 + 8.0, 6.0 + 10.0 + 12.0])


# --- Newton -----------------------------------------------------------------

def test_newton_linear_one_iteration():
    c = np.array([1.5, -2.0, 0.25])
    calls = []

    def res(x):
        calls.append(1)
        return x - c

    x = newton_solve(res, np.array([10.0, 10.0, 10.0]), jacobian=lambda x: np.eye(3))
    np.testing.assert_allclose(x, c, atol=1e-14)
    assert len(calls) == 2  # initial residual plus the check after one update


def test_newton_scalar_square_root():
    x = newton_solve(lambda x: x * x - 4.0, [3.0], NewtonConfig(tolerance=1e-12))
    assert abs(x[0] - 2.0) <= 1e-12


def test_newton_no_real_root():
    with pytest.raises(NewtonError) as info:
        newton_solve(lambda x: x * x + 1.0, [1.0], NewtonConfig(max_iterations=30))
    assert info.value.residual_norm >= 1.0


def test_newton_singular_jacobian():
    with pytest.raises(NewtonError, match="singular"):
        newton_solve(lambda x: x * x - 1.0, [0.0], jacobian=lambda x: np.array([[0.0]]))


def test_newton_deterministic():
    res = lambda x: np.array([x[0] ** 3 - x[1] - 1.0, math.sin(x[0]) + x[1] ** 2 - 2.0])
    a = newton_solve(res, [1.0, 1.0])
    b = newton_solve(res, [1.0, 1.0])
    assert a.tobytes() == b.tobytes()


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iterations=0)


# --- linear solves ----------------------------------------------------------

def test_solve_linear_examples():
    np.testing.assert_array_equal(solve_linear(np.eye(2), [1.0, 2.0]), [1.0, 2.0])
    np.testing.assert_allclose(solve_linear([[2.0, 0.0], [0.0, 4.0]], [2.0, 8.0]), [1.0, 2.0], atol=1e-15)
    with pytest.raises(SingularMatrixError):
        solve_linear([[1.0, 1.0], [1.0, 1.0]], [1.0, 2.0])


@settings(max_examples=50)
@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_solve_linear_matches_numpy(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + n * np.eye(n)
    b = rng.normal(size=n)
    x = solve_linear(A, b)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-10, atol=1e-12)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * max(1.0, np.linalg.norm(b)) * n


def test_gauss_solve_needs_pivoting():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    x, ok = gauss_solve(A, np.array([3.0, 4.0]))
    assert bool(ok)
    np.testing.assert_allclose(np.asarray(x), [4.0, 3.0])


# --- system contract --------------------------------------------------------

class _GenericKepler(HamiltonianSystem):
    """Kepler written without the separable structure, derivatives by AD."""

    n = 2

    def hamiltonian(self, q, p):
        return 0.5 * (p * p).sum(-1) - ((q * q).sum(-1)) ** -0.5

    def grad_q(self, q, p):
        return jax.grad(lambda x: self.hamiltonian(x, p))(q)

    def grad_p(self, q, p):
        return jax.grad(lambda x: self.hamiltonian(q, x))(p)


def _evaluators(sys):
    return jax.jit(jax.vmap(lambda q, p: (sys.hamiltonian(q, p), sys.grad_q(q, p), sys.grad_p(q, p),
                                          sys.hess_pp(q, p))))


def test_separable_matches_generic():
    rng = np.random.default_rng(7)
    q = rng.uniform(0.2, 2.0, (100, 2)) * rng.choice([-1.0, 1.0], (100, 2))
    p = rng.normal(size=(100, 2))
    sep, gen = KeplerProblem(0.5), _GenericKepler()
    H_s, gq_s, gp_s, _ = _evaluators(sep)(q, p)
    H_g, gq_g, gp_g, hpp = _evaluators(gen)(q, p)
    np.testing.assert_allclose(H_s, H_g, rtol=1e-12)
    np.testing.assert_allclose(H_s, jax.vmap(sep.separable_hamiltonian)(q, p), rtol=1e-12)
    np.testing.assert_allclose(gq_s, gq_g, rtol=1e-12)
    np.testing.assert_allclose(gp_s, gp_g, rtol=1e-12)
    np.testing.assert_allclose(hpp, np.broadcast_to(np.eye(2), (100, 2, 2)), atol=1e-14)


def test_mass_inverse_is_symmetric():
    for sys in (KeplerProblem(0.3), HarmonicOscillator(3)):
        M = sys.mass_inv_matrix()
        np.testing.assert_array_equal(M, M.T)


def test_phase_state_validation():
    with pytest.raises(ValueError):
        phase_state([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        phase_state([np.nan], [1.0])
    s = phase_state([1.0], [0.0])
    assert s.q.shape == s.p.shape == (1,)
