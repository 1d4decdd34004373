import numpy as np
import pytest
from hypothesis import given, strategies as st

from finslercomp import models, randers
from finslercomp.errors import NoConvergence, NonAdmissible
from finslercomp.legendre import (
    dual_norm,
    dual_tensor,
    legendre,
    legendre_inverse,
    legendre_inverse_batch,
    legendre_inverse_info,
)
from finslercomp.metric import fundamental_tensor, eval_norm

WAVE = randers.randers_wave(0.25)
MATS = randers.alphabeta_family(randers.phi_matsumoto, 0.1)

unit = st.floats(-1.0, 1.0, allow_nan=False)
vec2 = st.tuples(unit, unit).map(np.array).filter(lambda v: np.linalg.norm(v) > 0.1)
pt2 = st.tuples(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0)).map(np.array)


def test_riemannian_legendre_is_lowering(sphere):
    x, y = np.array([0.8, 0.2]), np.array([0.3, -0.5])
    assert np.allclose(legendre(sphere, x, y), np.diag([1.0, np.sin(0.8) ** 2]) @ y, atol=1e-14)
    xi = np.array([0.4, 0.1])
    assert np.allclose(legendre_inverse(sphere, x, xi), xi / np.array([1.0, np.sin(0.8) ** 2]), atol=1e-12)


@given(pt2, vec2)
def test_roundtrip_randers(x, y):
    spec = WAVE.spec
    xi = legendre(spec, x, y)
    assert np.allclose(legendre_inverse(spec, x, xi), y, atol=1e-8 * np.linalg.norm(y))
    # F*(L(y)) = F(y)
    assert dual_norm(spec, x, xi) == pytest.approx(eval_norm(spec, x, y), rel=1e-10)


@given(vec2)
def test_roundtrip_alphabeta(y):
    spec = MATS
    x = np.array([1.1, 0.4, 2.0])
    y3 = np.array([y[0], y[1], 0.3])
    xi = legendre(spec, x, y3)
    info = legendre_inverse_info(spec, x, xi)
    assert np.allclose(info.y, y3, atol=1e-8)
    assert info.residual < 1e-10


@given(pt2, vec2)
def test_dual_norm_closed_form(x, xi):
    # independent route: the Randers dual norm has a closed form
    spec = WAVE.spec
    assert dual_norm(spec, x, xi) == pytest.approx(randers.dual_norm_closed_form(WAVE, x, xi), rel=1e-10)


def test_dual_tensor_is_inverse(wave):
    spec = wave.spec
    x, y = np.array([0.2, 0.7]), np.array([0.6, -0.3])
    xi = legendre(spec, x, y)
    assert np.allclose(dual_tensor(spec, x, xi) @ fundamental_tensor(spec, x, y), np.eye(2), atol=1e-10)


def test_dual_tensor_is_hessian_of_dual_energy(wave):
    # g* = Hess_xi (F*^2 / 2), checked with central differences
    spec = wave.spec
    x, xi = np.array([0.2, 0.7]), np.array([0.5, 0.8])
    h = 1e-4
    L = lambda z: 0.5 * dual_norm(spec, x, z) ** 2  # noqa: E731
    H = np.zeros((2, 2))
    E = np.eye(2) * h
    for i in range(2):
        for j in range(2):
            H[i, j] = (L(xi + E[i] + E[j]) - L(xi + E[i] - E[j]) - L(xi - E[i] + E[j]) + L(xi - E[i] - E[j])) / (4 * h * h)
    assert np.allclose(H, dual_tensor(spec, x, xi), atol=1e-6)


def test_batch_matches_scalar(wave):
    spec = wave.spec
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, (20, 2))
    XI = rng.standard_normal((20, 2))
    Y = legendre_inverse_batch(spec, X, XI)
    for x, xi, y in zip(X, XI, Y):
        assert np.allclose(legendre_inverse(spec, x, xi), y, atol=1e-12)


def test_zero_covector_rejected(wave):
    with pytest.raises(NonAdmissible):
        legendre_inverse(wave.spec, [0.0, 0.0], [0.0, 0.0])


def test_no_convergence_reported():
    # a non-convex "norm" has no well-defined inverse; the solver must say so
    import jax.numpy as jnp
    from finslercomp.chart import Chart
    from finslercomp.metric import MetricSpec

    def norm(x, y, p):
        r = jnp.sqrt(y @ y)
        return r * (1.0 + 0.9 * jnp.cos(5.0 * jnp.arctan2(y[1], y[0])))

    spec = MetricSpec(Chart(((-1.0, 1.0),) * 2), norm)
    bad = 0
    for th in np.linspace(0, 2 * np.pi, 13)[:-1]:
        try:
            legendre_inverse(spec, [0.0, 0.0], [np.cos(th), np.sin(th)])
        except NoConvergence:
            bad += 1
    assert bad > 0
