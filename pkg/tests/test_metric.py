import numpy as np
import pytest
from hypothesis import given, strategies as st

from finslercomp import models, randers
from finslercomp.chart import Flag, covector, vector, components
from finslercomp.errors import DegenerateTensor, NonAdmissible, KindMismatch, SingularPoint, DegenerateFlag
from finslercomp.metric import (
    MetricSpec,
    cartan_tensor,
    chern_coefficients,
    eval_norm,
    flag_curvature,
    fundamental_tensor,
    reversibility,
    ricci,
    riemann_curvature,
    spray,
    t_curvature,
    uniformity,
    sphere_directions,
)
from finslercomp.chart import Chart

unit = st.floats(-1.0, 1.0, allow_nan=False)
vec2 = st.tuples(unit, unit).map(np.array).filter(lambda v: np.linalg.norm(v) > 0.1)
pt2 = st.tuples(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0)).map(np.array)
scale = st.floats(0.2, 5.0)


def test_euclidean_norm_and_tensor(euclid2):
    assert eval_norm(euclid2, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)
    assert np.allclose(fundamental_tensor(euclid2, [1.0, 2.0], [0.3, -0.1]), np.eye(2))
    assert np.allclose(cartan_tensor(euclid2, [1.0, 2.0], [0.3, -0.1]), 0.0)


def test_sphere_christoffel_and_curvature(sphere):
    x = np.array([0.7, 1.1])
    G = chern_coefficients(sphere, x, [0.2, 0.9])  # [i, j, k]
    assert G[0, 1, 1] == pytest.approx(-np.sin(0.7) * np.cos(0.7), abs=1e-13)
    assert G[1, 0, 1] == pytest.approx(1 / np.tan(0.7), abs=1e-13)
    for method in ("chern", "spray"):
        K = flag_curvature(sphere, x, Flag([0.3, 0.5], [1.0, -0.2]), method=method)
        assert K == pytest.approx(1.0, abs=1e-12)
    assert ricci(sphere, x, [0.3, 0.5]) == pytest.approx(1.0, abs=1e-12)


def test_christoffel_helper_matches_chern_for_riemannian(sphere):
    x = np.array([1.2, 0.4])
    gam = models.christoffel(models.sphere_metric, x)  # [k, i, j]
    chern = chern_coefficients(sphere, x, [0.4, -0.3])  # [k, i, j] as well
    assert np.allclose(gam, chern, atol=1e-13)


@given(pt2, vec2, scale)
def test_homogeneity_randers(x, y, lam):
    spec = randers.randers_wave(0.25).spec
    F = eval_norm(spec, x, y)
    assert eval_norm(spec, x, lam * y) == pytest.approx(lam * F, rel=1e-12)
    g = fundamental_tensor(spec, x, y)
    assert np.allclose(fundamental_tensor(spec, x, lam * y), g, atol=1e-12)
    A = cartan_tensor(spec, x, y)
    assert np.max(np.abs(np.einsum("ijk,k->ij", A, y))) < 1e-12
    assert y @ g @ y == pytest.approx(F**2, rel=1e-12)


@given(pt2, vec2)
def test_tensor_matches_finite_differences(x, y):
    # independent route: central second differences of F^2 / 2
    spec = randers.randers_wave(0.25).spec
    h = 1e-4
    L = lambda v: 0.5 * eval_norm(spec, x, v) ** 2  # noqa: E731
    H = np.zeros((2, 2))
    E = np.eye(2) * h
    for i in range(2):
        for j in range(2):
            H[i, j] = (L(y + E[i] + E[j]) - L(y + E[i] - E[j]) - L(y - E[i] + E[j]) + L(y - E[i] - E[j])) / (4 * h * h)
    assert np.allclose(H, fundamental_tensor(spec, x, y), atol=1e-6)


def test_spray_geodesic_coefficients_sphere(sphere):
    x, y = np.array([0.9, 0.1]), np.array([0.2, 0.7])
    G = spray(sphere, x, y)
    gam = models.christoffel(models.sphere_metric, x)
    assert np.allclose(2 * G, np.einsum("kij,i,j->k", gam, y, y), atol=1e-13)


def test_chern_two_form_matches_spray_curvature(wave):
    spec = wave.spec
    x, y = np.array([0.3, -0.4]), np.array([0.5, 0.9])
    V = np.array([1.0, -0.3])
    a = flag_curvature(spec, x, Flag(y, V), method="chern")
    b = flag_curvature(spec, x, Flag(y, V), method="spray")
    assert a == pytest.approx(b, abs=1e-10)
    R = riemann_curvature(spec, x, y)
    g = fundamental_tensor(spec, x, y)
    # R_y(y) = 0 and g_y(R_y u, v) symmetric
    assert np.max(np.abs(R @ y)) < 1e-10
    u, v = np.array([0.3, 1.0]), np.array([-1.0, 0.2])
    assert u @ g @ R @ v == pytest.approx(v @ g @ R @ u, abs=1e-10)


def test_t_curvature_vanishes_on_berwald():
    ex = randers.example_1_5(0.6).spec
    x = np.array([1.0, 0.3, 2.0])
    assert abs(t_curvature(ex, x, [0.2, 0.1, -0.5], [0.5, -1.0, 0.3])) < 1e-12
    wave = randers.randers_wave(0.25).spec
    assert abs(t_curvature(wave, [0.3, -0.4], [1.0, 0.2], [0.1, 1.0])) > 1e-4


def test_errors(euclid2, sphere):
    assert eval_norm(euclid2, [0.0, 0.0], [0.0, 0.0]) == 0.0
    with pytest.raises(NonAdmissible):
        fundamental_tensor(euclid2, [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(SingularPoint):
        eval_norm(sphere, [0.0, 1.0], [1.0, 0.0])
    with pytest.raises(KindMismatch):
        eval_norm(euclid2, [0.0, 0.0], covector([0.0, 0.0], [1.0, 0.0]))
    with pytest.raises(DegenerateFlag):
        flag_curvature(sphere, [1.0, 1.0], Flag([1.0, 0.0], [2.0, 0.0]))


def test_degenerate_tensor():
    # a norm whose y-Hessian is singular: |y_1| + |y_2| smoothed badly is hard, use a degenerate quadratic
    import jax.numpy as jnp

    def norm(x, y, p):
        return jnp.sqrt(y[0] ** 2 + 1e-14 * y[1] ** 2)

    spec = MetricSpec(Chart(((-1.0, 1.0),) * 2), norm)
    with pytest.raises(DegenerateTensor):
        fundamental_tensor(spec, [0.0, 0.0], [1.0, 0.0])


def test_tangent_objects():
    v = vector([0.0, 0.0], [1.0, 2.0])
    w = covector([0.0, 0.0], [3.0, -1.0])
    assert w.pair(v) == pytest.approx(1.0)
    with pytest.raises(KindMismatch):
        components(v, "covector")


def test_reversibility_and_uniformity_randers():
    b = 0.4
    spec = randers.randers_flat([b, 0.0]).spec
    dirs = sphere_directions(2, 360)
    lam = reversibility(spec, [[0.0, 0.0]], dirs)
    assert lam == pytest.approx((1 + b) / (1 - b), rel=1e-4)
    Lam = uniformity(spec, [[0.0, 0.0]], dirs)
    assert Lam == pytest.approx(((1 + b) / (1 - b)) ** 2, rel=1e-3)
    assert uniformity(models.round_sphere(2), [[1.0, 1.0]], dirs) == pytest.approx(1.0, abs=1e-12)
