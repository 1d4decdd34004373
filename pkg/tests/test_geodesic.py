import numpy as np
import pytest

from finslercomp import models, randers
from finslercomp.errors import ChartExit
from finslercomp.geodesic import (
    closed_orbit_length,
    curve_residual,
    exp_map,
    integrate_geodesic,
    integrate_geodesics_batch,
    parallel_transport,
)
from finslercomp.metric import fundamental_tensor


def test_flat_lines(euclid2):
    seg = integrate_geodesic(euclid2, [0.0, 1.0], [2.0, -1.0], t_end=1.5, steps=30)
    assert np.allclose(seg.x[-1], [3.0, -0.5], atol=1e-12)
    assert seg.length() == pytest.approx(1.5 * np.sqrt(5.0), rel=1e-12)


def test_sphere_equator_closes(sphere):
    L, err, seg = closed_orbit_length(sphere, [np.pi / 2, 0.0], [0.0, 1.0], 2 * np.pi, steps=400)
    assert L == pytest.approx(2 * np.pi, rel=1e-10)
    assert err < 1e-9
    assert seg.residual() < 1e-6


def test_sphere_great_circle_through_tilt(sphere):
    # a tilted great circle returns to the start after 2 pi (embedding oracle)
    x0 = np.array([1.2, 0.3])
    y0 = np.array([0.5, 0.8 / np.sin(1.2)])
    y0 = y0 / np.sqrt(y0 @ fundamental_tensor(sphere, x0, y0) @ y0)
    seg = integrate_geodesic(sphere, x0, y0, t_end=2 * np.pi, steps=200)
    emb = lambda p: np.array([np.sin(p[0]) * np.cos(p[1]), np.sin(p[0]) * np.sin(p[1]), np.cos(p[0])])  # noqa: E731
    assert np.allclose(emb(seg.x[-1]), emb(x0), atol=1e-9)
    P = np.array([emb(p) for p in seg.x])
    # all points lie in the plane through 0 spanned by the start and the midpoint
    n = np.cross(P[0], P[50])
    assert np.max(np.abs(P @ n)) < 1e-9


def test_unit_speed_preserved(wave):
    seg = integrate_geodesic(wave.spec, [0.1, 0.2], [0.6, 0.8], t_end=2.0, steps=100)
    sp = seg.speed()
    assert np.max(np.abs(sp - sp[0])) < 1e-9
    assert seg.residual() < 1e-6


def test_backward_integration(wave):
    spec = wave.spec
    fwd = integrate_geodesic(spec, [0.1, 0.2], [0.6, 0.8], t_end=1.0, steps=10)
    back = integrate_geodesic(spec, fwd.x[-1], fwd.v[-1], t_grid=np.linspace(0.0, -1.0, 11))
    assert np.allclose(back.x[-1], [0.1, 0.2], atol=1e-9)


def test_exp_map(sphere):
    assert np.allclose(exp_map(sphere, [1.0, 1.0], [0.0, 0.0]), [1.0, 1.0])
    assert np.allclose(exp_map(sphere, [np.pi / 2, 0.0], [0.0, np.pi]), [np.pi / 2, np.pi], atol=1e-10)


def test_chart_exit(stereo):
    with pytest.raises(ChartExit):
        integrate_geodesic(stereo, [1.0, 0.0], [1.0, 0.0], t_end=3.0, steps=10)


def test_parallel_transport_isometry(wave):
    spec = wave.spec
    seg = integrate_geodesic(spec, [0.1, 0.2], [0.6, 0.8], t_end=2.0, steps=80)
    V = parallel_transport(seg, np.array([[1.0, 0.3], [-0.2, 1.0]]).T)
    G = spec.batch("g", seg.x, seg.v)
    gram = np.einsum("tia,tij,tjb->tab", V, G, V)
    assert np.max(np.abs(gram - gram[0])) < 1e-6
    # T itself is parallel: transported x'(0) equals x'(t)
    T = parallel_transport(seg, seg.v[0])
    assert np.max(np.abs(T - seg.v)) < 1e-8


def test_batch_agrees_with_adaptive(wave):
    spec = wave.spec
    X = np.array([[0.1, 0.2], [-0.3, 0.5]])
    Y = np.array([[0.6, 0.8], [1.0, 0.0]])
    t, xs, vs = integrate_geodesics_batch(spec, X, Y, 1.0, 200)
    for b in range(2):
        seg = integrate_geodesic(spec, X[b], Y[b], t_end=1.0, steps=1)
        assert np.allclose(xs[-1, b], seg.x[-1], atol=1e-9)


def test_curve_residual_detects_non_geodesic(euclid2):
    assert curve_residual(euclid2, [0.0, 0.0], [1.0, 0.0], [0.0, 0.0]) == 0.0
    assert curve_residual(euclid2, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)


def test_randers_fiber_geodesic_lengths():
    spec = randers.example_1_5(0.5).spec
    x = [np.pi / 2, 0.0, 0.0]
    Lf, _, _ = closed_orbit_length(spec, x, [0.0, 0.0, 1.0], 2 * np.pi)
    Lb, _, _ = closed_orbit_length(spec, x, [0.0, 0.0, -1.0], 2 * np.pi)
    assert Lf == pytest.approx(2 * np.pi * 1.5, rel=1e-10)
    assert Lb == pytest.approx(2 * np.pi * 0.5, rel=1e-10)
