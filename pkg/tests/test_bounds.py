import numpy as np
import pytest
from hypothesis import given, strategies as st

from finslercomp import bounds as B
from finslercomp.errors import NonReversible
from finslercomp.quadrature import sphere_area


def test_s_delta_cases():
    assert B.s_delta(1.0, np.pi / 2) == pytest.approx(1.0)
    assert B.s_delta(0.0, 2.5) == 2.5
    assert B.s_delta(-1.0, 1.0) == pytest.approx(np.sinh(1.0))
    assert B.s_delta(4.0, 0.3) == pytest.approx(np.sin(0.6) / 2)
    assert B.horizon(4.0) == pytest.approx(np.pi / 2)
    assert B.horizon(0.0) == np.inf


@given(st.sampled_from([-2.0, -0.5, 0.0, 0.5, 1.0, 3.0]), st.floats(0.0, 1.0))
def test_s_delta_ode(delta, t):
    h = 1e-4
    s = lambda u: float(B.s_delta(delta, u))  # noqa: E731
    second = (s(t + h) - 2 * s(t) + s(t - h)) / h**2
    assert second + delta * s(t) == pytest.approx(0.0, abs=1e-5)
    assert float(B.s_delta_prime(delta, t)) == pytest.approx((s(t + h) - s(t - h)) / (2 * h), abs=1e-7)


def test_zeta_cases():
    assert B.zeta(1.0, 0.0, 1) == pytest.approx(np.pi / 2, abs=1e-12)
    assert B.zeta(1.0, 1 / np.tan(0.7), 1) == pytest.approx(0.7, abs=1e-12)
    assert B.zeta(0.0, 2.0, 1) == pytest.approx(0.5, abs=1e-12)
    assert B.zeta(0.0, -1.0, 1) == np.inf
    assert B.zeta(-1.0, 0.5, 1) == np.inf
    assert B.zeta(-1.0, 2.0, 1) == pytest.approx(np.arctanh(0.5), abs=1e-12)
    with pytest.raises(ValueError):
        B.zeta(1.0, 0.0, 0)


@pytest.mark.parametrize("delta", [-1.3, 0.0, 0.7])
@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_sn_integral_closed_forms(delta, n):
    assert B.sn_integral(delta, n, 1.1) == pytest.approx(B.sn_integral_closed(delta, n, 1.1), rel=1e-11)


def test_model_det():
    t = np.linspace(0, 1, 5)
    assert np.allclose(B.model_det(1.0, None, 0, 3, t), np.sin(t) ** 2)
    assert np.allclose(B.model_det(0.0, 1.0, 1, 3, t), (1 - t) * t)


def test_volume_rhs_saturates_on_sphere_point():
    # saturated: 2 pi * int_0^pi sin = 4 pi
    assert B.theorem_1_1_point_rhs(2 * np.pi, np.pi, 1.0, 2) == pytest.approx(4 * np.pi, rel=1e-12)


def test_tube_rhs_saturates_on_equator():
    # equator: H = 0, zeta = pi/2, c_0 = 2, mu = 2 pi; rhs = 2 * 2 pi * 1 = 4 pi
    assert B.theorem_1_1_sub_rhs(2, 1, 1.0, 2 * np.pi, 1.0, np.pi, 0.0) == pytest.approx(4 * np.pi, rel=1e-12)


def test_length_bound_round_sphere():
    # V = 4 pi, Lambda = 1, delta = 1, d = pi, l = 0: bound = 4 pi / (2 * 1) = 2 pi
    assert B.corollary_1_2_bound(4 * np.pi, 2, 1.0, 1.0, np.pi, 0.0) == pytest.approx(2 * np.pi, rel=1e-12)


def test_length_bound_flat_torus():
    # unit flat torus: V = 1, delta = 0, d = sqrt(2)/2: 1 / (2 * sqrt(2)/2) = 1/sqrt 2
    assert B.corollary_1_2_bound(1.0, 2, 1.0, 0.0, np.sqrt(2) / 2, 0.0) == pytest.approx(1 / np.sqrt(2), rel=1e-12)


def test_injectivity_bound_round_sphere():
    val = B.corollary_1_3_injectivity(4 * np.pi, 2, 1.0, 1.0, np.pi, 0.0)
    # 4 pi / (2 * 2 * sinh(pi)); smaller than the horizon pi
    assert val == pytest.approx(np.pi / np.sinh(np.pi), rel=1e-12)
    assert val == pytest.approx(0.2720, abs=1e-4)


def test_injectivity_bound_rejects_non_reversible():
    with pytest.raises(NonReversible):
        B.corollary_1_3_injectivity(1.0, 2, 1.0, 0.0, 1.0, 0.0, reversibility=3.0)


def test_randers_length_bound_reduces_to_riemannian():
    for m, V, delta, d in [(2, 4 * np.pi, 1.0, np.pi), (3, 8 * np.pi**2, 0.0, 6 * np.pi), (2, 1.0, 0.0, 0.8)]:
        got = B.theorem_6_1_bound(V, V, 0.0, 0.0, delta, d, m)
        assert got == pytest.approx(B.riemannian_length_bound(V, m, delta, d), rel=1e-10)


def test_randers_length_bound_monotone_in_b1():
    vals = [B.theorem_6_1_bound(10.0, 10.0, 0.3, b1, 0.0, 2.0, 3) for b1 in (0.0, 0.1, 0.5, 1.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_report_margins():
    r = B.ComparisonReport("x", 1.0, 2.0, "<=")
    assert r.margin == 1.0 and r.passed and not r.conditional
    r = B.ComparisonReport("x", 1.0, 2.0, ">=", sampled=["delta"])
    assert r.margin == -1.0 and not r.passed and r.conditional
    # equality within tolerance passes
    r = B.ComparisonReport("x", 2.0 + 1e-12, 2.0, "<=")
    assert r.passed
    d = r.as_dict()
    assert {"margin", "passed", "conditional", "inputs"} <= set(d)
    assert sphere_area(1) == pytest.approx(2 * np.pi)
