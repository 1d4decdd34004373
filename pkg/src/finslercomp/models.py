"""Riemannian model families on standard charts."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ._jaxcfg import jax, jnp
from .chart import Chart, polar_exclusion
from .metric import MetricSpec
from .quadrature import sphere_area


def euclidean_norm(x, y, p):
    return jnp.sqrt(y @ y)


@lru_cache(maxsize=None)
def riemannian_norm(a_fn):
    """Norm sqrt(a_ij(x) y^i y^j) for a matrix field ``a_fn(x, p)``."""

    def norm(x, y, p):
        return jnp.sqrt(y @ a_fn(x, p) @ y)

    return norm


@lru_cache(maxsize=None)
def riemannian_tensor(a_fn):
    def g(x, y, p):
        return a_fn(x, p)

    return g


def flat_metric(x, p):
    return jnp.eye(x.shape[0])


def sphere_metric(x, p):
    """Round unit sphere in hyperspherical coordinates x = (r, theta_1, ..., theta_{m-1})."""
    s2 = jnp.sin(x[:-1]) ** 2
    w = jnp.concatenate([jnp.ones(1), jnp.cumprod(s2)])
    return jnp.diag(w)


def stereographic_metric(x, p):
    """Round unit sphere through stereographic projection: 4 / (1 + |x|^2)^2 I."""
    return 4.0 / (1.0 + x @ x) ** 2 * jnp.eye(x.shape[0])


def sphere_circle_product_metric(x, p):
    """S^2 x S^1 with coordinates (r, theta, t)."""
    return jnp.diag(jnp.array([1.0, jnp.sin(x[0]) ** 2, 1.0]))


def sphere_chart(m: int, exclusion: float = 1e-3) -> Chart:
    bounds = [(0.0, np.pi)] * (m - 1) + [(0.0, 2 * np.pi)]
    periodic = [False] * (m - 1) + [True]
    return Chart(tuple(bounds), tuple(periodic), polar_exclusion(range(m - 1), exclusion), f"S{m}-spherical")


def euclidean(m: int, extent: float = np.inf) -> MetricSpec:
    chart = Chart(((-extent, extent),) * m, name=f"R{m}")
    return MetricSpec(chart, euclidean_norm, label=f"euclidean-{m}", riemannian=True, berwald=True)


def flat_torus(sides=(1.0, 1.0)) -> MetricSpec:
    chart = Chart(tuple((0.0, float(s)) for s in sides), (True,) * len(sides), name="flat-torus")
    return MetricSpec(
        chart, euclidean_norm, label="flat-torus", riemannian=True, berwald=True,
        info={"volume": float(np.prod(sides)), "diameter": 0.5 * float(np.linalg.norm(sides))},
    )


def round_sphere(m: int = 2) -> MetricSpec:
    norm = riemannian_norm(sphere_metric)
    return MetricSpec(
        sphere_chart(m), norm, label=f"round-S{m}", riemannian=True, berwald=True,
        g_override=riemannian_tensor(sphere_metric),
        info={"volume": sphere_area(m), "diameter": np.pi},
    )


def stereographic_sphere(m: int = 2, extent: float = 50.0) -> MetricSpec:
    chart = Chart(((-extent, extent),) * m, name=f"S{m}-stereographic")
    return MetricSpec(
        chart, riemannian_norm(stereographic_metric), label=f"round-S{m}-stereo", riemannian=True, berwald=True,
        g_override=riemannian_tensor(stereographic_metric),
        info={"volume": sphere_area(m), "diameter": np.pi},
    )


def christoffel(a_fn, x, p=None) -> np.ndarray:
    """Christoffel symbols gamma^k_ij of a Riemannian metric field, indexed [k, i, j]."""
    p = jnp.zeros(0) if p is None else jnp.asarray(p)
    x = jnp.asarray(x, dtype=float)
    a = a_fn(x, p)
    da = jax.jacfwd(a_fn)(x, p)  # [i, j, l] = d a_ij / dx^l
    S = jnp.einsum("jli->ijl", da) + jnp.einsum("ilj->ijl", da) - jnp.einsum("ijl->ijl", da)
    return np.asarray(0.5 * jnp.einsum("kl,ijl->kij", jnp.linalg.inv(a), S))
