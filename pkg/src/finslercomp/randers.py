"""Randers metrics F = alpha + beta: closed forms, covariant derivatives of beta,
the closed-form T-curvature, and the named example families."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from ._jaxcfg import jax, jnp
from .chart import Chart, polar_exclusion
from .errors import InadmissibleDirection, PositivityViolation
from .metric import MetricSpec, _check_point
from .models import flat_metric, sphere_circle_product_metric, riemannian_norm


def _christoffel_j(a_fn, x, p):
    a = a_fn(x, p)
    da = jax.jacfwd(a_fn)(x, p)
    S = jnp.einsum("jli->ijl", da) + jnp.einsum("ilj->ijl", da) - da
    return 0.5 * jnp.einsum("kl,ijl->kij", jnp.linalg.inv(a), S)


@lru_cache(maxsize=None)
def _closed_forms(a_fn, b_fn):
    """jax closed forms for one (alpha, beta) pair of field functions."""

    def alpha(x, y, p):
        return jnp.sqrt(y @ a_fn(x, p) @ y)

    def norm(x, y, p):
        return alpha(x, y, p) + b_fn(x, p) @ y

    def g(x, y, p):
        a = a_fn(x, p)
        b = b_fn(x, p)
        al = jnp.sqrt(y @ a @ y)
        F = al + b @ y
        ai = a @ y / al
        return (F / al) * (a - jnp.outer(ai, ai)) + jnp.outer(ai + b, ai + b)

    def bcov(x, p):
        # b_{i|j} = d_j b_i - gamma^k_ij b_k
        b = b_fn(x, p)
        db = jax.jacfwd(b_fn)(x, p)
        return db - jnp.einsum("kij,k->ij", _christoffel_j(a_fn, x, p), b)

    def zoo(x, p):
        a = a_fn(x, p)
        ainv = jnp.linalg.inv(a)
        b = b_fn(x, p)
        B = bcov(x, p)
        r = 0.5 * (B + B.T)
        s = 0.5 * (B - B.T)
        s_up = ainv @ s  # s^i_j
        s_low = b @ s_up  # s_j = b_i s^i_j
        e = r + jnp.outer(b, s_low) + jnp.outer(s_low, b)
        return dict(a=a, ainv=ainv, b=b, bcov=B, r=r, s=s, s_up=s_up, s_vec=s_low, e=e)

    def spray(x, y, p):
        # G^i = G_alpha^i + (e_00 / 2F - s_0) y^i + alpha s^i_0  (s^i_j = a^{ik} s_kj)
        z = zoo(x, p)
        gam = _christoffel_j(a_fn, x, p)
        al = jnp.sqrt(y @ z["a"] @ y)
        F = al + z["b"] @ y
        G_alpha = 0.5 * jnp.einsum("kij,i,j->k", gam, y, y)
        e00 = y @ z["e"] @ y
        s0 = z["s_vec"] @ y
        return G_alpha + (e00 / (2 * F) - s0) * y + al * (z["s_up"] @ y)

    def t_closed(x, y, v, p):
        z = zoo(x, p)
        a, b, s, e = z["a"], z["b"], z["s"], z["e"]
        ay = jnp.sqrt(y @ a @ y)
        av = jnp.sqrt(v @ a @ v)
        Fy = ay + b @ y
        Fv = av + b @ v
        vy = v @ a @ y
        e11 = v @ e @ v
        e00 = y @ e @ y
        s1 = z["s_vec"] @ v
        s0 = z["s_vec"] @ y
        s01 = y @ s @ v
        bracket = (
            -2.0 * (e11 / (2 * Fv) - s1)
            + 2.0 * s01 / ay
            + (1.0 / ay) * (e00 / (2 * Fy) - s0) * (av + vy / ay)
        )
        return bracket * Fy * (av * ay - vy) / ay

    def beta_norm(x, p):
        b = b_fn(x, p)
        return jnp.sqrt(b @ jnp.linalg.inv(a_fn(x, p)) @ b)

    def grad_beta_norm(x, p):
        z = zoo(x, p)
        return jnp.sqrt(jnp.einsum("ik,jl,ij,kl->", z["ainv"], z["ainv"], z["bcov"], z["bcov"]))

    def dual(x, xi, p):
        # the dual of a Randers norm is again of Randers type
        ainv = jnp.linalg.inv(a_fn(x, p))
        b = b_fn(x, p)
        bb = b @ ainv @ b
        xb = xi @ ainv @ b
        return (jnp.sqrt((1 - bb) * (xi @ ainv @ xi) + xb**2) - xb) / (1 - bb)

    fns = dict(
        alpha=alpha, norm=norm, g=g, bcov=bcov, spray=spray, t_closed=t_closed,
        beta_norm=beta_norm, grad_beta_norm=grad_beta_norm, dual=dual,
    )
    jitted = {k: jax.jit(f) for k, f in fns.items() if k not in ("norm", "g", "spray")}
    jitted["zoo"] = jax.jit(zoo)
    return fns, jitted


@dataclass(frozen=True)
class BetaDerivatives:
    bcov: np.ndarray
    r: np.ndarray
    s: np.ndarray
    s_up: np.ndarray
    s_vec: np.ndarray
    e: np.ndarray


@dataclass(frozen=True, eq=False)
class RandersSpec:
    """alpha = sqrt(a_ij(x) y^i y^j) from ``a_fn(x, p)``, beta = b_i(x) y^i from ``b_fn(x, p)``."""

    chart: Chart
    a_fn: Callable
    b_fn: Callable
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    label: str = "randers"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", np.atleast_1d(np.asarray(self.params, dtype=float)))

    @property
    def fns(self):
        return _closed_forms(self.a_fn, self.b_fn)[0]

    @property
    def jit(self):
        return _closed_forms(self.a_fn, self.b_fn)[1]

    def _call(self, name, *args):
        out = self.jit[name](*[jnp.asarray(a, dtype=float) for a in args], jnp.asarray(self.params))
        return jax.tree_util.tree_map(np.asarray, out)

    def admissible(self, x, y, p=None) -> float:
        """alpha(y) + beta(y); positive on the admissible cone."""
        y = np.asarray(y, float)
        a = np.asarray(self.a_fn(jnp.asarray(x, dtype=float), jnp.asarray(self.params)))
        b = np.asarray(self.b_fn(jnp.asarray(x, dtype=float), jnp.asarray(self.params)))
        return float(np.sqrt(y @ a @ y) + b @ y)

    def metric(self, closed_form: bool = True) -> MetricSpec:
        """MetricSpec of F; ``closed_form`` registers the closed-form g and spray."""
        f = self.fns
        if closed_form:
            return MetricSpec(
                self.chart, f["norm"], self.params, label=self.label, g_override=f["g"],
                spray_override=f["spray"], admissible=self.admissible, info=dict(self.info, randers=self),
            )
        return MetricSpec(
            self.chart, f["norm"], self.params, label=self.label + "-ad",
            admissible=self.admissible, info=dict(self.info, randers=self),
        )

    @cached_property
    def spec(self) -> MetricSpec:
        return self.metric(True)

    def alpha_metric(self) -> MetricSpec:
        return MetricSpec(self.chart, riemannian_norm(self.a_fn), self.params, label=self.label + "-alpha", riemannian=True)


def randers_tensors(rspec: RandersSpec, x, y) -> np.ndarray:
    """Closed-form fundamental tensor of alpha + beta."""
    x = _check_point(rspec.spec, x)
    y = np.asarray(y, float)
    if not np.any(y) or rspec.admissible(x, y) <= 0:
        raise InadmissibleDirection(f"{y} is not an admissible direction at {x}")
    return np.asarray(rspec.fns["g"](jnp.asarray(x), jnp.asarray(y), jnp.asarray(rspec.params)))


def beta_derivatives(rspec: RandersSpec, x) -> BetaDerivatives:
    z = rspec._call("zoo", np.asarray(x, float))
    return BetaDerivatives(z["bcov"], z["r"], z["s"], z["s_up"], z["s_vec"], z["e"])


def t_curvature_closed_form(rspec: RandersSpec, x, y, v) -> float:
    for w in (y, v):
        if rspec.admissible(x, w) <= 0:
            raise InadmissibleDirection(f"{w} is not an admissible direction at {x}")
    return float(rspec._call("t_closed", np.asarray(x, float), np.asarray(y, float), np.asarray(v, float)))


def t_curvature_closed_form_batch(rspec: RandersSpec, X, Y, V) -> np.ndarray:
    fn = _batched_t(rspec.a_fn, rspec.b_fn)
    return np.asarray(fn(jnp.asarray(X, dtype=float), jnp.asarray(Y, dtype=float), jnp.asarray(V, dtype=float), jnp.asarray(rspec.params)))


@lru_cache(maxsize=None)
def _batched_t(a_fn, b_fn):
    return jax.jit(jax.vmap(_closed_forms(a_fn, b_fn)[0]["t_closed"], in_axes=(0, 0, 0, None)))


def dual_norm_closed_form(rspec: RandersSpec, x, xi) -> float:
    return float(rspec._call("dual", np.asarray(x, float), np.asarray(xi, float)))


def beta_norm(rspec: RandersSpec, x) -> float:
    return float(rspec._call("beta_norm", np.asarray(x, float)))


def grad_beta_norm(rspec: RandersSpec, x) -> float:
    return float(rspec._call("grad_beta_norm", np.asarray(x, float)))


@dataclass(frozen=True)
class Section6Constants:
    b: float
    b1: float
    n_samples: int


def section6_constants(rspec: RandersSpec, segment) -> Section6Constants:
    """Sampled sups of ||beta||_alpha and ||nabla beta||_alpha over the geodesic nodes."""
    xs = np.asarray(segment.x if hasattr(segment, "x") else segment, float)
    b = max(beta_norm(rspec, x) for x in xs)
    b1 = max(grad_beta_norm(rspec, x) for x in xs)
    return Section6Constants(float(b), float(b1), len(xs))


def section6_t_bound(b: float, b1: float) -> float:
    return b1 * (2 * b**3 + 5 * b**2 - 2 * b + 7) / (2 * (1 - b) ** 3)


# ---------------------------------------------------------------- families


def const_one_form(x, p):
    return p[: x.shape[0]]


def fiber_one_form(x, p):
    """beta = p[0] dt on S^2 x S^1 (last coordinate t)."""
    return jnp.array([0.0, 0.0, p[0]])


def stereo_product_metric(x, p):
    """S^2 (stereographic) x S^1 with coordinates (x1, x2, t)."""
    w = 4.0 / (1.0 + x[0] ** 2 + x[1] ** 2) ** 2
    return jnp.diag(jnp.array([w, w, 1.0]))


def wave_one_form(x, p):
    """beta = c (sin x2 dx1 + cos x1 dx2) with c = p[0]; not parallel."""
    return p[0] * jnp.array([jnp.sin(x[1]), jnp.cos(x[0])])


def linear_one_form(x, p):
    """beta = c x2 dx1 with c = p[0]."""
    return jnp.array([p[0] * x[1], 0.0])


def randers_flat(b, extent: float = np.inf, torus=None) -> RandersSpec:
    """alpha + beta with constant beta on R^m, or on the flat torus with the given sides."""
    b = np.atleast_1d(np.asarray(b, float))
    m = len(b)
    if torus is not None:
        sides = [float(s) for s in torus]
        chart = Chart(tuple((0.0, s) for s in sides), (True,) * m, name="flat-torus")
        return RandersSpec(chart, flat_metric, const_one_form, b, label=f"randers-torus-{m}", info={"area_alpha": float(np.prod(sides))})
    chart = Chart(((-extent, extent),) * m, name=f"R{m}")
    return RandersSpec(chart, flat_metric, const_one_form, b, label=f"randers-flat-{m}")


def randers_wave(c: float = 0.25, half_width: float = 4.0) -> RandersSpec:
    if not 0 <= abs(c) * np.sqrt(2) < 1:
        raise PositivityViolation("||beta||_alpha must stay below 1")
    chart = Chart(((-half_width, half_width),) * 2, name="R2-box")
    return RandersSpec(chart, flat_metric, wave_one_form, [c], label=f"randers-wave-{c:g}")


def randers_linear(c: float = 0.1, half_width: float = 4.0) -> RandersSpec:
    if not abs(c) * half_width < 1:
        raise PositivityViolation("||beta||_alpha must stay below 1 on the box")
    chart = Chart(((-half_width, half_width),) * 2, name="R2-box")
    return RandersSpec(chart, flat_metric, linear_one_form, [c], label=f"randers-linear-{c:g}")


def example_1_5(eps: float, chart: str = "spherical") -> RandersSpec:
    """alpha the product metric of S^2 x S^1, beta = eps dt.

    ``chart="spherical"`` uses (r, theta, t); ``"stereographic"`` uses a
    stereographic S^2 factor, in which (0, 0, -s) is a regular point.
    """
    if not 0 <= eps < 1:
        raise PositivityViolation("eps must lie in [0, 1)")
    info = {"volume_ht": 8 * np.pi**2, "diameter": 6 * np.pi, "eps": float(eps)}
    if chart == "spherical":
        ch = Chart(((0.0, np.pi), (0.0, 2 * np.pi), (0.0, 2 * np.pi)), (False, True, True), polar_exclusion([0]), "S2xS1")
        return RandersSpec(ch, sphere_circle_product_metric, fiber_one_form, [eps], f"example-1.5-eps{eps:g}", info)
    if chart == "stereographic":
        ch = Chart(((-50.0, 50.0), (-50.0, 50.0), (0.0, 2 * np.pi)), (False, False, True), name="S2xS1-stereo")
        return RandersSpec(ch, stereo_product_metric, fiber_one_form, [eps], f"example-1.5-eps{eps:g}-stereo", info)
    raise ValueError(f"unknown chart {chart!r}")


# ---------------------------------------------------------------- (alpha, beta) family


def phi_randers(s):
    return 1.0 + s


def phi_riemannian(s):
    return jnp.ones_like(s)


def phi_matsumoto(s):
    return 1.0 / (1.0 - s)


PHI = {"randers": phi_randers, "riemannian": phi_riemannian, "matsumoto": phi_matsumoto}


@lru_cache(maxsize=None)
def _alphabeta_norm(phi, a_fn, b_fn):
    def norm(x, y, p):
        al = jnp.sqrt(y @ a_fn(x, p) @ y)
        return al * phi((b_fn(x, p) @ y) / al)

    return norm


def alphabeta_positivity(phi, b: float, n: int = 64) -> float:
    """min of phi(s) - s phi'(s) + (t^2 - s^2) phi''(s) over |s| <= t <= b (sampled)."""
    d1 = jax.vmap(jax.grad(phi))
    d2 = jax.vmap(jax.grad(jax.grad(phi)))
    t = np.repeat(np.linspace(0.0, b, n), n)
    s = t * np.tile(np.linspace(-1.0, 1.0, n), n)
    val = np.asarray(phi(s) - s * d1(s) + (t * t - s * s) * d2(s))
    return float(min(val.min(), float(phi(0.0))))


def alphabeta_family(phi, eps: float, chart: str = "spherical") -> MetricSpec:
    """F = alpha phi(beta / alpha) on S^2 x S^1 with beta = eps dt."""
    if isinstance(phi, str):
        phi = PHI[phi]
    if not 0 <= eps < 1:
        raise PositivityViolation("eps must lie in [0, 1)")
    if alphabeta_positivity(phi, eps, n=24) <= 0:
        raise PositivityViolation(f"phi fails the positivity condition for eps = {eps}")
    base = example_1_5(eps, chart)
    norm = _alphabeta_norm(phi, base.a_fn, base.b_fn)
    return MetricSpec(base.chart, norm, [eps], label=f"alphabeta-{getattr(phi, '__name__', 'phi')}-eps{eps:g}", berwald=True)
