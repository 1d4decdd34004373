"""Finsler metric specifications and the pointwise tensors derived from them.

A norm is a jax-traceable function ``F(x, y, p)`` of chart coordinates ``x``,
vector components ``y`` and a flat parameter array ``p``. Keeping parameters
as a traced argument lets every member of a metric family share one set of
compiled kernels.

Index conventions: ``g[i, j]``, ``cartan[i, j, k]``, ``chern[i, j, k]`` is
Gamma^i_{jk}, ``riemann[i, k]`` is R^i_k (so the Jacobi operator is
``R_y(V)^i = R^i_k V^k``) and ``chern_curvature[j, i, k, l]`` is R_j^i_{kl}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from ._jaxcfg import jax, jnp
from .chart import Chart, Flag, components
from .errors import DegenerateFlag, DegenerateTensor, NonAdmissible, SingularPoint

lax = jax.lax

NEWTON_MAXIT = 50
NEWTON_TOL = 1e-13
PD_TOL = 1e-10

_KERNELS: dict = {}
_ARITY = {"t_curvature": 4, "flag_curvature": 4, "flag_curvature_chern": 4}


class MetricKernel:
    """Compiled tensor calculus for one norm function (shared across parameters)."""

    def __init__(self, norm, g_override=None, spray_override=None):
        self.norm = norm

        def L(x, y, p):
            return 0.5 * norm(x, y, p) ** 2

        legendre = jax.grad(L, 1)
        g = g_override if g_override is not None else jax.jacfwd(legendre, 1)

        def cartan(x, y, p):
            # A_ijk = (F/4) d^3 F^2 / dy^i dy^j dy^k = (F/2) dg_ij/dy^k
            return 0.5 * norm(x, y, p) * jax.jacfwd(g, 1)(x, y, p)

        if spray_override is None:

            def spray(x, y, p):
                # G^i = 1/2 g^{il} (y^k d^2L/dx^k dy^l - dL/dx^l)
                Lyx = jax.jacfwd(legendre, 0)(x, y, p)
                Lx = jax.grad(L, 0)(x, y, p)
                return 0.5 * jnp.linalg.solve(g(x, y, p), Lyx @ y - Lx)

        else:
            spray = spray_override

        nonlinear = jax.jacfwd(spray, 1)  # N^i_j = dG^i/dy^j

        def chern(x, y, p):
            # Gamma^i_jk = 1/2 g^{il} (dg_jl/dx^k + dg_kl/dx^j - dg_jk/dx^l) with
            # d/dx^k -> delta/delta x^k = d/dx^k - N^m_k d/dy^m
            N = nonlinear(x, y, p)
            dgx = jax.jacfwd(g, 0)(x, y, p)
            dgy = jax.jacfwd(g, 1)(x, y, p)
            dg = dgx - jnp.einsum("jlm,mk->jlk", dgy, N)
            S = jnp.einsum("jlk->jkl", dg) + jnp.einsum("klj->jkl", dg) - dg
            return 0.5 * jnp.einsum("il,jkl->ijk", jnp.linalg.inv(g(x, y, p)), S)

        def riemann(x, y, p):
            G = spray(x, y, p)
            Gx = jax.jacfwd(spray, 0)(x, y, p)
            Gy = jax.jacfwd(spray, 1)(x, y, p)
            Gyx = jax.jacfwd(jax.jacfwd(spray, 1), 0)(x, y, p)
            Gyy = jax.jacfwd(jax.jacfwd(spray, 1), 1)(x, y, p)
            return (
                2.0 * Gx
                - jnp.einsum("ikj,j->ik", Gyx, y)
                + 2.0 * jnp.einsum("j,ijk->ik", G, Gyy)
                - Gy @ Gy
            )

        def chern_curvature(x, y, p):
            Gam = chern(x, y, p)
            N = nonlinear(x, y, p)
            dGx = jax.jacfwd(chern, 0)(x, y, p)
            dGy = jax.jacfwd(chern, 1)(x, y, p)
            dG = dGx - jnp.einsum("ijlm,mk->ijlk", dGy, N)  # delta_k Gamma^i_jl
            return (
                jnp.einsum("ijlk->jikl", dG)
                - jnp.einsum("ijkl->jikl", dG)
                + jnp.einsum("ihk,hjl->jikl", Gam, Gam)
                - jnp.einsum("ihl,hjk->jikl", Gam, Gam)
            )

        def t_curvature(x, y, v, p):
            gy = g(x, y, p)
            dGam = chern(x, v, p) - chern(x, y, p)
            return jnp.einsum("l,kl,kjm,j,m->", y, gy, dGam, v, v)

        def flag_curvature(x, y, V, p):
            gy = g(x, y, p)
            RV = riemann(x, y, p) @ V
            den = (y @ gy @ y) * (V @ gy @ V) - (y @ gy @ V) ** 2
            return (V @ gy @ RV) / den, den

        def flag_curvature_chern(x, y, V, p):
            gy = g(x, y, p)
            R = chern_curvature(x, y, p)
            RV = jnp.einsum("j,jskl,l,k->s", y, R, y, V)
            den = (y @ gy @ y) * (V @ gy @ V) - (y @ gy @ V) ** 2
            return (V @ gy @ RV) / den

        def newton(x, z, p):
            # damped Newton for min_y L(x,y) - z.y, whose minimiser is L^{-1}(z)
            m = x.shape[0]
            basis = jnp.concatenate([jnp.eye(m), -jnp.eye(m)])
            gbar = jnp.mean(jax.vmap(lambda e: g(x, e, p))(basis), axis=0)
            y0 = jnp.linalg.solve(gbar, z)

            def phi(y):
                return L(x, y, p) - z @ y

            def resid(y):
                return jnp.linalg.norm(legendre(x, y, p) - z)

            def cond(c):
                it, _, r = c
                return (it < NEWTON_MAXIT) & (r > NEWTON_TOL)

            def body(c):
                it, y, r = c
                grad = legendre(x, y, p) - z
                step = -jnp.linalg.solve(g(x, y, p), grad)
                slope = grad @ step
                f0 = phi(y)

                def lcond(lc):
                    t, k = lc
                    ok = (phi(y + t * step) <= f0 + 1e-4 * t * slope) | ((r < 1e-6) & (k == 0))
                    return (~ok) & (k < 60)

                def lbody(lc):
                    t, k = lc
                    return 0.5 * t, k + 1

                t, _ = lax.while_loop(lcond, lbody, (1.0, 0))
                ynew = y + t * step
                return it + 1, ynew, resid(ynew)

            it, y, r = lax.while_loop(cond, body, (0, y0, resid(y0)))
            return y, r, it

        def leg_inv_info(x, xi, p):
            s = jnp.linalg.norm(xi)
            y, r, it = newton(x, xi / s, p)
            return s * y, r, it

        @jax.custom_jvp
        def leg_inv(x, xi, p):
            return leg_inv_info(x, xi, p)[0]

        @leg_inv.defjvp
        def _leg_inv_jvp(primals, tangents):
            # implicit differentiation of L(x, y) = xi
            x, xi, p = primals
            dx, dxi, dp = tangents
            y = leg_inv(x, xi, p)
            _, lin = jax.jvp(lambda xx, pp: legendre(xx, y, pp), (x, p), (dx, dp))
            dy = jnp.linalg.solve(g(x, y, p), dxi - lin)
            return y, dy

        def dual_norm(x, xi, p):
            return norm(x, leg_inv(x, xi, p), p)

        def dual_tensor(x, xi, p):
            return jnp.linalg.inv(g(x, leg_inv(x, xi, p), p))

        self.raw = dict(
            F=norm,
            L=L,
            legendre=legendre,
            g=g,
            cartan=cartan,
            spray=spray,
            nonlinear=nonlinear,
            chern=chern,
            riemann=riemann,
            chern_curvature=chern_curvature,
            t_curvature=t_curvature,
            flag_curvature=flag_curvature,
            flag_curvature_chern=flag_curvature_chern,
            leg_inv=leg_inv,
            leg_inv_info=leg_inv_info,
            dual_norm=dual_norm,
            dual_tensor=dual_tensor,
        )
        self._jit: dict = {}
        self._batched: dict = {}
        self.cache: dict = {}

    def __getattr__(self, name):
        raw = self.__dict__.get("raw", {})
        if name in raw:
            fn = self._jit.get(name)
            if fn is None:
                fn = self._jit[name] = jax.jit(raw[name])
            return fn
        raise AttributeError(name)

    def batched(self, name: str):
        """jit(vmap(fn)) over every positional argument except the trailing params."""
        fn = self._batched.get(name)
        if fn is None:
            raw = self.raw[name]
            nargs = _ARITY.get(name, 3)
            axes = (0,) * (nargs - 1) + (None,)
            fn = self._batched[name] = jax.jit(jax.vmap(raw, in_axes=axes))
        return fn


def kernel_for(norm, g_override=None, spray_override=None) -> MetricKernel:
    key = (norm, g_override, spray_override)
    k = _KERNELS.get(key)
    if k is None:
        k = _KERNELS[key] = MetricKernel(norm, g_override, spray_override)
    return k


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """A chart plus a positively 1-homogeneous norm ``norm(x, y, params)``.

    ``g_override`` / ``spray_override`` replace the AD fundamental tensor or
    spray with closed forms (used by the Randers path). ``admissible`` returns
    a positive margin when ``y`` lies in the admissible cone.
    """

    chart: Chart
    norm: Callable
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    label: str = ""
    g_override: Optional[Callable] = None
    spray_override: Optional[Callable] = None
    admissible: Optional[Callable] = None
    riemannian: bool = False
    berwald: bool = False
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", np.atleast_1d(np.asarray(self.params, dtype=float)))

    @property
    def dim(self) -> int:
        return self.chart.dim

    @cached_property
    def kernel(self) -> MetricKernel:
        return kernel_for(self.norm, self.g_override, self.spray_override)

    @property
    def p(self):
        return jnp.asarray(self.params)

    def call(self, name, *args):
        """Evaluate kernel function ``name`` at numpy arguments, returning numpy."""
        fn = getattr(self.kernel, name)
        out = fn(*[jnp.asarray(a, dtype=float) for a in args], self.p)
        return jax.tree_util.tree_map(np.asarray, out)

    def batch(self, name, *args):
        fn = self.kernel.batched(name)
        out = fn(*[jnp.asarray(a, dtype=float) for a in args], self.p)
        return jax.tree_util.tree_map(np.asarray, out)


def _check_point(spec: MetricSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dim,):
        raise ValueError(f"expected a point of dimension {spec.dim}, got shape {x.shape}")
    if spec.chart.is_singular(x):
        raise SingularPoint(f"{x} lies in the excluded singular set of the chart")
    return x


def _check_direction(spec: MetricSpec, x, y, kind="vector") -> np.ndarray:
    y = components(y, kind)
    if y.shape != (spec.dim,):
        raise ValueError(f"expected {spec.dim} components, got shape {y.shape}")
    if not np.any(y):
        raise NonAdmissible("the zero vector has no fundamental tensor")
    if kind == "vector" and spec.admissible is not None:
        if float(spec.admissible(x, y, spec.params)) <= 0.0:
            raise NonAdmissible(f"{y} is outside the admissible cone at {x}")
    return y


def eval_norm(spec: MetricSpec, x, y) -> float:
    x = _check_point(spec, x)
    y = components(y, "vector")
    if not np.any(y):
        return 0.0
    y = _check_direction(spec, x, y)
    val = float(spec.call("F", x, y))
    if not val > 0.0:
        raise NonAdmissible(f"F({x}, {y}) = {val} is not positive")
    return val


def fundamental_tensor(spec: MetricSpec, x, y) -> np.ndarray:
    x = _check_point(spec, x)
    y = _check_direction(spec, x, y)
    g = spec.call("g", x, y)
    g = 0.5 * (g + g.T)
    w = np.linalg.eigvalsh(g)
    if w[0] < PD_TOL * np.trace(g):
        raise DegenerateTensor(f"smallest eigenvalue {w[0]:.3e} of g at {x}, {y}")
    return g


def cartan_tensor(spec: MetricSpec, x, y) -> np.ndarray:
    fundamental_tensor(spec, x, y)
    return spec.call("cartan", x, y)


def spray(spec: MetricSpec, x, y) -> np.ndarray:
    """Geodesic spray coefficients G^i; geodesics solve x'' + 2 G(x, x') = 0."""
    fundamental_tensor(spec, x, y)
    return spec.call("spray", x, y)


def chern_coefficients(spec: MetricSpec, x, y) -> np.ndarray:
    fundamental_tensor(spec, x, y)
    return spec.call("chern", x, y)


def riemann_curvature(spec: MetricSpec, x, y) -> np.ndarray:
    """Riemann curvature R_y as the matrix R^i_k, built from the spray."""
    fundamental_tensor(spec, x, y)
    return spec.call("riemann", x, y)


def chern_curvature(spec: MetricSpec, x, y) -> np.ndarray:
    """hh-curvature R_j^i_{kl} of the Chern connection from its curvature 2-form."""
    fundamental_tensor(spec, x, y)
    return spec.call("chern_curvature", x, y)


def flag_curvature(spec: MetricSpec, x, flag: Flag, tol: float = 1e-12, method: str = "chern") -> float:
    """Flag curvature K(y, V).

    ``method="chern"`` contracts the hh-curvature of the Chern connection;
    ``method="spray"`` uses the Riemann curvature of the spray (cheaper, the
    form used inside the Jacobi solver). Both agree to rounding.
    """
    x = _check_point(spec, x)
    y = _check_direction(spec, x, flag.pole)
    V = np.asarray(flag.transverse, dtype=float)
    K, den = spec.call("flag_curvature", x, y, V)
    if method == "chern":
        K = spec.call("flag_curvature_chern", x, y, V)
    elif method != "spray":
        raise ValueError(f"unknown curvature method {method!r}")
    gy = spec.call("g", x, y)
    scale = (y @ gy @ y) * (V @ gy @ V)
    if not den > tol * max(scale, 1e-300):
        raise DegenerateFlag("flag pole and transverse edge are (nearly) parallel")
    return float(K)


def orthonormal_completion(gram_metric: np.ndarray, y: np.ndarray, seed=None) -> np.ndarray:
    """A g-orthonormal basis of y^perp (columns), by Gram-Schmidt from ``seed``."""
    m = len(y)
    cols = [y / np.sqrt(y @ gram_metric @ y)]
    seed = np.eye(m) if seed is None else np.asarray(seed, dtype=float)
    for v in seed.T:
        w = v - sum((c @ gram_metric @ v) * c for c in cols)
        nrm2 = w @ gram_metric @ w
        if nrm2 > 1e-10 * max(v @ gram_metric @ v, 1e-300):
            cols.append(w / np.sqrt(nrm2))
        if len(cols) == m:
            break
    return np.array(cols[1:]).T


def ricci(spec: MetricSpec, x, y, seed=None, method: str = "chern") -> float:
    """Sum of flag curvatures K(y, e_i) over a g_y-orthonormal basis of y^perp."""
    gy = fundamental_tensor(spec, x, y)
    basis = orthonormal_completion(gy, np.asarray(y, float), seed)
    return float(sum(flag_curvature(spec, x, Flag(y, e), method=method) for e in basis.T))


def t_curvature(spec: MetricSpec, x, y, v) -> float:
    fundamental_tensor(spec, x, y)
    fundamental_tensor(spec, x, v)
    return float(spec.call("t_curvature", x, y, v))


@dataclass
class TBoundReport:
    l: float
    max_violation: float
    worst_sample: Optional[tuple]
    n_samples: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance


def t_bound_check(
    spec: MetricSpec, l: float, samples, tolerance: float = 1e-8, orthogonal: bool = False
) -> TBoundReport:
    """Test T_y(v) <= l [sqrt(g_y(v,v)) - g_y(v, y/F(y))]^2 F(y) on (x, y, v) samples.

    With ``orthogonal=True`` each v is first replaced by its g_y-orthogonal
    part, which is the only case the comparison arguments need (v tangent to
    N, y normal). For generic v the inequality cannot hold with finite l once
    T is not O(angle^4) as v -> y, and the Randers T is only O(angle^3).
    """
    samples = list(samples)
    if not np.isfinite(l):
        return TBoundReport(float(l), -np.inf, None, len(samples), tolerance)
    X = np.array([s[0] for s in samples], float)
    Y = np.array([s[1] for s in samples], float)
    V = np.array([s[2] for s in samples], float)
    G = spec.batch("g", X, Y)
    if orthogonal:
        gy = np.einsum("nij,nj->ni", G, Y)
        V = V - (np.einsum("ni,ni->n", V, gy) / np.einsum("ni,ni->n", Y, gy))[:, None] * Y
    T = spec.batch("t_curvature", X, Y, V)
    F = spec.batch("F", X, Y)
    gvv = np.einsum("ni,nij,nj->n", V, G, V)
    gvy = np.einsum("ni,nij,nj->n", V, G, Y) / F
    rhs = l * (np.sqrt(gvv) - gvy) ** 2 * F
    viol = T - rhs
    j = int(np.argmax(viol))
    return TBoundReport(float(l), float(viol[j]), (X[j], Y[j], V[j]), len(samples), tolerance)


def sphere_directions(m: int, n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Unit directions in R^m: a uniform angle grid for m = 2, random otherwise."""
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2 and rng is None:
        th = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    rng = rng or np.random.default_rng(0)
    v = rng.standard_normal((n, m))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def reversibility(spec: MetricSpec, points, directions) -> float:
    """Sampled lower bound of sup F(x,-y)/F(x,y)."""
    best = 1.0
    for x in np.atleast_2d(points):
        X = np.repeat(x[None], len(directions), axis=0)
        fp = spec.batch("F", X, directions)
        fm = spec.batch("F", X, -directions)
        best = max(best, float(np.max(fm / fp)))
    return best


def _max_generalized_ratio(Gs: np.ndarray, chunk: int = 256) -> float:
    """max over pairs (a, b) of lambda_max(G_b^{-1} G_a) for a stack of SPD matrices."""
    Linv = np.linalg.inv(np.linalg.cholesky(Gs))
    best = 1.0
    for s in range(0, len(Gs), chunk):
        Lb = Linv[s : s + chunk]
        M = np.einsum("bij,ajk,blk->abil", Lb, Gs, Lb)
        M = M.reshape(-1, Gs.shape[1], Gs.shape[1])
        best = max(best, float(np.max(np.linalg.eigvalsh(M)[:, -1])))
    return best


def uniformity(spec: MetricSpec, points, directions) -> float:
    """Sampled lower bound of Lambda_F = sup g_X(Y,Y)/g_Z(Y,Y) over a common base point.

    The sup over Y for a pair (X, Z) is the top generalized eigenvalue of
    (g_X, g_Z), so only X and Z are sampled.
    """
    best = 1.0
    for x in np.atleast_2d(points):
        X = np.repeat(x[None], len(directions), axis=0)
        Gs = spec.batch("g", X, directions)
        best = max(best, _max_generalized_ratio(0.5 * (Gs + np.transpose(Gs, (0, 2, 1)))))
    return best


def dual_uniformity(spec: MetricSpec, points, codirections) -> float:
    """Sampled uniformity constant of F* from g* at sampled covectors."""
    best = 1.0
    for x in np.atleast_2d(points):
        X = np.repeat(x[None], len(codirections), axis=0)
        Gs = spec.batch("dual_tensor", X, codirections)
        best = max(best, _max_generalized_ratio(0.5 * (Gs + np.transpose(Gs, (0, 2, 1)))))
    return best
