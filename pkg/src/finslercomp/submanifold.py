"""Embedded submanifolds, unit conormal frames and the co-extrinsic geometry.

The unit conormal sphere at x is parametrised linearly: an orthonormal basis
``nu0`` of the annihilator of T_xN is carried to nearby parameters by the
Euclidean projector onto the annihilator, and a Euclidean unit vector ``w``
picks the covector omega = (P(u) nu0) w, normalised by F*.  The normal vector
n = L^{-1}(xi) and every derivative of it come from the implicit derivative
of the Legendre inverse.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._jaxcfg import jax, jnp
from .errors import RankLoss, SingularPoint
from .geodesic import integrate_geodesic
from .metric import MetricSpec
from .quadrature import sphere_rule


@dataclass(frozen=True, eq=False)
class SubmanifoldSpec:
    """N = image of ``embedding(u, q)`` for u in a k-dimensional parameter box."""

    spec: MetricSpec
    k: int
    embedding: Callable
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    domain: tuple = ()
    periodic: tuple = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "params", np.atleast_1d(np.asarray(self.params, dtype=float)))
        if not 0 <= self.k <= self.spec.dim:
            raise ValueError("submanifold dimension must lie in [0, m]")
        if len(self.domain) != self.k:
            raise ValueError("parameter domain must have k intervals")
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * self.k)

    @property
    def m(self) -> int:
        return self.spec.dim

    def point(self, u) -> np.ndarray:
        return np.asarray(self.embedding(jnp.asarray(u, dtype=float), jnp.asarray(self.params)))

    def tangent(self, u) -> np.ndarray:
        if self.k == 0:
            return np.zeros((self.m, 0))
        return np.asarray(jax.jacfwd(self.embedding)(jnp.asarray(u, dtype=float), jnp.asarray(self.params)))


def _point_embedding(u, q):
    return q


def point_submanifold(spec: MetricSpec, x) -> SubmanifoldSpec:
    return SubmanifoldSpec(spec, 0, _point_embedding, np.asarray(x, float), (), (), "point")


def _line_embedding(u, q):
    m = q.shape[0] // 2
    return q[:m] + u[0] * q[m:]


def line_submanifold(spec: MetricSpec, x0, direction, half_length: float = 1.0) -> SubmanifoldSpec:
    q = np.concatenate([np.asarray(x0, float), np.asarray(direction, float)])
    return SubmanifoldSpec(spec, 1, _line_embedding, q, ((-half_length, half_length),), (False,), "line")


def _coordinate_curve(u, q):
    # x(u) = base + u e_axis, q = [axis, base...]
    axis = q[0].astype(int)
    base = q[1:]
    return base.at[axis].add(u[0])


def coordinate_curve(spec: MetricSpec, base, axis: int, domain, periodic=False, label="curve") -> SubmanifoldSpec:
    """The coordinate line through ``base`` along ``axis``."""
    if not 0 <= int(axis) < spec.dim or len(base) != spec.dim:
        raise ValueError(f"axis {axis} / base of length {len(base)} do not fit a {spec.dim}-dimensional chart")
    q = np.concatenate([[float(axis)], np.asarray(base, float)])
    return SubmanifoldSpec(spec, 1, _coordinate_curve, q, (tuple(domain),), (periodic,), label)


def _radial_circle(u, q):
    # circle |x| = q[0] in a plane chart
    return q[0] * jnp.array([jnp.cos(u[0]), jnp.sin(u[0])])


def stereographic_circle(spec: MetricSpec, radius: float) -> SubmanifoldSpec:
    return SubmanifoldSpec(spec, 1, _radial_circle, [radius], ((0.0, 2 * np.pi),), (True,), "circle")


def _coordinate_plane(u, q):
    # x = base with the axes listed in q[1:1+k] replaced by u
    k = u.shape[0]
    axes = q[:k].astype(int)
    base = q[k:]
    return base.at[axes].set(u)


def coordinate_slice(spec: MetricSpec, base, axes, domain, periodic=None, label="slice") -> SubmanifoldSpec:
    k = len(axes)
    if len(set(axes)) != k or not all(0 <= int(a) < spec.dim for a in axes) or len(base) != spec.dim:
        raise ValueError(f"axes {list(axes)} / base do not fit a {spec.dim}-dimensional chart")
    q = np.concatenate([np.asarray(axes, float), np.asarray(base, float)])
    return SubmanifoldSpec(spec, k, _coordinate_plane, q, tuple(map(tuple, domain)), tuple(periodic or (False,) * k), label)


def _frame_functions(spec: MetricSpec, emb: Callable, k: int):
    kern = spec.kernel
    m = spec.dim
    key = ("frame", emb, k, m)
    fns = kern.cache.get(key)
    if fns is not None:
        return fns
    raw = kern.raw
    leg_inv, F, legendre, g, chern = raw["leg_inv"], raw["F"], raw["legendre"], raw["g"], raw["chern"]

    def tangent(u, q):
        if k == 0:
            return jnp.zeros((m, 0))
        return jax.jacfwd(emb)(u, q)

    def ann(u, q, nu0):
        if k == 0:
            return nu0
        E = tangent(u, q)
        P = jnp.eye(m) - E @ jnp.linalg.solve(E.T @ E, E.T)
        return P @ nu0

    def nvec(u, w, p, q, nu0):
        x = emb(u, q)
        y = leg_inv(x, ann(u, q, nu0) @ w, p)
        return y / F(x, y, p)

    def frame(u, w, tau, p, q, nu0):
        x = emb(u, q)
        E = tangent(u, q)
        n = nvec(u, w, p, q, nu0)
        xi = legendre(x, n, p)
        gn = g(x, n, p)
        eg = jax.jacfwd(nvec, 1)(u, w, p, q, nu0) @ tau
        out = dict(x=x, n=n, xi=xi, gn=gn, E=E, eg=eg)
        if k > 0:
            Gam = chern(x, n, p)
            dn_u = jax.jacfwd(nvec, 0)(u, w, p, q, nu0)
            dn_tan = dn_u + jnp.einsum("ijl,j,la->ia", Gam, n, E)
            hess = jax.jacfwd(jax.jacfwd(emb))(u, q)  # [i, a, b]
            h = jnp.einsum("i,iab->ab", xi, hess) + jnp.einsum("i,ijl,jb,la->ab", xi, Gam, E, E)
            Gt = E.T @ gn @ E
            W = -jnp.linalg.solve(Gt, E.T @ gn @ dn_tan)
            out.update(dn_tan=dn_tan, h=h, W=W, Gam=Gam)
        return out

    def sphere_density(u, w, tau, p, q, nu0):
        # sqrt det g_n(e_g, e_h) only, for the conormal sphere measure
        x = emb(u, q)
        n = nvec(u, w, p, q, nu0)
        eg = jax.jacfwd(nvec, 1)(u, w, p, q, nu0) @ tau
        G = eg.T @ g(x, n, p) @ eg
        return jnp.sqrt(jnp.linalg.det(G)) if G.shape[0] else jnp.ones(())

    fns = dict(
        frame=jax.jit(frame), nvec=nvec, ann=ann,
        sphere_density=jax.jit(jax.vmap(sphere_density, in_axes=(None, 0, 0, None, None, None))),
    )
    kern.cache[key] = fns
    return fns


@dataclass
class ConormalFrame:
    """A unit conormal xi at x = phi(u) with n = L^{-1}(xi) and the co-extrinsic data.

    ``E`` holds the tangent vectors d phi / du^alpha, ``eg`` the vectors
    L^{-1}_*(d xi / d theta_g); together with n they are g_n-orthogonal blocks.
    ``h``, ``W`` and ``H`` are None when k = 0.
    """

    sub: SubmanifoldSpec
    u: np.ndarray
    w: np.ndarray
    tau: np.ndarray
    nu0: np.ndarray
    x: np.ndarray
    n: np.ndarray
    xi: np.ndarray
    gn: np.ndarray
    E: np.ndarray
    eg: np.ndarray
    dn_tan: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None

    @property
    def k(self) -> int:
        return self.sub.k

    @property
    def m(self) -> int:
        return self.sub.m

    @property
    def H(self) -> Optional[float]:
        return None if self.W is None else float(np.trace(self.W))

    @property
    def basis(self) -> np.ndarray:
        """Adapted basis [e_alpha | e_g] of n^perp, columns."""
        return np.concatenate([self.E, self.eg], axis=1)

    def gram(self) -> np.ndarray:
        B = np.concatenate([self.n[:, None], self.basis], axis=1)
        return B.T @ self.gn @ B

    def initial_velocity(self) -> np.ndarray:
        """A'(0): columns are D_T J(0) for the adapted Jacobi fields, in the basis [E | eg]."""
        m, k = self.m, self.k
        Ap = np.zeros((m - 1, m - 1))
        if k > 0:
            c = np.linalg.solve(np.concatenate([self.basis, self.n[:, None]], axis=1), self.dn_tan)
            Ap[:, :k] = c[: m - 1]
        Ap[k:, k:] = np.eye(m - 1 - k)
        return Ap

    def to_dict(self) -> dict:
        d = {
            "u": self.u.tolist(), "x": self.x.tolist(), "xi": self.xi.tolist(), "n": self.n.tolist(),
            "k": self.k,
        }
        if self.k:
            d.update(h=self.h.tolist(), weingarten=self.W.tolist(), H=self.H)
        return d


def annihilator_basis(sub: SubmanifoldSpec, u) -> np.ndarray:
    """Euclidean-orthonormal basis (columns) of the covectors annihilating T_xN."""
    m, k = sub.m, sub.k
    if k == 0:
        return np.eye(m)
    E = sub.tangent(u)
    U, S, _ = np.linalg.svd(E, full_matrices=True)
    if S[-1] < 1e-10 * max(S[0], 1e-300):
        raise RankLoss(f"embedding derivative has rank < {k} at u = {u}")
    return U[:, k:]


def w_from_angles(theta, d: int) -> np.ndarray:
    """Hyperspherical map onto the unit sphere in R^d (d >= 2); d = 1 takes a sign."""
    theta = np.atleast_1d(np.asarray(theta, float))
    if d == 1:
        return np.array([1.0 if theta[0] >= 0 else -1.0])
    w = np.ones(d)
    for i, th in enumerate(theta[: d - 1]):
        w[i] *= np.cos(th)
        w[i + 1 :] *= np.sin(th)
    return w


def sphere_completion(w: np.ndarray) -> np.ndarray:
    """Columns completing the unit vector w to an orthonormal basis of R^d."""
    d = len(w)
    if d == 1:
        return np.zeros((1, 0))
    Q, _ = np.linalg.qr(np.concatenate([w[:, None], np.eye(d)], axis=1))
    Q = Q[:, :d] * np.sign(Q[:, :1].T @ w)[0]
    return Q[:, 1:]


def conormal_sphere_point(
    sub: SubmanifoldSpec, u=None, theta=None, *, w=None, covector=None, tau=None, tangent_basis=None
) -> ConormalFrame:
    """Unit conormal frame at phi(u).

    The direction inside the annihilator is chosen by ``theta`` (angles),
    ``w`` (Euclidean unit coordinates in the annihilator basis) or
    ``covector`` (any covector; its annihilator component is used).
    """
    spec = sub.spec
    u = np.zeros(sub.k) if u is None else np.atleast_1d(np.asarray(u, float))
    x = sub.point(u)
    if spec.chart.is_singular(x):
        raise SingularPoint(f"submanifold point {x} lies in the singular set")
    nu0 = annihilator_basis(sub, u)
    d = sub.m - sub.k
    if covector is not None:
        w = nu0.T @ np.asarray(covector, float)
    elif w is None:
        w = w_from_angles(0.0 if theta is None else theta, d)
    w = np.asarray(w, float)
    w = w / np.linalg.norm(w)
    tau = sphere_completion(w) if tau is None else np.asarray(tau, float)
    fns = _frame_functions(spec, sub.embedding, sub.k)
    out = fns["frame"](
        jnp.asarray(u), jnp.asarray(w), jnp.asarray(tau), spec.p, jnp.asarray(sub.params), jnp.asarray(nu0)
    )
    out = {key: np.asarray(val) for key, val in out.items()}
    fr = ConormalFrame(
        sub, u, w, tau, nu0, out["x"], out["n"], out["xi"], out["gn"], out["E"], out["eg"],
        out.get("dn_tan"), out.get("h"), out.get("W"),
    )
    if tangent_basis is not None and sub.k:
        # re-express the tangent block in another basis E P
        P = np.asarray(tangent_basis, float)
        fr.E = fr.E @ P
        fr.dn_tan = fr.dn_tan @ P
        fr.h = P.T @ fr.h @ P
        fr.W = np.linalg.solve(P, fr.W @ P)
    return fr


def co_second_fundamental(frame: ConormalFrame, X, Y, extension: Optional[Callable] = None) -> float:
    """h_xi(X, Y) = xi(nabla^n_X Ybar) for X, Y given by coefficients in the basis d phi/du.

    ``extension(u)`` returns the coefficients of the extension Ybar at u
    (default: constant coefficients Y).
    """
    sub = frame.sub
    if sub.k == 0:
        return None
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    ext = (lambda u: jnp.asarray(Y)) if extension is None else extension
    q = jnp.asarray(sub.params)

    def ybar(u):
        return jax.jacfwd(sub.embedding)(u, q) @ ext(u)

    _, dY = jax.jvp(ybar, (jnp.asarray(frame.u),), (jnp.asarray(X),))
    Yv = frame.E @ Y
    Xv = frame.E @ X
    Gam = np.asarray(sub.spec.call("chern", frame.x, frame.n))
    cov = np.asarray(dY) + np.einsum("ijl,j,l->i", Gam, Yv, Xv)
    return float(frame.xi @ cov)


def co_weingarten(frame: ConormalFrame) -> Optional[np.ndarray]:
    return frame.W


def co_mean_curvature(frame: ConormalFrame) -> Optional[float]:
    return frame.H


def conormal_exp(sub: SubmanifoldSpec, frame: ConormalFrame, t: float) -> np.ndarray:
    """E(t, xi) = gamma_n(t) (wrapped coordinates)."""
    if t == 0:
        return frame.x.copy()
    seg = integrate_geodesic(sub.spec, frame.x, frame.n, t_end=float(t), steps=1)
    return sub.spec.chart.wrap(seg.x[-1])


def conormal_frames(sub: SubmanifoldSpec, u, n_dir: int = 8):
    """Frames at u over a product rule on the unit conormal sphere, with weights.

    Returns (frames, weights, densities) where densities are sqrt det g_n(e_g, e_h)
    so that sum(weights * densities) approximates nu_x.
    """
    d = sub.m - sub.k
    W, wts = sphere_rule(d - 1, n_dir)
    frames, dens = [], []
    for w in W:
        fr = conormal_sphere_point(sub, u, w=w)
        G = fr.eg.T @ fr.gn @ fr.eg
        dens.append(np.sqrt(np.linalg.det(G)) if G.size else 1.0)
        frames.append(fr)
    return frames, wts, np.array(dens)


def conormal_densities(sub: SubmanifoldSpec, u, n_dir: int = 8):
    """(weights, densities) of the conormal sphere rule at u, evaluated in one batch."""
    d = sub.m - sub.k
    u = np.zeros(sub.k) if u is None else np.atleast_1d(np.asarray(u, float))
    x = sub.point(u)
    if sub.spec.chart.is_singular(x):
        raise SingularPoint(f"submanifold point {x} lies in the singular set")
    W, wts = sphere_rule(d - 1, n_dir)
    taus = np.array([sphere_completion(w) for w in W])
    fns = _frame_functions(sub.spec, sub.embedding, sub.k)
    dens = fns["sphere_density"](
        jnp.asarray(u), jnp.asarray(W), jnp.asarray(taus), sub.spec.p, jnp.asarray(sub.params),
        jnp.asarray(annihilator_basis(sub, u)),
    )
    return wts, np.asarray(dens)


def min_co_mean_curvature(sub: SubmanifoldSpec, n_u: int = 8, n_dir: int = 8, rng=None):
    """Sampled minimum of H_xi over unit conormals at grid points of N."""
    best, arg = np.inf, None
    for u in parameter_grid(sub, n_u):
        frames, _, _ = conormal_frames(sub, u, n_dir)
        for fr in frames:
            if fr.H < best:
                best, arg = fr.H, fr
    return best, arg


def parameter_grid(sub: SubmanifoldSpec, n: int) -> np.ndarray:
    if sub.k == 0:
        return np.zeros((1, 0))
    axes = []
    for (lo, hi), per in zip(sub.domain, sub.periodic):
        if per:
            axes.append(lo + (hi - lo) * np.arange(n) / n)
        else:
            axes.append(np.linspace(lo, hi, n))
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)
