"""Busemann-Hausdorff and Holmes-Thompson densities, distortion, S-curvature,
total volumes and the conormal sphere measure.

Both densities reduce to integrals over a unit sphere: the indicatrix is the
radial graph r(u) = 1 / F(x, u), so for y = L u

    vol{F < 1} = (|det L| / m) sum_u w_u F(x, L u)^{-m},
    sigma_HT   = (|det L| / c_{m-1}) sum_u w_u det g(x, L u) F(x, L u)^{-m}.

For BH the rays are re-centred at the indicatrix centroid, which keeps the
product rule accurate for strongly non-reversible norms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from ._jaxcfg import jax, jnp
from .errors import NonConvergent, QuadratureFailure
from .geodesic import integrate_geodesic, integrate_geodesics_batch
from .metric import MetricSpec, _check_direction, _check_point
from .quadrature import box_rule, sphere_area, sphere_rule, simpson
from .submanifold import SubmanifoldSpec, conormal_densities, conormal_frames

VolumeForm = Union[str, Callable]
DEFAULT_NODES = 16


def _form_key(form):
    if isinstance(form, str):
        f = form.upper()
        if f not in ("BH", "HT"):
            raise ValueError(f"unknown volume form {form!r}")
        return f
    return form


def _density_jax(spec: MetricSpec, form: str, n: int):
    kern = spec.kernel
    m = spec.dim
    key = ("density", form, m, n)
    fn = kern.cache.get(key)
    if fn is not None:
        return fn
    U, w = sphere_rule(m - 1, n)
    U = jnp.asarray(U)
    w = jnp.asarray(w)
    c = sphere_area(m - 1)
    F, g = kern.raw["F"], kern.raw["g"]

    E = jnp.concatenate([jnp.eye(m), -jnp.eye(m)])

    def _precond(x, p):
        # y = L u with L = C^{-T}, C C^T the mean of g over +-e_i: the indicatrix
        # becomes nearly round in u, which keeps the sphere rule accurate
        gbar = jnp.mean(jax.vmap(lambda e: g(x, e, p))(E), axis=0)
        C = jnp.linalg.cholesky(gbar)
        L = jax.scipy.linalg.solve_triangular(C, jnp.eye(m), lower=True).T
        return L, 1.0 / jnp.prod(jnp.diag(C))

    if form == "BH":

        def sigma(x, p):
            L, detL = _precond(x, p)
            Fu = lambda z: F(x, L @ z, p)  # noqa: E731

            def rays(cen, S):
                # F(cen + r S u) - 1 is convex in r and negative at 0: Newton from
                # the right (r = (1 + F(-cen)) / F(S u) is past the root) is monotone
                Fmc = Fu(-cen)

                def ray(u):
                    f = lambda r: Fu(cen + r * (S @ u)) - 1.0  # noqa: E731
                    r = (1.0 + Fmc) / Fu(S @ u)
                    return jax.lax.fori_loop(0, 40, lambda _, r: r - f(r) / jax.grad(f)(r), r)

                return jax.vmap(ray)(U)

            def moments(cen, S, r):
                dS = jnp.linalg.det(S)
                V = U @ S.T
                vol = dS * (w @ r**m) / m
                off = dS * ((w * r ** (m + 1)) @ V) / ((m + 1) * vol)
                sec = dS * jnp.einsum("n,ni,nj->ij", w * r ** (m + 2), V, V) / ((m + 2) * vol)
                cov = sec - jnp.outer(off, off)
                return vol, cen + off, jnp.linalg.cholesky(cov)

            # rays from the centroid in coordinates whitened by the second moments;
            # an off-centre ellipsoid (Randers) becomes a round ball
            cen, S = jnp.zeros(m), jnp.eye(m)
            r = 1.0 / jax.vmap(Fu)(U)
            for _ in range(2):
                _, cen, S = moments(cen, S, r)
                S = S / jnp.linalg.det(S) ** (1.0 / m)
                r = rays(cen, S)
            rc = r
            return c / (detL * (w @ rc**m))

    else:

        def sigma(x, p):
            L, detL = _precond(x, p)
            Fx = jax.vmap(lambda u: F(x, L @ u, p))(U)
            dg = jax.vmap(lambda u: jnp.linalg.det(g(x, L @ u, p)))(U)
            return detL * (w @ (dg * Fx ** (-m))) / c

    def tau(x, y, p):
        return 0.5 * jnp.log(jnp.linalg.det(g(x, y, p))) - jnp.log(sigma(x, p))

    G = kern.raw["spray"]

    def s_curv(x, y, p):
        tx = jax.grad(tau, 0)(x, y, p)
        ty = jax.grad(tau, 1)(x, y, p)
        return tx @ y - 2.0 * ty @ G(x, y, p)

    fn = dict(
        sigma=jax.jit(sigma),
        sigma_batch=jax.jit(jax.vmap(sigma, in_axes=(0, None))),
        tau=jax.jit(tau),
        tau_batch=jax.jit(jax.vmap(tau, in_axes=(0, 0, None))),
        s_curv=jax.jit(s_curv),
    )
    kern.cache[key] = fn
    return fn


def bh_density(spec: MetricSpec, x, n: int = DEFAULT_NODES) -> float:
    x = _check_point(spec, x)
    val = float(_density_jax(spec, "BH", n)["sigma"](jnp.asarray(x), spec.p))
    if not (np.isfinite(val) and val > 0):
        raise QuadratureFailure(f"BH density {val} at {x}")
    return val


def ht_density(spec: MetricSpec, x, n: int = DEFAULT_NODES) -> float:
    x = _check_point(spec, x)
    val = float(_density_jax(spec, "HT", n)["sigma"](jnp.asarray(x), spec.p))
    if not (np.isfinite(val) and val > 0):
        raise QuadratureFailure(f"HT density {val} at {x}")
    return val


def density(spec: MetricSpec, form: VolumeForm, x, n: int = DEFAULT_NODES) -> float:
    form = _form_key(form)
    if form == "BH":
        return bh_density(spec, x, n)
    if form == "HT":
        return ht_density(spec, x, n)
    return float(form(np.asarray(x, float)))


def density_batch(spec: MetricSpec, form: VolumeForm, X, n: int = DEFAULT_NODES, chunk: int = 512) -> np.ndarray:
    form = _form_key(form)
    X = np.asarray(X, float)
    if not isinstance(form, str):
        return np.array([float(form(x)) for x in X])
    fn = _density_jax(spec, form, n)["sigma_batch"]
    out = [np.asarray(fn(jnp.asarray(X[s : s + chunk]), spec.p)) for s in range(0, len(X), chunk)]
    return np.concatenate(out) if out else np.zeros(0)


def distortion(spec: MetricSpec, form: VolumeForm, x, y, n: int = DEFAULT_NODES) -> float:
    """tau(y) = log(sqrt(det g(x, y)) / sigma(x))."""
    x = _check_point(spec, x)
    y = _check_direction(spec, x, y)
    form = _form_key(form)
    if isinstance(form, str):
        return float(_density_jax(spec, form, n)["tau"](jnp.asarray(x), jnp.asarray(y), spec.p))
    return float(0.5 * np.log(np.linalg.det(spec.call("g", x, y))) - np.log(form(x)))


def distortion_batch(spec: MetricSpec, form: str, X, Y, n: int = DEFAULT_NODES, chunk: int = 512) -> np.ndarray:
    fn = _density_jax(spec, _form_key(form), n)["tau_batch"]
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    out = [np.asarray(fn(jnp.asarray(X[s : s + chunk]), jnp.asarray(Y[s : s + chunk]), spec.p)) for s in range(0, len(X), chunk)]
    return np.concatenate(out)


def s_curvature(spec: MetricSpec, form: VolumeForm, x, y, h: float = 1e-3, n: int = DEFAULT_NODES) -> float:
    """d/dt tau(gamma_y'(t)) at t = 0 by a central difference on the integrated geodesic."""
    x = _check_point(spec, x)
    y = _check_direction(spec, x, y)
    fwd = integrate_geodesic(spec, x, y, t_grid=[0.0, h])
    bwd = integrate_geodesic(spec, x, y, t_grid=[0.0, -h])
    tp = distortion(spec, form, fwd.x[-1], fwd.v[-1], n)
    tm = distortion(spec, form, bwd.x[-1], bwd.v[-1], n)
    return (tp - tm) / (2 * h)


def s_curvature_ad(spec: MetricSpec, form: str, x, y, n: int = DEFAULT_NODES) -> float:
    """Same quantity by the chain rule: d tau/dx . y - 2 d tau/dy . G."""
    x = _check_point(spec, x)
    y = _check_direction(spec, x, y)
    return float(_density_jax(spec, _form_key(form), n)["s_curv"](jnp.asarray(x), jnp.asarray(y), spec.p))


@dataclass
class VolumeResult:
    value: float
    coarse: float
    rel_change: float
    nodes: int
    excluded_weight: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _chart_volume(spec, form, counts, n_dir, bounds=None):
    chart = spec.chart
    bounds = bounds or chart.bounds
    if not all(np.isfinite(lo) and np.isfinite(hi) for lo, hi in bounds):
        raise QuadratureFailure("total volume needs a bounded coordinate box")
    X, w = box_rule(bounds, chart.periodic, counts)
    bad = np.array([chart.is_singular(x) for x in X]) if chart.singular is not None else np.zeros(len(X), bool)
    sig = density_batch(spec, form, X[~bad], n_dir)
    if not np.all(np.isfinite(sig)):
        raise QuadratureFailure("non-finite density at a quadrature node")
    return float(w[~bad] @ sig), float(w[bad].sum()), len(X)


def total_volume(
    spec: MetricSpec,
    form: VolumeForm = "HT",
    counts=None,
    n_dir: int = DEFAULT_NODES,
    rtol: float = 1e-6,
    bounds=None,
) -> VolumeResult:
    """Chart-box quadrature of the density with a refinement (ratio) test.

    Gauss-Legendre on bounded axes, midpoint rule on periodic axes.  The
    value at ``counts`` is compared with the value at ``counts // 2`` (and
    half the sphere nodes); NonConvergent if they differ by more than 10 rtol.
    """
    m = spec.dim
    counts = tuple(counts or (24,) * m)
    fine, excl, nodes = _chart_volume(spec, form, counts, n_dir, bounds)
    coarse_counts = tuple(max(2, c // 2) for c in counts)
    coarse, _, _ = _chart_volume(spec, form, coarse_counts, max(2, n_dir // 2), bounds)
    rel = abs(fine - coarse) / abs(fine)
    if rel > 10 * rtol:
        raise NonConvergent(f"volume changed by {rel:.3e} under refinement")
    return VolumeResult(fine, coarse, rel, nodes, excl)


def conormal_sphere_measure(sub: SubmanifoldSpec, u=None, n_dir: int = DEFAULT_NODES) -> float:
    """nu_x of the unit conormal sphere at phi(u)."""
    w, dens = conormal_densities(sub, u, n_dir)
    val = float(w @ dens)
    if not (np.isfinite(val) and val > 0):
        raise QuadratureFailure(f"conormal sphere measure {val}")
    return val


def submanifold_volume(sub: SubmanifoldSpec, form: VolumeForm = "HT", n: int = 64, n_dir: int = DEFAULT_NODES) -> float:
    """Volume of N for the induced norm F(phi(u), D phi w)."""
    if sub.k == 0:
        return 1.0
    from .metric import MetricSpec as _MS  # local: the induced norm is built per call

    U, wu = box_rule(sub.domain, sub.periodic, (n,) * sub.k)
    D, wd = sphere_rule(sub.k - 1, n_dir)
    form = _form_key(form)
    k = sub.k
    c = sphere_area(k - 1)
    total = 0.0
    X = np.array([sub.point(u) for u in U])
    Es = np.array([sub.tangent(u) for u in U])
    for x, E, wt in zip(X, Es, wu):
        Y = D @ E.T
        Xr = np.repeat(x[None], len(D), axis=0)
        Fv = sub.spec.batch("F", Xr, Y)
        if form == "BH":
            sig = c / (wd @ Fv ** (-k))
        else:
            G = sub.spec.batch("g", Xr, Y)
            Gk = np.einsum("ia,nij,jb->nab", E, G, E)
            sig = (wd @ (np.linalg.det(Gk) * Fv ** (-k))) / c
        total += wt * sig
    return float(total)


# ------------------------------------------------------------------ point-case integrals


def _unit_normals(spec: MetricSpec, x, n_dir: int):
    from .submanifold import point_submanifold

    sub = point_submanifold(spec, x)
    frames, w, dens = conormal_frames(sub, None, n_dir)
    N = np.array([fr.n for fr in frames])
    return sub, frames, w, dens, N


def sup_distortion_factor(
    spec: MetricSpec, form: str, x, d: float, n_dir: int = DEFAULT_NODES, nsteps: int = 400, global_samples=None
):
    """Integral over the unit conormal sphere at x of sup_{t in [0, d]} e^{-tau(gamma_n'(t))} d nu_x.

    Directions whose geodesic leaves the chart before d fall back to the
    supremum of e^{-tau} over ``global_samples`` (rows (x, y)); the number of
    such directions is returned.
    """
    x = _check_point(spec, x)
    _, frames, w, dens, N = _unit_normals(spec, x, n_dir)
    X0 = np.repeat(x[None], len(N), axis=0)
    t, xs, vs = integrate_geodesics_batch(spec, X0, N, d, nsteps)
    chart = spec.chart
    K, B, m = xs.shape
    flat_x = xs.reshape(-1, m)
    flat_v = vs.reshape(-1, m)
    ok = np.array([chart.inside(p) and not chart.is_singular(p) for p in flat_x]).reshape(K, B)
    ok &= np.all(np.isfinite(xs), axis=2)
    escaped = ~np.all(ok, axis=0)
    taus = np.full(K * B, np.nan)
    sel = ok.ravel()
    taus[sel] = distortion_batch(spec, form, flat_x[sel], flat_v[sel], n_dir)
    taus = taus.reshape(K, B)
    factor = np.exp(-np.nanmin(np.where(ok, taus, np.nan), axis=0))
    fallback = None
    if np.any(escaped):
        if global_samples is None:
            raise QuadratureFailure("geodesics leave the chart and no global samples were given")
        GX, GY = global_samples
        fallback = float(np.exp(-np.min(distortion_batch(spec, form, GX, GY, n_dir))))
        factor = np.where(escaped, np.maximum(factor, fallback), factor)
    return float(w @ (dens * factor)), int(np.sum(escaped)), fallback


def pullback_ball_volume(spec: MetricSpec, form: str, x, t1: float, n_dir: int = DEFAULT_NODES, grid: int = 200) -> float:
    """int over the unit conormal sphere and (0, t1) of e^{-tau(gamma_n'(t))} det A(t, n) dt d nu_x."""
    from .jacobi import solve_A

    x = _check_point(spec, x)
    _, frames, w, dens, _ = _unit_normals(spec, x, n_dir)
    vals = []
    for fr in frames:
        sol = solve_A(fr, t1, grid=grid, find_focal=False)
        taus = distortion_batch(spec, form, sol.x, sol.v, n_dir)
        vals.append(simpson(np.exp(-taus) * sol.det, sol.t))
    return float(w @ (dens * np.array(vals)))


# ------------------------------------------------------------------ appendix checks


def distortion_bound_check(spec: MetricSpec, form: str, X, Y, Lambda: float, n: int = DEFAULT_NODES):
    """max e^{-tau} over samples against Lambda^m."""
    from .bounds import ComparisonReport

    e = np.exp(-distortion_batch(spec, form, X, Y, n))
    return ComparisonReport(
        f"distortion_bound_{form}", float(e.max()), float(Lambda) ** spec.dim, "<=",
        inputs={"Lambda": float(Lambda), "m": spec.dim, "samples": len(e)}, sampled=["Lambda"],
    )


def randers_distortion_check(spec: MetricSpec, form: str, X, Y, b: float, n: int = DEFAULT_NODES):
    """e^{-tau_BH} <= (1+b)^{(m+1)/2}, e^{-tau_HT} <= (1-b)^{-(m+1)/2}, b = sup of the beta norm."""
    from .bounds import ComparisonReport

    m = spec.dim
    e = np.exp(-distortion_batch(spec, form, X, Y, n))
    bound = (1 + b) ** ((m + 1) / 2) if form.upper() == "BH" else (1 - b) ** (-(m + 1) / 2)
    return ComparisonReport(
        f"randers_distortion_{form}", float(e.max()), float(bound), "<=",
        inputs={"b": float(b), "m": m, "samples": len(e)}, sampled=["b"],
    )


def conormal_measure_check(sub: SubmanifoldSpec, u, Lambda: float, b: Optional[float] = None, n_dir: int = DEFAULT_NODES):
    """nu_x against c_{m-k-1} Lambda^{(m-k)/2}, or c_{m-k-1}/(1-b)^{(m-k+1)/2} when b is given."""
    from .bounds import ComparisonReport

    m, k = sub.m, sub.k
    nu = conormal_sphere_measure(sub, u, n_dir)
    c = sphere_area(m - k - 1)
    if b is None:
        return ComparisonReport(
            "conormal_measure", nu, c * float(Lambda) ** ((m - k) / 2), "<=",
            inputs={"Lambda": float(Lambda), "m": m, "k": k}, sampled=["Lambda"],
        )
    return ComparisonReport(
        "conormal_measure_randers", nu, c / (1 - b) ** ((m - k + 1) / 2), "<=", inputs={"b": float(b), "m": m, "k": k},
    )


def diameter_estimate(spec: MetricSpec, counts, bounds=None) -> float:
    """Largest forward graph distance on a chart grid (8/26-neighbour stencil).

    Edge weights are F at the edge midpoint; polygonal paths are never shorter
    than geodesics, so this estimate errs on the large side of the diameter.
    """
    from itertools import product

    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import dijkstra

    chart = spec.chart
    bounds = bounds or chart.bounds
    m = spec.dim
    counts = tuple(counts)
    axes = []
    for (lo, hi), per, c in zip(bounds, chart.periodic, counts):
        axes.append(lo + (hi - lo) * np.arange(c) / c if per else np.linspace(lo, hi, c))
    grids = np.meshgrid(*axes, indexing="ij")
    P = np.stack([gr.ravel() for gr in grids], axis=1)
    idx = np.arange(len(P)).reshape(counts)
    spans = np.array([hi - lo for lo, hi in bounds])
    rows, cols, dx = [], [], []
    for off in product((-1, 0, 1), repeat=m):
        if not any(off):
            continue
        src = idx
        dst = idx
        ok = np.ones(counts, bool)
        for a, o in enumerate(off):
            if o == 0:
                continue
            dst = np.roll(dst, -o, axis=a)
            if not chart.periodic[a]:
                sl = [slice(None)] * m
                sl[a] = slice(-1, None) if o > 0 else slice(0, 1)
                ok[tuple(sl)] = False
        s, d = src[ok], dst[ok]
        step = P[d] - P[s]
        for a in range(m):
            if chart.periodic[a]:
                step[:, a] = (step[:, a] + spans[a] / 2) % spans[a] - spans[a] / 2
        rows.append(s)
        cols.append(d)
        dx.append(step)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    dx = np.concatenate(dx)
    mid = P[rows] + 0.5 * dx
    good = np.array([not chart.is_singular(p) for p in mid]) if chart.singular is not None else np.ones(len(mid), bool)
    w = spec.batch("F", mid[good], dx[good])
    G = coo_matrix((w, (rows[good], cols[good])), shape=(len(P), len(P))).tocsr()
    D = dijkstra(G, directed=True)
    finite = D[np.isfinite(D)]
    return float(finite.max())
