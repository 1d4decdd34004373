"""Declarative verification scenarios: parse, validate, run, report.

A scenario file (TOML) names a metric family, optional submanifolds, the
checks to run and numeric settings.  Hypothesis constants (delta, Lambda, l,
d, volumes) are either given in ``[constants]`` (closed-form provenance) or
sampled, and every report row records which.
"""
from __future__ import annotations

import copy
import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import bounds as B
from . import models, randers
from .errors import CheckFailure, ConfigError, FinslerError, NonReversible
from .geodesic import closed_orbit_length, parallel_transport, integrate_geodesic
from .jacobi import check_theorem_4_8, jacobi_oracle, min_flag_curvature_along, solve_A
from .legendre import legendre, legendre_inverse
from .metric import dual_uniformity, reversibility, sphere_directions, t_bound_check, uniformity
from .quadrature import simpson, sphere_area
from .submanifold import (
    conormal_frames,
    conormal_sphere_point,
    coordinate_curve,
    coordinate_slice,
    line_submanifold,
    min_co_mean_curvature,
    point_submanifold,
    stereographic_circle,
)
from . import volume as V

# ---------------------------------------------------------------- registries


METRICS = {
    "euclidean": models.euclidean,
    "flat_torus": models.flat_torus,
    "round_sphere": models.round_sphere,
    "stereographic_sphere": models.stereographic_sphere,
    "randers_flat": randers.randers_flat,
    "randers_wave": randers.randers_wave,
    "randers_linear": randers.randers_linear,
    "example_1_5": randers.example_1_5,
}

SUBMANIFOLDS = {
    "point": lambda spec, x: point_submanifold(spec, x),
    "line": lambda spec, x0, direction, half_length=1.0: line_submanifold(spec, x0, direction, half_length),
    "coordinate_curve": lambda spec, base, axis, domain, periodic=False: coordinate_curve(
        spec, base, axis, domain, periodic
    ),
    "stereographic_circle": lambda spec, radius: stereographic_circle(spec, radius),
    "coordinate_slice": lambda spec, base, axes, domain, periodic=None: coordinate_slice(
        spec, base, axes, domain, periodic
    ),
}

CHECKS = ("theorem_1_1", "cor_1_2", "cor_1_3", "thm_4_8", "thm_6_1", "invariants", "appendix", "jacobi_oracle", "example_1_5")

NUMERIC_DEFAULTS = {
    "form": "HT",
    "n_points": 25,
    "n_dirs": 8,
    "n_dir_quad": 16,
    "volume_counts": None,
    "volume_rtol": 1e-6,
    "diameter_counts": None,
    "n_u": 4,
    "n_frames": 8,
    "jacobi_grid": 400,
    "t_max": None,
    "delta_slack": 1e-6,
    "oracle_frames": 2,
    "oracle_t": 1.0,
    "oracle_tol": 1e-4,
    "sup_steps": 600,
    "sample_margin": 0.05,
}


@dataclass
class Scenario:
    id: str
    description: str
    metric: dict
    submanifolds: list
    checks: list
    numeric: dict
    constants: dict
    geodesic: Optional[dict]
    sweep: Optional[dict]
    seed: int = 0
    source: str = ""

    @property
    def sweep_values(self) -> list:
        return [None] if not self.sweep else list(self.sweep["values"])


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def parse_scenario(data: dict, source: str = "") -> Scenario:
    """Validate a decoded scenario table. Raises ConfigError on any problem."""
    _require(isinstance(data, dict), "scenario must be a table")
    known = {"id", "description", "seed", "metric", "submanifold", "checks", "numeric", "constants", "geodesic", "sweep"}
    extra = set(data) - known
    _require(not extra, f"unknown top-level keys {sorted(extra)}")
    _require(isinstance(data.get("id"), str) and data["id"], "missing scenario id")
    metric = data.get("metric")
    _require(isinstance(metric, dict) and "family" in metric, "missing [metric] family")
    _require(metric["family"] in METRICS, f"unknown metric family {metric['family']!r}")
    subs = data.get("submanifold", [])
    if isinstance(subs, dict):
        subs = [subs]
    for s in subs:
        _require(isinstance(s, dict) and s.get("family") in SUBMANIFOLDS, f"unknown submanifold family {s!r}")
    checks = data.get("checks", [])
    _require(isinstance(checks, list) and checks, "checks must be a non-empty list")
    for c in checks:
        _require(c in CHECKS, f"unknown check {c!r}")
    numeric = dict(NUMERIC_DEFAULTS)
    num_in = data.get("numeric", {})
    bad = set(num_in) - set(NUMERIC_DEFAULTS)
    _require(not bad, f"unknown numeric keys {sorted(bad)}")
    numeric.update(num_in)
    _require(str(numeric["form"]).upper() in ("BH", "HT"), "numeric.form must be BH or HT")
    sweep = data.get("sweep")
    if sweep is not None:
        _require(isinstance(sweep, dict) and "param" in sweep and isinstance(sweep.get("values"), list), "bad [sweep]")
    geo = data.get("geodesic")
    if any(c in checks for c in ("cor_1_2", "thm_6_1", "example_1_5")):
        _require(isinstance(geo, dict) and {"x", "y", "period"} <= set(geo), "closed-geodesic checks need [geodesic] x, y, period")
    if any(c in checks for c in ("theorem_1_1", "thm_4_8", "jacobi_oracle")):
        _require(subs, "this check needs at least one [[submanifold]]")
    if "thm_6_1" in checks or "example_1_5" in checks:
        _require(metric["family"] in ("randers_flat", "randers_wave", "randers_linear", "example_1_5"), "thm_6_1 needs a Randers family")
    sc = Scenario(
        id=data["id"], description=data.get("description", ""), metric=metric, submanifolds=subs, checks=checks,
        numeric=numeric, constants=dict(data.get("constants", {})), geodesic=geo, sweep=sweep,
        seed=int(data.get("seed", 0)), source=source,
    )
    # constructing every object catches bad parameters before any computation
    for val in sc.sweep_values:
        spec, _ = build_metric(sc, val)
        for s in subs:
            build_submanifold(spec, s)
    return sc


def load_scenario(path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_scenario(data, str(path))


def build_metric(sc: Scenario, sweep_value=None):
    params = dict(sc.metric.get("params", {}))
    if sweep_value is not None:
        params[sc.sweep["param"]] = sweep_value
    try:
        obj = METRICS[sc.metric["family"]](**params)
    except (TypeError, ValueError, FinslerError) as exc:
        raise ConfigError(f"metric {sc.metric['family']}: {exc}") from exc
    if isinstance(obj, randers.RandersSpec):
        return obj.spec, obj
    return obj, None


def build_submanifold(spec, s: dict):
    params = {k: v for k, v in s.items() if k not in ("family", "jacobi_w", "jacobi_radial", "label")}
    try:
        sub = SUBMANIFOLDS[s["family"]](spec, **params)
        x = sub.point(np.array([lo for lo, _ in sub.domain]))
    except (TypeError, ValueError, IndexError, FinslerError) as exc:
        raise ConfigError(f"submanifold {s['family']}: {exc}") from exc
    if x.shape != (spec.dim,) or not np.all(np.isfinite(x)):
        raise ConfigError(f"submanifold {s['family']} does not map into the {spec.dim}-dimensional chart")
    return sub


def bundled_dir() -> str:
    return str(resources.files("finslercomp") / "configs")


def bundled_scenarios() -> list:
    d = bundled_dir()
    return [load_scenario(os.path.join(d, f)) for f in sorted(os.listdir(d)) if f.endswith(".toml")]


def list_scenarios(check: Optional[str] = None) -> list:
    """(id, description) of bundled scenarios, optionally only those running ``check``."""
    return [(s.id, s.description) for s in bundled_scenarios() if check is None or check in s.checks]


# ---------------------------------------------------------------- running


def _clean(obj):
    """Make a value JSON-friendly and deterministic."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if np.isnan(f):
            return "nan"
        if np.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


class Context:
    """Lazily computed hypothesis constants for one metric instance."""

    def __init__(self, sc: Scenario, spec, rspec, workers: int = 1):
        self.sc, self.spec, self.rspec = sc, spec, rspec
        self.num = sc.numeric
        self.const = sc.constants
        self.workers = max(1, int(workers))
        self.rng = np.random.default_rng(sc.seed)
        self.form = str(self.num["form"]).upper()
        self.subs = [build_submanifold(spec, s) for s in sc.submanifolds]
        self._cache = {}
        self.provenance = {}
        m = spec.dim
        self.points = spec.chart.sample_regular(self.num["n_points"], self.rng, self.num["sample_margin"])
        self.dirs = sphere_directions(m, self.num["n_dirs"], self.rng if m > 2 else None)
        self.X = np.repeat(self.points, len(self.dirs), axis=0)
        self.Y = np.tile(self.dirs, (len(self.points), 1))

    def _get(self, name, fn):
        if name not in self._cache:
            self._cache[name] = fn()
        return self._cache[name]

    def _set_prov(self, name, value, how):
        self.provenance[name] = {"value": value, "provenance": how}
        return value

    # sampled minimum of the flag curvature over random flags at the sample points
    @property
    def k_min(self) -> float:
        def f():
            m = self.spec.dim
            Vs = self.rng.standard_normal(self.Y.shape)
            K, den = self.spec.batch("flag_curvature", self.X, self.Y, Vs)
            K = K[den > 1e-10 * np.max(den)]
            return float(np.min(K)), float(np.max(K))

        return self._get("k_range", f)[0]

    @property
    def k_max(self) -> float:
        self.k_min
        return self._cache["k_range"][1]

    @property
    def delta(self) -> float:
        def f():
            if "delta" in self.const:
                return self._set_prov("delta", float(self.const["delta"]), "closed-form")
            return self._set_prov("delta", self.k_min - self.num["delta_slack"], "sampled")

        return self._get("delta", f)

    @property
    def Lambda(self) -> float:
        def f():
            if "Lambda" in self.const:
                return self._set_prov("Lambda", float(self.const["Lambda"]), "closed-form")
            return self._set_prov("Lambda", uniformity(self.spec, self.points, self.dirs), "sampled")

        return self._get("Lambda", f)

    @property
    def section6(self):
        def f():
            if self.rspec is None:
                return None
            c = randers.section6_constants(self.rspec, self.points)
            self._set_prov("b", c.b, "sampled")
            self._set_prov("b1", c.b1, "sampled")
            return c

        return self._get("section6", f)

    @property
    def l(self) -> float:
        def f():
            if "l" in self.const:
                return self._set_prov("l", float(self.const["l"]), "closed-form")
            if self.spec.riemannian or self.spec.berwald:
                return self._set_prov("l", 0.0, "closed-form")
            if self.rspec is not None:
                c = self.section6
                return self._set_prov("l", randers.section6_t_bound(c.b, c.b1), "sampled")
            raise ConfigError("no T-curvature bound l for a non-Randers, non-Berwald metric")

        return self._get("l", f)

    @property
    def d(self) -> float:
        def f():
            if "d" in self.const:
                return self._set_prov("d", float(self.const["d"]), "closed-form")
            counts = self.num["diameter_counts"] or (21,) * self.spec.dim
            return self._set_prov("d", V.diameter_estimate(self.spec, counts), "sampled")

        return self._get("d", f)

    def volume(self, form: Optional[str] = None) -> float:
        form = (form or self.form).upper()

        def f():
            key = f"volume_{form}"
            if key in self.const:
                return self._set_prov(key, float(self.const[key]), "closed-form")
            counts = self.num["volume_counts"] or (24,) * self.spec.dim
            res = V.total_volume(self.spec, form, counts=counts, n_dir=self.num["n_dir_quad"], rtol=self.num["volume_rtol"])
            self.provenance[key] = {"value": res.value, "provenance": "quadrature", "rel_change": res.rel_change}
            return res.value

        return self._get(f"volume_{form}", f)

    def t_bound(self):
        def f():
            l = self.l
            Vs = self.rng.standard_normal(self.Y.shape)
            tb = t_bound_check(self.spec, l, zip(self.X, self.Y, Vs), orthogonal=True)
            generic = t_bound_check(self.spec, l, zip(self.X, self.Y, Vs))
            return tb, generic.max_violation

        return self._get("t_bound", f)

    def closed_geodesic(self):
        def f():
            g = self.sc.geodesic
            L, err, seg = closed_orbit_length(self.spec, g["x"], g["y"], float(g["period"]), steps=int(g.get("steps", 800)))
            return L, err, seg

        return self._get("closed_geodesic", f)

    def global_samples(self):
        return self.X, self.Y

    def map(self, fn, items):
        items = list(items)
        if self.workers == 1:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(self.workers) as ex:
            return list(ex.map(fn, items))


def _row(rep: B.ComparisonReport, scale: float, extra: Optional[dict] = None) -> dict:
    rep.tolerance = rep.tolerance * scale
    d = rep.as_dict()
    if extra:
        d.update(extra)
    return d


def _residual_row(name, measured, tol, scale, **inputs):
    rep = B.ComparisonReport(name, float(measured), 0.0, "<=", inputs=inputs, tolerance=tol)
    return _row(rep, scale)


def _hypothesis_rows(ctx: Context, scale: float) -> list:
    """Rows certifying the sampled side of closed-form hypotheses."""
    rows = []
    if ctx.provenance.get("delta", {}).get("provenance") == "closed-form":
        rep = B.ComparisonReport("hyp_delta", ctx.k_min, ctx.delta, ">=", inputs={"samples": len(ctx.X)}, tolerance=1e-6)
        rows.append(_row(rep, scale))
    if "l" in ctx.provenance:
        tb, generic = ctx.t_bound()
        # v is taken g_y-orthogonal to y; the violation for unrestricted v is recorded only
        rows.append(_residual_row("hyp_t_bound", tb.max_violation, 1e-8, scale, l=tb.l, samples=tb.n_samples,
                                  generic_max_violation=generic))
    return rows


# -- individual checks ---------------------------------------------------------


def check_theorem_1_1(ctx: Context, scale: float, tables: dict) -> list:
    rows = []
    spec, m = ctx.spec, ctx.spec.dim
    mu = ctx.volume()
    for s, cfg in zip(ctx.subs, ctx.sc.submanifolds):
        if s.k == 0:
            x = s.point(np.zeros(0))
            fac, escaped, fallback = V.sup_distortion_factor(
                spec, ctx.form, x, ctx.d, ctx.num["n_dir_quad"], ctx.num["sup_steps"], ctx.global_samples()
            )
            rhs = B.theorem_1_1_point_rhs(fac, ctx.d, ctx.delta, m)
            rep = B.ComparisonReport(
                "theorem_1_1", mu, rhs, "<=",
                inputs=dict(k=0, m=m, d=ctx.d, delta=ctx.delta, tau_integral=fac, escaped_directions=escaped,
                            tau_fallback=fallback, form=ctx.form, submanifold=s.label),
                sampled=[n for n in ("delta", "d") if ctx.provenance.get(n, {}).get("provenance") == "sampled"],
                tolerance=1e-3 * abs(rhs),
                note="measured = mu(M); the tau factor is sup over t in [0, d] along each normal geodesic",
            )
        else:
            H0, _ = min_co_mean_curvature(s, ctx.num["n_u"], ctx.num["n_dirs"])
            muN = V.submanifold_volume(s, ctx.form, n=48, n_dir=ctx.num["n_dir_quad"])
            rhs = B.theorem_1_1_sub_rhs(m, s.k, ctx.Lambda, muN, ctx.delta, ctx.d, H0)
            rep = B.ComparisonReport(
                "theorem_1_1", mu, rhs, "<=",
                inputs=dict(k=s.k, m=m, d=ctx.d, delta=ctx.delta, Lambda=ctx.Lambda, mu_N=muN, H0=H0,
                            zeta=B.zeta(ctx.delta, H0, s.k), form=ctx.form, submanifold=s.label),
                sampled=[n for n in ("delta", "d", "Lambda") if ctx.provenance.get(n, {}).get("provenance") == "sampled"]
                + ["H0"],
                tolerance=1e-3 * abs(rhs),
            )
        rows.append(_row(rep, scale))
    return rows


def check_cor_1_2(ctx: Context, scale: float, tables: dict) -> list:
    L, err, _ = ctx.closed_geodesic()
    m = ctx.spec.dim
    bound = B.corollary_1_2_bound(ctx.volume(), m, ctx.Lambda, ctx.delta, ctx.d, ctx.l)
    rep = B.ComparisonReport(
        "cor_1_2", L, bound, ">=",
        inputs=dict(m=m, mu=ctx.volume(), Lambda=ctx.Lambda, delta=ctx.delta, d=ctx.d, l=ctx.l, closure_error=err),
        sampled=[n for n in ("delta", "d", "Lambda", "l") if ctx.provenance.get(n, {}).get("provenance") == "sampled"],
        extra_pass=err < 1e-6,
        tolerance=max(1e-9, 1e-3 * abs(bound)),
    )
    return [_row(rep, scale)]


def check_cor_1_3(ctx: Context, scale: float, tables: dict) -> list:
    m = ctx.spec.dim
    lam = reversibility(ctx.spec, ctx.points, ctx.dirs)
    delta_abs = float(ctx.const.get("delta_abs", max(abs(ctx.k_min), abs(ctx.k_max))))
    try:
        bound = B.corollary_1_3_injectivity(ctx.volume(), m, ctx.Lambda, delta_abs, ctx.d, ctx.l, lam)
    except NonReversible as exc:
        return [{"check": "cor_1_3", "skipped": True, "reason": str(exc), "passed": True, "reversibility": lam}]
    inj = ctx.const.get("injectivity")
    if inj is None:
        return [{"check": "cor_1_3", "skipped": True, "reason": "no closed-form injectivity radius", "passed": True,
                 "bound": bound}]
    rep = B.ComparisonReport(
        "cor_1_3", float(inj), bound, ">=",
        inputs=dict(m=m, V=ctx.volume(), Lambda=ctx.Lambda, delta=delta_abs, d=ctx.d, l=ctx.l, reversibility=lam),
        note="measured = closed-form injectivity radius",
    )
    return [_row(rep, scale)]


def _frames(ctx: Context, s, cfg, n_frames):
    from .submanifold import parameter_grid

    out = []
    us = parameter_grid(s, ctx.num["n_u"])
    if cfg.get("jacobi_radial"):
        # conormal sign * x at the foot point (stereographic circles: -1 points inward)
        for u in us:
            out.append(conormal_sphere_point(s, u, covector=float(cfg["jacobi_radial"]) * s.point(u)))
    elif cfg.get("jacobi_w"):
        for u in us:
            for w in cfg["jacobi_w"]:
                out.append(conormal_sphere_point(s, u, w=np.asarray(w, float)))
    else:
        for u in us:
            frs, _, _ = conormal_frames(s, u, max(1, ctx.num["n_dirs"] // 2))
            out.extend(frs)
    if len(out) > n_frames:
        idx = np.linspace(0, len(out) - 1, n_frames).round().astype(int)
        out = [out[i] for i in idx]
    return out


def _t_max(ctx, fr, delta):
    if ctx.num["t_max"] is not None:
        return float(ctx.num["t_max"])
    cap = B.horizon(delta)
    if fr.k:
        cap = min(cap, B.zeta(delta, fr.H, fr.k))
    return cap + 0.3 if np.isfinite(cap) else 3.0


def check_thm_4_8(ctx: Context, scale: float, tables: dict) -> list:
    rows = []
    sampled_delta = ctx.provenance.get("delta", {}).get("provenance") == "sampled" or "delta" not in ctx.const
    for s, cfg in zip(ctx.subs, ctx.sc.submanifolds):
        frames = _frames(ctx, s, cfg, ctx.num["n_frames"])

        def run(fr):
            delta = ctx.delta
            sol = solve_A(fr, _t_max(ctx, fr, delta), grid=ctx.num["jacobi_grid"], find_focal=False)
            if sampled_delta:
                delta = min(delta, min_flag_curvature_along(sol, rng=np.random.default_rng(ctx.sc.seed)) - ctx.num["delta_slack"])
            sol = solve_A(fr, _t_max(ctx, fr, delta), grid=ctx.num["jacobi_grid"])
            return sol, check_theorem_4_8(sol, delta, n_points=1000), delta

        results = ctx.map(run, frames)
        for j, (sol, rep, delta) in enumerate(results):
            rep.inputs.update(submanifold=s.label, frame=j, focal_kind=sol.focal_kind)
            if not sampled_delta:
                rep.sampled = []
            rows.append(_row(rep, scale))
        sol, _, delta = results[0]
        from .bounds import model_det

        tables[f"jacobi-{s.label}"] = (
            ["t", "det_A", "model", "q"],
            np.column_stack([sol.t, sol.det, model_det(delta, sol.frame.H, s.k, s.m, sol.t), sol.q]),
        )
    return rows


def check_jacobi_oracle(ctx: Context, scale: float, tables: dict) -> list:
    rows = []
    for s, cfg in zip(ctx.subs, ctx.sc.submanifolds):
        frames = _frames(ctx, s, cfg, ctx.num["oracle_frames"])

        def run(fr):
            sol = solve_A(fr, ctx.num["oracle_t"], grid=100, find_focal=False)
            return jacobi_oracle(sol)

        for j, gaps in enumerate(ctx.map(run, frames)):
            rows.append(_residual_row("jacobi_oracle", float(np.max(gaps)), ctx.num["oracle_tol"], scale,
                                      submanifold=s.label, frame=j, columns=gaps))
    return rows


def _invariant_rows(ctx: Context, scale: float) -> list:
    spec = ctx.spec
    X, Y = ctx.X, ctx.Y
    rows = []
    lam = 0.5 + 2.5 * ctx.rng.random(len(X))
    F = spec.batch("F", X, Y)
    Fl = spec.batch("F", X, lam[:, None] * Y)
    rows.append(_residual_row("homogeneity_F", np.max(np.abs(Fl - lam * F) / F), 1e-10, scale))
    G = spec.batch("g", X, Y)
    Gl = spec.batch("g", X, lam[:, None] * Y)
    rows.append(_residual_row("homogeneity_g", np.max(np.abs(Gl - G)) / np.max(np.abs(G)), 1e-10, scale))
    A = spec.batch("cartan", X, Y)
    rows.append(_residual_row("cartan_y", np.max(np.abs(np.einsum("nijk,nk->nij", A, Y))), 1e-10, scale))
    gyy = np.einsum("ni,nij,nj->n", Y, G, Y)
    rows.append(_residual_row("g_yy_F2", np.max(np.abs(gyy - F**2) / F**2), 1e-10, scale))
    errs = []
    for x, y in zip(X[:100], Y[:100]):
        yb = legendre_inverse(spec, x, legendre(spec, x, y))
        errs.append(np.linalg.norm(yb - y) / np.linalg.norm(y))
    rows.append(_residual_row("legendre_roundtrip", max(errs), 1e-8, scale))
    # parallel transport along a geodesic preserves g_T
    x0, y0 = ctx.points[0], ctx.dirs[0] / spec.call("F", ctx.points[0], ctx.dirs[0])
    v0 = ctx.dirs[1 % len(ctx.dirs)]
    try:
        seg = integrate_geodesic(spec, x0, y0, t_end=1.0, steps=50)
        P = parallel_transport(seg, v0)
        Gs = spec.batch("g", seg.x, seg.v)
        nv = np.einsum("ti,tij,tj->t", P, Gs, P)
        rows.append(_residual_row("transport_isometry", np.max(np.abs(nv - nv[0])), 1e-6, scale))
    except FinslerError as exc:
        rows.append({"check": "transport_isometry", "skipped": True, "reason": str(exc), "passed": True})
    for s, cfg in zip(ctx.subs, ctx.sc.submanifolds):
        frames = _frames(ctx, s, cfg, 2)
        for fr in frames:
            sol = solve_A(fr, 1.0, grid=200, find_focal=False)
            rows.append(_residual_row("gauss_drift", sol.gauss_drift(), 1e-6, scale, submanifold=s.label))
            rows.append(_residual_row("lagrange_drift", sol.lagrange_drift(), 1e-6, scale, submanifold=s.label))
            d = s.m - 1
            P = np.eye(d) + 0.3 * ctx.rng.standard_normal((d, d))
            if s.k:
                P[: s.k, s.k :] = 0.0
                P[s.k :, : s.k] = 0.0
            sol2 = solve_A(fr, 1.0, grid=200, find_focal=False, basis_change=P)
            rel = np.max(np.abs(sol2.det - sol.det)) / max(1.0, np.max(np.abs(sol.det)))
            rows.append(_residual_row("det_basis_independence", rel, 1e-8, scale, submanifold=s.label))
            small = solve_A(fr, 1e-3, grid=2, find_focal=False)
            rows.append(_residual_row("q_limit", abs(small.q[-1] - 1.0), 1e-3, scale, submanifold=s.label))
            if s.k:
                W, Gt = fr.W, fr.E.T @ fr.gn @ fr.E
                Xc = ctx.rng.standard_normal((100, s.k))
                Yc = ctx.rng.standard_normal((100, s.k))
                lhs = np.einsum("na,ab,bc,nc->n", Yc, Gt, W, Xc)
                rhs = np.einsum("na,ab,nb->n", Xc, fr.h, Yc)
                rows.append(_residual_row("co_weingarten_duality", np.max(np.abs(lhs - rhs)), 1e-6, scale, submanifold=s.label))
    return rows


def check_invariants(ctx: Context, scale: float, tables: dict) -> list:
    return _invariant_rows(ctx, scale)


def check_appendix(ctx: Context, scale: float, tables: dict) -> list:
    spec = ctx.spec
    rows = []
    Lam = ctx.Lambda
    for form in ("BH", "HT"):
        rows.append(_row(V.distortion_bound_check(spec, form, ctx.X, ctx.Y, Lam, ctx.num["n_dir_quad"]), scale))
    # Lambda of the dual norm from the Legendre images of the same directions
    Xi = np.array([legendre(spec, x, y) for x, y in zip(ctx.X, ctx.Y)])
    lam_dual = max(dual_uniformity(spec, x[None], Xi[i * len(ctx.dirs) : (i + 1) * len(ctx.dirs)])
                   for i, x in enumerate(ctx.points))
    lam_primal = uniformity(spec, ctx.points, ctx.dirs)
    rows.append(_row(B.ComparisonReport("dual_uniformity", abs(lam_dual - lam_primal), 0.0, "<=", tolerance=1e-2,
                                        inputs=dict(Lambda=lam_primal, Lambda_dual=lam_dual, samples=len(Xi))), scale))
    subs = [s for s in ctx.subs] or []
    b = None
    if ctx.rspec is not None:
        b = ctx.section6.b
        for form in ("BH", "HT"):
            rows.append(_row(V.randers_distortion_check(spec, form, ctx.X, ctx.Y, b, ctx.num["n_dir_quad"]), scale))
        Vs = ctx.rng.standard_normal(ctx.Y.shape)
        Tc = randers.t_curvature_closed_form_batch(ctx.rspec, ctx.X, ctx.Y, Vs)
        Ta = spec.batch("t_curvature", ctx.X, ctx.Y, Vs)
        rows.append(_residual_row("t_closed_form", np.max(np.abs(Tc - Ta)), 1e-5, scale, samples=len(Tc)))
        l6 = randers.section6_t_bound(ctx.section6.b, ctx.section6.b1)
        tb = t_bound_check(spec, l6, zip(ctx.X, ctx.Y, Vs), orthogonal=True)
        generic = t_bound_check(spec, l6, zip(ctx.X, ctx.Y, Vs)).max_violation
        rows.append(_residual_row("t_bound_randers", tb.max_violation, 1e-8, scale, l=l6, b=ctx.section6.b,
                                  b1=ctx.section6.b1, samples=tb.n_samples, generic_max_violation=generic))
    # conormal sphere measure on at least 100 base points: a point at each
    # sample, and a parameter grid on every configured submanifold of positive dimension
    from .submanifold import parameter_grid

    n_min = 100
    pts = ctx.spec.chart.sample_regular(n_min, ctx.rng, ctx.num["sample_margin"])
    groups = [(point_submanifold(spec, x), np.zeros((1, 0))) for x in pts]
    for s in subs:
        if s.k:
            n = int(np.ceil(n_min ** (1.0 / s.k)))
            groups.append((s, parameter_grid(s, n)))
    for label, members in (("point", [g for g in groups if g[0].k == 0]), *[(g[0].label, [g]) for g in groups if g[0].k]):
        U = [(sub, uu) for sub, grid in members for uu in grid]
        nu_rep = _conormal_rows(U, Lam, None, ctx.num["n_dir_quad"])
        rows.append(_row(nu_rep, scale, {"submanifold": label}))
        if b is not None:
            bx = [randers.beta_norm(ctx.rspec, sub.point(uu)) for sub, uu in U]
            rows.append(_row(_conormal_rows(U, Lam, bx, ctx.num["n_dir_quad"]), scale, {"submanifold": label}))
    return rows


def _conormal_rows(U, Lam, bx, n_dir):
    """Merge per-sample conormal measure reports into the worst one."""
    reps = [V.conormal_measure_check(sub, uu, Lam, None if bx is None else bx[i], n_dir) for i, (sub, uu) in enumerate(U)]
    if bx is not None:
        # compare on a common scale: nu (1 - b)^{(m-k+1)/2} against c_{m-k-1}
        worst = max(reps, key=lambda r: r.measured / r.bound)
        sub = U[0][0]
        c = sphere_area(sub.m - sub.k - 1)
        return B.ComparisonReport(
            "conormal_measure_randers", worst.measured / worst.bound * c, c, "<=",
            inputs={"b_worst": worst.inputs["b"], "nu_worst": worst.measured, "m": sub.m, "k": sub.k, "samples": len(reps)},
            note="measured = max nu_x (1 - b(x))^{(m-k+1)/2}",
        )
    worst = max(reps, key=lambda r: r.measured)
    worst.inputs["samples"] = len(reps)
    worst.inputs["min_measure"] = min(r.measured for r in reps)
    return worst


def check_thm_6_1(ctx: Context, scale: float, tables: dict) -> list:
    L, err, _ = ctx.closed_geodesic()
    c = ctx.section6
    m = ctx.spec.dim
    mu_bh = ctx.volume("BH")
    key = "volume_alpha"
    if key in ctx.const:
        vol_a = ctx._set_prov(key, float(ctx.const[key]), "closed-form")
    else:
        counts = ctx.num["volume_counts"] or (24,) * m
        alpha = ctx.rspec.alpha_metric()
        vol_a = V.total_volume(alpha, "BH", counts=counts, n_dir=4, rtol=ctx.num["volume_rtol"]).value
        ctx._set_prov(key, vol_a, "quadrature")
    bound = B.theorem_6_1_bound(mu_bh, vol_a, c.b, c.b1, ctx.delta, ctx.d, m)
    rep = B.ComparisonReport(
        "thm_6_1", L, bound, ">=",
        inputs=dict(m=m, mu_BH=mu_bh, vol_alpha=vol_a, b=c.b, b1=c.b1, delta=ctx.delta, d=ctx.d, closure_error=err),
        sampled=["b", "b1"] + [n for n in ("delta", "d") if ctx.provenance.get(n, {}).get("provenance") == "sampled"],
        extra_pass=err < 1e-6,
    )
    return [_row(rep, scale)]


def check_example_1_5(ctx: Context, scale: float, tables: dict) -> list:
    rows = []
    eps = float(ctx.spec.params[0])
    target = 8 * np.pi**2
    counts = ctx.num["volume_counts"] or (24, 12, 12)
    res = V.total_volume(ctx.spec, "HT", counts=counts, n_dir=ctx.num["n_dir_quad"], rtol=ctx.num["volume_rtol"])
    rows.append(_row(B.ComparisonReport("ex15_volume_ht", abs(res.value / target - 1), 0.0, "<=", tolerance=1e-2,
                                        inputs=dict(mu_HT=res.value, target=target, eps=eps)), scale))
    rows.append(_row(B.ComparisonReport("ex15_flag_curvature", ctx.k_min, -1e-6, ">=", tolerance=0.0,
                                        inputs=dict(eps=eps, samples=len(ctx.X))), scale))
    L, err, seg = ctx.closed_geodesic()
    Fint = simpson(ctx.spec.batch("F", seg.x, seg.v), seg.t)
    model = 2 * np.pi * (1 - eps)
    rows.append(_row(B.ComparisonReport(
        "ex15_fiber_length", abs(L - model), 0.0, "<=", tolerance=1e-6,
        inputs=dict(eps=eps, length=L, closure_error=err, two_pi_one_minus_eps=model, pi_one_minus_eps=np.pi * (1 - eps),
                    integral_F=Fint),
        extra_pass=err < 1e-6,
        note="computed length is 2 pi (1 - eps); the stated value pi (1 - eps) is recorded for comparison",
    ), scale))
    tables.setdefault("_sweep_rows", []).append([eps, res.value, target, L, model, np.pi * (1 - eps), ctx.k_min])
    return rows


CHECK_FUNCS = {
    "theorem_1_1": check_theorem_1_1,
    "cor_1_2": check_cor_1_2,
    "cor_1_3": check_cor_1_3,
    "thm_4_8": check_thm_4_8,
    "thm_6_1": check_thm_6_1,
    "invariants": check_invariants,
    "appendix": check_appendix,
    "jacobi_oracle": check_jacobi_oracle,
    "example_1_5": check_example_1_5,
}


@dataclass
class RunResult:
    scenario: Scenario
    report: dict
    tables: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.report["passed"])


def run_scenario(sc: Scenario, workers: int = 1, tolerance_scale: float = 1.0, seed: Optional[int] = None) -> RunResult:
    if seed is not None:
        sc = copy.copy(sc)
        sc.seed = int(seed)
    all_rows, tables, provenance = [], {}, {}
    for val in sc.sweep_values:
        spec, rspec = build_metric(sc, val)
        ctx = Context(sc, spec, rspec, workers)
        rows = []
        for name in sc.checks:
            try:
                rows.extend(CHECK_FUNCS[name](ctx, tolerance_scale, tables))
            except FinslerError as exc:
                rows.append({"check": name, "passed": False, "error": f"{type(exc).__name__}: {exc}"})
        rows.extend(_hypothesis_rows(ctx, tolerance_scale))
        for r in rows:
            r["metric"] = spec.label
            if val is not None:
                r[sc.sweep["param"]] = val
        all_rows.extend(rows)
        provenance[spec.label] = ctx.provenance
    if "_sweep_rows" in tables:
        tables["sweep"] = (["eps", "mu_HT", "target", "fiber_length", "two_pi_one_minus_eps", "pi_one_minus_eps", "K_min"],
                           np.array(tables.pop("_sweep_rows")))
    report = {
        "id": sc.id,
        "description": sc.description,
        "seed": sc.seed,
        "tolerance_scale": tolerance_scale,
        "checks": sc.checks,
        "constants": provenance,
        "rows": all_rows,
        "passed": all(r.get("passed", False) for r in all_rows),
        "tables": sorted(tables),
    }
    return RunResult(sc, _clean(report), tables)


def write_outputs(result: RunResult, out_dir) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    p = os.path.join(out_dir, f"{result.scenario.id}.report.json")
    with open(p, "w") as fh:
        json.dump(result.report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    paths.append(p)
    for name, (header, data) in sorted(result.tables.items()):
        p = os.path.join(out_dir, f"{result.scenario.id}.{name}.csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in np.atleast_2d(data):
                w.writerow([repr(float(v)) for v in row])
        paths.append(p)
    # margins table for regression tracking
    p = os.path.join(out_dir, f"{result.scenario.id}.margins.csv")
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "metric", "measured", "bound", "margin", "passed", "conditional"])
        for r in result.report["rows"]:
            w.writerow([r.get("check"), r.get("metric"), r.get("measured"), r.get("bound"), r.get("margin"),
                        r.get("passed"), r.get("conditional")])
    paths.append(p)
    return paths


def run(path, out_dir, workers: int = 1, tolerance_scale: float = 1.0, seed: Optional[int] = None) -> RunResult:
    """Load, run and write.  Raises CheckFailure (after writing) if any row fails."""
    sc = load_scenario(path)
    result = run_scenario(sc, workers, tolerance_scale, seed)
    write_outputs(result, out_dir)
    if not result.passed:
        failed = [r.get("check") for r in result.report["rows"] if not r.get("passed", False)]
        raise CheckFailure(f"{sc.id}: failed checks {failed}")
    return result
