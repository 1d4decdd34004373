"""Geodesics of the spray, the exponential map and Chern parallel transport."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._jaxcfg import jnp
from .errors import ChartExit, NonAdmissible
from .metric import MetricSpec, _check_direction, _check_point
from .ode import ODEStats, integrate, integrate_batch

RTOL = 1e-11
ATOL = 1e-12


def geodesic_rhs(spec: MetricSpec, frame_cols: int = 0):
    """RHS of x' = v, v' = -2G(x, v), E' = -N(x, v) E for state [x, v, vec(E)].

    Along a geodesic with reference vector T = x', Gamma^i_jk(T) T^k = N^i_j(T),
    so E' = -N E is Chern parallel transport of the columns of E.
    """
    kern = spec.kernel
    m = spec.dim
    key = ("geo", m, frame_cols)
    rhs = kern.cache.get(key)
    if rhs is None:
        G = kern.raw["spray"]
        N = kern.raw["nonlinear"]
        r = frame_cols

        def rhs(s, p):
            x, v = s[:m], s[m : 2 * m]
            parts = [v, -2.0 * G(x, v, p)]
            if r:
                E = s[2 * m :].reshape(m, r)
                parts.append((-N(x, v, p) @ E).ravel())
            return jnp.concatenate(parts)

        kern.cache[key] = rhs
    return rhs


def chart_guard(spec: MetricSpec):
    chart = spec.chart
    m = spec.dim

    def check(t, s):
        x = s[:m]
        if not np.all(np.isfinite(s)):
            raise ChartExit(f"non-finite state at t = {t:.6g}", t=t, x=x)
        if not chart.inside(x):
            raise ChartExit(f"trajectory left the chart at t = {t:.6g}", t=t, x=x)
        if chart.is_singular(x):
            raise ChartExit(f"trajectory entered the singular set at t = {t:.6g}", t=t, x=x)

    return check


@dataclass
class GeodesicSegment:
    """Geodesic samples on a time grid; ``x`` is kept unwrapped on periodic axes."""

    spec: MetricSpec
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    stats: ODEStats = field(default_factory=ODEStats)
    frame: Optional[np.ndarray] = None  # (K+1, m, r) transported columns

    @property
    def x_wrapped(self) -> np.ndarray:
        return self.spec.chart.wrap(self.x)

    def speed(self) -> np.ndarray:
        return self.spec.batch("F", self.x, self.v)

    def length(self) -> float:
        """Integral of F(x, x') over the grid (composite Simpson when possible)."""
        from .quadrature import simpson

        return float(simpson(self.speed(), self.t))

    def residual(self) -> float:
        """max |x'' + 2G(x, x')| at interior nodes, x'' by 4th-order differences of v.

        Needs a uniform grid; the difference error is O(h^4).
        """
        h = self.t[1] - self.t[0]
        v = self.v
        acc = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * h)
        G = self.spec.batch("spray", self.x[2:-2], v[2:-2])
        return float(np.max(np.abs(acc + 2 * G)))

    def to_csv(self, path) -> None:
        m = self.spec.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}" for i in range(m)] + [f"v{i}" for i in range(m)])
            for t, x, v in zip(self.t, self.x_wrapped, self.v):
                w.writerow([repr(float(t))] + [repr(float(a)) for a in x] + [repr(float(a)) for a in v])


def _grid(t_end, steps, t_grid):
    if t_grid is not None:
        return np.asarray(t_grid, dtype=float)
    return np.linspace(0.0, float(t_end), int(steps) + 1)


def integrate_geodesic(
    spec: MetricSpec,
    x,
    y,
    t_end: float = 1.0,
    steps: int = 200,
    t_grid=None,
    frame=None,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> GeodesicSegment:
    """Integrate the geodesic with x(0) = x, x'(0) = y; optionally transport ``frame`` columns."""
    x = _check_point(spec, x)
    y = _check_direction(spec, x, y)
    m = spec.dim
    grid = _grid(t_end, steps, t_grid)
    E0 = None if frame is None else np.asarray(frame, float).reshape(m, -1)
    r = 0 if E0 is None else E0.shape[1]
    s0 = np.concatenate([x, y] + ([E0.ravel()] if r else []))
    states, stats = integrate(
        geodesic_rhs(spec, r), s0, grid, spec.params, rtol=rtol, atol=atol, check=chart_guard(spec)
    )
    E = states[:, 2 * m :].reshape(len(grid), m, r) if r else None
    return GeodesicSegment(spec, grid, states[:, :m], states[:, m : 2 * m], stats, E)


def curve_residual(spec: MetricSpec, x, v, a) -> float:
    """max |a + 2G(x, v)| for a curve given by samples of position, velocity, acceleration."""
    G = spec.batch("spray", np.atleast_2d(x), np.atleast_2d(v))
    return float(np.max(np.abs(np.atleast_2d(a) + 2 * G)))


def exp_map(spec: MetricSpec, x, y) -> np.ndarray:
    """exp_x(y) as wrapped chart coordinates (identity at y = 0)."""
    x = _check_point(spec, x)
    if not np.any(np.asarray(y, float)):
        return x.copy()
    seg = integrate_geodesic(spec, x, y, t_end=1.0, steps=1)
    return spec.chart.wrap(seg.x[-1])


def parallel_transport(segment: GeodesicSegment, v0) -> np.ndarray:
    """Chern transport of v0 along ``segment`` with reference vector T = x'(t)."""
    spec = segment.spec
    v0 = np.asarray(v0, float).reshape(spec.dim, -1)
    seg = integrate_geodesic(
        spec, segment.x[0], segment.v[0], t_grid=segment.t, frame=v0
    )
    out = seg.frame
    return out[:, :, 0] if out.shape[2] == 1 else out


def integrate_geodesics_batch(spec: MetricSpec, X, Y, t_end: float, nsteps: int, every: int = 1):
    """Fixed-step batch integration. Returns (t, x, v) with shapes (K+1,), (K+1, B, m) twice."""
    m = spec.dim
    S0 = np.concatenate([np.asarray(X, float), np.asarray(Y, float)], axis=1)
    traj = integrate_batch(geodesic_rhs(spec, 0), S0, t_end / nsteps, nsteps, spec.params, every)
    t = np.linspace(0.0, t_end, nsteps // every + 1)
    return t, traj[..., :m], traj[..., m:]


def closed_orbit_length(spec: MetricSpec, x, y, period_guess: float, steps: int = 400, tol: float = 1e-6):
    """Integrate over ``period_guess`` and report (length, closure error, segment).

    Closure compares wrapped endpoint coordinates and velocities with the start.
    """
    seg = integrate_geodesic(spec, x, y, t_end=period_guess, steps=steps)
    chart = spec.chart
    dx = chart.wrap(seg.x[-1]) - chart.wrap(seg.x[0])
    for i, per in enumerate(chart.periodic):
        if per:
            span = chart.bounds[i][1] - chart.bounds[i][0]
            dx[i] = (dx[i] + span / 2) % span - span / 2
    err = float(max(np.max(np.abs(dx)), np.max(np.abs(seg.v[-1] - seg.v[0]))))
    if not np.isfinite(err):
        raise NonAdmissible("closure error is not finite")
    return seg.length(), err, seg
