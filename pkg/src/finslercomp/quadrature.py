"""Quadrature helpers: spheres, boxes and sampled 1-D integrals."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.integrate import simpson as _simpson
from scipy.special import gamma, roots_jacobi, roots_legendre


def sphere_area(n: int) -> float:
    """c_n, the volume of the Euclidean unit n-sphere (c_0 = 2, c_1 = 2 pi, c_2 = 4 pi)."""
    return float(2 * np.pi ** ((n + 1) / 2) / gamma((n + 1) / 2))


def ball_volume(m: int) -> float:
    return sphere_area(m - 1) / m


@lru_cache(maxsize=64)
def _sphere_rule(d: int, n: int):
    if d == 0:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 1:
        k = 2 * n
        th = 2 * np.pi * (np.arange(k) + 0.5) / k
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(k, 2 * np.pi / k)
    a = (d - 2) / 2
    z, wz = roots_jacobi(n, a, a) if a != 0 else roots_legendre(n)
    sub, wsub = _sphere_rule(d - 1, n)
    r = np.sqrt(1 - z**2)
    pts = np.concatenate([np.column_stack([ri * sub, np.full(len(sub), zi)]) for zi, ri in zip(z, r)])
    w = np.concatenate([wi * wsub for wi in wz])
    return pts, w


def sphere_rule(d: int, n: int):
    """Product rule on the unit d-sphere in R^{d+1}: (nodes, weights), exact for
    polynomials of degree < 2n in every level. Weights sum to c_d."""
    pts, w = _sphere_rule(int(d), int(n))
    return pts.copy(), w.copy()


def box_rule(bounds, periodic, counts):
    """Tensor rule on a coordinate box: Gauss-Legendre on bounded axes, midpoint
    trapezoid (spectrally accurate for smooth periodic integrands) on periodic ones."""
    axes_pts, axes_w = [], []
    for (lo, hi), per, n in zip(bounds, periodic, counts):
        if per:
            pts = lo + (hi - lo) * (np.arange(n) + 0.5) / n
            w = np.full(n, (hi - lo) / n)
        else:
            z, wz = roots_legendre(n)
            pts = 0.5 * (hi - lo) * z + 0.5 * (hi + lo)
            w = 0.5 * (hi - lo) * wz
        axes_pts.append(pts)
        axes_w.append(w)
    grids = np.meshgrid(*axes_pts, indexing="ij")
    wgrid = np.ones_like(grids[0])
    for i, w in enumerate(axes_w):
        shape = [1] * len(axes_w)
        shape[i] = len(w)
        wgrid = wgrid * w.reshape(shape)
    return np.stack([g.ravel() for g in grids], axis=1), wgrid.ravel()


def simpson(y, t) -> float:
    """Composite Simpson on sampled data (scipy)."""
    return float(_simpson(np.asarray(y), x=np.asarray(t)))


def gauss_interval(a: float, b: float, n: int):
    z, w = roots_legendre(n)
    return 0.5 * (b - a) * z + 0.5 * (b + a), 0.5 * (b - a) * w
