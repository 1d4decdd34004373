"""Legendre transformation, its inverse, and the dual norm/tensor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import components
from .errors import NoConvergence, NonAdmissible
from .metric import MetricSpec, _check_direction, _check_point, fundamental_tensor

INVERSE_TOL = 1e-10


@dataclass(frozen=True)
class DualPair:
    x: np.ndarray
    y: np.ndarray
    xi: np.ndarray
    residual: float


def legendre(spec: MetricSpec, x, y) -> np.ndarray:
    """The covector g_y(y, .)."""
    fundamental_tensor(spec, x, y)
    return spec.call("legendre", np.asarray(x, float), components(y, "vector"))


def _covector(spec, x, xi):
    x = _check_point(spec, x)
    xi = components(xi, "covector")
    if xi.shape != (spec.dim,):
        raise ValueError(f"expected {spec.dim} components, got shape {xi.shape}")
    if not np.any(xi):
        raise NonAdmissible("the Legendre inverse is not evaluated at the zero covector")
    return x, xi


def legendre_inverse_info(spec: MetricSpec, x, xi) -> DualPair:
    x, xi = _covector(spec, x, xi)
    y, r, it = spec.call("leg_inv_info", x, xi)
    s = np.linalg.norm(xi)
    if not (np.all(np.isfinite(y)) and r <= INVERSE_TOL):
        raise NoConvergence(
            f"Newton iteration for the Legendre inverse stopped after {int(it)} steps "
            f"with relative residual {float(r):.3e}"
        )
    return DualPair(x, y, xi, float(r) * s)


def legendre_inverse(spec: MetricSpec, x, xi) -> np.ndarray:
    return legendre_inverse_info(spec, x, xi).y


def legendre_inverse_batch(spec: MetricSpec, X, XI) -> np.ndarray:
    """Vectorised inverse over rows of ``X`` and ``XI``."""
    Y, r, it = spec.batch("leg_inv_info", np.asarray(X, float), np.asarray(XI, float))
    bad = ~(np.all(np.isfinite(Y), axis=1) & (r <= INVERSE_TOL))
    if np.any(bad):
        j = int(np.argmax(bad))
        raise NoConvergence(f"Legendre inverse failed at sample {j}: residual {float(r[j]):.3e}")
    return Y


def dual_pair(spec: MetricSpec, x, y) -> DualPair:
    xi = legendre(spec, x, y)
    return DualPair(np.asarray(x, float), np.asarray(y, float), xi, 0.0)


def dual_norm(spec: MetricSpec, x, xi) -> float:
    """F*(x, xi) computed as F(x, L^{-1}(xi))."""
    y = legendre_inverse(spec, x, xi)
    return float(spec.call("F", np.asarray(x, float), y))


def dual_tensor(spec: MetricSpec, x, xi) -> np.ndarray:
    """g*^{ij}(xi), the inverse of g at L^{-1}(xi)."""
    y = legendre_inverse(spec, x, xi)
    _check_direction(spec, x, y)
    return np.linalg.inv(spec.call("g", np.asarray(x, float), y))
