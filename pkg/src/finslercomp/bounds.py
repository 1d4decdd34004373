"""Comparison functions and the volume / length bound calculators."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import NonReversible
from .quadrature import sphere_area


def s_delta(delta: float, t):
    """Solution of y'' + delta y = 0, y(0) = 0, y'(0) = 1."""
    t = np.asarray(t, dtype=float)
    if delta > 0:
        r = np.sqrt(delta)
        return np.sin(r * t) / r
    if delta < 0:
        r = np.sqrt(-delta)
        return np.sinh(r * t) / r
    return t.copy() if t.ndim else float(t)


def s_delta_prime(delta: float, t):
    t = np.asarray(t, dtype=float)
    if delta > 0:
        return np.cos(np.sqrt(delta) * t)
    if delta < 0:
        return np.cosh(np.sqrt(-delta) * t)
    return np.ones_like(t) if t.ndim else 1.0


def horizon(delta: float) -> float:
    """pi / sqrt(delta), with +inf for delta <= 0."""
    return np.pi / np.sqrt(delta) if delta > 0 else np.inf


def half_horizon(delta: float) -> float:
    return np.pi / (2 * np.sqrt(delta)) if delta > 0 else np.inf


def model_factor(delta: float, H: float, k: int, t):
    """s'_delta(t) - (H / k) s_delta(t)."""
    return s_delta_prime(delta, t) - (H / k) * s_delta(delta, t)


@dataclass(frozen=True)
class ZetaResult:
    value: float
    horizon: float


def zeta(delta: float, H: float, k: int, search_horizon: Optional[float] = None) -> float:
    """First positive zero of s'_delta - (H/k) s_delta, or +inf if none before the horizon."""
    return zeta_info(delta, H, k, search_horizon).value


def zeta_info(delta: float, H: float, k: int, search_horizon: Optional[float] = None) -> ZetaResult:
    if k < 1:
        raise ValueError("zeta needs k >= 1")
    if search_horizon is not None:
        hor = search_horizon
    elif delta > 0:
        hor = horizon(delta)
    else:
        # tanh saturates long before cosh overflows
        hor = 1e3 if delta == 0 else min(1e3, 600.0 / np.sqrt(-delta))
    f = lambda t: float(model_factor(delta, H, k, t))  # noqa: E731
    ts = np.linspace(0.0, hor, 4097)
    vals = model_factor(delta, H, k, ts)
    for j in range(1, len(ts)):
        if vals[j] == 0.0:
            return ZetaResult(float(ts[j]), hor)
        if np.sign(vals[j - 1]) * np.sign(vals[j]) < 0:
            return ZetaResult(float(brentq(f, ts[j - 1], ts[j], xtol=1e-14, rtol=1e-15)), hor)
    return ZetaResult(np.inf, hor)


def model_det(delta: float, H: Optional[float], k: int, m: int, t):
    """(s'_delta - (H/k) s_delta)^k s_delta^{m-k-1}; the pure s_delta^{m-1} when k = 0."""
    sd = s_delta(delta, t)
    if k == 0:
        return sd ** (m - 1)
    return model_factor(delta, H, k, t) ** k * sd ** (m - k - 1)


def sn_integral(delta: float, n: int, a: float, b: float = None) -> float:
    """Integral of s_delta^n over [0, a] (adaptive quadrature)."""
    if not np.isfinite(a):
        return np.inf
    val, _ = quad(lambda t: float(s_delta(delta, t)) ** n, 0.0, a, epsabs=0.0, epsrel=1e-13, limit=200)
    return float(val)


def sn_integral_closed(delta: float, n: int, a: float) -> float:
    """Closed forms of the same integral for n <= 3 (used as a cross-check)."""
    if delta == 0:
        return a ** (n + 1) / (n + 1)
    if delta > 0:
        r = np.sqrt(delta)
        c, s = np.cos(r * a), np.sin(r * a)
        forms = {
            0: a,
            1: (1 - c) / r**2,
            2: (a - s * c / r) / (2 * r**2),
            3: (2 / 3 - c + c**3 / 3) / r**4,
        }
    else:
        r = np.sqrt(-delta)
        c, s = np.cosh(r * a), np.sinh(r * a)
        forms = {
            0: a,
            1: (c - 1) / r**2,
            2: (s * c / r - a) / (2 * r**2),
            3: (c**3 / 3 - c + 2 / 3) / r**4,
        }
    return float(forms[n])


def model_integral(delta: float, H: float, k: int, m: int, upper: float) -> float:
    if not np.isfinite(upper):
        return np.inf
    val, _ = quad(lambda t: float(model_det(delta, H, k, m, t)), 0.0, upper, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(val)


# ------------------------------------------------------------------ reports


@dataclass
class ComparisonReport:
    """One evaluated inequality ``measured (direction) bound``."""

    check: str
    measured: float
    bound: float
    direction: str  # "<=" means measured <= bound, ">=" means measured >= bound
    inputs: dict = field(default_factory=dict)
    sampled: list = field(default_factory=list)
    tolerance: Optional[float] = None
    note: str = ""
    extra_pass: bool = True

    def __post_init__(self):
        if self.tolerance is None:
            self.tolerance = max(1e-9, 1e-6 * abs(self.bound)) if np.isfinite(self.bound) else 1e-9

    @property
    def margin(self) -> float:
        if self.direction == "<=":
            return float(self.bound - self.measured)
        return float(self.measured - self.bound)

    @property
    def passed(self) -> bool:
        return bool(self.margin >= -self.tolerance and self.extra_pass)

    @property
    def conditional(self) -> bool:
        return bool(self.sampled)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(margin=self.margin, passed=self.passed, conditional=self.conditional)
        return d


# ---------------------------------------------------------------- calculators


def theorem_1_1_point_rhs(tau_integral: float, d: float, delta: float, m: int) -> float:
    """(integral over the unit sphere of e^{-tau} d nu_x) * int_0^d s_delta^{m-1}."""
    return tau_integral * sn_integral(delta, m - 1, d)


def theorem_1_1_sub_rhs(m: int, k: int, Lambda: float, mu_N: float, delta: float, d: float, H0: float) -> float:
    """c_{m-k-1} Lambda^{(3m+k)/2} mu(N) int_0^{min(d, zeta)} (s' - H0/k s)^k s^{m-k-1}."""
    z = zeta(delta, H0, k)
    upper = min(d, z)
    return sphere_area(m - k - 1) * Lambda ** ((3 * m + k) / 2) * mu_N * model_integral(delta, H0, k, m, upper)


def _bracket(m: int, delta: float, d: float, l: float, sign: int = 1) -> float:
    if sign > 0:
        first = float(s_delta(delta, min(d, half_horizon(delta)))) ** (m - 1) / (m - 1)
        second = l * sn_integral(delta, m - 1, d) if l else 0.0
    else:
        first = float(s_delta(-delta, d)) ** (m - 1) / (m - 1)
        second = l * sn_integral(-delta, m - 1, d) if l else 0.0
    return first + second


def corollary_1_2_bound(mu: float, m: int, Lambda: float, delta: float, d: float, l: float) -> float:
    """Lower bound on the length of a simple closed geodesic."""
    return mu / (sphere_area(m - 2) * Lambda ** ((3 * m + 1) / 2) * _bracket(m, delta, d, l))


def corollary_1_3_injectivity(
    V: float, m: int, Lambda: float, delta: float, d: float, l: float, reversibility: float = 1.0
) -> float:
    """Lower bound on the injectivity radius of a reversible metric with |K| <= delta."""
    if reversibility > 1 + 1e-6:
        raise NonReversible(f"sampled reversibility {reversibility:.6g} exceeds 1")
    second = V / (2 * sphere_area(m - 2) * Lambda ** ((3 * m + 1) / 2) * _bracket(m, delta, d, l, sign=-1))
    return min(horizon(delta), second)


def frak_S(b: float, b1: float, delta: float, d: float, m: int) -> float:
    lt = b1 * (2 * b**3 + 5 * b**2 - 2 * b + 7) / (2 * (1 - b) ** 3)
    return _bracket(m, delta, d, lt)


def theorem_6_1_bound(mu_bh: float, vol_alpha: float, b: float, b1: float, delta: float, d: float, m: int) -> float:
    pref = (1 - b) ** ((m + 2) / 2) / (sphere_area(m - 2) * (1 + b) ** 0.5 * frak_S(b, b1, delta, d, m))
    return pref * max(mu_bh / (1 + b) ** ((m + 1) / 2), (1 - b) ** ((m + 1) / 2) * vol_alpha)


def riemannian_length_bound(V: float, m: int, delta: float, d: float) -> float:
    """L_g(gamma) >= (m-1) V / (c_{m-2} s_delta^{m-1}(min{d, pi/(2 sqrt delta)}))."""
    return (m - 1) * V / (sphere_area(m - 2) * float(s_delta(delta, min(d, half_horizon(delta)))) ** (m - 1))
