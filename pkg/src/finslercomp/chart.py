"""Coordinate charts, tangent/cotangent objects and flags."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import KindMismatch


@dataclass(frozen=True)
class Chart:
    """A coordinate box with optional periodic axes and an excluded singular set.

    ``singular`` maps a coordinate array to True when the point lies inside the
    exclusion zone (e.g. within 1e-3 of a pole of spherical coordinates).
    """

    bounds: tuple
    periodic: tuple = ()
    singular: Optional[Callable[[np.ndarray], bool]] = None
    name: str = ""

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        periodic = tuple(bool(p) for p in self.periodic) or (False,) * len(bounds)
        object.__setattr__(self, "periodic", periodic)
        if len(bounds) < 1:
            raise ValueError("chart dimension must be >= 1")
        if len(periodic) != len(bounds):
            raise ValueError("periodic flags must match the number of axes")
        for (lo, hi), per in zip(bounds, periodic):
            if not lo < hi:
                raise ValueError(f"empty coordinate interval ({lo}, {hi})")
            if per and not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError("periodic axes need finite bounds")
        if self.singular is not None:
            pts = self.sample(64, np.random.default_rng(0))
            frac = np.mean([bool(self.singular(p)) for p in pts])
            if frac > 0.5:
                raise ValueError("singular set appears to have nonempty interior")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def wrap(self, x):
        x = np.array(x, dtype=float)
        for i, per in enumerate(self.periodic):
            if per:
                lo, hi = self.bounds[i]
                x[..., i] = lo + np.mod(x[..., i] - lo, hi - lo)
        return x

    def is_singular(self, x) -> bool:
        return self.singular is not None and bool(self.singular(np.asarray(x, dtype=float)))

    def inside(self, x) -> bool:
        x = self.wrap(x)
        for i, per in enumerate(self.periodic):
            if per:
                continue
            lo, hi = self.bounds[i]
            if not lo <= x[i] <= hi:
                return False
        return True

    def sample(self, n: int, rng: np.random.Generator, margin: float = 0.0) -> np.ndarray:
        """Uniform points in the box, shrunk by ``margin`` on non-periodic axes.

        Infinite bounds are replaced by [-5, 5].
        """
        lo = np.where(np.isfinite(self.lower), self.lower, -5.0)
        hi = np.where(np.isfinite(self.upper), self.upper, 5.0)
        per = np.array(self.periodic)
        lo = np.where(per, lo, lo + margin)
        hi = np.where(per, hi, hi - margin)
        return lo + (hi - lo) * rng.random((n, self.dim))

    def sample_regular(self, n: int, rng: np.random.Generator, margin: float = 0.0) -> np.ndarray:
        out = []
        while len(out) < n:
            for p in self.sample(2 * n, rng, margin):
                if not self.is_singular(p):
                    out.append(p)
        return np.array(out[:n])


def polar_exclusion(axes, radius=1e-3):
    """Singular predicate for spherical-type coordinates: |sin x_i| < radius on ``axes``."""
    axes = tuple(axes)

    def singular(x):
        x = np.asarray(x)
        return bool(np.any(np.abs(np.sin(x[list(axes)])) < radius))

    return singular


@dataclass(frozen=True)
class TangentObject:
    """Components of a vector or covector at a base point; the two kinds never mix."""

    base: np.ndarray
    components: np.ndarray
    kind: str = "vector"

    def __post_init__(self):
        if self.kind not in ("vector", "covector"):
            raise ValueError(f"unknown kind {self.kind!r}")
        base = np.asarray(self.base, dtype=float)
        comps = np.asarray(self.components, dtype=float)
        if base.shape != comps.shape:
            raise ValueError("base point and components must have the same dimension")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "components", comps)

    def pair(self, other: "TangentObject") -> float:
        """Natural pairing covector(vector); rejects vector-vector or covector-covector."""
        if {self.kind, other.kind} != {"vector", "covector"}:
            raise KindMismatch("pairing needs one vector and one covector")
        return float(self.components @ other.components)


def vector(x, comps) -> TangentObject:
    return TangentObject(np.asarray(x, float), np.asarray(comps, float), "vector")


def covector(x, comps) -> TangentObject:
    return TangentObject(np.asarray(x, float), np.asarray(comps, float), "covector")


def components(obj, kind: str) -> np.ndarray:
    """Raw components of ``obj``; TangentObjects of the wrong kind are rejected."""
    if isinstance(obj, TangentObject):
        if obj.kind != kind:
            raise KindMismatch(f"expected a {kind}, got a {obj.kind}")
        return obj.components
    return np.asarray(obj, dtype=float)


@dataclass(frozen=True)
class Flag:
    pole: np.ndarray
    transverse: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "pole", components(self.pole, "vector"))
        object.__setattr__(self, "transverse", components(self.transverse, "vector"))
