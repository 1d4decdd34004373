"""Dormand-Prince 5(4) integration for autonomous systems ``s' = f(s, p)``.

The step function is compiled with jax; step-size control runs in Python so
that the caller can inspect every accepted state (chart exits, singular sets).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._jaxcfg import jax, jnp
from .errors import StepFailure

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))

ORDER = 5


_AMAT = np.zeros((7, 7))
for _i, _row in enumerate(_A):
    _AMAT[_i, : len(_row)] = _row


def dp_step(f: Callable) -> Callable:
    """Raw (uncompiled) Dormand-Prince step: returns (5th-order state, error estimate).

    The stages run in a fori_loop so ``f`` is traced once.
    """
    amat = jnp.asarray(_AMAT)
    b5 = jnp.asarray(_B5)
    e = jnp.asarray(_E)

    def step(s, h, p):
        def stage(i, ks):
            si = s + h * (amat[i] @ ks)
            return ks.at[i].set(f(si, p))

        ks = jax.lax.fori_loop(0, 7, stage, jnp.zeros((7,) + s.shape, dtype=s.dtype))
        return s + h * (b5 @ ks), h * (e @ ks)

    return step


_STEPPERS: dict = {}


def stepper_for(f: Callable) -> Callable:
    st = _STEPPERS.get(f)
    if st is None:
        st = _STEPPERS[f] = jax.jit(dp_step(f))
    return st


@dataclass
class ODEStats:
    accepted: int = 0
    rejected: int = 0
    h_min: float = np.inf
    h_max: float = 0.0

    @property
    def fevals(self) -> int:
        return 7 * (self.accepted + self.rejected)

    def as_dict(self) -> dict:
        return {"accepted": self.accepted, "rejected": self.rejected, "fevals": self.fevals}


def integrate(
    f: Callable,
    s0,
    t_grid,
    p,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    check: Optional[Callable] = None,
    max_steps: int = 200_000,
    h0: Optional[float] = None,
):
    """Adaptive integration reporting the state at every node of ``t_grid``.

    ``t_grid`` may decrease (backward integration). ``check(t, s)`` is called
    on every accepted state and may raise to abort.
    """
    step = stepper_for(f)
    t_grid = np.asarray(t_grid, dtype=float)
    s = np.asarray(s0, dtype=float)
    out = np.empty((len(t_grid),) + s.shape)
    out[0] = s
    stats = ODEStats()
    if len(t_grid) == 1:
        return out, stats
    direction = 1.0 if t_grid[-1] >= t_grid[0] else -1.0
    h = abs(h0) if h0 else min(abs(t_grid[1] - t_grid[0]), 0.1)
    t = t_grid[0]
    pj = jnp.asarray(p)
    for j in range(1, len(t_grid)):
        t_next = t_grid[j]
        while direction * (t_next - t) > 0:
            remaining = abs(t_next - t)
            hit = h >= remaining * (1 - 1e-12)
            hh = remaining if hit else h
            s_new, err = step(jnp.asarray(s), direction * hh, pj)
            s_new = np.asarray(s_new)
            err = np.asarray(err)
            scale = atol + rtol * np.maximum(np.abs(s), np.abs(s_new))
            en = float(np.max(np.abs(err) / scale)) if np.all(np.isfinite(s_new)) else np.inf
            if en <= 1.0:
                t = t_next if hit else t + direction * hh
                s = s_new
                stats.accepted += 1
                stats.h_min = min(stats.h_min, hh)
                stats.h_max = max(stats.h_max, hh)
                if check is not None:
                    check(t, s)
            else:
                stats.rejected += 1
            factor = 5.0 if en == 0 else (0.2 if not np.isfinite(en) else min(5.0, max(0.2, 0.9 * en ** (-1 / ORDER))))
            if en <= 1.0 and hit:
                h = max(h, hh * factor) if hh < h else hh * factor
            else:
                h = hh * factor
            if h < 1e-14 * max(1.0, abs(t)):
                raise StepFailure(f"step size underflow at t = {t:.6g}")
            if stats.accepted + stats.rejected > max_steps:
                raise StepFailure(f"more than {max_steps} steps before t = {t_next:.6g}")
        out[j] = s
    return out, stats


def integrate_fixed(f: Callable, s0, t_grid, p, substeps: int = 1):
    """Fixed-step integration: ``substeps`` equal steps per grid cell."""
    step = stepper_for(f)
    t_grid = np.asarray(t_grid, dtype=float)
    s = jnp.asarray(s0, dtype=float)
    out = [np.asarray(s)]
    pj = jnp.asarray(p)
    for a, b in zip(t_grid[:-1], t_grid[1:]):
        h = (b - a) / substeps
        for _ in range(substeps):
            s = step(s, h, pj)[0]
        out.append(np.asarray(s))
    return np.array(out)


_BATCH: dict = {}


def integrate_batch(f: Callable, S0, h: float, nsteps: int, p, every: int = 1):
    """Fixed-step integration of many initial states at once.

    Returns states at steps 0, every, 2*every, ..., shape (nsteps//every + 1, B, n).
    """
    key = (f, int(nsteps), int(every))
    fn = _BATCH.get(key)
    if fn is None:
        raw = dp_step(f)

        def one(s0, h, p):
            def inner(s, _):
                return raw(s, h, p)[0], None

            def outer(s, _):
                s, _ = jax.lax.scan(inner, s, None, length=every)
                return s, s

            _, traj = jax.lax.scan(outer, s0, None, length=nsteps // every)
            return jnp.concatenate([s0[None], traj], axis=0)

        fn = _BATCH[key] = jax.jit(jax.vmap(one, in_axes=(0, None, None), out_axes=1))
    return np.asarray(fn(jnp.asarray(S0, dtype=float), float(h), jnp.asarray(p)))
