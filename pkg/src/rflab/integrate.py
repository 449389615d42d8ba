"""Embedded Dormand-Prince 5(4) integrator with per-step hooks.

Hooks run on every accepted step: ``project`` (renormalization onto a
constraint set), ``valid`` (positivity; an invalid trial step is retried
with a smaller step and finally ends the run keeping the last valid
state) and ``stop`` (fixed-point proximity and similar).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class IntegrationError(RuntimeError):
    """Step-size underflow or non-finite state; carries the last valid state."""

    def __init__(self, message, t=None, y=None):
        super().__init__(message)
        self.t = t
        self.y = y


@dataclass
class IntegratorConfig:
    method: str = "dopri5"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_step: float = 0.1
    first_step: float | None = None
    fixed_step: float | None = None
    pos_tol: float = 1e-10
    min_step: float = 1e-13
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")
        if self.fixed_step is not None and self.fixed_step <= 0:
            raise ValueError("fixed_step must be positive")
        if self.method not in ("dopri5",):
            raise ValueError(f"unknown method {self.method!r}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class IntegrationResult:
    times: np.ndarray
    states: np.ndarray
    status: str  # "horizon", "stopped", "invalid"
    n_steps: int
    n_rejected: int


def dopri_step(f, t, y, h):
    """One Dormand-Prince step; returns (y5, error estimate)."""
    k = np.empty((7, len(y)))
    k[0] = f(t, y)
    for s in range(1, 7):
        k[s] = f(t + _C[s] * h, y + h * np.dot(_A[s], k[:s]))
    y5 = y + h * (_B5 @ k)
    err = h * ((_B5 - _B4) @ k)
    return y5, err


def integrate(
    f: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0,
    t1: float,
    config: IntegratorConfig | None = None,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    valid: Callable[[np.ndarray], bool] | None = None,
    stop: Callable[[float, np.ndarray], bool] | None = None,
) -> IntegrationResult:
    """Integrate ``y' = f(t, y)`` from t0 towards t1 (either direction)."""
    cfg = config or IntegratorConfig()
    y = np.array(y0, dtype=float)
    if project is not None:
        y = project(y)
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    times, states = [t0], [y.copy()]
    t = t0
    if span == 0:
        return IntegrationResult(np.array(times), np.array(states), "horizon", 0, 0)
    if cfg.fixed_step is not None:
        h = cfg.fixed_step
    elif cfg.first_step is not None:
        h = cfg.first_step
    else:
        f0 = f(t, y)
        scale = cfg.abs_tol + cfg.rel_tol * np.abs(y)
        d0, d1 = np.linalg.norm(y / scale), np.linalg.norm(f0 / scale)
        h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    h = min(h, cfg.max_step, span)
    n_steps = n_rej = 0
    status = "horizon"
    while abs(t - t0) < span * (1 - 1e-14):
        if n_steps >= cfg.max_steps:
            raise IntegrationError(f"exceeded {cfg.max_steps} steps", t, y)
        h = min(h, span - abs(t - t0))
        # overflow in a trial step is handled below by shrinking h
        with np.errstate(over="ignore", invalid="ignore"):
            y_new, err = dopri_step(f, t, y, direction * h)
        if not np.all(np.isfinite(y_new)):
            if cfg.fixed_step is not None or h < cfg.min_step:
                raise IntegrationError(f"non-finite state at t = {t:.6g}", t, y)
            h *= 0.25
            n_rej += 1
            continue
        if cfg.fixed_step is None:
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            e = float(np.sqrt(np.mean((err / scale) ** 2)))
            if e > 1.0:
                h *= max(0.2, 0.9 * e ** -0.2)
                n_rej += 1
                if h < cfg.min_step:
                    raise IntegrationError(f"step size underflow at t = {t:.6g}", t, y)
                continue
            factor = 5.0 if e == 0 else min(5.0, max(0.2, 0.9 * e ** -0.2))
        else:
            factor = 1.0
        if project is not None:
            y_new = project(y_new)
        if valid is not None and not valid(y_new):
            if cfg.fixed_step is None and h > cfg.min_step * 1e3:
                h *= 0.5
                n_rej += 1
                continue
            status = "invalid"
            break
        t = t + direction * h
        y = y_new
        n_steps += 1
        times.append(t)
        states.append(y.copy())
        if stop is not None and stop(t, y):
            status = "stopped"
            break
        h = min(h * factor, cfg.max_step)
    return IntegrationResult(np.array(times), np.array(states), status, n_steps, n_rej)
