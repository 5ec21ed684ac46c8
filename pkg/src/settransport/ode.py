"""Dormand-Prince 5(4) with PI step-size control.

Explicit embedded Runge-Kutta pair; the fifth-order solution propagates, the
fourth-order one only feeds the error estimate.  First-same-as-last lets an
accepted step reuse its final stage.  Step size is adapted with the usual PI
controller (exponents 0.7/5 and 0.4/5 on the current and previous error).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ODESolverConfig", "integrate"]

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])

_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]

# fifth-order propagation weights (same as the last A row, FSAL)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])

# b5 - b4: multiplies the stages directly into the error estimate
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])


@dataclass(frozen=True)
class ODESolverConfig:
    method: str = "dopri54"
    atol: float = 1e-4
    rtol: float = 1e-4
    h_init: float = 0.05
    max_steps: int = 10_000
    safety: float = 0.9


def integrate(f, y0: np.ndarray, t0: float, t1: float,
              config: ODESolverConfig = ODESolverConfig()) -> np.ndarray:
    """Integrate dy/dt = f(t, y) from t0 to t1 and return y(t1).

    `y0` may have any shape; the error norm is a scaled RMS over all
    components.  Raises if the step budget runs out or a non-finite value
    appears.
    """
    if config.method != "dopri54":
        raise ValueError(f"unknown method {config.method!r}")
    y = np.array(y0, dtype=np.float64)
    t = float(t0)
    span = float(t1) - t
    if span == 0.0:
        return y
    direction = 1.0 if span > 0 else -1.0
    h = direction * min(abs(config.h_init), abs(span))
    k1 = np.asarray(f(t, y), dtype=np.float64)
    err_prev = 1.0
    for _ in range(config.max_steps):
        if direction * (t + h - t1) > 0:
            h = t1 - t
        k = [k1]
        for i in range(1, 7):
            yi = y + h * sum(a * ki for a, ki in zip(_A[i], k))
            k.append(np.asarray(f(t + _C[i] * h, yi), dtype=np.float64))
        y5 = y + h * sum(b * ki for b, ki in zip(_B5, k) if b != 0.0)
        err_vec = h * sum(e * ki for e, ki in zip(_E, k) if e != 0.0)
        scale = config.atol + config.rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.isfinite(err):
            raise FloatingPointError("non-finite value during ODE integration")
        if err <= 1.0:
            t = t + h
            y = y5
            k1 = k[6]  # FSAL
            if direction * (t - t1) >= 0 or abs(t1 - t) < 1e-14 * max(1.0, abs(t1)):
                return y
            factor = config.safety * err_prev ** 0.08 / max(err, 1e-10) ** 0.14
            err_prev = max(err, 1e-10)
        else:
            factor = config.safety / err ** 0.2
        h = h * float(np.clip(factor, 0.2, 5.0))
    raise RuntimeError("ODE solver exceeded max_steps before reaching t1")
