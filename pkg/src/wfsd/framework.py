"""Generic semi-discrete integrator.

An SDE dx = a(t, x) dt + b(t, x) dW is split as

    a(s, x) = f1(s, x) + f2(s, s, x, x),    b(s, x) = g(s, s, x, x).

Each step freezes the node pair (t_n, y_n), applies y_tilde = y_n + f1 dt,
and then solves dy = f2(t_n, s, y_n, y) ds + g(t_n, s, y_n, y) dW exactly
from y_tilde. Choosing f1 = 0, f2 = a, g = b with the explicit increment
as the sub-step solver reproduces Euler-Maruyama.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SubstepDomainError
from .model import WFParams
from .scalar import _asin_sqrt, _sin2

__all__ = [
    "SplitSystem",
    "TimeGrid",
    "ConsistencyReport",
    "drift_update",
    "integrate_path",
    "check_split_consistency",
    "wf_split_system",
    "euler_split_system",
]


@dataclass(frozen=True)
class SplitSystem:
    f1: Callable  # f1(s, x)
    f2: Callable  # f2(s, r, x, y)
    g: Callable   # g(s, r, x, y)
    # exact_substep(t_n, dt, x_node, y_tilde, dW) -> y_{n+1}
    exact_substep: Callable
    a: Callable   # a(s, x)
    b: Callable   # b(s, x)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.N < 1 or not self.T > 0:
            raise ValueError("TimeGrid needs T > 0 and N >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        t = self.dt * np.arange(self.N + 1)
        t[-1] = self.T
        return t


def drift_update(sys: SplitSystem, t_n: float, y, dt: float):
    return y + sys.f1(t_n, y) * dt


def integrate_path(sys: SplitSystem, grid: TimeGrid, increments, y0):
    """Node values y_{t_0}, ..., y_{t_N}.

    ``increments`` has N rows; extra trailing axes are carried along, so
    a (N, n_paths) array integrates all paths at once.
    """
    dW = np.asarray(increments, dtype=float)
    if dW.shape[0] != grid.N:
        raise ValueError(f"expected {grid.N} increments, got {dW.shape[0]}")
    dt = grid.dt
    times = grid.times
    out = np.empty((grid.N + 1,) + dW.shape[1:])
    y = np.broadcast_to(np.asarray(y0, dtype=float), dW.shape[1:]).copy()
    out[0] = y
    for n in range(grid.N):
        t = times[n]
        yt = drift_update(sys, t, y, dt)
        try:
            y = sys.exact_substep(t, dt, y, yt, dW[n])
        except SubstepDomainError as err:
            err.index = n
            raise
        out[n + 1] = y
    return out


@dataclass(frozen=True)
class ConsistencyReport:
    drift_defect: float
    diffusion_defect: float
    tolerance: float = 1e-12

    @property
    def passed(self) -> bool:
        return max(self.drift_defect, self.diffusion_defect) < self.tolerance


def check_split_consistency(sys: SplitSystem, sample_points, times=(0.0,)) -> ConsistencyReport:
    """Largest violation of the diagonal identities over the sampled (t, x)."""
    xs = np.asarray(sample_points, dtype=float).reshape(-1)
    d_drift = 0.0
    d_diff = 0.0
    for s in times:
        for x in xs:
            d_drift = max(d_drift, abs(sys.f1(s, x) + sys.f2(s, s, x, x) - sys.a(s, x)))
            d_diff = max(d_diff, abs(sys.g(s, s, x, x) - sys.b(s, x)))
    return ConsistencyReport(float(d_drift), float(d_diff))


def wf_split_system(p: WFParams) -> SplitSystem:
    """The Wright-Fisher splitting behind the SD scheme (time arguments unused)."""
    alpha, beta, k3 = p.alpha, p.beta, p.k3

    def f1(s, x):
        return alpha + beta * x

    def f2(s, r, x, y):
        return 0.25 * k3**2 * (1 - 2 * y)

    def g(s, r, x, y):
        return k3 * np.sqrt(y * (1 - y))

    def exact_substep(t, dt, x, yt, dW):
        yt_arr = np.asarray(yt)
        bad = ~((yt_arr > 0) & (yt_arr < 1))
        if bad.any():
            if yt_arr.ndim == 0:
                raise SubstepDomainError(float(np.asarray(x)), float(yt_arr), dt)
            j = int(np.flatnonzero(bad)[0])
            raise SubstepDomainError(float(np.asarray(x).reshape(-1)[j]), float(yt_arr[j]), dt, path=j)
        return _sin2(0.5 * k3 * np.asarray(dW) + _asin_sqrt(yt_arr))

    def a(s, x):
        return p.k1 - p.k2 * x

    def b(s, x):
        return k3 * np.sqrt(x * (1 - x))

    return SplitSystem(f1, f2, g, exact_substep, a, b)


def euler_split_system(a: Callable, b: Callable) -> SplitSystem:
    """f1 = 0, f2 = a, g = b with the explicit increment as sub-step solver."""

    def f1(s, x):
        return 0.0 * x

    def f2(s, r, x, y):
        return a(s, x)

    def g(s, r, x, y):
        return b(s, x)

    def exact_substep(t, dt, x, yt, dW):
        return yt + a(t, x) * dt + b(t, x) * dW

    return SplitSystem(f1, f2, g, exact_substep, a, b)
