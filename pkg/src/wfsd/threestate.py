"""Schemes for the 3-state Wright-Fisher system.

States are arrays of shape (2, ...) holding (Y1, Y2); the third proportion
is always Y3 = 1 - Y1 - Y2. Increments have shape (3, ...) for the three
independent Wiener processes. Noise enters as

    component 1:  -C1 sqrt(Y1 Y2) dW1 + C2 sqrt(Y1 Y3) dW2
    component 2:  +C1 sqrt(Y1 Y2) dW1 - C3 sqrt(Y2 Y3) dW3
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionFailed, StepSizeViolation
from .model import MultiWFParams, SchemeId, multi_drift
from .scalar import _asin_sqrt, _sin2

__all__ = [
    "ClampPolicy",
    "third",
    "sd3_clamp",
    "biss3_clamp",
    "sd3_drift_update",
    "sd3_step",
    "biss3_controls",
    "biss3_step",
    "em3_step",
    "run_three",
    "ThreeRun",
    "simulate_path3",
]


@dataclass(frozen=True)
class ClampPolicy:
    tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.tol < 0.25:
            raise PreconditionFailed(f"clamp tolerance must lie in (0, 1/4), got {self.tol!r}")


def third(Y):
    return 1 - Y[0] - Y[1]


def _as_state(Y):
    Y = np.array(Y, dtype=float)
    if Y.shape[0] != 2:
        raise DomainError(f"state must have leading dimension 2, got shape {Y.shape}")
    return Y


def sd3_clamp(Y, policy: ClampPolicy = ClampPolicy()):
    """Pull a state back into the open simplex.

    A component above 1 - tol is reset to 1 - tol with the other set to
    tol/2. Otherwise, if Y3 < tol/2, (Y1, Y2) are rescaled so Y3 = tol/2.
    Returns ``(state, triggered)``.
    """
    Y = _as_state(Y)
    tol = policy.tol
    y1, y2 = Y[0], Y[1]
    hi1 = y1 > 1 - tol
    hi2 = ~hi1 & (y2 > 1 - tol)
    y1 = np.where(hi1, 1 - tol, np.where(hi2, tol / 2, y1))
    y2 = np.where(hi1, tol / 2, np.where(hi2, 1 - tol, y2))
    s = y1 + y2
    over = ~(hi1 | hi2) & (s > 1 - tol / 2)
    scale = np.where(over, (1 - tol / 2) / np.where(over, s, 1.0), 1.0)
    out = np.array([y1 * scale, y2 * scale])
    return out, (hi1 | hi2 | over)


def biss3_clamp(Y, policy: ClampPolicy = ClampPolicy()):
    """Floor each component at tol and cap Y1 + Y2 at 1 - tol."""
    Y = _as_state(Y)
    tol = policy.tol
    y1 = np.maximum(Y[0], tol)
    y2 = np.maximum(Y[1], tol)
    low = (Y[0] < tol) | (Y[1] < tol)
    s = y1 + y2
    over = s >= 1 - tol
    scale = np.where(over, (1 - tol) / np.where(over, s, 1.0), 1.0)
    return np.array([y1 * scale, y2 * scale]), (low | over)


def _noise_loads(Y, m: MultiWFParams):
    y1, y2 = Y[0], Y[1]
    y3 = np.maximum(1 - y1 - y2, 0.0)
    r12 = np.sqrt(np.maximum(y1 * y2, 0.0))
    r13 = np.sqrt(np.maximum(y1 * y3, 0.0))
    r23 = np.sqrt(np.maximum(y2 * y3, 0.0))
    return r12, r13, r23


def _noise(Y, dW, m: MultiWFParams):
    r12, r13, r23 = _noise_loads(Y, m)
    n1 = m.k3_11 * r12 * dW[0] + m.k3_12 * r13 * dW[1]
    n2 = m.k3_21 * r12 * dW[0] + m.k3_23 * r23 * dW[2]
    return n1, n2


def _frozen_variances(Y, m: MultiWFParams):
    """Summed noise variance of each component divided by Y_i (1 - Y_i)."""
    y1, y2 = Y[0], Y[1]
    y3 = 1 - y1 - y2
    s1 = (m.k3_11**2 * y2 + m.k3_12**2 * y3) / (1 - y1)
    s2 = (m.k3_21**2 * y1 + m.k3_23**2 * y3) / (1 - y2)
    return s1, s2


def sd3_drift_update(Y, dt: float, m: MultiWFParams):
    """Node-frozen drift part of each component, returning (y_n1, y_n2)."""
    Y = _as_state(Y)
    y1, y2 = Y[0], Y[1]
    s1, s2 = _frozen_variances(Y, m)
    f1 = m.k1_11 + m.k1_12 * y2 - 0.25 * s1 + y1 * (0.5 * s1 - m.k2_1)
    f2 = m.k1_21 + m.k1_22 * y1 - 0.25 * s2 + y2 * (0.5 * s2 - m.k2_2)
    out = np.array([y1 + f1 * dt, y2 + f2 * dt])
    bad = ~((out > 0) & (out < 1))
    if bad.any():
        flat = np.flatnonzero(bad.reshape(2, -1).any(axis=0))
        j = int(flat[0])
        yy = Y.reshape(2, -1)[:, j]
        oo = out.reshape(2, -1)[:, j]
        raise StepSizeViolation(tuple(yy), tuple(oo), dt, path=j if out.ndim > 1 else None)
    return out


def sd3_step(Y, dW, dt: float, m: MultiWFParams, policy: ClampPolicy = ClampPolicy()):
    """Semi-discrete step. Returns ``(state, clamped)``.

    The input is clamped first; square-root factors are frozen at that
    pre-step state. The output is clamped again so it satisfies the open
    simplex invariant exactly.
    """
    Y, pre = sd3_clamp(Y, policy)
    dW = np.asarray(dW, dtype=float)
    yn = sd3_drift_update(Y, dt, m)
    y1, y2 = Y[0], Y[1]
    y3 = 1 - y1 - y2
    phi1 = (
        0.5 * m.k3_11 * np.sqrt(y2 / (1 - y1)) * dW[0]
        + 0.5 * m.k3_12 * np.sqrt(y3 / (1 - y1)) * dW[1]
        + _asin_sqrt(yn[0])
    )
    phi2 = (
        0.5 * m.k3_21 * np.sqrt(y1 / (1 - y2)) * dW[0]
        + 0.5 * m.k3_23 * np.sqrt(y3 / (1 - y2)) * dW[2]
        + _asin_sqrt(yn[1])
    )
    out, post = sd3_clamp(np.array([_sin2(phi1), _sin2(phi2)]), policy)
    return out, pre | post


def biss3_controls(Y, dW, eps: float, m: MultiWFParams):
    """Controls (D1, D2, D3); ties go to the first listed branch."""
    y1, y2 = Y[0], Y[1]
    y3 = 1 - y1 - y2
    a1, a2, a3 = np.abs(dW[0]), np.abs(dW[1]), np.abs(dW[2])
    D1 = m.C1 * (np.where(y1 <= y2, np.sqrt(y2 / y1), np.sqrt(y1 / y2)) + np.sqrt(eps / (y1 * y2))) * a1
    D2 = m.C2 * (np.where(2 * y1 + y2 < 1, np.sqrt(y3 / y1), np.sqrt(y1 / y3)) + np.sqrt(eps / (y1 * y3))) * a2
    D3 = m.C3 * (np.where(2 * y2 + y1 < 1, np.sqrt(y3 / y2), np.sqrt(y2 / y3)) + np.sqrt(eps / (y2 * y3))) * a3
    return D1, D2, D3


def biss3_step(Y, dW, dt: float, m: MultiWFParams, policy: ClampPolicy = ClampPolicy()):
    """Balanced stochastic sub-step followed by an explicit drift sub-step.

    Returns ``(state, clamped)`` where ``clamped`` flags the pre-step clamps.
    """
    Y, clamped = biss3_clamp(Y, policy)
    dW = np.asarray(dW, dtype=float)
    D1, D2, D3 = biss3_controls(Y, dW, policy.tol, m)
    total = 1 + D1 + D2 + D3
    n1, n2 = _noise(Y, dW, m)
    star = np.array([Y[0] + n1 / total, Y[1] + n2 / total])
    return star + multi_drift(star, m) * dt, clamped


def _outside_simplex(Y):
    y1, y2 = Y[0], Y[1]
    y3 = 1 - y1 - y2
    return ~((y1 >= 0) & (y1 <= 1) & (y2 >= 0) & (y2 <= 1) & (y3 >= 0) & (y3 <= 1))


def em3_step(Y, dW, dt: float, m: MultiWFParams):
    """Euler-Maruyama step. Returns ``(state, exited)``."""
    Y = _as_state(Y)
    if _outside_simplex(Y).any():
        raise DomainError(f"EM3 input outside the closed simplex: {Y!r}")
    dW = np.asarray(dW, dtype=float)
    out = _em3_kernel(Y, dW, dt, m)
    ex = _outside_simplex(out)
    return out, (bool(ex) if np.ndim(ex) == 0 else ex)


def _em3_kernel(Y, dW, dt, m):
    n1, n2 = _noise(Y, dW, m)
    a = multi_drift(Y, m)
    return np.array([Y[0] + a[0] * dt + n1, Y[1] + a[1] * dt + n2])


@dataclass
class ThreeRun:
    """``values`` is (2, n_paths) at T or (n_steps + 1, 2, n_paths) when kept."""

    values: np.ndarray
    exited: np.ndarray
    first_exit: np.ndarray
    clamp_events: np.ndarray  # per path


def run_three(
    scheme: SchemeId,
    m: MultiWFParams,
    dt: float,
    dW,
    Y0,
    policy: ClampPolicy = ClampPolicy(),
    keep_path: bool = False,
) -> ThreeRun:
    """Step all paths; ``dW`` has shape (3, n_steps, n_paths)."""
    scheme = SchemeId(scheme)
    if scheme.is_scalar:
        raise PreconditionFailed(f"{scheme.value} is not a 3-state scheme")
    dW = np.asarray(dW, dtype=float)
    if dW.ndim != 3 or dW.shape[0] != 3:
        raise ValueError(f"increments must have shape (3, n_steps, n_paths), got {dW.shape}")
    _, n_steps, n_paths = dW.shape
    Y = np.empty((2, n_paths))
    Y0 = np.asarray(Y0, dtype=float)
    Y[0], Y[1] = Y0[0], Y0[1]
    if _outside_simplex(Y).any():
        raise DomainError("initial state outside the simplex")
    path = np.empty((n_steps + 1, 2, n_paths)) if keep_path else None
    if keep_path:
        path[0] = Y
    first_exit = np.full(n_paths, -1, dtype=np.int64)
    clamps = np.zeros(n_paths, dtype=np.int64)
    for n in range(n_steps):
        w = dW[:, n]
        if scheme is SchemeId.SD3:
            try:
                Y, hit = sd3_step(Y, w, dt, m, policy)
            except StepSizeViolation as err:
                err.index = n
                raise
            clamps += hit
        elif scheme is SchemeId.BISS3:
            Y, hit = biss3_step(Y, w, dt, m, policy)
            clamps += hit
        else:
            Y = _em3_kernel(Y, w, dt, m)
            newly = (first_exit < 0) & _outside_simplex(Y)
            first_exit[newly] = n + 1
        if keep_path:
            path[n + 1] = Y
    return ThreeRun(path if keep_path else Y, first_exit >= 0, first_exit, clamps)


def simulate_path3(scheme: SchemeId, m: MultiWFParams, dt: float, increments, Y0, policy: ClampPolicy = ClampPolicy()):
    """One trajectory; ``increments`` has shape (3, n_steps). Returns (t, path (n+1, 2), run)."""
    inc = np.asarray(increments, dtype=float)
    run = run_three(scheme, m, dt, inc[:, :, None], Y0, policy, keep_path=True)
    t = dt * np.arange(inc.shape[1] + 1)
    return t, run.values[:, :, 0], run
