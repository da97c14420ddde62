"""One-step maps and path drivers for the scalar Wright-Fisher schemes.

All step functions accept scalars or numpy arrays (one entry per path) and
are pure. The semi-discrete maps first apply an affine drift update and
then solve the remaining SDE exactly:

    y_tilde = y + (alpha + beta y) dt
    y_next  = sin^2(k3/2 dW + arcsin(sqrt(y_tilde)))

which stays inside (0, 1) whenever y_tilde does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .errors import DomainError, NotApplicable, PreconditionFailed, StepSizeViolation
from .model import SchemeId, WFParams, max_stable_step

__all__ = [
    "SchemeId",
    "StepContext",
    "validate",
    "sd_drift_update",
    "sd_alt_drift_update",
    "sd_step",
    "sd_alt_step",
    "em_step",
    "biss_control",
    "biss_step",
    "hyb_step",
    "run_scalar",
    "simulate_path",
    "PathResult",
    "ito_consistency_probe",
]

# largest double below one; the exact sin^2 value is inside (0, 1) but can
# round to 1.0 when the angle lies within ~1e-8 of pi/2
_BELOW_ONE = 1.0 - 2.0**-53
_TINY = np.finfo(float).tiny
_TRIG_LO = 2.0**-53


@dataclass(frozen=True)
class StepContext:
    params: WFParams
    dt: float

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt >= 0):
            raise PreconditionFailed(f"step must be finite and >= 0, got {self.dt!r}")

    @property
    def A(self) -> float:
        return self.params.k1

    @property
    def B(self) -> float:
        return self.params.k2 - self.params.k1

    @property
    def C(self) -> float:
        return self.params.k3

    @property
    def biss_epsilon(self) -> float:
        a, b = self.A * self.dt, self.B * self.dt
        return min(a, b, 1 - a, 1 - b)


def _hyb_window(p: WFParams) -> tuple[float, float]:
    # 1/(2 (N_r - 1)) written through k3^2 = 2 k2 / (N_r - 1)
    w = p.k3**2 / (4 * p.k2)
    return w, 1 - w


def validate(scheme: SchemeId, ctx: StepContext) -> None:
    """Construction-time checks; raises before any stepping happens."""
    scheme = SchemeId(scheme)
    p = ctx.params
    if scheme is SchemeId.SD_ALT:
        bound = max_stable_step(p, SchemeId.SD_ALT)
        if not ctx.dt < bound:
            raise PreconditionFailed(
                f"SD-alt needs dt < -1/beta = {bound!r}, got dt={ctx.dt!r}"
            )
    elif scheme is SchemeId.BISS:
        eps = ctx.biss_epsilon
        if not 0 < eps < 1:
            raise PreconditionFailed(
                f"BISS needs eps = min(A dt, B dt, 1 - A dt, 1 - B dt) in (0, 1), got {eps!r}"
            )
    elif scheme is SchemeId.HYB:
        lo, hi = _hyb_window(p)
        ratio = p.k1 / p.k2
        if not lo < ratio < hi:
            raise NotApplicable(
                f"HYB needs A/(A+B) in (1/(2(N_r-1)), 1 - 1/(2(N_r-1))) = ({lo:.6g}, {hi:.6g}); "
                f"got A/(A+B) = {ratio:.6g}"
            )
    elif not scheme.is_scalar:
        raise NotApplicable(f"{scheme.value} is not a scalar scheme")


def _asin_sqrt(y):
    y = np.clip(y, _TRIG_LO, 1 - _TRIG_LO)
    return np.arctan2(np.sqrt(y), np.sqrt(1 - y))


def _sin2(phi):
    out = np.sin(phi) ** 2
    return np.clip(out, _TINY, _BELOW_ONE)


def _scalar_out(x):
    return float(x) if np.ndim(x) == 0 else x


def _check_open(y, what="state"):
    y = np.asarray(y, dtype=float)
    bad = ~((y > 0) & (y < 1))
    if bad.any():
        raise DomainError(f"{what} must lie in (0, 1): {y[bad] if y.ndim else y!r}")
    return y


def _check_closed(y, what="state"):
    y = np.asarray(y, dtype=float)
    bad = ~((y >= 0) & (y <= 1))
    if bad.any():
        raise DomainError(f"{what} must lie in [0, 1]: {y[bad] if y.ndim else y!r}")
    return y


def sd_drift_update(y, ctx: StepContext):
    p = ctx.params
    return y + (p.alpha + p.beta * y) * ctx.dt


def sd_alt_drift_update(y, ctx: StepContext):
    p = ctx.params
    return (y + (p.alpha + p.beta * y) * ctx.dt) / (1 + (p.alpha + p.beta) * ctx.dt)


def _raise_violation(y, yt, dt, bad, offset=None):
    if np.ndim(bad) == 0:
        raise StepSizeViolation(float(y), float(yt), dt, index=offset)
    j = int(np.flatnonzero(bad)[0])
    raise StepSizeViolation(float(y[j]), float(yt[j]), dt, index=offset, path=j)


def sd_step(y, dW, ctx: StepContext):
    """Semi-discrete step; raises StepSizeViolation when y_tilde leaves (0, 1)."""
    y = _check_open(y)
    yt = sd_drift_update(y, ctx)
    bad = ~((yt > 0) & (yt < 1))
    if np.any(bad):
        _raise_violation(y, yt, ctx.dt, bad)
    return _scalar_out(_sin2(0.5 * ctx.params.k3 * np.asarray(dW) + _asin_sqrt(yt)))


def sd_alt_step(y, dW, ctx: StepContext):
    """Semi-discrete step with the O(dt)-perturbed drift update.

    Needs k3^2 < 2 k2 and dt < -1/beta; then y_tilde lies in (0, 1] for
    every y in (0, 1] and no per-step failure is possible.
    """
    validate(SchemeId.SD_ALT, ctx)
    y = _check_open(y)
    yt = sd_alt_drift_update(y, ctx)
    return _scalar_out(_sin2(0.5 * ctx.params.k3 * np.asarray(dW) + _asin_sqrt(yt)))


def _exited(y):
    return ~((y >= 0) & (y <= 1))


def em_step(y, dW, ctx: StepContext):
    """Euler-Maruyama step. Returns ``(value, exited)``; the value may leave [0, 1]."""
    y = _check_closed(y)
    p = ctx.params
    out = y + (p.k1 - p.k2 * y) * ctx.dt + p.k3 * np.sqrt(y * (1 - y)) * np.asarray(dW)
    ex = _exited(out)
    return _scalar_out(out), (bool(ex) if np.ndim(ex) == 0 else ex)


def biss_control(y, ctx: StepContext):
    """Piecewise control d(y) of the balanced scheme."""
    eps = ctx.biss_epsilon
    C = ctx.C
    y = np.asarray(y, dtype=float)
    cap = C * math.sqrt((1 - eps) / eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = C * np.sqrt((1 - y) / y)
        upper = C * np.sqrt(y / (1 - y))
    out = np.where(y < eps, cap, np.where(y < 0.5, lower, np.where(y <= 1 - eps, upper, cap)))
    return _scalar_out(out)


def biss_step(y, dW, ctx: StepContext):
    """Balanced implicit split step."""
    validate(SchemeId.BISS, ctx)
    y = _check_closed(y)
    return _scalar_out(_biss_kernel(y, np.asarray(dW), ctx))


def _biss_kernel(y, dW, ctx):
    A, B, C, dt = ctx.A, ctx.B, ctx.C, ctx.dt
    d = biss_control(y, ctx)
    noise = C * np.sqrt(np.maximum(y * (1 - y), 0.0)) * dW / (1 + d * np.abs(dW))
    return y + (A - (A + B) * y) * dt + noise * (1 - (A + B) * dt)


def hyb_step(y, dW, ctx: StepContext):
    """Hybrid splitting step. Returns ``(value, exited)``."""
    validate(SchemeId.HYB, ctx)
    y = _check_open(y)
    out = _hyb_kernel(y, np.asarray(dW), ctx)
    ex = _exited(out)
    return _scalar_out(out), (bool(ex) if np.ndim(ex) == 0 else ex)


def _hyb_kernel(y, dW, ctx):
    p = ctx.params
    a, b = p.alpha, p.beta
    e = math.exp(b * ctx.dt)
    # expm1 keeps (e - 1)/beta accurate for small steps
    shift = a * math.expm1(b * ctx.dt) / b if b != 0 else a * ctx.dt
    phi = 0.5 * p.k3 * dW + _asin_sqrt(y)
    return shift + e * np.sin(phi) ** 2


# ---------------------------------------------------------------------------
# drivers

@dataclass
class ScalarRun:
    """Result of stepping many paths at once.

    ``values`` holds terminal values (n_paths,) or full paths
    (n_steps + 1, n_paths); ``first_exit`` is the first node index outside
    [0, 1] or -1.
    """

    values: np.ndarray
    exited: np.ndarray
    first_exit: np.ndarray


def run_scalar(scheme: SchemeId, ctx: StepContext, dW, y0, keep_path: bool = False) -> ScalarRun:
    """Step all paths through the increments ``dW`` of shape (n_steps, n_paths).

    Schemes that may leave the domain (EM, HYB) keep stepping after an exit
    with the square root evaluated at zero; the exit is recorded instead.
    """
    scheme = SchemeId(scheme)
    validate(scheme, ctx)
    dW = np.asarray(dW, dtype=float)
    squeeze = dW.ndim == 1
    if squeeze:
        dW = dW[:, None]
    n_steps, n_paths = dW.shape
    y = np.broadcast_to(np.asarray(y0, dtype=float), (n_paths,)).copy()
    if scheme in (SchemeId.EM, SchemeId.BISS):
        _check_closed(y, "initial state")
    else:
        _check_open(y, "initial state")

    p = ctx.params
    dt = ctx.dt
    path = np.empty((n_steps + 1, n_paths)) if keep_path else None
    if keep_path:
        path[0] = y
    first_exit = np.full(n_paths, -1, dtype=np.int64)
    half_k3 = 0.5 * p.k3
    a, b = p.alpha, p.beta
    alt_den = 1 + (p.alpha + p.beta) * dt

    for n in range(n_steps):
        w = dW[n]
        if scheme is SchemeId.SD:
            yt = y + (a + b * y) * dt
            bad = ~((yt > 0) & (yt < 1))
            if bad.any():
                _raise_violation(y, yt, dt, bad, offset=n)
            y = _sin2(half_k3 * w + _asin_sqrt(yt))
        elif scheme is SchemeId.SD_ALT:
            y = _sin2(half_k3 * w + _asin_sqrt((y + (a + b * y) * dt) / alt_den))
        elif scheme is SchemeId.EM:
            y = y + (p.k1 - p.k2 * y) * dt + p.k3 * np.sqrt(np.maximum(y * (1 - y), 0.0)) * w
        elif scheme is SchemeId.BISS:
            y = _biss_kernel(y, w, ctx)
            if _exited(y).any():
                j = int(np.flatnonzero(_exited(y))[0])
                raise DomainError(f"BISS left [0, 1] at node {n + 1} on path {j}: {y[j]!r}")
        else:  # HYB
            y = _hyb_kernel(np.clip(y, 0.0, 1.0), w, ctx)
        if scheme.may_exit:
            newly = (first_exit < 0) & _exited(y)
            first_exit[newly] = n + 1
        if keep_path:
            path[n + 1] = y

    values = path if keep_path else y
    if squeeze:
        values = values[..., 0]
        return ScalarRun(values, first_exit[:1] >= 0, first_exit[:1])
    return ScalarRun(values, first_exit >= 0, first_exit)


@dataclass
class PathResult:
    t: np.ndarray
    values: np.ndarray
    exited: bool
    exit_index: int  # -1 when the path never left the domain


def simulate_path(scheme: SchemeId, ctx: StepContext, increments, y0: float, horizon: float | None = None) -> PathResult:
    """One trajectory on the uniform grid implied by ``increments`` and ``ctx.dt``."""
    inc = np.asarray(increments, dtype=float).reshape(-1)
    run = run_scalar(scheme, ctx, inc, y0, keep_path=True)
    t = ctx.dt * np.arange(inc.size + 1)
    return PathResult(t, np.asarray(run.values), bool(run.exited[0]), int(run.first_exit[0]))


# ---------------------------------------------------------------------------
# Ito consistency of the sin^2 sub-step

@dataclass(frozen=True)
class ProbeReport:
    y_tilde: float
    k3: float
    dts: tuple[float, ...]
    mean_defect: tuple[float, ...]      # E[y_dt] - y_tilde
    var: tuple[float, ...]              # Var[y_dt]
    mean_remainder: tuple[float, ...]   # mean_defect - k3^2/4 (1 - 2 y_tilde) dt
    var_remainder: tuple[float, ...]    # var - k3^2 y_tilde (1 - y_tilde) dt
    mean_ratios: tuple[float | None, ...]
    var_ratios: tuple[float | None, ...]

    @property
    def passed(self) -> bool:
        ratios = [r for r in self.mean_ratios + self.var_ratios if r is not None]
        return bool(ratios) and all(3.0 <= r <= 5.0 for r in ratios)


def _ratios(rem):
    out = []
    for a, b in zip(rem[:-1], rem[1:]):
        # an identically vanishing remainder (e.g. y_tilde = 1/2) has no ratio
        out.append(None if abs(b) < 1e-300 or abs(a) < 1e-18 else a / b)
    return tuple(out)


def ito_consistency_probe(y_tilde: float, k3: float, dts=(2.0**-8, 2.0**-9, 2.0**-10), nodes: int = 80) -> ProbeReport:
    """Check the sub-step against the sub-SDE's first two moments.

    Moments of sin^2(k3/2 dW + arcsin(sqrt(y_tilde))) over dW ~ N(0, dt)
    are computed by Gauss-Hermite quadrature; the leading drift and
    variance terms of the sub-SDE should match them up to O(dt^2), so the
    remainders shrink by about four when dt halves.
    """
    if not 0 < y_tilde < 1:
        raise DomainError("y_tilde must lie in (0, 1)")
    x, w = hermegauss(nodes)
    w = w / math.sqrt(2 * math.pi)
    theta = float(_asin_sqrt(y_tilde))
    means, variances, mrem, vrem = [], [], [], []
    for dt in dts:
        y = np.sin(0.5 * k3 * math.sqrt(dt) * x + theta) ** 2
        m = float(w @ y)
        v = float(w @ (y - m) ** 2)
        means.append(m - y_tilde)
        variances.append(v)
        mrem.append(m - y_tilde - 0.25 * k3**2 * (1 - 2 * y_tilde) * dt)
        vrem.append(v - k3**2 * y_tilde * (1 - y_tilde) * dt)
    return ProbeReport(
        y_tilde, k3, tuple(dts), tuple(means), tuple(variances),
        tuple(mrem), tuple(vrem), _ratios(mrem), _ratios(vrem),
    )
