"""Wright-Fisher model coefficients, parameter presets and boundary tests.

The scalar model is

    dx = (k1 - k2 x) dt + k3 sqrt(x (1 - x)) dW,   x in (0, 1),

and the 3-state model couples two such proportions through three
independent Wiener processes, with the third proportion 1 - X1 - X2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .errors import (
    DomainError,
    InvalidParameter,
    NotApplicable,
    PreconditionFailed,
    SingularSystem,
)

__all__ = [
    "SchemeId",
    "WFParams",
    "ChannelRates",
    "MultiWFParams",
    "BoundaryReport",
    "PRESETS",
    "preset",
    "from_channel_rates",
    "alpha_beta",
    "drift",
    "diffusion",
    "scale_density",
    "log_scale_density",
    "divergence_probe",
    "classify_boundaries",
    "max_stable_step",
    "multi_drift",
    "multi_steady_state",
    "scalar_margins",
]


class SchemeId(str, enum.Enum):
    SD = "sd"
    SD_ALT = "sd-alt"
    EM = "em"
    BISS = "biss"
    HYB = "hyb"
    SD3 = "sd3"
    BISS3 = "biss3"
    EM3 = "em3"

    @property
    def is_scalar(self) -> bool:
        return self in _SCALAR

    @property
    def is_three_state(self) -> bool:
        return not self.is_scalar

    @property
    def may_exit(self) -> bool:
        """Whether iterates can leave the domain (finite life time)."""
        return self in (SchemeId.EM, SchemeId.HYB, SchemeId.EM3)

    @classmethod
    def parse(cls, name: str) -> "SchemeId":
        key = name.strip().lower().replace("_", "-")
        try:
            return cls(key)
        except ValueError:
            raise InvalidParameter(
                f"unknown scheme {name!r}; expected one of {[s.value for s in cls]}"
            ) from None


_SCALAR = frozenset(
    {SchemeId.SD, SchemeId.SD_ALT, SchemeId.EM, SchemeId.BISS, SchemeId.HYB}
)


def _require_positive(**values: float) -> None:
    for name, v in values.items():
        if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v) and v > 0):
            raise InvalidParameter(f"{name} must be a positive finite number, got {v!r}")


@dataclass(frozen=True)
class WFParams:
    """Coefficients of the scalar model: rates k1, k2 and noise amplitude k3."""

    k1: float
    k2: float
    k3: float

    def __post_init__(self):
        _require_positive(k1=self.k1, k2=self.k2, k3=self.k3)

    @property
    def alpha(self) -> float:
        return self.k1 - self.k3**2 / 4

    @property
    def beta(self) -> float:
        return self.k3**2 / 2 - self.k2

    @property
    def steady_state(self) -> float:
        return self.k1 / self.k2


@dataclass(frozen=True)
class ChannelRates:
    """Two-state ion channel: opening rate A, closing rate B, N_r channels."""

    A: float
    B: float
    N_r: int

    def __post_init__(self):
        _require_positive(A=self.A, B=self.B)
        if int(self.N_r) != self.N_r or self.N_r < 2:
            raise InvalidParameter(f"N_r must be an integer >= 2, got {self.N_r!r}")


def from_channel_rates(rates: ChannelRates) -> tuple[WFParams, float]:
    """Map channel rates to (k1, k2, k3) and the deterministic steady state."""
    k2 = rates.A + rates.B
    k3 = math.sqrt(2 * k2 / (rates.N_r - 1))
    return WFParams(rates.A, k2, k3), rates.A / k2


def alpha_beta(p: WFParams) -> tuple[float, float]:
    return p.alpha, p.beta


def drift(x, p: WFParams):
    return p.k1 - p.k2 * x


def diffusion(x, p: WFParams):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise DomainError(f"diffusion evaluated outside [0, 1]: {x!r}")
    out = p.k3 * np.sqrt(x * (1 - x))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# scale function and boundary classification

def _exponents(p: WFParams) -> tuple[float, float]:
    s = p.k3**2
    return 2 * p.k1 / s, 2 * (p.k2 - p.k1) / s


def log_scale_density(y, p: WFParams):
    """log of y^(-2 k1/k3^2) (1-y)^(2 (k1-k2)/k3^2), base point 1/2, C = 1."""
    y = np.asarray(y, dtype=float)
    if np.any((y <= 0) | (y >= 1)) or np.any(np.isnan(y)):
        raise DomainError(f"scale density needs y in (0, 1), got {y!r}")
    left, right = _exponents(p)
    out = -left * np.log(y) - right * np.log1p(-y)
    return float(out) if out.ndim == 0 else out


def scale_density(y, p: WFParams):
    """Integrand of the scale function. May overflow to inf for large exponents."""
    with np.errstate(over="ignore"):
        return np.exp(log_scale_density(y, p))


@dataclass(frozen=True)
class DivergenceProbe:
    """Quadrature evidence for one endpoint.

    ``log_partial[k]`` is the log of the scale-density integral from the
    endpoint offset ``deltas[k]`` to the base point 1/2.
    """

    deltas: tuple[float, ...]
    log_partial: tuple[float, ...]
    increment_ratio: float
    divergent: bool

    @property
    def growth_last_three(self) -> float:
        return _safe_exp(self.log_partial[-1] - self.log_partial[-4])


def _safe_exp(x: float) -> float:
    return math.inf if x > 709.0 else math.exp(x)


def _log_quad(h, a: float, b: float) -> float:
    """log of the integral of exp(h(u)) over [a, b]."""
    grid = np.linspace(a, b, 17)
    shift = float(np.max(h(grid)))
    val, _ = integrate.quad(
        lambda u: math.exp(h(u) - shift), a, b, epsabs=0.0, epsrel=1e-12, limit=200
    )
    return shift + math.log(val)


# relative slack on the increment ratio; exponents within ~1e-3 of 1 are
# borderline and the exponent test decides them
_RATIO_TOL = 1e-3


def divergence_probe(p: WFParams, side: str, exps: range = range(5, 21)) -> DivergenceProbe:
    """Integrate the scale density towards one endpoint over a geometric ladder.

    The endpoint offsets are delta = 2^-5 ... 2^-20. The integral over
    [delta/2, delta] behaves like delta^(1 - e) for an endpoint exponent e,
    so the ratio of consecutive ladder increments tends to 2^(e - 1). The
    integral is classed divergent when that ratio is at least one.
    """
    left, right = _exponents(p)
    if side == "left":
        # y = exp(u)
        def h(u):
            return -left * u + (-right) * np.log1p(-np.exp(u)) + u
    elif side == "right":
        # 1 - y = exp(u)
        def h(u):
            return -left * np.log1p(-np.exp(u)) + (-right) * u + u
    else:
        raise ValueError("side must be 'left' or 'right'")

    deltas = [2.0**-k for k in exps]
    pieces = [_log_quad(h, math.log(deltas[0]), math.log(0.5))]
    for hi, lo in zip(deltas[:-1], deltas[1:]):
        pieces.append(_log_quad(h, math.log(lo), math.log(hi)))
    log_partial = tuple(float(logsumexp(pieces[: i + 1])) for i in range(len(pieces)))
    ratio = _safe_exp(pieces[-1] - pieces[-2])
    return DivergenceProbe(
        deltas=tuple(deltas),
        log_partial=log_partial,
        increment_ratio=ratio,
        divergent=ratio >= 1 - _RATIO_TOL,
    )


@dataclass(frozen=True)
class BoundaryReport:
    left_exponent: float
    right_exponent: float
    left_unattainable: bool
    right_unattainable: bool
    left_probe: DivergenceProbe | None = field(default=None, compare=False)
    right_probe: DivergenceProbe | None = field(default=None, compare=False)

    @property
    def probe_agrees(self) -> bool:
        if self.left_probe is None or self.right_probe is None:
            return True
        return (
            self.left_probe.divergent == self.left_unattainable
            and self.right_probe.divergent == self.right_unattainable
        )

    @property
    def both_unattainable(self) -> bool:
        return self.left_unattainable and self.right_unattainable


def classify_boundaries(p: WFParams, probe: bool = True) -> BoundaryReport:
    """Classify 0 and 1 by divergence of the scale function at each end.

    An endpoint is unattainable when the scale-density integral diverges
    there, which for this model happens iff the endpoint exponent is >= 1.
    """
    left, right = _exponents(p)
    return BoundaryReport(
        left_exponent=left,
        right_exponent=right,
        left_unattainable=left >= 1,
        right_unattainable=right >= 1,
        left_probe=divergence_probe(p, "left") if probe else None,
        right_probe=divergence_probe(p, "right") if probe else None,
    )


def max_stable_step(p: WFParams, scheme: SchemeId) -> float:
    """Supremum of step sizes for which the drift update maps [0, 1] into (0, 1).

    For SD the update y -> y (1 + beta dt) + alpha dt is affine, so only the
    endpoint images alpha dt and 1 + (alpha + beta) dt need checking. Returns
    0.0 when no positive step works and ``math.inf`` when nothing binds.
    """
    scheme = SchemeId(scheme)
    a, b = p.alpha, p.beta
    if scheme is SchemeId.SD:
        if a <= 0 or a + b > 0:
            return 0.0
        bound = 1 / a
        if a + b < 0:
            bound = min(bound, -1 / (a + b))
        return bound
    if scheme is SchemeId.SD_ALT:
        if p.k3**2 >= 2 * p.k2:
            raise PreconditionFailed(
                f"SD-alt needs k3^2 < 2 k2, got k3^2={p.k3**2!r}, 2 k2={2 * p.k2!r}"
            )
        return -1 / b
    raise NotApplicable(f"no analytic step bound for {scheme.value}")


# ---------------------------------------------------------------------------
# 3-state system

@dataclass(frozen=True)
class MultiWFParams:
    """Rates A_i, B_i and noise amplitudes C_i of the 3-state model."""

    A1: float
    A2: float
    A3: float
    B1: float
    B2: float
    B3: float
    C1: float
    C2: float
    C3: float

    def __post_init__(self):
        _require_positive(**{f: getattr(self, f) for f in self.__dataclass_fields__})

    # drift of component 1: k1_11 + k1_12 X2 - k2_1 X1
    @property
    def k1_11(self) -> float:
        return self.A3

    @property
    def k1_12(self) -> float:
        return self.A2 - self.A3

    @property
    def k2_1(self) -> float:
        return self.B3 + self.B1 + self.A3

    # drift of component 2: k1_21 + k1_22 X1 - k2_2 X2
    @property
    def k1_21(self) -> float:
        return self.A1

    @property
    def k1_22(self) -> float:
        return self.B1 - self.A1

    @property
    def k2_2(self) -> float:
        return self.A2 + self.B2 + self.A1

    # noise loadings: W1 on sqrt(X1 X2), W2 on sqrt(X1 X3), W3 on sqrt(X2 X3)
    @property
    def k3_11(self) -> float:
        return -self.C1

    @property
    def k3_12(self) -> float:
        return self.C2

    @property
    def k3_21(self) -> float:
        return self.C1

    @property
    def k3_23(self) -> float:
        return -self.C3


def multi_drift(X, m: MultiWFParams) -> np.ndarray:
    """Drift (a1, a2) at X = (X1, X2); broadcasts over trailing axes."""
    x1, x2 = X[0], X[1]
    return np.array(
        [
            m.k1_11 + m.k1_12 * x2 - m.k2_1 * x1,
            m.k1_21 + m.k1_22 * x1 - m.k2_2 * x2,
        ]
    )


def multi_steady_state(m: MultiWFParams) -> np.ndarray:
    """(X1, X2) where the drift vanishes."""
    mat = np.array([[m.k2_1, -m.k1_12], [-m.k1_22, m.k2_2]])
    rhs = np.array([m.k1_11, m.k1_21])
    if abs(np.linalg.det(mat)) < 1e-14 * np.abs(mat).max() ** 2:
        raise SingularSystem("steady-state system is singular")
    return np.linalg.solve(mat, rhs)


def scalar_margins(m: MultiWFParams, X=None) -> tuple[WFParams, WFParams]:
    """Scalar Wright-Fisher models seen by each component with the others frozen.

    Component i at frozen state X behaves like the scalar model with
    k1 = k1_i1 + k1_i2 X_j, k2 = k2_i and k3^2 equal to the summed noise
    variance divided by X_i (1 - X_i). ``X`` defaults to the steady state.
    """
    if X is None:
        X = multi_steady_state(m)
    x1, x2 = float(X[0]), float(X[1])
    x3 = 1 - x1 - x2
    s1 = (m.k3_11**2 * x2 + m.k3_12**2 * x3) / (1 - x1)
    s2 = (m.k3_21**2 * x1 + m.k3_23**2 * x3) / (1 - x2)
    return (
        WFParams(m.k1_11 + m.k1_12 * x2, m.k2_1, math.sqrt(s1)),
        WFParams(m.k1_21 + m.k1_22 * x1, m.k2_2, math.sqrt(s2)),
    )


# ---------------------------------------------------------------------------
# presets

SET_I = ChannelRates(1.0, 2.0, 100)
SET_II = ChannelRates(7.0064, 0.0204, 100)
SET_III = MultiWFParams(1, 2, 3, 1.2, 2.3, 3.4, 0.1271, 0.1798, 0.1291)

PRESETS: dict[str, ChannelRates | MultiWFParams] = {
    "set-i": SET_I,
    "set-ii": SET_II,
    "set-iii": SET_III,
}


def preset(name: str) -> ChannelRates | MultiWFParams:
    try:
        return PRESETS[name.strip().lower().replace("_", "-")]
    except KeyError:
        raise InvalidParameter(
            f"unknown preset {name!r}; expected one of {sorted(PRESETS)}"
        ) from None
