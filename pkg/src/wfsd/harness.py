"""Coupled-path Monte Carlo estimation of strong errors.

Each path draws its fine-grid increments once. The reference scheme runs on
the fine grid; every test scheme runs on coarser grids whose increments are
exact block sums of the same fine increments, so the squared difference at
the final time measures pathwise (strong) error. Paths are grouped into M
batches of L; the error estimate pools all paths and the confidence
interval comes from the spread of the batch means.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .brownian import coarsen, sample_block
from .errors import AllPathsRejected, InsufficientData, InvalidParameter, StepSizeViolation
from .model import (
    ChannelRates,
    MultiWFParams,
    SchemeId,
    WFParams,
    from_channel_rates,
    multi_steady_state,
    preset,
)
from .scalar import StepContext, run_scalar, validate
from .threestate import ClampPolicy, run_three

__all__ = [
    "ExperimentConfig",
    "ErrorRow",
    "ConvergenceReport",
    "ExperimentResult",
    "config_for_preset",
    "strong_errors",
    "strong_error",
    "fit_order",
    "fit_line",
    "batch_ci",
]

CI_LEVEL = 0.98


@dataclass(frozen=True)
class ExperimentConfig:
    model: WFParams | MultiWFParams
    y0: float | tuple[float, float]
    schemes: tuple[SchemeId, ...]
    reference: SchemeId
    seed: int
    ref_exp: int = 13
    test_exps: tuple[int, ...] = tuple(range(3, 13))
    batches: int = 100
    paths: int = 100
    horizon: float = 1.0
    reject_exits: bool = False
    metric: str = "terminal"  # or "sup": worst squared error over shared grid nodes
    clamp_tol: float = 1e-8
    chunk_batches: int = 10
    coupled: bool = True  # False draws test increments independently (negative control)
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(SchemeId(s) for s in self.schemes))
        object.__setattr__(self, "reference", SchemeId(self.reference))
        object.__setattr__(self, "test_exps", tuple(sorted(set(int(k) for k in self.test_exps))))
        if not self.schemes:
            raise InvalidParameter("no test schemes given")
        if not self.test_exps:
            raise InvalidParameter("no test exponents given")
        if self.ref_exp < max(self.test_exps):
            raise InvalidParameter(
                f"reference exponent {self.ref_exp} is coarser than test exponent {max(self.test_exps)}"
            )
        if min(self.test_exps) < 0:
            raise InvalidParameter("test exponents must be >= 0")
        if self.batches < 2:
            raise InvalidParameter("need at least 2 batches")
        if self.paths < 1:
            raise InvalidParameter("need at least 1 path per batch")
        if self.chunk_batches < 1:
            raise InvalidParameter("chunk_batches must be >= 1")
        if self.metric not in ("terminal", "sup"):
            raise InvalidParameter(f"metric must be 'terminal' or 'sup', got {self.metric!r}")
        three = isinstance(self.model, MultiWFParams)
        for s in self.schemes + (self.reference,):
            if s.is_three_state != three:
                kind = "3-state" if three else "scalar"
                raise InvalidParameter(f"scheme {s.value} does not fit the {kind} model")
        if not three:
            for s in set(self.schemes + (self.reference,)):
                exps = self.test_exps + (self.ref_exp,) if s in self.schemes else (self.ref_exp,)
                for k in exps:
                    validate(s, StepContext(self.model, 2.0**-k))

    @property
    def three_state(self) -> bool:
        return isinstance(self.model, MultiWFParams)

    @property
    def dims(self) -> int:
        return 3 if self.three_state else 1

    @property
    def total_paths(self) -> int:
        return self.batches * self.paths

    @property
    def rejecting(self) -> bool:
        return self.reject_exits and self.reference.may_exit


def config_for_preset(name: str, schemes, reference, seed: int, **kw) -> ExperimentConfig:
    """Build a config from a named preset, starting at the deterministic steady state."""
    raw = preset(name)
    if isinstance(raw, ChannelRates):
        model, y0 = from_channel_rates(raw)
    else:
        model = raw
        y0 = tuple(float(v) for v in multi_steady_state(raw))
    schemes = tuple(SchemeId.parse(s) if isinstance(s, str) else s for s in schemes)
    reference = SchemeId.parse(reference) if isinstance(reference, str) else reference
    return ExperimentConfig(model, y0, schemes, reference, seed, label=name, **kw)


@dataclass(frozen=True)
class ErrorRow:
    scheme: str
    dt_exp: int
    dt: float
    error: float
    ci_low: float
    ci_high: float
    paths_used: int
    paths_rejected: int
    exits: int = 0          # test paths that left the domain (EM, HYB, EM3)
    clamp_events: int = 0   # 3-state clamp activations summed over paths and steps
    runtime: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class ConvergenceReport:
    scheme: str
    rows: tuple[ErrorRow, ...]
    order: float | None
    residual: float | None


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    reports: dict
    reference_rejected: int
    reference_clamp_events: int
    runtime: float = field(default=0.0, compare=False)

    def __getitem__(self, scheme) -> ConvergenceReport:
        s = SchemeId.parse(scheme) if isinstance(scheme, str) else SchemeId(scheme)
        return self.reports[s]

    @property
    def rows(self) -> list[ErrorRow]:
        return [r for rep in self.reports.values() for r in rep.rows]


# ---------------------------------------------------------------------------
# statistics

def batch_ci(batch_means, level: float = CI_LEVEL, center: float | None = None) -> tuple[float, float]:
    """Student-t interval for the mean squared error, mapped through sqrt.

    ``batch_means`` are per-batch mean squared errors. The interval is
    centred at their mean unless ``center`` is given; the lower end is
    floored at zero before the square root.
    """
    x = np.asarray(batch_means, dtype=float)
    M = x.size
    if M < 2:
        raise InsufficientData("need at least 2 batch means")
    m = float(np.mean(x)) if center is None else float(center)
    s = float(np.std(x, ddof=1))
    half = stats.t.ppf(1 - (1 - level) / 2, M - 1) * s / math.sqrt(M)
    return math.sqrt(max(m - half, 0.0)), math.sqrt(m + half)


def fit_line(dts, errors) -> tuple[float, float, float]:
    """Least-squares fit of log2(error) on log2(dt): (slope, intercept, rms residual)."""
    x = np.log2(np.asarray(dts, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log2(np.asarray(errors, dtype=float))
    if x.size < 3:
        raise InsufficientData(f"need at least 3 points to fit an order, got {x.size}")
    if not np.all(np.isfinite(y)):
        raise InsufficientData("errors must be positive to fit an order")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))


def fit_order(rows) -> float:
    """Slope of log2(error) against log2(dt) over ErrorRows or (dt, error) pairs."""
    pairs = [(r.dt, r.error) if isinstance(r, ErrorRow) else (r[0], r[1]) for r in rows]
    if len(pairs) < 3:
        raise InsufficientData(f"need at least 3 rows, got {len(pairs)}")
    dts, errs = zip(*pairs)
    return fit_line(dts, errs)[0]


# ---------------------------------------------------------------------------
# per-chunk work

def _independent_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed & ((1 << 64) - 1), 0x5EED]).generate_state(1, np.uint64)[0])


def _run(cfg: ExperimentConfig, scheme: SchemeId, k: int, dW, keep_path: bool):
    """Step one scheme on the 2^-k grid. Returns (values, exited, clamps)."""
    dt = 2.0**-k
    if cfg.three_state:
        r = run_three(scheme, cfg.model, dt, dW, cfg.y0, ClampPolicy(cfg.clamp_tol), keep_path)
        return r.values, r.exited, r.clamp_events
    r = run_scalar(scheme, StepContext(cfg.model, dt), dW[0], cfg.y0, keep_path)
    return r.values, r.exited, np.zeros(r.exited.shape, dtype=np.int64)


def _sq_error(cfg, test, ref):
    d = test - ref
    if cfg.three_state:
        # (Y1, Y2, Y3) with Y3 = 1 - Y1 - Y2, so its difference is -(d1 + d2)
        return d[..., 0, :] ** 2 + d[..., 1, :] ** 2 + (d[..., 0, :] + d[..., 1, :]) ** 2
    return d**2


def _run_chunk(cfg: ExperimentConfig, chunk: int):
    b0 = chunk * cfg.chunk_batches
    b1 = min(b0 + cfg.chunk_batches, cfg.batches)
    nb = b1 - b0
    L = cfg.paths
    idx = range(b0 * L, b1 * L)
    fine = sample_block(cfg.seed, idx, cfg.dims, cfg.ref_exp, cfg.horizon)
    test_fine = fine if cfg.coupled else sample_block(
        _independent_seed(cfg.seed), idx, cfg.dims, cfg.ref_exp, cfg.horizon
    )
    keep = cfg.metric == "sup"

    t0 = time.perf_counter()
    try:
        ref_vals, ref_exit, ref_clamps = _run(cfg, cfg.reference, cfg.ref_exp, fine, keep)
    except StepSizeViolation as err:
        if err.path is not None:
            err.path += b0 * L
        raise
    ref_time = time.perf_counter() - t0
    used = ~ref_exit if cfg.rejecting else np.ones(len(idx), dtype=bool)
    used_b = used.reshape(nb, L)

    sums, counts, exits, clamps, times = {}, {}, {}, {}, {}
    for s in cfg.schemes:
        for k in cfg.test_exps:
            levels = cfg.ref_exp - k
            dW = coarsen(test_fine, levels, axis=1)
            t0 = time.perf_counter()
            try:
                vals, ex, cl = _run(cfg, s, k, dW, keep)
            except StepSizeViolation as err:
                if err.path is not None:
                    err.path += b0 * L
                err.dt = 2.0**-k
                raise
            if keep:
                err2 = _sq_error(cfg, vals, ref_vals[:: 1 << levels]).max(axis=0)
            else:
                err2 = _sq_error(cfg, vals, ref_vals)
            err2 = np.where(used, err2, 0.0).reshape(nb, L)
            sums[s, k] = err2.sum(axis=1)
            counts[s, k] = used_b.sum(axis=1)
            exits[s, k] = int((ex & used).sum())
            clamps[s, k] = int(cl[used].sum())
            times[s, k] = time.perf_counter() - t0
    return {
        "sums": sums,
        "counts": counts,
        "exits": exits,
        "clamps": clamps,
        "times": times,
        "rejected": int((~used).sum()),
        "ref_clamps": int(ref_clamps.sum()),
        "ref_time": ref_time,
    }


# ---------------------------------------------------------------------------

def strong_errors(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Estimate the strong error of every test scheme at every test exponent."""
    start = time.perf_counter()
    n_chunks = -(-cfg.batches // cfg.chunk_batches)
    if workers > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [cfg] * n_chunks, range(n_chunks)))
    else:
        parts = [_run_chunk(cfg, c) for c in range(n_chunks)]

    rejected = sum(p["rejected"] for p in parts)
    if rejected == cfg.total_paths:
        raise AllPathsRejected(
            f"all {cfg.total_paths} paths were rejected: the {cfg.reference.value} reference left the domain"
        )
    reports = {}
    for s in cfg.schemes:
        rows = []
        for k in cfg.test_exps:
            bsum = np.concatenate([p["sums"][s, k] for p in parts])
            bcnt = np.concatenate([p["counts"][s, k] for p in parts])
            used = int(bcnt.sum())
            mse = math.fsum(bsum.tolist()) / used
            keep = bcnt > 0
            lo, hi = batch_ci(bsum[keep] / bcnt[keep], center=mse)
            rows.append(
                ErrorRow(
                    scheme=s.value,
                    dt_exp=k,
                    dt=2.0**-k,
                    error=math.sqrt(mse),
                    ci_low=lo,
                    ci_high=hi,
                    paths_used=used,
                    paths_rejected=cfg.total_paths - used,
                    exits=sum(p["exits"][s, k] for p in parts),
                    clamp_events=sum(p["clamps"][s, k] for p in parts),
                    runtime=sum(p["times"][s, k] for p in parts),
                )
            )
        positive = [r for r in rows if r.error > 0]
        if len(positive) >= 3:
            slope, _, resid = fit_line([r.dt for r in positive], [r.error for r in positive])
        else:
            slope = resid = None
        reports[s] = ConvergenceReport(s.value, tuple(rows), slope, resid)
    return ExperimentResult(
        cfg,
        reports,
        reference_rejected=rejected,
        reference_clamp_events=sum(p["ref_clamps"] for p in parts),
        runtime=time.perf_counter() - start,
    )


def strong_error(cfg: ExperimentConfig, workers: int = 1) -> ConvergenceReport:
    """Single-scheme form of :func:`strong_errors`."""
    if len(cfg.schemes) != 1:
        raise InvalidParameter("strong_error takes exactly one test scheme; use strong_errors")
    return strong_errors(cfg, workers)[cfg.schemes[0]]


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
