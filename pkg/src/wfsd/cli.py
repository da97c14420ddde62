"""Command-line front end.

Subcommands: convergence, simulate, classify, plot, presets. Exit codes:
0 ok, 2 configuration error, 3 scheme domain or step violation, 4 all
paths rejected.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .brownian import PathSpec, coarsen, sample_fine_increments
from .errors import (
    AllPathsRejected,
    DomainError,
    InsufficientData,
    InvalidParameter,
    InvalidSpec,
    NotApplicable,
    PreconditionFailed,
    SingularSystem,
    StepSizeViolation,
)
from .harness import ExperimentConfig, fit_line, strong_errors
from .model import (
    PRESETS,
    ChannelRates,
    MultiWFParams,
    SchemeId,
    WFParams,
    classify_boundaries,
    from_channel_rates,
    max_stable_step,
    multi_steady_state,
    preset,
    scalar_margins,
)
from .scalar import StepContext, simulate_path
from .threestate import ClampPolicy, simulate_path3

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_REJECTED = 4

CSV_COLUMNS = [
    "scheme", "param_set", "dt_exp", "dt", "error",
    "ci_low", "ci_high", "paths_used", "paths_rejected",
]


class ConfigError(Exception):
    pass


def fmt(x) -> str:
    """Shortest round-trip text for numbers."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


# ---------------------------------------------------------------------------
# config files: "key = value" lines, '#' comments, keys mirror flag names

def read_config(path) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _merge(args: argparse.Namespace, defaults: dict, types: dict) -> dict:
    """Defaults < config file < flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        for key, value in read_config(args.config).items():
            if key not in defaults:
                raise ConfigError(f"unknown config key {key!r}")
            conv = types.get(key, str)
            try:
                merged[key] = conv(value)
            except ValueError as err:
                raise ConfigError(f"bad value for {key}: {value!r} ({err})") from None
    for key in defaults:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    return merged


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_exps(text) -> tuple[int, ...]:
    """'3-12' or '3,4,8' or '3-5,10'."""
    if isinstance(text, (tuple, list)):
        return tuple(int(k) for k in text)
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("empty exponent list")
    return tuple(out)


def _resolve_model(cfg: dict):
    """Model, initial state and a label from a preset name or explicit k's."""
    if cfg.get("preset"):
        raw = preset(cfg["preset"])
        if isinstance(raw, ChannelRates):
            model, y0 = from_channel_rates(raw)
        else:
            model, y0 = raw, tuple(float(v) for v in multi_steady_state(raw))
        return model, y0, cfg["preset"]
    ks = [cfg.get(k) for k in ("k1", "k2", "k3")]
    if any(k is None for k in ks):
        raise ConfigError("give --preset or all of --k1 --k2 --k3")
    model = WFParams(*ks)
    y0 = cfg.get("x0")
    if y0 is None:
        y0 = model.steady_state
    return model, y0, "custom"


# ---------------------------------------------------------------------------
# convergence

_CONV_DEFAULTS = dict(
    preset=None, k1=None, k2=None, k3=None, x0=None,
    schemes=None, reference=None, seed=None,
    ref_exp=13, exps="3-12", batches=100, paths=100,
    reject_exits=False, metric="terminal", clamp_tol=1e-8,
    chunk_batches=10, workers=1, out=None,
)
_CONV_TYPES = dict(
    k1=float, k2=float, k3=float, x0=float, seed=int, ref_exp=int,
    batches=int, paths=int, reject_exits=_bool, clamp_tol=float,
    chunk_batches=int, workers=int,
)


def _manifest_lines(items: dict) -> list[str]:
    return [f"# {k}: {fmt(v)}" for k, v in items.items()]


def convergence_csv(result, manifest: dict) -> str:
    buf = io.StringIO()
    for line in _manifest_lines(manifest):
        buf.write(line + "\n")
    for row in result.rows:
        buf.write(f"# runtime[{row.scheme},{row.dt_exp}]: {row.runtime:.3f}s\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    label = result.config.label
    for r in result.rows:
        w.writerow([
            r.scheme, label, r.dt_exp, fmt(r.dt), fmt(r.error),
            fmt(r.ci_low), fmt(r.ci_high), r.paths_used, r.paths_rejected,
        ])
    return buf.getvalue()


def cmd_convergence(args) -> int:
    cfg = _merge(args, _CONV_DEFAULTS, _CONV_TYPES)
    if cfg["seed"] is None:
        raise ConfigError("--seed is required for convergence runs")
    if not cfg["schemes"]:
        raise ConfigError("--schemes is required")
    if not cfg["reference"]:
        raise ConfigError("--reference is required")
    model, y0, label = _resolve_model(cfg)
    try:
        exps = parse_exps(cfg["exps"])
    except ValueError as err:
        raise ConfigError(f"bad --exps: {err}") from None
    schemes = tuple(SchemeId.parse(s) for s in str(cfg["schemes"]).split(",") if s.strip())
    exp = ExperimentConfig(
        model=model, y0=y0, schemes=schemes,
        reference=SchemeId.parse(cfg["reference"]), seed=cfg["seed"],
        ref_exp=cfg["ref_exp"], test_exps=exps, batches=cfg["batches"],
        paths=cfg["paths"], reject_exits=cfg["reject_exits"], metric=cfg["metric"],
        clamp_tol=cfg["clamp_tol"], chunk_batches=cfg["chunk_batches"], label=label,
    )
    result = strong_errors(exp, workers=max(1, cfg["workers"]))
    manifest = {
        "tool": "wfsd convergence",
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "param_set": label,
        "model": _model_text(model),
        "y0": y0 if not isinstance(y0, tuple) else " ".join(fmt(v) for v in y0),
        "schemes": ",".join(s.value for s in schemes),
        "reference": exp.reference.value,
        "seed": exp.seed,
        "ref_exp": exp.ref_exp,
        "exps": ",".join(str(k) for k in exp.test_exps),
        "batches": exp.batches,
        "paths": exp.paths,
        "horizon": exp.horizon,
        "reject_exits": exp.reject_exits,
        "metric": exp.metric,
        "clamp_tol": exp.clamp_tol,
        "chunk_batches": exp.chunk_batches,
        "workers": cfg["workers"],
        "ci_level": 0.98,
        "reference_rejected": result.reference_rejected,
        "reference_clamp_events": result.reference_clamp_events,
    }
    for s, rep in result.reports.items():
        manifest[f"order[{s.value}]"] = "n/a" if rep.order is None else rep.order
        clamps = sum(r.clamp_events for r in rep.rows)
        exits = sum(r.exits for r in rep.rows)
        if clamps:
            manifest[f"clamp_events[{s.value}]"] = clamps
        if exits:
            manifest[f"exits[{s.value}]"] = exits
    text = convergence_csv(result, manifest)
    _emit(text, cfg["out"])
    for s, rep in result.reports.items():
        order = "n/a" if rep.order is None else f"{rep.order:.3f}"
        print(f"{s.value}: fitted order {order}", file=sys.stderr)
    return EXIT_OK


def _model_text(model) -> str:
    if isinstance(model, WFParams):
        return f"k1={fmt(model.k1)} k2={fmt(model.k2)} k3={fmt(model.k3)}"
    return " ".join(f"{f}={fmt(getattr(model, f))}" for f in model.__dataclass_fields__)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    cfg = vars(args)
    scheme = SchemeId.parse(args.scheme)
    model, y0, _ = _resolve_model(cfg)
    k = args.k
    fine_exp = max(k, args.fine_exp)
    three = isinstance(model, MultiWFParams)
    if three != scheme.is_three_state:
        raise ConfigError(f"scheme {scheme.value} does not fit the chosen model")
    spec = PathSpec(args.seed, args.path_index, args.horizon, fine_exp, 3 if three else 1)
    inc = coarsen(sample_fine_increments(spec).increments, fine_exp - k)
    dt = 2.0**-k
    buf = io.StringIO()
    buf.write(f"# tool: wfsd simulate\n# tool_version: {__version__}\n")
    buf.write(f"# scheme: {scheme.value}\n# model: {_model_text(model)}\n")
    buf.write(f"# dt_exp: {k}\n# seed: {args.seed}\n# path_index: {args.path_index}\n")
    w = csv.writer(buf, lineterminator="\n")
    if three:
        t, path, run = simulate_path3(scheme, model, dt, inc, y0, ClampPolicy(args.clamp_tol))
        exit_at = int(run.first_exit[0])
        stop = exit_at if exit_at >= 0 else len(t) - 1
        if run.clamp_events[0]:
            buf.write(f"# clamp_events: {int(run.clamp_events[0])}\n")
        w.writerow(["t", "Y1", "Y2", "Y3", "exited"])
        for n in range(stop + 1):
            y1, y2 = path[n]
            w.writerow([fmt(t[n]), fmt(y1), fmt(y2), fmt(1 - y1 - y2), int(n == exit_at)])
    else:
        res = simulate_path(scheme, StepContext(model, dt), inc[0], y0)
        stop = res.exit_index if res.exited else len(res.t) - 1
        w.writerow(["t", "y", "exited"])
        for n in range(stop + 1):
            w.writerow([fmt(res.t[n]), fmt(res.values[n]), int(n == res.exit_index)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# classify

def _classify_text(name: str, p: WFParams) -> str:
    rep = classify_boundaries(p)
    lines = [f"{name}: k1={p.k1:.6g} k2={p.k2:.6g} k3={p.k3:.6g}"]
    for side, exp_, ok, probe in (
        ("left (0)", rep.left_exponent, rep.left_unattainable, rep.left_probe),
        ("right (1)", rep.right_exponent, rep.right_unattainable, rep.right_probe),
    ):
        verdict = "unattainable" if ok else "attainable"
        probe_verdict = "divergent" if probe.divergent else "convergent"
        lines.append(
            f"  {side}: exponent {exp_:.6g} -> {verdict}; quadrature probe {probe_verdict} "
            f"(increment ratio {probe.increment_ratio:.4g}, growth over last 3 rungs {probe.growth_last_three:.4g})"
        )
    lines.append(f"  probe agrees: {'yes' if rep.probe_agrees else 'NO'}")
    lines.append(f"  both boundaries unattainable: {'yes' if rep.both_unattainable else 'no'}")
    return "\n".join(lines)


def cmd_classify(args) -> int:
    cfg = vars(args)
    if args.preset:
        raw = preset(args.preset)
        if isinstance(raw, ChannelRates):
            p, _ = from_channel_rates(raw)
            print(_classify_text(args.preset, p))
        else:
            m1, m2 = scalar_margins(raw)
            print(_classify_text(f"{args.preset} component 1 (frozen at steady state)", m1))
            print(_classify_text(f"{args.preset} component 2 (frozen at steady state)", m2))
        return EXIT_OK
    ks = [cfg.get(k) for k in ("k1", "k2", "k3")]
    if any(k is None for k in ks):
        raise ConfigError("give --preset or all of --k1 --k2 --k3")
    print(_classify_text("custom", WFParams(*ks)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot

def read_convergence_csv(path) -> tuple[dict[str, str], list[dict]]:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    manifest, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            if ": " in line:
                k, v = line[1:].strip().split(": ", 1)
                manifest[k] = v
        elif line.strip():
            body.append(line)
    if not body:
        raise ConfigError(f"{path}: no CSV header or rows")
    reader = csv.DictReader(body)
    if reader.fieldnames is None or any(c not in reader.fieldnames for c in CSV_COLUMNS):
        raise ConfigError(f"{path}: expected columns {CSV_COLUMNS}")
    rows = []
    for i, rec in enumerate(reader, 2):
        try:
            rows.append({
                "scheme": rec["scheme"],
                "param_set": rec["param_set"],
                "dt_exp": int(rec["dt_exp"]),
                "dt": float(rec["dt"]),
                "error": float(rec["error"]),
                "ci_low": float(rec["ci_low"]),
                "ci_high": float(rec["ci_high"]),
                "paths_used": int(rec["paths_used"]),
                "paths_rejected": int(rec["paths_rejected"]),
            })
        except (TypeError, ValueError) as err:
            raise ConfigError(f"{path}: malformed row {i}: {err}") from None
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return manifest, rows


def plot_convergence(manifest: dict, rows: list[dict], out) -> dict[str, float | None]:
    """Write a log2-log2 SVG; returns the fitted slope per scheme."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "wfsd"
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    slopes = {}
    schemes = list(dict.fromkeys(r["scheme"] for r in rows))
    anchor = None
    for s in schemes:
        rs = sorted((r for r in rows if r["scheme"] == s), key=lambda r: r["dt"])
        dts = np.array([r["dt"] for r in rs])
        errs = np.array([r["error"] for r in rs])
        lo = np.array([r["ci_low"] for r in rs])
        hi = np.array([r["ci_high"] for r in rs])
        pos = errs > 0
        slope = None
        if pos.sum() >= 3:
            slope, intercept, _ = fit_line(dts[pos], errs[pos])
        slopes[s] = slope
        label = s if slope is None else f"{s} (slope {slope:.2f})"
        yerr = np.vstack([errs - lo, hi - errs])
        ax.errorbar(dts, errs, yerr=yerr, marker="o", capsize=3, label=label)
        if slope is not None:
            ax.plot(dts, 2.0 ** (slope * np.log2(dts) + intercept), ":", color="0.5", lw=0.8)
        if anchor is None and pos.any():
            anchor = (dts[pos], errs[pos][-1] / dts[pos][-1])
    if anchor is not None:
        d, c = anchor
        ax.plot(d, c * d, "k--", lw=0.8, label="slope 1")
    if all(v is None for v in slopes.values()):
        ax.text(0.05, 0.05, "insufficient data for a slope fit", transform=ax.transAxes)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xlabel("step size")
    ax.set_ylabel("strong error at T")
    title = manifest.get("param_set") or (rows[0]["param_set"] if rows else "")
    ref = manifest.get("reference")
    ax.set_title(f"{title}" + (f", reference {ref}" if ref else ""))
    ax.legend(fontsize=8)
    ax.grid(True, which="both", lw=0.3)
    description = "\n".join(f"{k}: {v}" for k, v in manifest.items())
    fig.savefig(
        out, format="svg",
        metadata={"Title": f"wfsd convergence {title}", "Description": description, "Date": None},
    )
    plt.close(fig)
    return slopes


def cmd_plot(args) -> int:
    manifest, rows = read_convergence_csv(args.input)
    out = args.out or str(Path(args.input).with_suffix(".svg"))
    slopes = plot_convergence(manifest, rows, out)
    for s, v in slopes.items():
        print(f"{s}: slope {'n/a (insufficient data)' if v is None else f'{v:.3f}'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# presets

def cmd_presets(args) -> int:
    for name, raw in PRESETS.items():
        if isinstance(raw, ChannelRates):
            p, x0 = from_channel_rates(raw)
            print(f"{name}: A={raw.A} B={raw.B} N_r={raw.N_r}")
            print(f"  k1={p.k1:.6g} k2={p.k2:.6g} k3={p.k3:.6g} x0={x0:.6g}")
            print(f"  alpha={p.alpha:.7g} beta={p.beta:.7g}")
            print(f"  SD step bound {max_stable_step(p, SchemeId.SD):.6g}", end="")
            if p.k3**2 < 2 * p.k2:
                print(f", SD-alt step bound {max_stable_step(p, SchemeId.SD_ALT):.6g}")
            else:
                print()
        else:
            ss = multi_steady_state(raw)
            vals = " ".join(f"{f}={getattr(raw, f)}" for f in raw.__dataclass_fields__)
            print(f"{name}: {vals}")
            print(f"  drift1 = {raw.k1_11:g} + ({raw.k1_12:g}) X2 - {raw.k2_1:g} X1")
            print(f"  drift2 = {raw.k1_21:g} + ({raw.k1_22:g}) X1 - {raw.k2_2:g} X2")
            print(f"  steady state X1={ss[0]:.6f} X2={ss[1]:.6f} X3={1 - ss.sum():.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wfsd", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"wfsd {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def model_flags(p, x0=True):
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--k1", type=float)
        p.add_argument("--k2", type=float)
        p.add_argument("--k3", type=float)
        if x0:
            p.add_argument("--x0", type=float, help="initial state (default k1/k2)")

    c = sub.add_parser("convergence", help="strong-error table as CSV")
    model_flags(c)
    c.add_argument("--schemes", help="comma list, e.g. sd,biss,hyb")
    c.add_argument("--reference", help="reference scheme on the fine grid")
    c.add_argument("--seed", type=int)
    c.add_argument("--ref-exp", type=int, dest="ref_exp")
    c.add_argument("--exps", help="test exponents k (dt = 2^-k), e.g. 3-12")
    c.add_argument("--batches", type=int)
    c.add_argument("--paths", type=int, help="paths per batch")
    c.add_argument("--reject-exits", action="store_const", const=True, dest="reject_exits")
    c.add_argument("--metric", choices=["terminal", "sup"])
    c.add_argument("--clamp-tol", type=float, dest="clamp_tol")
    c.add_argument("--chunk-batches", type=int, dest="chunk_batches")
    c.add_argument("--workers", type=int)
    c.add_argument("--config")
    c.add_argument("--out")
    c.set_defaults(func=cmd_convergence)

    s = sub.add_parser("simulate", help="one seeded trajectory as CSV")
    model_flags(s)
    s.add_argument("--scheme", required=True)
    s.add_argument("--k", type=int, required=True, help="dt = 2^-k")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--path-index", type=int, default=0, dest="path_index")
    s.add_argument("--fine-exp", type=int, default=13, dest="fine_exp")
    s.add_argument("--horizon", type=float, default=1.0)
    s.add_argument("--clamp-tol", type=float, default=1e-8, dest="clamp_tol")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("classify", help="boundary classification report")
    model_flags(k, x0=False)
    k.set_defaults(func=cmd_classify)

    p = sub.add_parser("plot", help="log2-log2 SVG from a convergence CSV")
    p.add_argument("input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)

    q = sub.add_parser("presets", help="list built-in parameter sets")
    q.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidParameter, InvalidSpec, NotApplicable,
            PreconditionFailed, SingularSystem, InsufficientData) as err:
        print(f"wfsd: error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepSizeViolation, DomainError) as err:
        print(f"wfsd: scheme violation: {err}", file=sys.stderr)
        return EXIT_DOMAIN
    except AllPathsRejected as err:
        print(f"wfsd: {err}", file=sys.stderr)
        return EXIT_REJECTED


if __name__ == "__main__":
    sys.exit(main())
