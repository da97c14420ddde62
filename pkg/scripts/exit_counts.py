"""Count paths that leave [0, 1] under EM and HYB, per step size.

SD, SD-alt and BISS never leave the interval by construction. This is the
empirical side of the finite-life-time comparison.
"""

import argparse

from wfsd.brownian import coarsen, sample_block
from wfsd.errors import NotApplicable
from wfsd.model import PRESETS, SchemeId, from_channel_rates
from wfsd.scalar import StepContext, run_scalar


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--exps", default="3-10")
    args = ap.parse_args(argv)
    lo, hi = (int(v) for v in args.exps.split("-"))
    fine = sample_block(args.seed, range(args.paths), fine_exp=hi)[0]
    for name in ("set-i", "set-ii"):
        p, x0 = from_channel_rates(PRESETS[name])
        for scheme in (SchemeId.EM, SchemeId.HYB):
            counts = []
            for k in range(lo, hi + 1):
                try:
                    run = run_scalar(scheme, StepContext(p, 2.0**-k), coarsen(fine, hi - k, axis=0), x0)
                except NotApplicable:
                    counts = None
                    break
                counts.append(f"2^-{k}: {int(run.exited.sum())}")
            shown = "not applicable" if counts is None else ", ".join(counts)
            print(f"{name} {scheme.value}: {shown}")


if __name__ == "__main__":
    main()
