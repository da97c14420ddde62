"""Regenerate the convergence tables and log-log figures.

Writes one CSV and one SVG per experiment into the output directory:

    set-i_hyb-ref   SD, BISS, HYB against a HYB reference
    set-i_sd-ref    SD, BISS, HYB against an SD reference
    set-ii_sd-ref   SD-alt and BISS against an SD-alt reference
    set-iii_em-ref  SD3 and BISS3 against an EM3 reference with exit rejection

Full scale (100 x 100 paths, reference 2^-13) takes several minutes per
experiment on one core; pass --paths/--batches to shrink it.
"""

import argparse
import sys
from pathlib import Path

from wfsd import cli

EXPERIMENTS = {
    "set-i_hyb-ref": ["--preset", "set-i", "--schemes", "sd,biss,hyb", "--reference", "hyb"],
    "set-i_sd-ref": ["--preset", "set-i", "--schemes", "sd,biss,hyb", "--reference", "sd"],
    "set-ii_sd-ref": ["--preset", "set-ii", "--schemes", "sd-alt,biss", "--reference", "sd-alt"],
    "set-iii_em-ref": ["--preset", "set-iii", "--schemes", "sd3,biss3", "--reference", "em3", "--reject-exits"],
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--seed", default="1")
    ap.add_argument("--batches", default="100")
    ap.add_argument("--paths", default="100")
    ap.add_argument("--workers", default="1")
    ap.add_argument("--only", choices=sorted(EXPERIMENTS), action="append")
    args = ap.parse_args(argv)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only or EXPERIMENTS:
        csv_path = out / f"{name}.csv"
        print(f"== {name}", file=sys.stderr)
        code = cli.main(
            ["convergence", *EXPERIMENTS[name], "--seed", args.seed, "--batches", args.batches,
             "--paths", args.paths, "--workers", args.workers, "--out", str(csv_path)]
        )
        if code:
            return code
        code = cli.main(["plot", str(csv_path), "--out", str(out / f"{name}.svg")])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
