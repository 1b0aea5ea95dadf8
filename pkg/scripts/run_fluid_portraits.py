#!/usr/bin/env python3
"""Trajectory data for the phase-portrait dichotomy and the threshold-policy
bifurcation diagram.

Outputs (in --outdir, default portraits/):
  settle_gamma032.csv     averaged system converging at gamma = 0.032
  cycle_gamma028.csv      the same system on its limit cycle at gamma = 0.028
  bifurcation_qth.csv     oscillation amplitude versus drop threshold
  classification.json     normal-form classification at the critical delay
"""

import argparse
import os
import sys

from aqmlab.cli import main as cli


def run(outdir: str) -> int:
    os.makedirs(outdir, exist_ok=True)
    jobs = [
        ["fluid-sim", "--system", "with-averaging", "--c", "100",
         "--tau", "0.171", "--gamma", "0.032", "--horizon", "1100",
         "--transient", "1000", "--steps-per-delay", "250",
         "--out", os.path.join(outdir, "settle_gamma032.csv")],
        ["fluid-sim", "--system", "with-averaging", "--c", "100",
         "--tau", "0.171", "--gamma", "0.028", "--horizon", "400",
         "--transient", "300", "--steps-per-delay", "250",
         "--out", os.path.join(outdir, "cycle_gamma028.csv")],
        ["bifurcation-diagram", "--sweep", "qth=10:100:31", "--c", "100",
         "--tau", "1", "--horizon", "400", "--transient", "300",
         "--out", os.path.join(outdir, "bifurcation_qth.csv")],
        ["hopf-classify", "--c", "100",
         "--out", os.path.join(outdir, "classification.json")],
    ]
    for job in jobs:
        code = cli(job)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="portraits")
    sys.exit(run(ap.parse_args().outdir))
