#!/usr/bin/env python3
"""Generate the three headline stability-boundary CSVs.

Outputs (in --outdir, default charts/):
  boundary_capacity_avg.csv    tau_c versus per-flow capacity, averaged queue
  boundary_gamma_avg.csv       tau_c versus averaging weight
  boundary_capacity_noavg.csv  tau_c versus capacity, instantaneous feedback
  boundary_qth_threshold.csv   critical alpha versus drop threshold
"""

import argparse
import os
import sys

from aqmlab.cli import main as cli


def run(outdir: str) -> int:
    os.makedirs(outdir, exist_ok=True)
    jobs = [
        ["stability-chart", "--system", "with-averaging",
         "--sweep", "c=100:500:17", "--solve", "tau",
         "--out", os.path.join(outdir, "boundary_capacity_avg.csv")],
        ["stability-chart", "--system", "with-averaging",
         "--sweep", "gamma=0.0001:0.05:17", "--solve", "tau", "--c", "100",
         "--out", os.path.join(outdir, "boundary_gamma_avg.csv")],
        ["stability-chart", "--system", "no-averaging",
         "--sweep", "c=100:500:17", "--solve", "tau",
         "--out", os.path.join(outdir, "boundary_capacity_noavg.csv")],
        ["stability-chart", "--system", "threshold",
         "--sweep", "qth=10:100:19", "--solve", "alpha", "--tau", "1",
         "--out", os.path.join(outdir, "boundary_qth_threshold.csv")],
    ]
    for job in jobs:
        code = cli(job)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="charts")
    sys.exit(run(ap.parse_args().outdir))
