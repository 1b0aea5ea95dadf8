#!/usr/bin/env python3
"""Packet-level comparison of the RED and threshold queue policies at desk
scale: the round-trip-time dichotomy runs and the matched flow-completion
comparison.

Outputs (in --outdir, default policy-compare/):
  red_rtt10ms/, red_rtt200ms/   queue/flow/utilization traces for RED
  compare.csv                   per-seed loss, throughput, delay, AFCT
"""

import argparse
import os
import sys

from aqmlab.cli import main as cli


def run(outdir: str, full: bool) -> int:
    os.makedirs(outdir, exist_ok=True)
    for rtt in (10, 200):
        code = cli([
            "packet-sim", "--policy", "red", "--rtt-ms", str(rtt),
            "--seed", "1", "--profile", "paper" if full else "desk",
            "--out", os.path.join(outdir, f"red_rtt{rtt}ms"),
        ])
        if code != 0:
            return code
    return cli([
        "compare-policies", "--rtt-ms", "150", "--seeds", "1,2,3",
        "--mb-per-flow", "50", "--overload", "1.4", "--duration", "4000",
        "--out", os.path.join(outdir, "compare.csv"),
    ])


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="policy-compare")
    ap.add_argument("--full", action="store_true",
                    help="paper-scale traces (60 flows, 100 Mbps, 500 s)")
    args = ap.parse_args()
    sys.exit(run(args.outdir, args.full))
