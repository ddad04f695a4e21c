#!/usr/bin/env python3
"""Desk-scale regularity scan over all four backends.

Writes scan.csv, scan_balls.csv, and frontier.json:
    python scripts/run_epsreg_scan.py --out results/ --threads 2
"""

import argparse
import json
import os

import numpy as np

from lgeo_lab import csvio, rotsym
from lgeo_lab.flows import EuclideanStatic, ShrinkingCylinder, ShrinkingSphere, SpaceTimePoint
from lgeo_lab.reduced import GridSpec
from lgeo_lab.regularity import eps_regularity_scan, scan_summary


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--threads", type=int, default=2)
    ap.add_argument("--quick", action="store_true",
                    help="small matrix for a fast smoke run")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    records = []

    eu = EuclideanStatic(n=3)
    bases = [SpaceTimePoint((0, 0, 0), 0.0)]
    r_eu = [0.5, 1.0] if args.quick else list(np.geomspace(0.2, 2.0, 12))
    recs, _ = eps_regularity_scan(eu, bases, r_eu,
                                  GridSpec(nodes=33, radius_sigmas=8.0),
                                  threads=args.threads)
    records += recs

    sp = ShrinkingSphere(n=3, T=1.0)
    times = [0.0] if args.quick else [0.0, 0.15, 0.3, 0.45, 0.6]
    bases = [SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), t) for t in times]
    r_sp = [0.1, 0.3] if args.quick else list(np.geomspace(0.05, 0.40, 10))
    recs, _ = eps_regularity_scan(sp, bases, r_sp,
                                  GridSpec(nodes=121, radius_sigmas=10.0),
                                  threads=args.threads)
    records += recs

    cy = ShrinkingCylinder(n=3, T=1.0)
    times = [0.0] if args.quick else [0.0, 0.2, 0.4]
    bases = [SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), t) for t in times]
    r_cy = [0.1, 0.3] if args.quick else list(np.geomspace(0.05, 0.4, 12))
    recs, _ = eps_regularity_scan(cy, bases, r_cy,
                                  GridSpec(nodes=(61, 41), radius_sigmas=10.0),
                                  threads=args.threads)
    records += recs

    if not args.quick:
        backend, _ = rotsym.solve_rotsym(rotsym.round_profile(nodes=400), 0.5)
        bases = [SpaceTimePoint((x, np.pi / 2, 0.0), t)
                 for x in (0.35, 0.5, 0.65) for t in (0.1, 0.3)]
        recs, _ = eps_regularity_scan(backend, bases, [0.08, 0.12, 0.18],
                                      GridSpec(nodes=(61, 33), radius_sigmas=10.0),
                                      threads=args.threads)
        records += recs

        dumb, _ = rotsym.solve_rotsym(
            rotsym.dumbbell_profile(neck=0.9, nodes=400), 0.020)
        bases = [SpaceTimePoint((x, np.pi / 2, 0.0), t)
                 for x in (0.42, 0.5, 0.58) for t in (0.006, 0.012)]
        recs, _ = eps_regularity_scan(dumb, bases, [0.02, 0.03, 0.045],
                                      GridSpec(nodes=(61, 33), radius_sigmas=10.0),
                                      skip_invalid=True, threads=args.threads)
        records += recs

    n = 3
    rows = [[rec.flow_id, *rec.base.coords, rec.base.time, rec.r,
             rec.V_r2, rec.r_rm, rec.ratio] for rec in records]
    csvio.write_csv(os.path.join(args.out, "scan.csv"),
                    ["flow_id"] + [f"base_x{i}" for i in range(n)]
                    + ["t", "r", "V_r2", "r_rm", "ratio"], rows)
    ball_rows = [[rec.flow_id, rec.base.time, rp, ratio]
                 for rec in records for rp, ratio in rec.ball_ratios]
    csvio.write_csv(os.path.join(args.out, "scan_balls.csv"),
                    ["flow_id", "t", "r_prime", "ball_ratio"], ball_rows)
    with open(os.path.join(args.out, "frontier.json"), "w") as fh:
        json.dump(scan_summary(records), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{len(records)} records ->", args.out)


if __name__ == "__main__":
    main()
