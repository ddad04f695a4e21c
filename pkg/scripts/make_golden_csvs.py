#!/usr/bin/env python3
"""Generate the golden CSV/JSON inputs used by the figure renderer's tests.

Small but real outputs of the primary component:
    python scripts/make_golden_csvs.py --out frontend/golden
"""

import argparse
import json
import os

import numpy as np

from lgeo_lab import csvio
from lgeo_lab.flows import EuclideanStatic, ShrinkingSphere, SpaceTimePoint
from lgeo_lab.reduced import GridSpec, monotone_check, reduced_field, tau_field_bundle
from lgeo_lab.reduced import identity_residuals
from lgeo_lab.regularity import eps_regularity_scan, scan_summary


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="frontend/golden")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    eu = EuclideanStatic(n=3)
    base_eu = SpaceTimePoint((0, 0, 0), 0.0)
    sp = ShrinkingSphere(n=3, T=1.0)
    base_sp = SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), 0.0)

    # monotone curve (euclidean: flat line at 1 with error band)
    results, _ = monotone_check(eu, base_eu, [0.25, 0.5, 1.0, 2.0],
                                GridSpec(nodes=25, radius_sigmas=7.0))
    csvio.write_csv(os.path.join(args.out, "monotone.csv"),
                    ["tau", "V_domain", "V_pushforward", "est_error"],
                    [[r.tau, r.value_domain, "", r.est_error] for r in results])

    # scan scatter + frontier
    bases = [SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), t) for t in (0.0, 0.3)]
    records, _ = eps_regularity_scan(sp, bases, [0.08, 0.15, 0.3, 0.45],
                                     GridSpec(nodes=81, radius_sigmas=10.0))
    csvio.write_csv(os.path.join(args.out, "scan.csv"),
                    ["flow_id", "base_x0", "base_x1", "base_x2", "t", "r",
                     "V_r2", "r_rm", "ratio"],
                    [[r.flow_id, *r.base.coords, r.base.time, r.r, r.V_r2,
                      r.r_rm, r.ratio] for r in records])
    with open(os.path.join(args.out, "frontier.json"), "w") as fh:
        json.dump(scan_summary(records), fh, indent=2, sort_keys=True)
        fh.write("\n")

    # 2D field heatmap input: rot-sym-style (x, alpha) grid via the cylinder
    from lgeo_lab.flows import ShrinkingCylinder

    cy = ShrinkingCylinder(n=3, T=1.0)
    base_cy = SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), 0.0)
    fld = reduced_field(cy, base_cy, 0.2, GridSpec(nodes=(25, 17)))
    th, z = fld.axes
    rows = []
    for i, a in enumerate(th):
        for j, zz in enumerate(z):
            rows.append([a, zz, fld.ell[i, j], fld.grad_norm[i, j],
                         bool(fld.cut_mask[i, j])])
    csvio.write_csv(os.path.join(args.out, "field.csv"),
                    ["theta", "z", "ell", "grad_norm", "mask"], rows)

    # residual convergence study
    rows = []
    for nodes, steps, delta in ((41, 16, 4e-2), (81, 32, 2e-2), (161, 48, 1e-2)):
        center, _ = tau_field_bundle(sp, base_sp, 0.25,
                                     GridSpec(nodes=nodes, field_steps=steps),
                                     delta_rel=delta, five_point=False)
        rep = identity_residuals(sp, base_sp, center)
        h = center.axes[0][1] - center.axes[0][0]
        rows.append([h, float(np.max(np.abs(rep.res_hamilton_jacobi)))])
    csvio.write_csv(os.path.join(args.out, "convergence.csv"),
                    ["h", "max_residual"], rows)
    print("golden files in", args.out)


if __name__ == "__main__":
    main()
