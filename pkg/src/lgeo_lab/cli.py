"""Command line runner: config ingestion, experiments, CSV/JSON artifacts.

Subcommand surface:

    lgeo flows list
    lgeo shoot      --config cfg.json [--out DIR] [--seed N] [--threads N]
    lgeo min        --config ...
    lgeo reduced field|volume --config ...
    lgeo check monotone|identities --config ...
    lgeo scan epsreg|balls --config ...
    lgeo probe lipschitz --config ...
    lgeo solve rotsym --config ...
    lgeo validate   --config ...

Exit codes: 0 success, 1 computation failure, 2 config validation failure.
Re-running with the same config and seed reproduces all CSVs bit-identically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from . import csvio, manifest
from .errors import LgeoError
from .flows import SpaceTimePoint, make_flow
from .geodesics import MinimizeOptions, ShootVector, minimize, shoot
from .reduced import (GridSpec, identity_residuals, monotone_check, reduced_field,
                      reduced_volume, reduced_volume_domain,
                      reduced_volume_pushforward, tau_field_bundle)
from .regularity import (ball_ratio_scan, eps_regularity_scan, lipschitz_probe,
                         scan_summary)

FLOW_KINDS = ("euclidean", "shrinking_sphere", "shrinking_cylinder", "rotsym")


def _grid_spec(exp: dict) -> GridSpec:
    nodes = exp.get("nodes", 65)
    if isinstance(nodes, list):
        nodes = tuple(nodes)
    return GridSpec(nodes=nodes, radius_sigmas=float(exp.get("radius_sigmas", 8.0)))


def _point(exp, key_coords, key_time) -> SpaceTimePoint:
    return SpaceTimePoint(tuple(exp[key_coords]), float(exp[key_time]))


def run_experiment(cfg: dict, out_dir: str, seed: int, threads: int) -> dict:
    """Execute the configured experiment; returns {files, error_budget}."""
    exp = cfg["experiment"]
    kind = exp["kind"]
    flow = make_flow(cfg["flow"])
    if isinstance(flow, tuple):
        flow = flow[0]
    files = []
    budget = {}

    if kind == "shoot":
        base = _point(exp, "base", "time")
        geo = shoot(flow, base, ShootVector(tuple(exp["v"])), float(exp["tau"]),
                    steps=int(exp.get("steps", 64)))
        n = flow.dim
        header = (["sigma"] + [f"x{i}" for i in range(n)]
                  + [f"v{i}" for i in range(n)] + ["partial_L"])
        rows = [[geo.sigma_samples[k], *geo.positions[k], *geo.velocities[k],
                 geo.partial_L[k]] for k in range(len(geo.sigma_samples))]
        files.append(csvio.write_csv(os.path.join(out_dir, "geodesic.csv"),
                                     header, rows))

    elif kind == "min":
        base = _point(exp, "base", "time")
        target = _point(exp, "target", "target_time")
        res = minimize(flow, base, target,
                       MinimizeOptions(n_starts=int(exp.get("n_starts", 32)),
                                       seed=seed))
        header = ["ell", "L", *(f"v{i}" for i in range(flow.dim)),
                  "n_minima", "on_cut_locus", "endpoint_error", "det_jacobian"]
        rows = [[res.ell, res.L_value, *res.v_star.components, res.n_minima,
                 res.on_cut_locus, res.endpoint_error, res.det_jacobian]]
        files.append(csvio.write_csv(os.path.join(out_dir, "min.csv"), header, rows))
        budget["endpoint_error"] = res.endpoint_error

    elif kind == "field":
        base = _point(exp, "base", "time")
        fld = reduced_field(flow, base, float(exp["tau"]), _grid_spec(exp))
        pts = fld.node_points()
        header = [f"x{i}" for i in range(flow.dim)] + ["ell", "grad_norm", "mask"]
        gn = fld.grad_norm.ravel()
        mask = fld.cut_mask.ravel()
        rows = [[*pts[i], fld.ell.ravel()[i], gn[i], mask[i]]
                for i in range(len(pts))]
        files.append(csvio.write_csv(os.path.join(out_dir, "field.csv"),
                                     header, rows))

    elif kind == "volume":
        base = _point(exp, "base", "time")
        tau = float(exp["tau"])
        method = exp.get("method", "both")
        spec = _grid_spec(exp)
        certify = exp.get("certify", "sampled")
        if method == "domain":
            rv = reduced_volume_domain(flow, base, tau, spec)
        elif method == "pushforward":
            rv = reduced_volume_pushforward(flow, base, tau, spec, certify=certify)
        else:
            rv = reduced_volume(flow, base, tau, spec, certify=certify)
        header = ["tau", "V_domain", "V_pushforward", "est_error"]
        rows = [[rv.tau,
                 "" if rv.value_domain is None else rv.value_domain,
                 "" if rv.value_pushforward is None else rv.value_pushforward,
                 rv.est_error]]
        files.append(csvio.write_csv(os.path.join(out_dir, "volume.csv"),
                                     header, rows))
        budget["est_error"] = rv.est_error

    elif kind == "monotone":
        base = _point(exp, "base", "time")
        results, violations = monotone_check(flow, base, list(exp["taus"]),
                                             _grid_spec(exp),
                                             method=exp.get("method", "domain"))
        header = ["tau", "V_domain", "V_pushforward", "est_error"]
        rows = [[rv.tau,
                 "" if rv.value_domain is None else rv.value_domain,
                 "" if rv.value_pushforward is None else rv.value_pushforward,
                 rv.est_error] for rv in results]
        files.append(csvio.write_csv(os.path.join(out_dir, "monotone.csv"),
                                     header, rows))
        summary = {"violations": [{"tau_from": a, "tau_to": b, "increase": d}
                                  for a, b, d in violations]}
        p = os.path.join(out_dir, "monotone_summary.json")
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        files.append(p)
        budget["max_est_error"] = max(rv.est_error for rv in results)

    elif kind == "identities":
        base = _point(exp, "base", "time")
        center, _ = tau_field_bundle(flow, base, float(exp["tau"]), _grid_spec(exp))
        rep = identity_residuals(flow, base, center)
        mask = rep.meta["mask"].ravel()
        pts = center.node_points()
        header = [f"x{i}" for i in range(flow.dim)] + \
            ["res_hamilton_jacobi", "slack_heat_super", "slack_laplace_upper", "mask"]
        res_f = rep.meta["res_full"].ravel()
        sup_f = rep.meta["super_full"].ravel()
        upp_f = rep.meta["upper_full"].ravel()
        rows = [[*pts[i], res_f[i], sup_f[i], upp_f[i], mask[i]]
                for i in range(len(pts))]
        files.append(csvio.write_csv(os.path.join(out_dir, "identities.csv"),
                                     header, rows))
        budget["max_abs_res_hj"] = float(np.max(np.abs(rep.res_hamilton_jacobi)))

    elif kind == "scan":
        bases = [SpaceTimePoint(tuple(b), float(t))
                 for b in exp["bases"] for t in exp["times"]]
        spec = _grid_spec(exp) if "nodes" in exp else GridSpec(
            nodes=121, radius_sigmas=float(exp.get("radius_sigmas", 10.0)))
        records, summary = eps_regularity_scan(
            flow, bases, list(exp["r_list"]), spec,
            r_cap=float(exp.get("r_cap", 10.0)), skip_invalid=True,
            threads=threads)
        n = flow.dim
        header = ["flow_id"] + [f"base_x{i}" for i in range(n)] + \
            ["t", "r", "V_r2", "r_rm", "ratio"]
        rows = [[rec.flow_id, *rec.base.coords, rec.base.time, rec.r,
                 rec.V_r2, rec.r_rm, rec.ratio] for rec in records]
        files.append(csvio.write_csv(os.path.join(out_dir, "scan.csv"),
                                     header, rows))
        ball_rows = []
        for rec in records:
            for rp, ratio in rec.ball_ratios:
                ball_rows.append([rec.flow_id, rec.base.time, rp, ratio])
        files.append(csvio.write_csv(os.path.join(out_dir, "scan_balls.csv"),
                                     ["flow_id", "t", "r_prime", "ball_ratio"],
                                     ball_rows))
        p = os.path.join(out_dir, "frontier.json")
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        files.append(p)
        budget["max_est_error"] = max((r.est_error for r in records), default=0.0)

    elif kind == "balls":
        base = _point(exp, "base", "time")
        ratios = ball_ratio_scan(flow, base, list(exp["r_primes"]))
        rows = [[flow.flow_id(), base.time, rp, ratio]
                for rp, ratio in zip(exp["r_primes"], ratios)]
        files.append(csvio.write_csv(os.path.join(out_dir, "balls.csv"),
                                     ["flow_id", "t", "r_prime", "ball_ratio"],
                                     rows))

    elif kind == "lipschitz":
        base = _point(exp, "base", "time")
        center = _point(exp, "center", "center_time")
        probe = lipschitz_probe(flow, base, center, float(exp["r"]),
                                _grid_spec(exp) if "nodes" in exp
                                else GridSpec(nodes=41))
        header = ["r", "L_in", "sup_ell", "sup_grad", "hypotheses_ok"]
        rows = [[probe.r, probe.L_in, probe.sup_ell, probe.sup_grad,
                 probe.hypotheses_ok]]
        files.append(csvio.write_csv(os.path.join(out_dir, "lipschitz.csv"),
                                     header, rows))

    elif kind == "solve_rotsym":
        from . import rotsym

        backend, report = rotsym.solve_from_spec(cfg["flow"])
        p = os.path.join(out_dir, "solve_report.json")
        with open(p, "w", encoding="utf-8") as fh:
            json.dump({"final_time": report.final_time, "min_psi": report.min_psi,
                       "max_rm": report.max_rm, "step_count": report.step_count,
                       "stop_reason": report.stop_reason}, fh, indent=2,
                      sort_keys=True)
            fh.write("\n")
        files.append(p)
        files.append(rotsym.save_snapshot(
            backend, os.path.join(out_dir, "profile_snapshot.json")))

    else:
        raise LgeoError(f"unknown experiment kind {kind!r}")

    return {"files": files, "error_budget": budget}


def _load_and_validate(path):
    try:
        cfg = cfgmod.load_config(path)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return None
    issues = cfgmod.validate_config(cfg)
    if issues:
        for issue in issues:
            print(f"config error at {issue}", file=sys.stderr)
        return None
    return cfg


def _expected_kinds(args) -> tuple:
    mapping = {
        ("shoot", None): ("shoot",),
        ("min", None): ("min",),
        ("reduced", "field"): ("field",),
        ("reduced", "volume"): ("volume",),
        ("check", "monotone"): ("monotone",),
        ("check", "identities"): ("identities",),
        ("scan", "epsreg"): ("scan",),
        ("scan", "balls"): ("balls",),
        ("probe", "lipschitz"): ("lipschitz",),
        ("solve", "rotsym"): ("solve_rotsym",),
    }
    return mapping.get((args.command, getattr(args, "sub", None)), ())


def main(argv=None) -> int:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config path")
    common.add_argument("--out", help="output directory (default: config value or .)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)

    parser = argparse.ArgumentParser(
        prog="lgeo", description="L-geometry laboratory on model Ricci flows",
        parents=[common])
    subs = parser.add_subparsers(dest="command", required=True)

    p_flows = subs.add_parser("flows", help="backend catalogue", parents=[common])
    p_flows.add_argument("sub", choices=["list"])
    subs.add_parser("shoot", help="integrate one L-geodesic", parents=[common])
    subs.add_parser("min", help="two-point reduced distance", parents=[common])
    p_red = subs.add_parser("reduced", help="reduced distance fields and volume",
                            parents=[common])
    p_red.add_argument("sub", choices=["field", "volume"])
    p_chk = subs.add_parser("check", help="monotonicity and identity checks",
                            parents=[common])
    p_chk.add_argument("sub", choices=["monotone", "identities"])
    p_scan = subs.add_parser("scan", help="regularity and ball-volume scans",
                             parents=[common])
    p_scan.add_argument("sub", choices=["epsreg", "balls"])
    p_probe = subs.add_parser("probe", help="local bound probes", parents=[common])
    p_probe.add_argument("sub", choices=["lipschitz"])
    p_solve = subs.add_parser("solve", help="numeric flow solves", parents=[common])
    p_solve.add_argument("sub", choices=["rotsym"])
    subs.add_parser("validate", help="validate a config without running",
                    parents=[common])

    args = parser.parse_args(argv)

    if args.command == "flows":
        for k in FLOW_KINDS:
            print(k)
        return 0

    if not args.config:
        print("a --config file is required", file=sys.stderr)
        return 2

    if args.command == "validate":
        cfg = _load_and_validate(args.config)
        if cfg is None:
            return 2
        print("ok")
        return 0

    cfg = _load_and_validate(args.config)
    if cfg is None:
        return 2
    expected = _expected_kinds(args)
    if cfg["experiment"]["kind"] not in expected:
        print(f"config error at .experiment.kind: expected one of {expected} "
              f"for this subcommand", file=sys.stderr)
        return 2

    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("LGEO_LAB_THREADS",
                                     cfg.get("threads", 1)))
    out_dir = args.out or cfg.get("out", ".")
    os.makedirs(out_dir, exist_ok=True)

    t0 = time.time()
    try:
        result = run_experiment(cfg, out_dir, seed, threads)
    except LgeoError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 1
    wall = time.time() - t0
    manifest.write_manifest(out_dir, cfgmod.config_hash(cfg), seed, wall,
                            result["files"], result["error_budget"])
    for p in result["files"]:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
