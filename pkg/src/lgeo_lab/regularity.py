"""Curvature radius, the reduced-volume regularity scan, and local bound probes.

The curvature radius at (x, t) is the largest r with [t-r^2, t] inside the
time domain and sup |Rm| <= r^{-2} over the parabolic cylinder
B_{g_t}(x, r) x [t-r^2, t]; it is estimated by bisection with space-time
lattice sampling (|Rm| is the maximum absolute sectional curvature over
principal planes throughout this package).

The scan pairs each (base, r) observation of the reduced volume at scale
tau = r^2 with the curvature radius ratio r_Rm / r and ball-volume ratios,
and summarizes the empirical frontier over a logarithmic epsilon ladder.
The probes measure suprema of |ell| and |d ell/ds| + |grad ell| over the
parabolic windows where those are locally bounded; the bounding constants
are non-explicit, so only finiteness and refinement stability are asserted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geom
from .errors import InvalidInputError, TimeOutOfDomainError
from .flows import (EuclideanStatic, FlowBackend, RotSymNumeric, ShrinkingCylinder,
                    ShrinkingSphere, SpaceTimePoint)
from .geodesics import MinimizeOptions, minimize
from .reduced import (GridSpec, attach_tau_derivative, ell_at, reduced_field,
                      reduced_volume_domain)

RM_CONVENTION = "max_sectional"
EPS_LADDER = tuple(float(x) for x in np.geomspace(1e-3, 1.0, 7))


@dataclass
class ScanRecord:
    flow_id: str
    base: SpaceTimePoint
    r: float
    V_r2: float
    r_rm: float
    ratio: float
    ball_ratios: list          # [(r_prime, vol ratio)]
    est_error: float = 0.0
    meta: dict = field(default_factory=dict)


@dataclass
class CylinderProbe:
    base: SpaceTimePoint       # (x0, t0) the reduced distance is based at
    center: SpaceTimePoint     # (x, t) the cylinder is centered on
    r: float
    L_in: float                # measured ell(x, t)
    sup_ell: float
    sup_grad: float            # sup (|d ell/ds| + |grad ell|)
    hypotheses_ok: bool
    detail: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# curvature radius
# --------------------------------------------------------------------------

def _ball_rm_sup(flow: FlowBackend, t: float, center, r: float,
                 n_space: int = 9, n_time: int = 9) -> float:
    """Sampled sup of |Rm| over B_{g_t}(center, r) x [t - r^2, t]."""
    times = np.linspace(t - r * r, t, n_time)
    hi = flow.time_domain().hi
    if flow.time_domain().open_hi:
        times = np.minimum(times, hi - 1e-12 * max(1.0, abs(hi)))
    if isinstance(flow, RotSymNumeric):
        # |Rm| depends only on the profile coordinate; the ball's x-extent
        # is exactly |s - s0| <= r (clamped to the resolved chart region)
        sup = 0.0
        for tt in times:
            s0 = flow.arclength_of(tt, center[0])
            smax = flow.total_arclength(tt)
            mgn = flow.POLE_MARGIN
            slo = max(flow.arclength_of(tt, mgn), s0 - r)
            shi = min(flow.arclength_of(tt, 1 - mgn), s0 + r)
            xs = np.array([flow.x_of_arclength(tt, s)
                           for s in np.linspace(slo, shi, n_space ** 2)])
            K0, K1 = flow.sectional_curvatures(tt, xs)
            sup = max(sup, float(np.max(np.maximum(np.abs(K0), np.abs(K1)))))
        return sup
    # the closed-form models are homogeneous: |Rm| is spatially constant
    pts = np.broadcast_to(np.asarray(center, dtype=float),
                          (1, flow.dim)).copy()
    sup = 0.0
    for tt in times:
        rm = flow.curvature_components(tt, pts)[3]
        sup = max(sup, float(np.max(rm)))
    return sup


def curvature_radius(flow: FlowBackend, p: SpaceTimePoint, r_cap: float = 10.0,
                     iters: int = 12) -> float:
    """Largest sampled r <= r_cap with |Rm| <= r^{-2} on P_r(p)."""
    if r_cap <= 0:
        raise InvalidInputError("r_cap must be positive")
    flow._check_point(p)
    dom = flow.time_domain()
    r_hi = min(r_cap, float(np.sqrt(max(p.time - dom.lo, 0.0))))
    if r_hi <= 0:
        raise InvalidInputError("no admissible parabolic cylinder at this time")

    def ok(r, dense=False):
        k = 27 if dense else 9
        return _ball_rm_sup(flow, p.time, p.x, r, n_space=k, n_time=k) <= 1.0 / r ** 2

    if ok(r_hi, dense=True):
        return r_hi
    lo, hi = 0.0, r_hi
    for k in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid, dense=k >= iters - 2):
            lo = mid
        else:
            hi = mid
    return lo if lo > 0 else 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# scans
# --------------------------------------------------------------------------

def ball_ratio_scan(flow: FlowBackend, base: SpaceTimePoint, r_primes) -> list:
    """Vol(B_{g_t}(x, r')) / (omega_n r'^n) for each r'."""
    out = []
    wn = geom.unit_ball_volume(flow.dim)
    for rp in r_primes:
        if rp <= 0:
            raise InvalidInputError("ball radius must be positive")
        vol = flow.ball_volume(base.time, base.x, rp)
        out.append(vol / (wn * rp ** flow.dim))
    return out


def eps_regularity_scan(flow: FlowBackend, bases, r_list,
                        spec: GridSpec = GridSpec(radius_sigmas=10.0),
                        r_cap: float = 10.0, ball_fractions=(1.0, 0.5, 0.25),
                        skip_invalid: bool = False, threads: int = 1):
    """One ScanRecord per (base, r) pair, plus the epsilon-frontier summary.

    The domain hypothesis [t - 2 r^2, t] in the time interval is enforced
    exactly (skip_invalid drops offending pairs instead of raising).
    """
    pairs = []
    dom = flow.time_domain()
    for b in bases:
        for r in r_list:
            if not dom.contains_interval(b.time - 2 * r * r, b.time):
                if skip_invalid:
                    continue
                raise TimeOutOfDomainError(
                    f"[t-2r^2, t] not inside the flow domain for r={r}, t={b.time}")
            pairs.append((b, float(r)))

    def one(pair):
        b, r = pair
        rv = reduced_volume_domain(flow, b, r * r, spec)
        rrm = curvature_radius(flow, b, r_cap=r_cap)
        balls = [(f * r, ball_ratio_scan(flow, b, [f * r])[0]) for f in ball_fractions]
        return ScanRecord(flow_id=flow.flow_id(), base=b, r=r,
                          V_r2=rv.value_domain, r_rm=rrm, ratio=rrm / r,
                          ball_ratios=balls, est_error=rv.est_error,
                          meta={"rm_convention": RM_CONVENTION, "r_cap": r_cap})

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(one, pairs))
    else:
        records = [one(p) for p in pairs]
    return records, scan_summary(records)


def scan_summary(records, ladder=EPS_LADDER) -> dict:
    """Empirical frontier: min observed ratio among records with V >= 1-eps."""
    frontier = []
    for eps in ladder:
        sel = [rec.ratio for rec in records if rec.V_r2 >= 1.0 - eps]
        frontier.append({"eps": eps, "n_records": len(sel),
                         "min_ratio": (min(sel) if sel else None)})
    return {"rm_convention": RM_CONVENTION,
            "n_records": len(records),
            "frontier": frontier}


# --------------------------------------------------------------------------
# local C^{0,1} probes
# --------------------------------------------------------------------------

def _ball_lattice(flow: FlowBackend, t: float, center, r: float, k: int = 7):
    """Public-chart points filling B_{g_t}(center, r) (lattice in the tangent).

    Uses each model's exponential map (exact on the closed-form models, the
    short-distance approximation on rot-sym); only used for sup-sampling.
    """
    center = np.asarray(center, dtype=float)
    n = flow.dim
    if isinstance(flow, RotSymNumeric):
        psi0 = float(flow.profile_values(t, np.asarray([center[0]]))[0][0])
        s0 = flow.arclength_of(t, center[0])
        out = []
        u0, e = geom.sphere_embed(center[None, 1:])[0], None
        e = geom.orthonormal_complement(u0[None])[0]
        for ds in np.linspace(-r, r, k):
            s = s0 + ds
            mgn = flow.POLE_MARGIN
            if not (flow.arclength_of(t, mgn) <= s <= flow.arclength_of(t, 1 - mgn)):
                continue
            x = flow.x_of_arclength(t, s)
            psi = float(flow.profile_values(t, np.asarray([x]))[0][0])
            amax = np.sqrt(max(r * r - ds * ds, 0.0)) / max(psi, 1e-9)
            for a in np.linspace(0.0, min(amax, np.pi), max(2, k // 2)):
                u = np.cos(a) * u0 + np.sin(a) * e
                out.append(np.concatenate([[x], geom.sphere_unembed(u[None])[0]]))
        return np.array(out)
    g = flow.metric_components(t, center[None])[0]
    w, U = np.linalg.eigh(g)
    E = U @ np.diag(1.0 / np.sqrt(w)) @ U.T
    ax = np.linspace(-r, r, k)
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    V = np.stack([m.ravel() for m in mesh], axis=1)
    V = V[np.linalg.norm(V, axis=1) <= r + 1e-12]
    Vc = V @ E.T
    if isinstance(flow, EuclideanStatic):
        return center[None, :] + Vc
    if isinstance(flow, ShrinkingSphere):
        rho = flow.radius(t)
        u0 = geom.sphere_embed(center[None])[0]
        vemb = geom.sphere_vel_to_embedding(
            np.broadcast_to(center, Vc.shape).copy(), Vc)
        ang = np.linalg.norm(vemb, axis=1)  # = |v|_g / rho
        dirs = np.where((ang > 1e-14)[:, None],
                        vemb / np.where(ang == 0, 1, ang)[:, None], 0.0)
        P = np.cos(ang)[:, None] * u0[None, :] + np.sin(ang)[:, None] * dirs
        return geom.sphere_unembed(P)
    if isinstance(flow, ShrinkingCylinder):
        mb = flow.block
        u0 = geom.sphere_embed(center[None, :mb])[0]
        vemb = geom.sphere_vel_to_embedding(
            np.broadcast_to(center[:mb], (len(Vc), mb)).copy(), Vc[:, :mb])
        ang = np.linalg.norm(vemb, axis=1)
        dirs = np.where((ang > 1e-14)[:, None],
                        vemb / np.where(ang == 0, 1, ang)[:, None], 0.0)
        P = np.cos(ang)[:, None] * u0[None, :] + np.sin(ang)[:, None] * dirs
        th = geom.sphere_unembed(P)
        return np.column_stack([th, center[mb] + Vc[:, mb]])
    raise InvalidInputError(f"no ball lattice for {flow!r}")


def scalar_lower_bound_ok(flow, center: SpaceTimePoint, r: float,
                          slack: float = 0.01) -> bool:
    """Sampled R >= -n/r^2 on the cylinder (maximum-principle consequence)."""
    times = np.linspace(center.time - r * r, center.time, 7)
    pts = np.atleast_2d(center.x)
    n = flow.dim
    for tt in times:
        if not flow.time_domain().contains(tt):
            return False
        R = flow.curvature_components(tt, pts)[0]
        if np.any(R < -(1 + slack) * n / r ** 2):
            return False
    return True


def lipschitz_probe(flow: FlowBackend, base: SpaceTimePoint,
                    center: SpaceTimePoint, r: float,
                    spec: GridSpec = GridSpec(nodes=41), L_in_cap: float = 100.0,
                    n_times: int = 5) -> CylinderProbe:
    """Measured suprema of |ell| and |ell_s| + |grad ell| over the parabolic
    windows where the local bounds hold.

    ell is the reduced distance based at `base`, in its forward-time form.
    Hypotheses checked by sampling: the cylinder lies in the time domain,
    |Rm| <= r^{-2} on B_{g_t}(x, r) x [t - r^2, t], and ell(x, t) <= L_in_cap.
    """
    t0, t = base.time, center.time
    if not t < t0:
        raise InvalidInputError("probe center must lie before the base time")
    dom = flow.time_domain()
    detail = {}
    hyp = dom.contains_interval(t - r * r, t)
    if hyp:
        rm_sup = _ball_rm_sup(flow, t, center.x, r)
        detail["rm_sup_r2"] = rm_sup * r * r
        hyp = rm_sup <= 1.0 / r ** 2
        detail["scalar_lower_bound_ok"] = scalar_lower_bound_ok(flow, center, r)
    if hyp:
        res = minimize(flow, base, center, MinimizeOptions(n_starts=8))
        detail["ell_center"] = res.ell
        L_in = res.ell
        hyp = res.ell <= L_in_cap
    if not hyp:
        return CylinderProbe(base=base, center=center, r=r,
                             L_in=detail.get("ell_center", np.nan),
                             sup_ell=np.nan, sup_grad=np.nan,
                             hypotheses_ok=False, detail=detail)

    # window 1: |ell| on B(x, r) x [t - r^2/2, t - r^2/8]
    s_lo, s_hi = t - r * r / 2, t - r * r / 8
    sup_ell = 0.0
    n_ball = 0
    for s in np.linspace(s_lo, s_hi, n_times):
        tau = t0 - s
        fld = reduced_field(flow, base, tau, spec, with_gradients=False)
        pts = _ball_lattice(flow, t, center.x, r)
        n_ball = len(pts)
        vals = ell_at(fld, pts)
        vals = vals[np.isfinite(vals)]
        if len(vals):
            sup_ell = max(sup_ell, float(np.max(np.abs(vals))))

    # window 2: |ell_s| + |grad ell| on B(x, r/2) x [t - r^2/2, t - r^2/4]
    s_lo2, s_hi2 = t - r * r / 2, t - r * r / 4
    sup_grad = 0.0
    from .reduced import _build_grid, gradient_vector_at

    for s in np.linspace(s_lo2, s_hi2, n_times):
        tau = t0 - s
        grid = _build_grid(flow, base, tau, spec)
        flds = [reduced_field(flow, base, tau * (1 + d), spec,
                              with_gradients=(d == 0), grid_override=grid)
                for d in (-5e-3, 0.0, 5e-3)]
        ctr = flds[1]
        attach_tau_derivative(ctr, flds)
        pts = _ball_lattice(flow, t, center.x, r / 2)
        gvec = gradient_vector_at(ctr, pts)
        gmat = flow.metric_components(t0 - tau, pts)
        gn = np.sqrt(np.maximum(np.einsum("bi,bij,bj->b", gvec, gmat, gvec), 0.0))
        from scipy.interpolate import RegularGridInterpolator

        from .reduced import _reduced_coords_of

        itp = RegularGridInterpolator(ctr.axes, np.abs(ctr.dell_dtau),
                                      bounds_error=False, fill_value=np.nan)
        lt = itp(_reduced_coords_of(ctr, pts))
        tot = gn + lt  # |d ell/ds| = |d ell/dtau| at fixed point
        tot = tot[np.isfinite(tot)]
        if len(tot):
            sup_grad = max(sup_grad, float(np.max(tot)))
    detail["n_ball_points"] = n_ball

    return CylinderProbe(base=base, center=center, r=r,
                         L_in=float(detail["ell_center"]),
                         sup_ell=sup_ell, sup_grad=sup_grad,
                         hypotheses_ok=True, detail=detail)
