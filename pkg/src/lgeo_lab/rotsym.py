"""Rotationally symmetric Ricci flow on S^n by method of lines.

Warped-product ansatz over the material coordinate x in [0,1]:

    g = phi(x,t)^2 dx^2 + psi(x,t)^2 g_{S^{n-1}},   psi(0)=psi(1)=0.

With s the arclength variable (d/ds = phi^{-1} d/dx) the flow is

    dpsi/dt = psi_ss - (n-2)(1 - psi_s^2)/psi
    dphi/dt = (n-1)(psi_ss/psi) phi.

Evolving phi pointwise is linearly unstable near the poles (the feedback of
psi noise through psi_ss/psi into phi grows at the diffusion-damping rate
times sqrt(8(n-1)(n-2))/2 > 1), so the solver works in the rescaled
arclength coordinate zeta = s/S(t) on a fixed uniform grid, where phi never
appears:

    dpsi/dt|_zeta = psi_ss - (n-2)(1-psi_s^2)/psi + c(zeta) psi_s
    c(zeta) = zeta*I(1) - I(zeta),  I(zeta) = (n-1) \int_0^zeta (psi_ss/psi) S dzeta'
    dS/dt = I(1).

Pole regularity |psi_s| = 1 is enforced by slaving the first few nodes at
each pole to a slope-pinned odd Taylor profile psi = u + a3 u^3 + a5 u^5
(u = arclength from the pole) fitted on the adjacent window; the singular
quotients there are evaluated analytically from the fit.

The material chart needed by the backend (a fixed coordinate system in
which dg/dt = -2 Ric holds exactly) is reconstructed by passive markers:
each material node x_i carries its rescaled position zeta_i(t), with
d(zeta_i)/dt = -c(zeta_i)/S, and its log-stretch w_i, with
d(w_i)/dt = (n-1) (psi_ss/psi)(zeta_i), so that phi(x_i,t) = phi(x_i,0) e^{w_i}.

Space: second-order centered differences; time: embedded Bogacki-Shampine
3(2) pair under a parabolic step cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SolverError
from .flows import RotSymNumeric, RotSymProfileData

BLOWUP_THRESHOLD = 1.0e6
POLE_SLAVE = 6   # nodes per pole taken from the Taylor fit
FIT_WIDTH = 10   # window nodes feeding the fit


@dataclass(frozen=True)
class SolveOptions:
    rtol: float = 1e-6
    atol: float = 1e-9
    cfl: float = 0.4
    blowup_threshold: float = BLOWUP_THRESHOLD
    max_snapshots: int = 1600
    max_steps: int = 2_000_000


@dataclass(frozen=True)
class SolveReport:
    final_time: float
    min_psi: float
    max_rm: float
    step_count: int
    stop_reason: str  # reached_t_end | curvature_blowup | step_underflow


@dataclass(frozen=True)
class InitialProfile:
    n: int
    grid: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    t0: float = 0.0


def round_profile(n: int = 3, rho0: float = 2.0, nodes: int = 400) -> InitialProfile:
    """Round initial data: the closed-form shrinking sphere in profile form."""
    x = np.linspace(0.0, 1.0, nodes + 1)
    return InitialProfile(n=n, grid=x, psi=rho0 * np.sin(np.pi * x),
                          phi=np.full_like(x, np.pi * rho0))


def dumbbell_profile(n: int = 3, rho0: float = 2.0, neck: float = 0.9,
                     nodes: int = 400) -> InitialProfile:
    """Two bulbs joined by a thin neck; pole regularity holds for any neck<1."""
    if not (0.0 < neck < 1.0):
        raise InvalidInputError("neck parameter must lie in (0, 1)")
    x = np.linspace(0.0, 1.0, nodes + 1)
    u = np.sin(np.pi * x)
    return InitialProfile(n=n, grid=x, psi=rho0 * u * (1.0 - neck * u ** 2),
                          phi=np.full_like(x, np.pi * rho0))


def _validate_initial(init: InitialProfile):
    x = np.asarray(init.grid, dtype=float)
    if len(x) < 2 * (POLE_SLAVE + FIT_WIDTH) + 9 or np.any(np.diff(x) <= 0):
        raise InvalidInputError("grid must be strictly increasing with >= 41 nodes")
    if abs(x[0]) > 1e-12 or abs(x[-1] - 1.0) > 1e-12:
        raise InvalidInputError("grid must span [0, 1]")
    psi, phi = np.asarray(init.psi, float), np.asarray(init.phi, float)
    if psi.shape != x.shape or phi.shape != x.shape:
        raise InvalidInputError("psi/phi shapes must match the grid")
    if abs(psi[0]) > 1e-12 or abs(psi[-1]) > 1e-12:
        raise InvalidInputError("psi must vanish at the poles")
    if np.any(psi[1:-1] <= 0) or np.any(phi <= 0):
        raise InvalidInputError("psi must be positive in the interior, phi everywhere")
    dx = x[1] - x[0]
    slope0 = (psi[1] - psi[0]) / dx / phi[0]
    slope1 = (psi[-1] - psi[-2]) / dx / phi[-1]
    if abs(slope0 - 1.0) > 0.05 or abs(slope1 + 1.0) > 0.05:
        raise InvalidInputError(
            f"pole regularity violated: |psi_s| at poles = {slope0:.4f}, {-slope1:.4f}")


class _ZetaSystem:
    """The rescaled-arclength evolution with marker transport."""

    def __init__(self, n: int, nodes: int):
        self.n = n
        self.m = nodes
        self.z = np.linspace(0.0, 1.0, nodes + 1)
        self.dz = self.z[1] - self.z[0]

    def pole_fit(self, psi, S, left: bool):
        m, rep, w = self.m, POLE_SLAVE, FIT_WIDTH
        s = S * self.z
        if left:
            sw = s[rep:rep + w]
            vals = psi[rep:rep + w]
        else:
            sw = s[-1] - s[m - rep - w + 1:m - rep + 1]
            vals = psi[m - rep - w + 1:m - rep + 1]
        # least squares for (a3, a5) via the 2x2 normal equations
        b3, b5 = sw ** 3, sw ** 5
        r = vals - sw
        g33, g35, g55 = b3 @ b3, b3 @ b5, b5 @ b5
        det = g33 * g55 - g35 * g35
        r3, r5 = b3 @ r, b5 @ r
        return ((g55 * r3 - g35 * r5) / det, (g33 * r5 - g35 * r3) / det)

    def project(self, psi, S):
        """Overwrite the slaved pole nodes with the regular Taylor profile."""
        m, rep = self.m, POLE_SLAVE
        for left in (True, False):
            a3, a5 = self.pole_fit(psi, S, left)
            if left:
                u = S * self.z[:rep]
                psi[:rep] = u + a3 * u ** 3 + a5 * u ** 5
            else:
                u = S * (1.0 - self.z[m - rep + 1:])
                psi[m - rep + 1:] = u + a3 * u ** 3 + a5 * u ** 5
        return psi

    def rhs(self, psi, S, zeta_mark, full=True):
        """Returns (dpsi, dS, dzeta_mark, dw_mark, max_rm)."""
        n, m, dz, z = self.n, self.m, self.dz, self.z
        psi_z = np.empty_like(psi)
        psi_z[1:-1] = (psi[2:] - psi[:-2]) / (2 * dz)
        psi_z[0] = (-3 * psi[0] + 4 * psi[1] - psi[2]) / (2 * dz)
        psi_z[-1] = (3 * psi[-1] - 4 * psi[-2] + psi[-3]) / (2 * dz)
        psi_zz = np.zeros_like(psi)
        psi_zz[1:-1] = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / dz ** 2
        psi_s = psi_z / S
        psi_ss = psi_zz / S ** 2
        with np.errstate(all="ignore"):
            pos = psi > 0
            safe = np.where(pos, psi, 1.0)
            Q = np.where(pos, psi_ss / safe, 0.0)
            W = np.where(pos, (1.0 - psi_s ** 2) / safe, 0.0)
        rep = POLE_SLAVE
        for left in (True, False):
            a3, a5 = self.pole_fit(psi, S, left)
            if left:
                u = S * z[:rep + 1]
                sl = slice(0, rep + 1)
            else:
                u = S * (1.0 - z[m - rep:])
                sl = slice(m - rep, m + 1)
            den = u + a3 * u ** 3 + a5 * u ** 5
            dps = 1.0 + 3 * a3 * u ** 2 + 5 * a5 * u ** 4
            upos = u > 0
            dsafe = np.where(upos, den, 1.0)
            Q[sl] = np.where(upos, (6 * a3 * u + 20 * a5 * u ** 3) / dsafe, 6 * a3)
            W[sl] = np.where(upos, (1.0 - dps ** 2) / dsafe, 0.0)
            if left:
                psi_s[0] = 1.0
            else:
                psi_s[-1] = -1.0
        I = (n - 1) * S * np.concatenate([[0.0], np.cumsum(0.5 * (Q[1:] + Q[:-1]) * dz)])
        c = z * I[-1] - I
        dpsi = psi_ss - (n - 2) * W + c * psi_s
        dpsi[0] = 0.0
        dpsi[-1] = 0.0

        with np.errstate(all="ignore"):
            K1 = np.where(pos, W / safe, 0.0)
        K1[0] = -Q[0]
        K1[-1] = -Q[-1]
        max_rm = float(max(np.max(np.abs(Q)), np.max(np.abs(K1))))

        dzeta = -np.interp(zeta_mark, z, c) / S
        dzeta[0] = 0.0
        dzeta[-1] = 0.0
        dw = (n - 1) * np.interp(zeta_mark, z, Q)
        return dpsi, float(I[-1]), dzeta, dw, max_rm, np.max(np.abs(c))


def solve_rotsym(init: InitialProfile, t_end: float,
                 opts: SolveOptions = SolveOptions()):
    """Integrate the profile to t_end (or stop earlier at blowup).

    Returns (RotSymNumeric backend, SolveReport).  Early stops produce a
    backend with a truncated time domain -- a signal, not a failure.
    """
    _validate_initial(init)
    if t_end <= init.t0:
        raise InvalidInputError(f"t_end {t_end} must exceed t0 {init.t0}")
    x = np.asarray(init.grid, dtype=float)
    psi0 = np.asarray(init.psi, dtype=float)
    phi0 = np.asarray(init.phi, dtype=float)
    n = init.n
    m = len(x) - 1
    sys = _ZetaSystem(n, m)

    # initial arclength positions of the material nodes
    s0 = np.concatenate([[0.0], np.cumsum(0.5 * (phi0[1:] + phi0[:-1]) * np.diff(x))])
    S = float(s0[-1])
    zeta_mark = s0 / S
    from scipy.interpolate import CubicSpline

    psi = CubicSpline(zeta_mark, psi0)(sys.z)
    psi[0] = 0.0
    psi[-1] = 0.0
    psi = sys.project(psi, S)
    w_mark = np.zeros_like(x)
    t = float(init.t0)

    def material_snapshot(psi, S, zeta_mark, w_mark):
        ps = CubicSpline(sys.z, psi)(zeta_mark)
        ps[0] = 0.0
        ps[-1] = 0.0
        return np.maximum(ps, 0.0), phi0 * np.exp(w_mark)

    snap_t = [t]
    p_mat, f_mat = material_snapshot(psi, S, zeta_mark, w_mark)
    snap_psi = [p_mat]
    snap_phi = [f_mat]
    snap_stride = 1
    accepted_since_snap = 0

    k1 = sys.rhs(psi, S, zeta_mark)
    max_rm = k1[4]
    h = min(0.2 * opts.cfl * (S * sys.dz) ** 2, (t_end - t) / 16)
    steps = 0
    stop_reason = "reached_t_end"
    global_min_psi = float(np.min(psi[1:-1]))
    global_max_rm = max_rm

    while t < t_end:
        if steps >= opts.max_steps:
            raise SolverError("step budget exhausted")
        h_cap = opts.cfl * (S * sys.dz) ** 2
        if max_rm > 0:
            h_cap = min(h_cap, 0.25 / max_rm)
        if k1[5] > 0:
            h_cap = min(h_cap, 0.5 * S * sys.dz / k1[5])
        h = min(h, h_cap, t_end - t)
        if h < 1e-14 * max(1.0, abs(t_end)):
            stop_reason = "step_underflow"
            break

        d1p, d1S, d1z, d1w, _, _ = k1
        psi_a = psi + 0.5 * h * d1p
        if np.any(psi_a[1:-1] <= 0):
            h *= 0.5
            continue
        k2 = sys.rhs(psi_a, S + 0.5 * h * d1S, zeta_mark + 0.5 * h * d1z)
        d2p, d2S, d2z, d2w, _, _ = k2
        psi_b = psi + 0.75 * h * d2p
        if np.any(psi_b[1:-1] <= 0):
            h *= 0.5
            continue
        k3 = sys.rhs(psi_b, S + 0.75 * h * d2S, zeta_mark + 0.75 * h * d2z)
        d3p, d3S, d3z, d3w, _, _ = k3
        psi_new = psi + h * (2 * d1p + 3 * d2p + 4 * d3p) / 9.0
        S_new = S + h * (2 * d1S + 3 * d2S + 4 * d3S) / 9.0
        zeta_new = zeta_mark + h * (2 * d1z + 3 * d2z + 4 * d3z) / 9.0
        w_new = w_mark + h * (2 * d1w + 3 * d2w + 4 * d3w) / 9.0
        if np.any(psi_new[1:-1] <= 0) or S_new <= 0 or np.any(np.diff(zeta_new) <= 0):
            h *= 0.5
            continue
        k4 = sys.rhs(psi_new, S_new, zeta_new)
        d4p, d4S, _, _, rm_new, _ = k4
        err_p = h * (-5 * d1p / 72 + d2p / 12 + d3p / 9 - d4p / 8)
        err_S = h * (-5 * d1S / 72 + d2S / 12 + d3S / 9 - d4S / 8)
        scale = opts.atol + opts.rtol * np.maximum(np.abs(psi_new), S_new)
        enorm = max(float(np.max(np.abs(err_p) / scale)),
                    abs(err_S) / (opts.atol + opts.rtol * S_new))
        if enorm > 1.0:
            h *= max(0.2, 0.9 * enorm ** (-1.0 / 3.0))
            continue

        t += h
        psi, S, zeta_mark, w_mark = psi_new, S_new, zeta_new, w_new
        psi = sys.project(psi, S)
        k1 = sys.rhs(psi, S, zeta_mark)
        max_rm = rm_new
        steps += 1
        global_min_psi = min(global_min_psi, float(np.min(psi[1:-1])))
        global_max_rm = max(global_max_rm, max_rm)

        accepted_since_snap += 1
        if accepted_since_snap >= snap_stride:
            p_mat, f_mat = material_snapshot(psi, S, zeta_mark, w_mark)
            snap_t.append(t)
            snap_psi.append(p_mat)
            snap_phi.append(f_mat)
            accepted_since_snap = 0
            if len(snap_t) > opts.max_snapshots:
                snap_t = snap_t[::2]
                snap_psi = snap_psi[::2]
                snap_phi = snap_phi[::2]
                snap_stride *= 2

        if max_rm > opts.blowup_threshold:
            stop_reason = "curvature_blowup"
            break

        if enorm > 0:
            h *= min(5.0, 0.9 * enorm ** (-1.0 / 3.0))
        else:
            h *= 5.0

    if snap_t[-1] != t:
        p_mat, f_mat = material_snapshot(psi, S, zeta_mark, w_mark)
        snap_t.append(t)
        snap_psi.append(p_mat)
        snap_phi.append(f_mat)

    data = RotSymProfileData(n=n, grid=x, times=np.asarray(snap_t),
                             psi=np.asarray(snap_psi), phi=np.asarray(snap_phi))
    report = SolveReport(final_time=t, min_psi=global_min_psi,
                         max_rm=global_max_rm, step_count=steps,
                         stop_reason=stop_reason)
    return RotSymNumeric(data), report


def pole_slopes(backend: RotSymNumeric, t: float):
    """|psi_s| at both poles from one-sided differences (regularity check)."""
    x = backend.data.grid
    dx = x[1] - x[0]
    sp_psi, sp_phi = backend._profiles_at(t)
    p = sp_psi(x)
    f = sp_phi(x)
    s0 = (-3 * p[0] + 4 * p[1] - p[2]) / (2 * dx) / f[0]
    s1 = (3 * p[-1] - 4 * p[-2] + p[-3]) / (2 * dx) / f[-1]
    return float(s0), float(-s1)


def self_convergence(profile_factory, t_probe: float, grid_sizes,
                     opts: SolveOptions = SolveOptions(rtol=1e-8, atol=1e-11)):
    """Richardson-style observed order of psi at probe points.

    profile_factory(nodes) must build the same initial data on the given
    resolution.  Requires >= 3 geometrically spaced grid sizes.
    """
    sizes = list(grid_sizes)
    if len(sizes) < 3:
        raise InvalidInputError("need at least 3 grid sizes")
    if len(set(sizes)) != len(sizes):
        raise InvalidInputError("duplicate grid sizes")
    probes = np.linspace(0.15, 0.85, 17)
    values = []
    for m in sizes:
        backend, report = solve_rotsym(profile_factory(int(m)), t_probe, opts)
        if report.final_time < t_probe * (1 - 1e-9):
            raise SolverError(f"solver stopped early on grid {m}: {report.stop_reason}")
        sp_psi, _ = backend._profiles_at(t_probe)
        values.append(sp_psi(probes))
    orders = []
    for i in range(len(sizes) - 2):
        e1 = float(np.max(np.abs(values[i] - values[i + 1])))
        e2 = float(np.max(np.abs(values[i + 1] - values[i + 2])))
        ratio = sizes[i + 1] / sizes[i]
        orders.append(float(np.log(e1 / e2) / np.log(ratio)))
    return orders


def save_snapshot(backend: RotSymNumeric, path: str) -> str:
    """Persist a solved profile as a versioned, binary-free JSON snapshot."""
    import json

    data = backend.data
    snap = {"version": 1, "n": data.n,
            "grid": data.grid.tolist(), "times": data.times.tolist(),
            "psi": data.psi.tolist(), "phi": data.phi.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(snap, fh)
        fh.write("\n")
    return path


def load_snapshot(path: str) -> RotSymNumeric:
    import json

    with open(path, "r", encoding="utf-8") as fh:
        snap = json.load(fh)
    if snap.get("version") != 1:
        raise InvalidInputError(f"unsupported snapshot version {snap.get('version')}")
    return RotSymNumeric(RotSymProfileData(
        n=int(snap["n"]), grid=np.asarray(snap["grid"]),
        times=np.asarray(snap["times"]), psi=np.asarray(snap["psi"]),
        phi=np.asarray(snap["phi"])))


def solve_from_spec(spec: dict):
    """Build and solve a rot-sym flow from its JSON spec."""
    n = int(spec.get("n", 3))
    nodes = int(spec.get("nodes", 400))
    params = dict(spec.get("params", {}))
    profile = spec.get("profile", "round")
    rho0 = float(params.get("rho0", 2.0))
    if profile == "round":
        init = round_profile(n=n, rho0=rho0, nodes=nodes)
        default_t_end = 0.8 * rho0 ** 2 / (2 * (n - 1))
    elif profile == "dumbbell":
        init = dumbbell_profile(n=n, rho0=rho0,
                                neck=float(params.get("neck", 0.9)), nodes=nodes)
        default_t_end = rho0 ** 2 / (2 * (n - 1))
    else:
        raise InvalidInputError(f"unknown rotsym profile {profile!r}")
    t_end = float(spec.get("t_end", default_t_end))
    opts = SolveOptions(
        blowup_threshold=float(spec.get("blowup_threshold", BLOWUP_THRESHOLD)))
    return solve_rotsym(init, t_end, opts)
