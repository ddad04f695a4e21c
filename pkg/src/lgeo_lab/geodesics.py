"""L-geodesic shooting, the L-exponential map, and two-point minimization.

Trajectories are integrated in the desingularized parameter sigma = sqrt(tau)
(tau backward time from the base), where the geodesic equation reads

    beta'' = -Gamma(beta', beta') + 2 sigma^2 grad R - 4 sigma Ric(beta')

with initial data beta(0) = x, beta'(0) = 2v, all geometry evaluated in
g_{t - sigma^2}.  The accumulated energy obeys

    dL/dsigma = |beta'|^2 / 2 + 2 sigma^2 R.

Each backend supplies a "shoot frame": a working chart that keeps the
trajectory away from coordinate degeneracies (for the homogeneous models a
per-sample rotated hyperspherical chart aligned with the initial velocity;
for the rot-sym backend the totally geodesic 2D slice spanned by the base
direction and the shooting direction).  Everything is batched over the
leading axis; fixed-step RK4 keeps runs deterministic, with forward
sensitivity integration for Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geom
from .errors import ChartError, InvalidInputError, MinimizationError, TimeOutOfDomainError
from .flows import (EuclideanStatic, FlowBackend, RotSymNumeric, ShrinkingCylinder,
                    ShrinkingSphere, SpaceTimePoint)


@dataclass(frozen=True)
class ShootVector:
    """Tangent vector at the base point, public chart components."""

    components: tuple

    def __post_init__(self):
        comp = tuple(float(c) for c in self.components)
        if not all(np.isfinite(comp)):
            raise InvalidInputError("shooting vector components must be finite")
        object.__setattr__(self, "components", comp)

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.components, dtype=float)


@dataclass
class LGeodesic:
    """A sampled trajectory in sigma with accumulated L-energy."""

    base: SpaceTimePoint
    v: ShootVector
    sigma_samples: np.ndarray   # (K+1,)
    positions: np.ndarray       # (K+1, n) public chart
    velocities: np.ndarray      # (K+1, n) public chart, d(beta)/d(sigma)
    partial_L: np.ndarray       # (K+1,)

    @property
    def tau_max(self) -> float:
        return float(self.sigma_samples[-1] ** 2)

    @property
    def endpoint(self) -> SpaceTimePoint:
        return SpaceTimePoint(tuple(self.positions[-1]), self.base.time - self.tau_max)

    @property
    def L(self) -> float:
        return float(self.partial_L[-1])

    @property
    def ell(self) -> float:
        return self.L / (2.0 * np.sqrt(self.tau_max))


@dataclass
class MinGeodesicResult:
    ell: float
    L_value: float
    v_star: ShootVector
    n_minima: int
    on_cut_locus: bool
    tau: float
    endpoint_error: float
    det_jacobian: float
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MinimizeOptions:
    n_starts: int = 32
    steps: int = 48
    max_iter: int = 40
    seed: int = 0
    merge_tol: float = 1e-4
    tie_rel_tol: float = 1e-5
    det_rel_tol: float = 1e-3
    perturb_scale: float = 0.6


# --------------------------------------------------------------------------
# shoot frames
# --------------------------------------------------------------------------

class _Bundle:
    __slots__ = ("gamma", "ric_op", "gradR", "R", "g", "health")

    def __init__(self, gamma, ric_op, gradR, R, g, health):
        self.gamma = gamma
        self.ric_op = ric_op
        self.gradR = gradR
        self.R = R
        self.g = g
        self.health = health


class ShootFrame:
    """Working-chart geometry used by the integrator (batched)."""

    work_dim: int
    is_flat = False

    def to_work(self, X_pub): raise NotImplementedError
    def from_work(self, Xw): raise NotImplementedError
    def vel_to_work(self, X_pub, V_pub): raise NotImplementedError
    def vel_from_work(self, Xw, Vw): raise NotImplementedError
    def bundle(self, t, Xw) -> _Bundle: raise NotImplementedError

    def wrap_residual(self, Xw, Xw_target):
        return Xw - Xw_target

    def metric_diag_work(self, t, Xw):
        """Diagonal of the work metric (all frames use diagonal charts)."""
        g = self.bundle(t, Xw).g
        return np.einsum("bii->bi", g)


class EuclideanFrame(ShootFrame):
    is_flat = True

    def __init__(self, flow: EuclideanStatic, B: int):
        self.flow = flow
        self.work_dim = flow.dim
        self.B = B

    def to_work(self, X_pub): return np.atleast_2d(X_pub).astype(float)
    def from_work(self, Xw): return Xw
    def vel_to_work(self, X_pub, V_pub): return np.atleast_2d(V_pub).astype(float)
    def vel_from_work(self, Xw, Vw): return Vw

    def bundle(self, t, Xw):
        Xw = np.atleast_2d(Xw)
        B, m = Xw.shape
        return _Bundle(np.zeros((B, m, m, m)), np.zeros((B, m, m)),
                       np.zeros((B, m)), np.zeros(B),
                       np.broadcast_to(np.eye(m), (B, m, m)), np.ones(B))


class SphereFrame(ShootFrame):
    """Per-sample rotated hyperspherical chart on the shrinking sphere.

    The rotation puts the base at the chart's healthy center (all angles
    pi/2) and the initial direction along the periodic angle, so each
    trajectory travels its own great circle at chart health ~ 1.
    """

    def __init__(self, flow: ShrinkingSphere, base_pub, v_pub):
        self.flow = flow
        n = flow.dim
        self.work_dim = n
        base_pub = np.asarray(base_pub, dtype=float)
        v_pub = np.atleast_2d(v_pub)
        B = len(v_pub)
        P0 = geom.sphere_embed(base_pub[None])[0]
        Vemb = geom.sphere_vel_to_embedding(
            np.broadcast_to(base_pub, (B, n)).copy(), v_pub)
        nrm = np.linalg.norm(Vemb, axis=1)
        W = np.where((nrm > 1e-13)[:, None], Vemb / np.where(nrm == 0, 1.0, nrm)[:, None],
                     geom.orthonormal_complement(np.broadcast_to(P0, (B, n + 1))))
        # re-orthogonalize against P0 for numerical safety
        W = W - (W @ P0)[:, None] * P0[None, :]
        W = W / np.linalg.norm(W, axis=1)[:, None]
        center = np.zeros(n + 1)
        center[-1] = 1.0
        dvec = np.zeros(n + 1)
        dvec[-2] = -1.0
        self.rot = geom.rotation_from_pairs(np.broadcast_to(P0, (B, n + 1)).copy(), W,
                                            center, dvec)
        self.rot_T = np.swapaxes(self.rot, 1, 2)

    def to_work(self, X_pub):
        emb = geom.sphere_embed(np.atleast_2d(X_pub))
        if len(emb) == 1 and len(self.rot) > 1:
            emb = np.broadcast_to(emb[0], (len(self.rot), emb.shape[1]))
        return geom.sphere_unembed(np.einsum("bij,bj->bi", self.rot, emb))

    def from_work(self, Xw):
        emb = geom.sphere_embed(np.atleast_2d(Xw))
        return geom.sphere_unembed(np.einsum("bij,bj->bi", self.rot_T, emb))

    def vel_to_work(self, X_pub, V_pub):
        X_pub = np.atleast_2d(X_pub)
        V_pub = np.atleast_2d(V_pub)
        B = max(len(X_pub), len(V_pub), len(self.rot))
        X_pub = np.broadcast_to(X_pub, (B, X_pub.shape[1])).copy()
        vemb = geom.sphere_vel_to_embedding(X_pub, np.broadcast_to(V_pub, X_pub.shape))
        vemb = np.einsum("bij,bj->bi", self.rot, vemb)
        Xw = self.to_work(X_pub)
        return geom.sphere_vel_from_embedding(Xw, vemb)

    def vel_from_work(self, Xw, Vw):
        vemb = geom.sphere_vel_to_embedding(np.atleast_2d(Xw), np.atleast_2d(Vw))
        vemb = np.einsum("bij,bj->bi", self.rot_T, vemb)
        Xp = self.from_work(Xw)
        return geom.sphere_vel_from_embedding(Xp, vemb)

    def bundle(self, t, Xw):
        Xw = np.atleast_2d(Xw)
        B, m = Xw.shape
        n = self.flow.dim
        rho2 = self.flow.radius2(t)
        gamma = geom.sphere_christoffels(Xw)
        ric_op = np.broadcast_to(((n - 1) / rho2) * np.eye(m), (B, m, m))
        gdiag = geom.sphere_metric_diag(Xw) * rho2
        g = np.zeros((B, m, m))
        idx = np.arange(m)
        g[:, idx, idx] = gdiag
        R = np.full(B, n / (2.0 * (self.flow.T - t)))
        health = np.min(np.abs(np.sin(Xw[:, :-1])), axis=1) if m > 1 else np.ones(B)
        return _Bundle(gamma, ric_op, np.zeros((B, m)), R, g, health)

    def wrap_residual(self, Xw, Xw_target):
        d = Xw - Xw_target
        d[:, -1] = (d[:, -1] + np.pi) % (2 * np.pi) - np.pi
        return d


class CylinderFrame(ShootFrame):
    """Per-sample rotated block chart + untouched axial coordinate."""

    def __init__(self, flow: ShrinkingCylinder, base_pub, v_pub):
        self.flow = flow
        n = flow.dim
        self.work_dim = n
        self.block = flow.block
        base_pub = np.asarray(base_pub, dtype=float)
        v_pub = np.atleast_2d(v_pub)
        B = len(v_pub)
        mb = self.block
        P0 = geom.sphere_embed(base_pub[None, :mb])[0]
        Vemb = geom.sphere_vel_to_embedding(
            np.broadcast_to(base_pub[:mb], (B, mb)).copy(), v_pub[:, :mb])
        nrm = np.linalg.norm(Vemb, axis=1)
        W = np.where((nrm > 1e-13)[:, None], Vemb / np.where(nrm == 0, 1.0, nrm)[:, None],
                     geom.orthonormal_complement(np.broadcast_to(P0, (B, mb + 1))))
        W = W - (W @ P0)[:, None] * P0[None, :]
        W = W / np.linalg.norm(W, axis=1)[:, None]
        center = np.zeros(mb + 1)
        center[-1] = 1.0
        dvec = np.zeros(mb + 1)
        dvec[-2] = -1.0
        self.rot = geom.rotation_from_pairs(np.broadcast_to(P0, (B, mb + 1)).copy(), W,
                                            center, dvec)
        self.rot_T = np.swapaxes(self.rot, 1, 2)

    def to_work(self, X_pub):
        X_pub = np.atleast_2d(X_pub)
        B = len(self.rot)
        if len(X_pub) == 1 and B > 1:
            X_pub = np.broadcast_to(X_pub[0], (B, X_pub.shape[1]))
        mb = self.block
        emb = geom.sphere_embed(X_pub[:, :mb])
        th = geom.sphere_unembed(np.einsum("bij,bj->bi", self.rot, emb))
        return np.column_stack([th, X_pub[:, mb]])

    def from_work(self, Xw):
        Xw = np.atleast_2d(Xw)
        mb = self.block
        emb = geom.sphere_embed(Xw[:, :mb])
        th = geom.sphere_unembed(np.einsum("bij,bj->bi", self.rot_T, emb))
        return np.column_stack([th, Xw[:, mb]])

    def vel_to_work(self, X_pub, V_pub):
        X_pub = np.atleast_2d(X_pub)
        V_pub = np.atleast_2d(V_pub)
        B = max(len(X_pub), len(V_pub), len(self.rot))
        mb = self.block
        X_pub = np.broadcast_to(X_pub, (B, X_pub.shape[1])).copy()
        V_pub = np.broadcast_to(V_pub, X_pub.shape)
        vemb = geom.sphere_vel_to_embedding(X_pub[:, :mb], V_pub[:, :mb])
        vemb = np.einsum("bij,bj->bi", self.rot, vemb)
        thw = self.to_work(X_pub)[:, :mb]
        vth = geom.sphere_vel_from_embedding(thw, vemb)
        return np.column_stack([vth, V_pub[:, mb]])

    def vel_from_work(self, Xw, Vw):
        Xw = np.atleast_2d(Xw)
        Vw = np.atleast_2d(Vw)
        mb = self.block
        vemb = geom.sphere_vel_to_embedding(Xw[:, :mb], Vw[:, :mb])
        vemb = np.einsum("bij,bj->bi", self.rot_T, vemb)
        Xp = self.from_work(Xw)
        vth = geom.sphere_vel_from_embedding(Xp[:, :mb], vemb)
        return np.column_stack([vth, Vw[:, mb]])

    def bundle(self, t, Xw):
        Xw = np.atleast_2d(Xw)
        B, m = Xw.shape
        n = self.flow.dim
        mb = self.block
        rs2 = self.flow.radius2(t)
        th = Xw[:, :mb]
        gamma = np.zeros((B, m, m, m))
        gamma[:, :mb, :mb, :mb] = geom.sphere_christoffels(th)
        ric_op = np.zeros((B, m, m))
        idx = np.arange(mb)
        ric_op[:, idx, idx] = (n - 2) / rs2
        gdiag = geom.sphere_metric_diag(th) * rs2
        g = np.zeros((B, m, m))
        g[:, idx, idx] = gdiag
        g[:, m - 1, m - 1] = 1.0
        R = np.full(B, (n - 1) / (2.0 * (self.flow.T - t)))
        health = np.min(np.abs(np.sin(th[:, :-1])), axis=1) if mb > 1 else np.ones(B)
        return _Bundle(gamma, ric_op, np.zeros((B, m)), R, g, health)

    def wrap_residual(self, Xw, Xw_target):
        d = Xw - Xw_target
        mb = self.block
        d[:, mb - 1] = (d[:, mb - 1] + np.pi) % (2 * np.pi) - np.pi
        return d


class RotSymSliceFrame(ShootFrame):
    """2D totally geodesic slice (x, alpha) of the rot-sym backend.

    All samples share the base; each carries its own great-circle direction
    in the sphere block.  alpha is the signed angle along that circle from
    the base block-direction.
    """

    HEALTH_MARGIN = None  # set from backend

    def __init__(self, flow: RotSymNumeric, base_pub, v_pub=None, e_emb=None):
        self.flow = flow
        self.work_dim = 2
        base_pub = np.asarray(base_pub, dtype=float)
        self.base_pub = base_pub
        self.u0 = geom.sphere_embed(base_pub[None, 1:])[0]
        if e_emb is None:
            v_pub = np.atleast_2d(v_pub)
            B = len(v_pub)
            vbl = geom.sphere_vel_to_embedding(
                np.broadcast_to(base_pub[1:], (B, flow.block)).copy(), v_pub[:, 1:])
            nrm = np.linalg.norm(vbl, axis=1)
            e = np.where((nrm > 1e-13)[:, None], vbl / np.where(nrm == 0, 1.0, nrm)[:, None],
                         geom.orthonormal_complement(
                             np.broadcast_to(self.u0, (B, flow.block + 1))))
            e = e - (e @ self.u0)[:, None] * self.u0[None, :]
            self.e_emb = e / np.linalg.norm(e, axis=1)[:, None]
        else:
            self.e_emb = np.atleast_2d(e_emb)
        self.margin = flow.POLE_MARGIN

    def to_work(self, X_pub):
        X_pub = np.atleast_2d(X_pub)
        B = max(len(X_pub), len(self.e_emb))
        X_pub = np.broadcast_to(X_pub, (B, X_pub.shape[1]))
        u = geom.sphere_embed(X_pub[:, 1:])
        ca = np.clip(u @ self.u0, -1.0, 1.0)
        sa = np.einsum("bi,bi->b", u, self.e_emb)
        alpha = np.arctan2(sa, ca)
        return np.column_stack([X_pub[:, 0], alpha])

    def from_work(self, Xw):
        Xw = np.atleast_2d(Xw)
        a = Xw[:, 1]
        u = np.cos(a)[:, None] * self.u0[None, :] + np.sin(a)[:, None] * self.e_emb
        th = geom.sphere_unembed(u)
        return np.column_stack([Xw[:, 0], th])

    def vel_to_work(self, X_pub, V_pub):
        X_pub = np.atleast_2d(X_pub)
        V_pub = np.atleast_2d(V_pub)
        B = max(len(X_pub), len(V_pub), len(self.e_emb))
        X_pub = np.broadcast_to(X_pub, (B, X_pub.shape[1])).copy()
        V_pub = np.broadcast_to(V_pub, X_pub.shape)
        vbl = geom.sphere_vel_to_embedding(X_pub[:, 1:], V_pub[:, 1:])
        Xw = self.to_work(X_pub)
        a = Xw[:, 1]
        tang = -np.sin(a)[:, None] * self.u0[None, :] + np.cos(a)[:, None] * self.e_emb
        va = np.einsum("bi,bi->b", vbl, tang)
        return np.column_stack([V_pub[:, 0], va])

    def vel_from_work(self, Xw, Vw):
        Xw = np.atleast_2d(Xw)
        Vw = np.atleast_2d(Vw)
        a = Xw[:, 1]
        tang = -np.sin(a)[:, None] * self.u0[None, :] + np.cos(a)[:, None] * self.e_emb
        vemb = Vw[:, 1][:, None] * tang
        Xp = self.from_work(Xw)
        vth = geom.sphere_vel_from_embedding(Xp[:, 1:], vemb)
        return np.column_stack([Vw[:, 0], vth])

    def bundle(self, t, Xw):
        Xw = np.atleast_2d(Xw)
        B = len(Xw)
        n = self.flow.dim
        x = np.clip(Xw[:, 0], 0.0, 1.0)
        psi, psi_x, psi_xx, phi, phi_x = self.flow.profile_values(t, x)
        psi = np.maximum(psi, 1e-12)
        psi_s = psi_x / phi
        psi_ss = psi_xx / phi ** 2 - phi_x * psi_x / phi ** 3
        K0 = -psi_ss / psi
        K1 = (1.0 - psi_s ** 2) / psi ** 2
        gamma = np.zeros((B, 2, 2, 2))
        gamma[:, 0, 0, 0] = phi_x / phi
        gamma[:, 0, 1, 1] = -psi * psi_x / phi ** 2
        gamma[:, 1, 0, 1] = psi_x / psi
        gamma[:, 1, 1, 0] = psi_x / psi
        ric_op = np.zeros((B, 2, 2))
        ric_op[:, 0, 0] = (n - 1) * K0
        ric_op[:, 1, 1] = K0 + (n - 2) * K1
        R = 2 * (n - 1) * K0 + (n - 1) * (n - 2) * K1
        # radial grad R by a centered difference tied to the solver grid
        h = 0.5 * (self.flow.data.grid[1] - self.flow.data.grid[0])
        xp = np.clip(x + h, 0.0, 1.0)
        xm = np.clip(x - h, 0.0, 1.0)
        dR = (self.flow.scalar_curvature(t, xp)
              - self.flow.scalar_curvature(t, xm)) / (xp - xm)
        gradR = np.zeros((B, 2))
        gradR[:, 0] = dR / phi ** 2
        g = np.zeros((B, 2, 2))
        g[:, 0, 0] = phi ** 2
        g[:, 1, 1] = psi ** 2
        health = np.minimum(Xw[:, 0] - self.margin, 1.0 - self.margin - Xw[:, 0]) / 0.5
        return _Bundle(gamma, ric_op, gradR, R, g, health)


def make_frame(flow: FlowBackend, base_pub, v_pub) -> ShootFrame:
    if isinstance(flow, EuclideanStatic):
        return EuclideanFrame(flow, len(np.atleast_2d(v_pub)))
    if isinstance(flow, ShrinkingSphere):
        return SphereFrame(flow, base_pub, v_pub)
    if isinstance(flow, ShrinkingCylinder):
        return CylinderFrame(flow, base_pub, v_pub)
    if isinstance(flow, RotSymNumeric):
        return RotSymSliceFrame(flow, base_pub, v_pub=v_pub)
    raise InvalidInputError(f"no shoot frame for backend {flow!r}")


# --------------------------------------------------------------------------
# the sigma integrator
# --------------------------------------------------------------------------

@dataclass
class IntegrationResult:
    X_end: np.ndarray          # (B, m)
    V_end: np.ndarray          # (B, m)
    L_end: np.ndarray          # (B,)
    valid: np.ndarray          # (B,) bool
    health_min: np.ndarray     # (B,)
    SX: np.ndarray | None      # (B, m, q) d(endpoint)/d(v_orth)
    SV: np.ndarray | None
    det_end: np.ndarray | None
    det_sign_flip: np.ndarray | None
    det_max: np.ndarray | None
    det_orient: np.ndarray | None = None
    path_X: np.ndarray | None = None   # (K+1, B, m)
    path_V: np.ndarray | None = None
    path_L: np.ndarray | None = None
    sigmas: np.ndarray | None = None


def _integrate_flat(X, V, L, SX, SV, tau, steps, want_path):
    B, m = X.shape
    sig = np.sqrt(tau)
    sigmas = np.linspace(0.0, sig, steps + 1)
    X_end = X + sig * V
    L_end = 0.5 * np.einsum("bi,bi->b", V, V) * sig
    det_end = det_flip = det_max = orient = None
    if SX is not None:
        SX = sig * SV
        if SX.shape[1] == SX.shape[2]:
            orient = np.sign(np.linalg.det(SV))
            orient[orient == 0] = 1.0
            det_end = np.linalg.det(SX) * orient
            det_flip = np.zeros(B, dtype=bool)
            det_max = np.abs(det_end)
    path_X = path_V = path_L = None
    if want_path:
        path_X = X[None] + sigmas[:, None, None] * V[None]
        path_V = np.broadcast_to(V, (steps + 1, B, m)).copy()
        path_L = 0.5 * np.einsum("bi,bi->b", V, V)[None] * sigmas[:, None]
    return IntegrationResult(
        X_end=X_end, V_end=V.copy(), L_end=L_end,
        valid=np.ones(B, dtype=bool), health_min=np.ones(B),
        SX=SX, SV=SV, det_end=det_end, det_sign_flip=det_flip, det_max=det_max,
        det_orient=orient, path_X=path_X, path_V=path_V, path_L=path_L,
        sigmas=sigmas if want_path else None)


def _accel(bnd: _Bundle, V, sigma):
    A = -np.einsum("bkij,bi,bj->bk", bnd.gamma, V, V)
    A += 2.0 * sigma ** 2 * bnd.gradR
    A -= 4.0 * sigma * np.einsum("bkj,bj->bk", bnd.ric_op, V)
    return A


def _rhs_full(frame, t0, sigma, X, V, SX, SV, eps):
    """State + sensitivity RHS with dA/dX by central differences."""
    B, m = X.shape
    if SX is None:
        bnd = frame.bundle(t0 - sigma ** 2, X)
        return V, _accel(bnd, V, sigma), None, None, bnd
    stack = [X]
    for j in range(m):
        Xp = X.copy(); Xp[:, j] += eps[j]
        Xm = X.copy(); Xm[:, j] -= eps[j]
        stack.extend([Xp, Xm])
    bnd = frame.bundle(t0 - sigma ** 2, np.concatenate(stack, axis=0))
    Vrep = np.tile(V, (2 * m + 1, 1))
    Aall = _accel(_Bundle(bnd.gamma, bnd.ric_op, bnd.gradR, bnd.R, bnd.g, bnd.health),
                  Vrep, sigma)
    A = Aall[:B]
    dAdX = np.empty((B, m, m))
    for j in range(m):
        Ap = Aall[(1 + 2 * j) * B:(2 + 2 * j) * B]
        Am = Aall[(2 + 2 * j) * B:(3 + 2 * j) * B]
        dAdX[:, :, j] = (Ap - Am) / (2 * eps[j])
    gamma0 = bnd.gamma[:B]
    ric0 = bnd.ric_op[:B]
    dAdV = -2.0 * np.einsum("bkij,bi->bkj", gamma0, V) - 4.0 * sigma * ric0
    dSX = SV
    dSV = np.einsum("bkj,bjq->bkq", dAdX, SX) + np.einsum("bkj,bjq->bkq", dAdV, SV)
    bnd0 = _Bundle(gamma0, ric0, bnd.gradR[:B], bnd.R[:B], bnd.g[:B], bnd.health[:B])
    return V, A, dSX, dSV, bnd0


def integrate_batch(frame: ShootFrame, t0: float, X0, V0_work, tau: float,
                    steps: int, want_path: bool = False,
                    sens_basis=None) -> IntegrationResult:
    """RK4 integration of the sigma-form geodesic ODE.

    V0_work are the shooting vectors v in the work chart; the trajectory
    starts with beta' = 2v.  sens_basis (B, m, q), when given, activates
    forward sensitivity with S_V(0) = 2 * sens_basis.
    """
    X = np.atleast_2d(X0).astype(float).copy()
    B, m = X.shape
    V = 2.0 * np.atleast_2d(V0_work).astype(float)
    L = np.zeros(B)
    want_sens = sens_basis is not None
    SX = np.zeros((B, m, sens_basis.shape[2])) if want_sens else None
    SV = 2.0 * sens_basis.copy() if want_sens else None

    if frame.is_flat:
        # static flat space: the generic RK4 reproduces these values exactly
        # (A = 0, constant integrand); computed closed-form for speed
        return _integrate_flat(X, V, L, SX, SV, tau, steps, want_path)

    sig_end = np.sqrt(tau)
    h = sig_end / steps
    eps = 1e-6 * (1.0 + np.max(np.abs(X), axis=0))
    valid = np.ones(B, dtype=bool)
    health_min = np.full(B, np.inf)
    det_end = np.zeros(B) if want_sens else None
    det_sign_flip = np.zeros(B, dtype=bool) if want_sens else None
    det_max = np.zeros(B) if want_sens else None
    orient = None
    if want_sens and sens_basis.shape[1] == sens_basis.shape[2]:
        orient = np.sign(np.linalg.det(sens_basis))
        orient[orient == 0] = 1.0
    prev_det = None

    if want_path:
        path_X = np.empty((steps + 1, B, m)); path_X[0] = X
        path_V = np.empty((steps + 1, B, m)); path_V[0] = V
        path_L = np.empty((steps + 1, B)); path_L[0] = 0.0

    def dL(bnd, V, sigma):
        return 0.5 * np.einsum("bij,bi,bj->b", bnd.g, V, V) + 2.0 * sigma ** 2 * bnd.R

    X_home = X.copy()
    for k in range(steps):
        s0 = k * h
        # park rows that went non-finite back at the base (they are already
        # flagged invalid; this only stops NaNs poisoning the batched bundle)
        bad = ~(np.isfinite(X).all(axis=1) & np.isfinite(V).all(axis=1))
        if bad.any():
            valid &= ~bad
            X = np.where(bad[:, None], X_home, X)
            V = np.where(bad[:, None], 0.0, V)
        k1 = _rhs_full(frame, t0, s0, X, V, SX, SV, eps)
        dL1 = dL(k1[4], V, s0)
        hh = 0.5 * h
        k2 = _rhs_full(frame, t0, s0 + hh, X + hh * k1[0], V + hh * k1[1],
                       None if SX is None else SX + hh * k1[2],
                       None if SV is None else SV + hh * k1[3], eps)
        dL2 = dL(k2[4], V + hh * k1[1], s0 + hh)
        k3 = _rhs_full(frame, t0, s0 + hh, X + hh * k2[0], V + hh * k2[1],
                       None if SX is None else SX + hh * k2[2],
                       None if SV is None else SV + hh * k2[3], eps)
        dL3 = dL(k3[4], V + hh * k2[1], s0 + hh)
        k4 = _rhs_full(frame, t0, s0 + h, X + h * k3[0], V + h * k3[1],
                       None if SX is None else SX + h * k3[2],
                       None if SV is None else SV + h * k3[3], eps)
        dL4 = dL(k4[4], V + h * k3[1], s0 + h)

        Xn = X + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Vn = V + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        Ln = L + h / 6.0 * (dL1 + 2 * dL2 + 2 * dL3 + dL4)
        upd = valid[:, None]
        X = np.where(upd, Xn, X)
        V = np.where(upd, Vn, V)
        L = np.where(valid, Ln, L)
        if want_sens:
            SXn = SX + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            SVn = SV + h / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
            SX = np.where(upd[:, :, None], SXn, SX)
            SV = np.where(upd[:, :, None], SVn, SV)
            if SX.shape[1] == SX.shape[2]:
                d = np.linalg.det(SX) * orient
                if prev_det is not None and k >= 2:
                    det_sign_flip |= (np.sign(d) != np.sign(prev_det)) & (prev_det != 0)
                prev_det = d
                det_max = np.maximum(det_max, np.abs(d))
                det_end = d
        hlt = k4[4].health
        health_min = np.minimum(health_min, hlt)
        valid &= hlt > 0.02
        if want_path:
            path_X[k + 1] = X
            path_V[k + 1] = V
            path_L[k + 1] = L

    return IntegrationResult(
        X_end=X, V_end=V, L_end=L, valid=valid, health_min=health_min,
        SX=SX, SV=SV, det_end=det_end, det_sign_flip=det_sign_flip, det_max=det_max,
        det_orient=orient,
        path_X=path_X if want_path else None,
        path_V=path_V if want_path else None,
        path_L=path_L if want_path else None,
        sigmas=np.linspace(0.0, sig_end, steps + 1) if want_path else None)


# --------------------------------------------------------------------------
# sensitivity bases and Riemannian determinants
# --------------------------------------------------------------------------

def _orth_basis_pub(flow, base: SpaceTimePoint):
    """Columns: a g_t-orthonormal basis of the base tangent, public chart."""
    g = flow.metric_components(base.time, base.x[None])[0]
    w, U = np.linalg.eigh(g)
    return U @ np.diag(1.0 / np.sqrt(w)) @ U.T


def _sens_basis(flow, frame, base: SpaceTimePoint, B: int, E_pub=None):
    """(B, m, q) columns of the v-differentiation basis in the work chart.

    Full-dimensional frames differentiate against a g_t-orthonormal public
    basis (q = n); the rot-sym slice differentiates against the in-slice
    orthonormal pair (q = 2), with the transverse directions restored
    analytically by the symmetry factor in _full_det.
    """
    if isinstance(frame, RotSymSliceFrame):
        gd = frame.metric_diag_work(base.time, frame.to_work(base.x[None]))[0]
        E = np.zeros((B, 2, 2))
        E[:, 0, 0] = 1.0 / np.sqrt(gd[0])
        E[:, 1, 1] = 1.0 / np.sqrt(gd[1])
        return E
    if E_pub is None:
        E_pub = _orth_basis_pub(flow, base)
    n = flow.dim
    cols = [frame.vel_to_work(base.x[None], np.broadcast_to(E_pub[:, j], (B, n)))
            for j in range(n)]
    return np.stack(cols, axis=2)


def _full_det(flow, frame, base: SpaceTimePoint, tau: float,
              res: IntegrationResult, Vw):
    """Signed Riemannian det of d(Lexp)/dv at the endpoints of a batch.

    Lengths at the endpoint are measured in g_{t-tau}; v lives in a
    g_t-orthonormal basis at the base.  For the rot-sym slice the in-slice
    2x2 block comes from the integrated sensitivity and each of the n-2
    transverse directions contributes psi(x_end) sin(alpha_end) / |v_perp|
    (the ratio of the endpoint's block-orbit radius to that of v).
    """
    t_end = base.time - tau
    SX = res.SX
    orient = res.det_orient if res.det_orient is not None else 1.0
    gdiag = frame.metric_diag_work(t_end, res.X_end)
    vol_end = np.sqrt(np.prod(np.maximum(gdiag, 0.0), axis=1))
    if not isinstance(frame, RotSymSliceFrame):
        return np.linalg.det(SX) * vol_end * orient
    n = flow.dim
    det2 = np.linalg.det(SX) * vol_end * orient
    psi_end = flow.profile_values(t_end, np.clip(res.X_end[:, 0], 0.0, 1.0))[0]
    x0 = float(np.clip(frame.to_work(base.x[None])[0, 0], 0.0, 1.0))
    psi0 = float(flow.profile_values(base.time, np.asarray([x0]))[0][0])
    vperp = np.abs(Vw[:, 1]) * psi0
    alpha = res.X_end[:, 1]
    with np.errstate(all="ignore"):
        # radial limit: endpoint angle responds linearly, ratio from SX
        lim = psi_end * np.abs(SX[:, 1, 1]) * (1.0 / psi0) / 2.0
        tf = np.where(vperp > 1e-9 * (1 + np.abs(alpha)),
                      psi_end * np.abs(np.sin(alpha)) / vperp, lim)
    return det2 * tf ** (n - 2)


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------

def _check_shoot_args(flow, base: SpaceTimePoint, tau_max: float, steps: int):
    if steps < 16:
        raise InvalidInputError("shoot requires steps >= 16")
    if tau_max <= 0:
        raise InvalidInputError("tau_max must be positive")
    flow._check_point(base)
    if not flow.time_domain().contains(base.time - tau_max):
        raise TimeOutOfDomainError(
            f"backward time {base.time - tau_max} outside the flow's domain")


def shoot(flow: FlowBackend, base: SpaceTimePoint, v: ShootVector,
          tau_max: float, steps: int = 64) -> LGeodesic:
    """Integrate the L-geodesic with initial condition lim sqrt(s) gamma' = v."""
    _check_shoot_args(flow, base, tau_max, steps)
    frame = make_frame(flow, base.x, v.v[None])
    Xw = frame.to_work(base.x[None])
    Vw = frame.vel_to_work(base.x[None], v.v[None])
    res = integrate_batch(frame, base.time, Xw, Vw, tau_max, steps, want_path=True)
    if not res.valid[0]:
        raise ChartError("trajectory left the chart / resolved region")
    K = res.path_X.shape[0]
    pos = np.empty((K, flow.dim))
    vel = np.empty((K, flow.dim))
    for k in range(K):
        pos[k] = frame.from_work(res.path_X[k])[0]
        vel[k] = frame.vel_from_work(res.path_X[k], res.path_V[k])[0]
    return LGeodesic(base=base, v=v, sigma_samples=res.sigmas,
                     positions=pos, velocities=vel, partial_L=res.path_L[:, 0])


def lexp(flow: FlowBackend, base: SpaceTimePoint, v: ShootVector,
         tau: float, steps: int = 64) -> SpaceTimePoint:
    """The L-exponential map: endpoint of the v-geodesic at backward time tau."""
    geo = shoot(flow, base, v, tau, steps)
    return geo.endpoint


def lexp_jacobian(flow: FlowBackend, base: SpaceTimePoint, v: ShootVector,
                  tau: float, steps: int = 64) -> float:
    """Signed det of d(Lexp^tau)/dv between orthonormal frames.

    Computed by forward sensitivity integration of the linearized geodesic
    equation; vanishing/negative values indicate conjugate points.
    """
    _check_shoot_args(flow, base, tau, steps)
    frame = make_frame(flow, base.x, v.v[None])
    Xw = frame.to_work(base.x[None])
    Vw = frame.vel_to_work(base.x[None], v.v[None])
    basis = _sens_basis(flow, frame, base, 1)
    res = integrate_batch(frame, base.time, Xw, Vw, tau, steps, sens_basis=basis)
    if not res.valid[0]:
        raise ChartError("trajectory left the chart / resolved region")
    return float(_full_det(flow, frame, base, tau, res, Vw)[0])


def lexp_jacobian_fd(flow: FlowBackend, base: SpaceTimePoint, v: ShootVector,
                     tau: float, steps: int = 64) -> float:
    """Finite-difference cross-check of lexp_jacobian (step 1e-5 (1+|v|))."""
    if isinstance(flow, RotSymNumeric):
        raise InvalidInputError("finite-difference jacobian needs a full-dim frame")
    E_pub = _orth_basis_pub(flow, base)
    h = 1e-5 * (1.0 + float(np.linalg.norm(v.v)))
    n = flow.dim
    frame = make_frame(flow, base.x, v.v[None])
    cols = []
    for j in range(n):
        vp = ShootVector(tuple(v.v + h * E_pub[:, j]))
        vm = ShootVector(tuple(v.v - h * E_pub[:, j]))
        ep = shoot(flow, base, vp, tau, steps).positions[-1]
        em = shoot(flow, base, vm, tau, steps).positions[-1]
        d = frame.to_work(ep[None])[0] - frame.to_work(em[None])[0]
        if isinstance(frame, (SphereFrame, CylinderFrame)):
            k = n - 1 if isinstance(frame, SphereFrame) else frame.block - 1
            d[k] = (d[k] + np.pi) % (2 * np.pi) - np.pi
        cols.append(d / (2 * h))
    J = np.stack(cols, axis=1)
    x_end = shoot(flow, base, v, tau, steps).positions[-1]
    gdiag = frame.metric_diag_work(base.time - tau, frame.to_work(x_end[None]))[0]
    # same orientation convention as the sensitivity path (det > 0 at v ~ 0)
    basis = _sens_basis(flow, frame, base, 1, E_pub)[0]
    orient = np.sign(np.linalg.det(basis)) or 1.0
    return float(np.linalg.det(J) * np.sqrt(np.prod(gdiag)) * orient)


# --------------------------------------------------------------------------
# two-point minimization (multi-start shooting + damped Gauss-Newton)
# --------------------------------------------------------------------------

@dataclass
class RefineOutcome:
    v_pub: np.ndarray       # (B, n) best shooting vectors found
    converged: np.ndarray   # (B,)
    resid: np.ndarray       # (B,) endpoint mismatch, length units
    L: np.ndarray           # (B,)
    det_end: np.ndarray     # (B,) signed riemannian det at endpoint
    det_rel: np.ndarray     # (B,) |det| relative to the max along sigma
    sign_flip: np.ndarray   # (B,) det changed sign along the trajectory
    iterations: int = 0


def refine_batch(flow, base: SpaceTimePoint, target_pub, tau, v_pub0,
                 steps=48, max_iter=40, tol_len=None) -> RefineOutcome:
    """Batched damped Gauss-Newton on endpoint mismatch.

    target_pub: (B, n) public chart targets (one per sample); v_pub0 the
    initial shooting vectors.  Frames are rebuilt from the current
    directions each iteration (rot-sym: fixed target-adapted slices).
    """
    v_pub = np.atleast_2d(v_pub0).astype(float).copy()
    target_pub = np.atleast_2d(target_pub)
    B, n = v_pub.shape
    if len(target_pub) == 1 and B > 1:
        target_pub = np.broadcast_to(target_pub[0], (B, n))
    t_end = base.time - tau
    if tol_len is None:
        tol_len = 1e-8 * (1.0 + flow.length_scale(t_end))
    E_pub = _orth_basis_pub(flow, base)
    rot = isinstance(flow, RotSymNumeric)
    frame_fixed = None
    if rot:
        frame_fixed = RotSymSliceFrame(flow, base.x, v_pub=None,
                                       e_emb=_rotsym_target_dirs(flow, base, target_pub))

    lam = np.full(B, 1e-4)
    best_v = v_pub.copy()
    best_r = np.full(B, np.inf)
    converged = np.zeros(B, dtype=bool)
    out_L = np.zeros(B)
    out_det = np.zeros(B)
    out_detrel = np.zeros(B)
    out_flip = np.zeros(B, dtype=bool)
    it_done = 0

    for it in range(max_iter):
        act = ~converged
        if not act.any():
            break
        it_done = it + 1
        idx = np.nonzero(act)[0]
        va = v_pub[idx]
        if rot:
            frame = RotSymSliceFrame(flow, base.x, v_pub=None,
                                     e_emb=frame_fixed.e_emb[idx])
        else:
            frame = make_frame(flow, base.x, va)
        Xw0 = frame.to_work(base.x[None])
        if len(Xw0) == 1 and len(idx) > 1:
            Xw0 = np.broadcast_to(Xw0[0], (len(idx), Xw0.shape[1])).copy()
        Vw = frame.vel_to_work(base.x[None], va)
        basis = _sens_basis(flow, frame, base, len(idx), E_pub)
        res = integrate_batch(frame, base.time, Xw0, Vw, tau, steps,
                              sens_basis=basis)
        tw = frame.to_work(target_pub[idx])
        r = frame.wrap_residual(res.X_end.copy(), tw)
        gdiag = np.maximum(frame.metric_diag_work(t_end, res.X_end), 1e-300)
        D = np.sqrt(gdiag)
        rs = r * D
        rn = np.linalg.norm(rs, axis=1)
        rn = np.where(res.valid & np.isfinite(rn), rn, np.inf)

        improved = rn < best_r[idx]
        lam[idx] = np.where(improved, np.maximum(lam[idx] / 3.0, 1e-13),
                            np.minimum(lam[idx] * 5.0, 1e8))
        gi = idx[improved]
        best_r[gi] = rn[improved]
        best_v[gi] = va[improved]
        out_L[gi] = res.L_end[improved]
        det_full = _full_det(flow, frame, base, tau, res, Vw)
        out_det[gi] = det_full[improved]
        with np.errstate(invalid="ignore"):
            drel = np.where(res.det_max > 0, np.abs(res.det_end) / res.det_max, 0.0)
        out_detrel[gi] = drel[improved]
        out_flip[gi] = res.det_sign_flip[improved]

        conv_now = rn <= tol_len
        converged[idx[conv_now]] = True

        q = basis.shape[2]
        J = res.SX * D[:, :, None]
        JT_r = np.einsum("bmq,bm->bq", J, rs)
        H = np.einsum("bmq,bmp->bqp", J, J)
        H = H + (lam[idx] * (1e-12 + np.einsum("bqq->b", H)))[:, None, None] * np.eye(q)[None]
        ok = np.isfinite(H).all(axis=(1, 2)) & np.isfinite(JT_r).all(axis=1)
        delta = np.zeros((len(idx), q))
        if ok.any():
            try:
                delta[ok] = np.linalg.solve(H[ok], JT_r[ok][..., None])[..., 0]
            except np.linalg.LinAlgError:
                delta[ok] = np.einsum("bqp,bp->bq", np.linalg.pinv(H[ok]), JT_r[ok])
        start_v = np.where(improved[:, None], va, best_v[idx])
        if rot:
            Vw_start = frame.vel_to_work(base.x[None], start_v)
            Vw_new = Vw_start - np.einsum("bmq,bq->bm", basis, delta)
            v_new = frame.vel_from_work(Xw0, Vw_new)
        else:
            v_new = start_v - np.einsum("ij,bj->bi", E_pub, delta)
        v_new = np.where(np.isfinite(v_new), v_new, start_v)
        v_pub[idx] = np.where(conv_now[:, None], v_pub[idx], v_new)

    return RefineOutcome(v_pub=best_v, converged=converged, resid=best_r,
                         L=out_L, det_end=out_det, det_rel=out_detrel,
                         sign_flip=out_flip, iterations=it_done)


def _rotsym_target_dirs(flow, base, target_pub):
    """Unit in-block tangents at the base pointing toward each target."""
    u0 = geom.sphere_embed(np.asarray(base.x)[None, 1:])[0]
    ut = geom.sphere_embed(np.atleast_2d(target_pub)[:, 1:])
    e = ut - (ut @ u0)[:, None] * u0[None, :]
    nrm = np.linalg.norm(e, axis=1)
    fallback = geom.orthonormal_complement(np.broadcast_to(u0, ut.shape))
    return np.where((nrm > 1e-12)[:, None],
                    e / np.where(nrm == 0, 1.0, nrm)[:, None], fallback)


def minimize(flow: FlowBackend, base: SpaceTimePoint, target: SpaceTimePoint,
             opts: MinimizeOptions = MinimizeOptions()) -> MinGeodesicResult:
    """Find the minimizing L-geodesic from base to target by multi-start shooting.

    Starts are seeded from the time-slice log map scaled by 1/(2 sqrt(tau))
    plus random perturbations; each is refined by damped Gauss-Newton on
    endpoint mismatch, duplicates merged by v-distance, and the least-L
    solution returned (lexicographically smallest v on ties, which are
    flagged as cut locus together with vanishing Jacobians).
    """
    flow._check_point(base)
    flow._check_point(target)
    if not target.time < base.time:
        raise InvalidInputError("target must lie strictly in the past of the base")
    tau = base.time - target.time
    sq = np.sqrt(tau)
    tol_len = 1e-8 * (1.0 + flow.length_scale(target.time))

    log0 = flow.time_slice_log(target.time, base.x, target.x[None])[0]
    seed = log0 / (2.0 * sq)
    E_pub = _orth_basis_pub(flow, base)
    g = flow.metric_components(base.time, base.x[None])[0]
    seed_norm = float(np.sqrt(max(seed @ g @ seed, 0.0)))

    key = abs(hash((tuple(base.coords), base.time,
                    tuple(target.coords), target.time))) % (2 ** 32)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=opts.seed,
                                                       spawn_key=(key,)))
    n = flow.dim
    starts = [seed]
    n_loc = max(0, (opts.n_starts - 1) // 2)
    for _ in range(n_loc):
        starts.append(seed + E_pub @ rng.normal(
            scale=opts.perturb_scale * (0.2 + 0.3 * seed_norm), size=n))
    while len(starts) < opts.n_starts:
        d = rng.normal(size=n)
        d /= np.linalg.norm(d)
        mag = rng.uniform(0.3, 1.5) * (seed_norm + 0.5)
        starts.append(E_pub @ (d * mag))
    v0 = np.array(starts)

    out = refine_batch(flow, base, target.x[None], tau, v0,
                       steps=opts.steps, max_iter=opts.max_iter, tol_len=tol_len)
    conv = out.converged
    if not conv.any():
        raise MinimizationError(
            "no shooting start converged to the target",
            diagnostics={"best_residual": float(np.min(out.resid)),
                         "tol": tol_len, "starts": opts.n_starts})

    vs = out.v_pub[conv]
    Lc = out.L[conv]
    conv_idx = np.nonzero(conv)[0]
    L_best = float(np.min(Lc))

    # cluster converged minimizers by v-distance (orthonormal components)
    Einv = np.linalg.inv(E_pub)
    vo = vs @ Einv.T
    reps = []
    for i in np.argsort(Lc, kind="stable"):
        if all(np.linalg.norm(vo[i] - vo[j]) >
               opts.merge_tol * (1 + np.linalg.norm(vo[j])) for j in reps):
            reps.append(i)
    n_minima = len(reps)
    tie = [i for i in reps if Lc[i] <= L_best + opts.tie_rel_tol * (1.0 + abs(L_best))]
    i_star = sorted(tie, key=lambda i: tuple(vs[i]))[0]
    gstar = conv_idx[i_star]

    on_cut = (len(tie) > 1) or bool(out.sign_flip[gstar]) \
        or (out.det_rel[gstar] < opts.det_rel_tol)
    L_value = float(Lc[i_star])
    return MinGeodesicResult(
        ell=L_value / (2.0 * sq), L_value=L_value,
        v_star=ShootVector(tuple(vs[i_star])),
        n_minima=n_minima, on_cut_locus=bool(on_cut), tau=tau,
        endpoint_error=float(out.resid[gstar]),
        det_jacobian=float(out.det_end[gstar]),
        diagnostics={"n_converged": int(conv.sum()), "ties": len(tie),
                     "iterations": out.iterations})


def reduced_distance(flow: FlowBackend, base: SpaceTimePoint,
                     target: SpaceTimePoint,
                     opts: MinimizeOptions = MinimizeOptions()) -> float:
    """Perelman reduced distance ell from base to target (delegates to minimize)."""
    return minimize(flow, base, target, opts).ell
