"""Model Ricci flow backends.

Each backend is an immutable space-time geometry exposing metric, connection
and curvature data in a fixed chart, together with time-slice distance and
ball-volume utilities.  Closed-form models:

  * EuclideanStatic   -- flat R^n, static.
  * ShrinkingSphere   -- round S^n with rho(t)^2 = 2(n-1)(T-t).
  * ShrinkingCylinder -- S^{n-1} x R with sphere radius^2 = 2(n-2)(T-t).

The numeric backend (RotSymNumeric) is produced by the rotationally
symmetric solver in :mod:`lgeo_lab.rotsym` and queries interpolated profile
data.  |Rm| is the maximum absolute sectional curvature over the model's
principal planes everywhere in this package.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geom
from .errors import ChartError, InvalidInputError, TimeOutOfDomainError

DEFAULT_T_CAP = 100.0


@dataclass(frozen=True)
class TimeDomain:
    """Real interval of valid flow times; hi may be exclusive (singular time)."""

    lo: float
    hi: float
    open_hi: bool = False

    def contains(self, t: float) -> bool:
        if self.open_hi:
            return self.lo <= t < self.hi
        return self.lo <= t <= self.hi

    def contains_interval(self, a: float, b: float) -> bool:
        return self.contains(a) and self.contains(b) and a <= b

    def as_tuple(self):
        return (self.lo, self.hi, self.open_hi)


@dataclass(frozen=True)
class SpaceTimePoint:
    """Chart coordinates plus a time stamp inside the flow's time domain."""

    coords: tuple
    time: float

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))
        object.__setattr__(self, "time", float(self.time))

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class MetricSample:
    components: np.ndarray  # (n, n), symmetric positive definite
    volume_density: float   # sqrt(det g)


@dataclass(frozen=True)
class CurvatureSample:
    scalar: float
    ricci: np.ndarray       # (n, n)
    grad_scalar: np.ndarray  # (n,), chart components of grad R (index raised)
    rm_norm: float          # max |sectional| over principal planes


@dataclass(frozen=True)
class ConnectionSample:
    christoffels: np.ndarray  # (n, n, n), Gamma^k_{ij} indexed [k, i, j]


class FlowBackend(abc.ABC):
    """Immutable queryable Ricci flow geometry."""

    kind: str
    dim: int

    @abc.abstractmethod
    def time_domain(self) -> TimeDomain: ...

    def _check_time(self, t: float):
        if not self.time_domain().contains(t):
            raise TimeOutOfDomainError(
                f"time {t} outside domain {self.time_domain().as_tuple()} of {self.kind}"
            )

    def _check_point(self, p: SpaceTimePoint):
        self._check_time(p.time)
        self.check_chart(p.x)

    def check_chart(self, x: np.ndarray):
        """Raise ChartError when coords are outside the chart. Default: accept."""

    # ---- batched geometry (chart components); X has shape (B, n) ----
    @abc.abstractmethod
    def metric_components(self, t: float, X: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def christoffel_components(self, t: float, X: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def curvature_components(self, t: float, X: np.ndarray):
        """Return (R (B,), ricci (B,n,n), gradR_up (B,n), rm (B,))."""

    # ---- public single-point API ----
    def metric_at(self, p: SpaceTimePoint) -> MetricSample:
        self._check_point(p)
        g = self.metric_components(p.time, p.x[None])[0]
        det = float(np.linalg.det(g))
        return MetricSample(components=g, volume_density=float(np.sqrt(max(det, 0.0))))

    def curvature_at(self, p: SpaceTimePoint) -> CurvatureSample:
        self._check_point(p)
        R, ric, gradR, rm = self.curvature_components(p.time, p.x[None])
        return CurvatureSample(scalar=float(R[0]), ricci=ric[0],
                               grad_scalar=gradR[0], rm_norm=float(rm[0]))

    def christoffel_at(self, p: SpaceTimePoint) -> ConnectionSample:
        self._check_point(p)
        return ConnectionSample(christoffels=self.christoffel_components(p.time, p.x[None])[0])

    @abc.abstractmethod
    def distance_at(self, t: float, p, q) -> float:
        """Riemannian distance in (M, g_t) between chart points p, q."""

    @abc.abstractmethod
    def ball_volume(self, t: float, center, r: float) -> float:
        """Riemannian volume of B_{g_t}(center, r)."""

    # ---- helpers used by the geodesic and field machinery ----
    @abc.abstractmethod
    def length_scale(self, t: float) -> float:
        """Characteristic length of the time slice (tolerance scaling)."""

    @abc.abstractmethod
    def time_slice_log(self, t: float, base: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """Riemannian log map at `base` in g_t, batched over targets (B, n)."""

    def rm_sup_bound(self, t: float) -> float:
        """Spatial sup of |Rm| on the slice (used by CFL-style heuristics)."""
        R, _, _, rm = self.curvature_components(t, self.sample_points(t, 8))
        return float(np.max(rm))

    def sample_points(self, t: float, k: int) -> np.ndarray:
        """A deterministic spread of chart points (for sup-sampling)."""
        rng = np.random.default_rng(0)
        return self.random_points(rng, k)

    @abc.abstractmethod
    def random_points(self, rng, k: int) -> np.ndarray:
        """k random chart points, for property tests."""

    def flow_id(self) -> str:
        return self.kind


# --------------------------------------------------------------------------
# Euclidean static space
# --------------------------------------------------------------------------

class EuclideanStatic(FlowBackend):
    """Static flat R^n in Cartesian coordinates; time domain [-T_cap, T_cap]."""

    def __init__(self, n: int = 3, t_cap: float = DEFAULT_T_CAP):
        if n < 2:
            raise InvalidInputError("dimension must be >= 2")
        self.kind = "euclidean"
        self.dim = int(n)
        self.t_cap = float(t_cap)

    def time_domain(self) -> TimeDomain:
        return TimeDomain(-self.t_cap, self.t_cap)

    def metric_components(self, t, X):
        B = len(np.atleast_2d(X))
        return np.broadcast_to(np.eye(self.dim), (B, self.dim, self.dim)).copy()

    def christoffel_components(self, t, X):
        B = len(np.atleast_2d(X))
        return np.zeros((B, self.dim, self.dim, self.dim))

    def curvature_components(self, t, X):
        B = len(np.atleast_2d(X))
        z = np.zeros(B)
        return z, np.zeros((B, self.dim, self.dim)), np.zeros((B, self.dim)), z.copy()

    def distance_at(self, t, p, q):
        self._check_time(t)
        return float(np.linalg.norm(np.asarray(q, dtype=float) - np.asarray(p, dtype=float)))

    def ball_volume(self, t, center, r):
        self._check_time(t)
        if r <= 0:
            raise InvalidInputError("ball radius must be positive")
        return geom.unit_ball_volume(self.dim) * r ** self.dim

    def length_scale(self, t):
        return 1.0

    def time_slice_log(self, t, base, targets):
        return np.atleast_2d(targets) - np.asarray(base, dtype=float)[None, :]

    def random_points(self, rng, k):
        return rng.uniform(-3.0, 3.0, size=(k, self.dim))


# --------------------------------------------------------------------------
# Shrinking round sphere
# --------------------------------------------------------------------------

class ShrinkingSphere(FlowBackend):
    """Round S^n shrinking to a point at time T; rho(t)^2 = 2(n-1)(T-t).

    Chart: hyperspherical coordinates about a fixed pole, angles
    (t1..t_{n-1}) in (0, pi) and t_n periodic.  Christoffels are those of the
    unit sphere (scale invariant).
    """

    def __init__(self, n: int = 3, T: float = 1.0, t_cap: float = DEFAULT_T_CAP):
        if n < 2:
            raise InvalidInputError("dimension must be >= 2")
        self.kind = "shrinking_sphere"
        self.dim = int(n)
        self.T = float(T)
        self.t_cap = float(t_cap)

    def time_domain(self) -> TimeDomain:
        return TimeDomain(self.T - self.t_cap, self.T, open_hi=True)

    def radius2(self, t: float):
        return 2.0 * (self.dim - 1) * (self.T - t)

    def radius(self, t: float) -> float:
        return float(np.sqrt(self.radius2(t)))

    def check_chart(self, x):
        x = np.asarray(x, dtype=float)
        if len(x) != self.dim:
            raise ChartError(f"expected {self.dim} coordinates, got {len(x)}")
        if np.any(x[:-1] < -1e-12) or np.any(x[:-1] > np.pi + 1e-12):
            raise ChartError("polar angles must lie in [0, pi]")

    def metric_components(self, t, X):
        X = np.atleast_2d(X)
        diag = geom.sphere_metric_diag(X) * self.radius2(t)
        B, m = diag.shape
        g = np.zeros((B, m, m))
        idx = np.arange(m)
        g[:, idx, idx] = diag
        return g

    def christoffel_components(self, t, X):
        return geom.sphere_christoffels(np.atleast_2d(X))

    def curvature_components(self, t, X):
        X = np.atleast_2d(X)
        B = len(X)
        n = self.dim
        R = np.full(B, n / (2.0 * (self.T - t)))
        ric = (n - 1) / self.radius2(t) * self.metric_components(t, X)
        rm = np.full(B, 1.0 / self.radius2(t))
        return R, ric, np.zeros((B, n)), rm

    def distance_at(self, t, p, q):
        self._check_time(t)
        u = geom.sphere_embed(np.asarray(p, dtype=float)[None])[0]
        w = geom.sphere_embed(np.asarray(q, dtype=float)[None])[0]
        return self.radius(t) * float(geom.sphere_angle(u[None], w[None])[0])

    def ball_volume(self, t, center, r):
        self._check_time(t)
        if r <= 0:
            raise InvalidInputError("ball radius must be positive")
        rho = self.radius(t)
        u_max = min(r / rho, np.pi)
        area = geom.unit_sphere_area(self.dim - 1)
        return area * rho ** self.dim * geom.sin_power_integral(self.dim - 1,
                                                                0.0, u_max)

    def total_volume(self, t: float) -> float:
        return geom.unit_sphere_area(self.dim) * self.radius(t) ** self.dim

    def length_scale(self, t):
        return np.pi * self.radius(t)

    def time_slice_log(self, t, base, targets):
        base = np.asarray(base, dtype=float)
        targets = np.atleast_2d(targets)
        u0 = geom.sphere_embed(base[None])[0]
        u1 = geom.sphere_embed(targets)
        ang = geom.sphere_angle(np.broadcast_to(u0, u1.shape), u1)
        # unit tangent at base toward each target (embedding)
        tang = u1 - np.cos(ang)[:, None] * u0[None, :]
        nrm = np.linalg.norm(tang, axis=1)
        safe = nrm > 1e-14
        tang = np.where(safe[:, None], tang / np.where(nrm == 0, 1.0, nrm)[:, None], 0.0)
        # chart components of the unit-sphere log; g-length is then rho*angle
        return geom.sphere_vel_from_embedding(
            np.broadcast_to(base, targets.shape).copy(), ang[:, None] * tang)

    def random_points(self, rng, k):
        y = rng.normal(size=(k, self.dim + 1))
        y /= np.linalg.norm(y, axis=1)[:, None]
        th = geom.sphere_unembed(y)
        # keep clear of the chart's polar axis for derivative-based tests
        th[:, :-1] = np.clip(th[:, :-1], 0.25, np.pi - 0.25)
        return th


# --------------------------------------------------------------------------
# Shrinking round cylinder
# --------------------------------------------------------------------------

class ShrinkingCylinder(FlowBackend):
    """S^{n-1} x R with sphere factor radius^2 = 2(n-2)(T-t), axis static.

    Chart: (block hyperspherical angles (n-1 of them), axial z).
    """

    def __init__(self, n: int = 3, T: float = 1.0, t_cap: float = DEFAULT_T_CAP):
        if n < 3:
            raise InvalidInputError("cylinder needs n >= 3 (sphere block dim >= 2)")
        self.kind = "shrinking_cylinder"
        self.dim = int(n)
        self.T = float(T)
        self.t_cap = float(t_cap)
        self.block = self.dim - 1  # sphere S^{block}

    def time_domain(self) -> TimeDomain:
        return TimeDomain(self.T - self.t_cap, self.T, open_hi=True)

    def radius2(self, t: float):
        return 2.0 * (self.dim - 2) * (self.T - t)

    def radius(self, t: float) -> float:
        return float(np.sqrt(self.radius2(t)))

    def check_chart(self, x):
        x = np.asarray(x, dtype=float)
        if len(x) != self.dim:
            raise ChartError(f"expected {self.dim} coordinates, got {len(x)}")

    def _split(self, X):
        X = np.atleast_2d(X)
        return X[:, : self.block], X[:, self.block]

    def metric_components(self, t, X):
        th, _ = self._split(X)
        diag_block = geom.sphere_metric_diag(th) * self.radius2(t)
        B = len(th)
        g = np.zeros((B, self.dim, self.dim))
        idx = np.arange(self.block)
        g[:, idx, idx] = diag_block
        g[:, self.dim - 1, self.dim - 1] = 1.0
        return g

    def christoffel_components(self, t, X):
        th, _ = self._split(X)
        B = len(th)
        gam = np.zeros((B, self.dim, self.dim, self.dim))
        gam[:, : self.block, : self.block, : self.block] = geom.sphere_christoffels(th)
        return gam

    def curvature_components(self, t, X):
        X = np.atleast_2d(X)
        B = len(X)
        n = self.dim
        R = np.full(B, (n - 1) / (2.0 * (self.T - t)))
        ric = np.zeros((B, n, n))
        gblock = self.metric_components(t, X)[:, : self.block, : self.block]
        ric[:, : self.block, : self.block] = (n - 2) / self.radius2(t) * gblock
        rm = np.full(B, 1.0 / self.radius2(t))
        return R, ric, np.zeros((B, n)), rm

    def distance_at(self, t, p, q):
        self._check_time(t)
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        u = geom.sphere_embed(p[None, : self.block])[0]
        w = geom.sphere_embed(q[None, : self.block])[0]
        d_block = self.radius(t) * float(geom.sphere_angle(u[None], w[None])[0])
        dz = q[self.block] - p[self.block]
        return float(np.hypot(d_block, dz))

    def ball_volume(self, t, center, r):
        self._check_time(t)
        if r <= 0:
            raise InvalidInputError("ball radius must be positive")
        rs = self.radius(t)
        m = self.block
        area = geom.unit_sphere_area(m - 1)

        def block_ball_area(rr):
            # geodesic ball area inside S^m(rs)
            if rr <= 0:
                return 0.0
            umax = min(rr / rs, np.pi)
            return area * rs ** m * geom.sin_power_integral(m - 1, 0.0, umax)

        z = np.linspace(-r, r, 513)
        vals = np.array([block_ball_area(np.sqrt(max(r * r - zz * zz, 0.0)))
                         for zz in z])
        return float(np.sum(geom.simpson_weights(z) * vals))

    def length_scale(self, t):
        return np.pi * self.radius(t) + 1.0

    def time_slice_log(self, t, base, targets):
        base = np.asarray(base, dtype=float)
        targets = np.atleast_2d(targets)
        out = np.zeros_like(targets)
        u0 = geom.sphere_embed(base[None, : self.block])[0]
        u1 = geom.sphere_embed(targets[:, : self.block])
        ang = geom.sphere_angle(np.broadcast_to(u0, u1.shape), u1)
        tang = u1 - np.cos(ang)[:, None] * u0[None, :]
        nrm = np.linalg.norm(tang, axis=1)
        tang = np.where((nrm > 1e-14)[:, None], tang / np.where(nrm == 0, 1.0, nrm)[:, None], 0.0)
        out[:, : self.block] = geom.sphere_vel_from_embedding(
            np.broadcast_to(base[: self.block], (len(targets), self.block)).copy(),
            ang[:, None] * tang)
        out[:, self.block] = targets[:, self.block] - base[self.block]
        return out

    def random_points(self, rng, k):
        y = rng.normal(size=(k, self.block + 1))
        y /= np.linalg.norm(y, axis=1)[:, None]
        th = geom.sphere_unembed(y)
        z = rng.uniform(-3.0, 3.0, size=(k, 1))
        return np.hstack([th, z])


# --------------------------------------------------------------------------
# Rotationally symmetric numeric backend
# --------------------------------------------------------------------------

@dataclass
class RotSymProfileData:
    """Solved warped-product profile on the fixed grid x in [0,1]."""

    n: int
    grid: np.ndarray      # (m+1,)
    times: np.ndarray     # (K,)
    psi: np.ndarray       # (K, m+1) warping factor, 0 at poles
    phi: np.ndarray       # (K, m+1) radial factor, > 0


class RotSymNumeric(FlowBackend):
    """Backend over a solved rotationally symmetric profile on S^n.

    Chart: (x, block angles) with x in [0,1] the solver's profile coordinate
    and metric phi(x,t)^2 dx^2 + psi(x,t)^2 g_{S^{n-1}}.  Metric components
    are interpolated linearly in t (as squares, exact for the round
    solution) and by cubic spline in x.
    """

    POLE_MARGIN = 0.01  # chart queries within this much of a pole are rejected

    def __init__(self, data: RotSymProfileData):
        self.kind = "rotsym"
        self.dim = int(data.n)
        self.block = self.dim - 1
        self.data = data
        self._spline_cache = {}
        self._dist_cache = {}

    def time_domain(self) -> TimeDomain:
        return TimeDomain(float(self.data.times[0]), float(self.data.times[-1]))

    # -- profile interpolation -------------------------------------------
    def _profiles_at(self, t: float):
        """Cubic splines of psi and phi at time t (cached)."""
        key = float(t)
        if key in self._spline_cache:
            return self._spline_cache[key]
        from scipy.interpolate import CubicSpline

        times = self.data.times
        j = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
        w = (t - times[j]) / (times[j + 1] - times[j])
        w = float(np.clip(w, 0.0, 1.0))
        psi2 = (1 - w) * self.data.psi[j] ** 2 + w * self.data.psi[j + 1] ** 2
        phi2 = (1 - w) * self.data.phi[j] ** 2 + w * self.data.phi[j + 1] ** 2
        psi = np.sqrt(np.maximum(psi2, 0.0))
        phi = np.sqrt(np.maximum(phi2, 1e-300))
        sp_psi = CubicSpline(self.data.grid, psi)
        sp_phi = CubicSpline(self.data.grid, phi)
        if len(self._spline_cache) > 512:
            self._spline_cache.clear()
        self._spline_cache[key] = (sp_psi, sp_phi)
        return sp_psi, sp_phi

    def profile_values(self, t: float, x: np.ndarray):
        """(psi, psi_x, psi_xx, phi, phi_x) at chart coordinate x."""
        sp_psi, sp_phi = self._profiles_at(t)
        x = np.asarray(x, dtype=float)
        return (sp_psi(x), sp_psi(x, 1), sp_psi(x, 2), sp_phi(x), sp_phi(x, 1))

    def check_chart(self, xc):
        xc = np.asarray(xc, dtype=float)
        if len(xc) != self.dim:
            raise ChartError(f"expected {self.dim} coordinates, got {len(xc)}")
        if not (self.POLE_MARGIN <= xc[0] <= 1.0 - self.POLE_MARGIN):
            raise ChartError(
                f"profile coordinate {xc[0]} outside resolved region "
                f"[{self.POLE_MARGIN}, {1 - self.POLE_MARGIN}]")

    def _split(self, X):
        X = np.atleast_2d(X)
        return X[:, 0], X[:, 1:]

    def metric_components(self, t, X):
        x, th = self._split(X)
        psi, _, _, phi, _ = self.profile_values(t, x)
        B = len(x)
        g = np.zeros((B, self.dim, self.dim))
        g[:, 0, 0] = phi ** 2
        diag_block = geom.sphere_metric_diag(th) * (psi ** 2)[:, None]
        idx = np.arange(self.block)
        g[:, idx + 1, idx + 1] = diag_block
        return g

    def christoffel_components(self, t, X):
        x, th = self._split(X)
        psi, psi_x, _, phi, phi_x = self.profile_values(t, x)
        B = len(x)
        gam = np.zeros((B, self.dim, self.dim, self.dim))
        gam[:, 0, 0, 0] = phi_x / phi
        # Gamma^x_{ab} = -(psi psi_x / phi^2) ghat_ab ; Gamma^a_{xb} = (psi_x/psi) delta
        ghat = geom.sphere_metric_diag(th)
        for a in range(self.block):
            gam[:, 0, a + 1, a + 1] = -(psi * psi_x / phi ** 2) * ghat[:, a]
            gam[:, a + 1, 0, a + 1] = psi_x / psi
            gam[:, a + 1, a + 1, 0] = psi_x / psi
        gam[:, 1:, 1:, 1:] += geom.sphere_christoffels(th)
        return gam

    def sectional_curvatures(self, t, x):
        """(K0, K1): radial-plane and block-plane sectional curvatures at x."""
        psi, psi_x, psi_xx, phi, phi_x = self.profile_values(t, np.asarray(x, dtype=float))
        psi_s = psi_x / phi
        psi_ss = psi_xx / phi ** 2 - phi_x * psi_x / phi ** 3
        K0 = -psi_ss / psi
        K1 = (1.0 - psi_s ** 2) / psi ** 2
        return K0, K1

    def scalar_curvature(self, t, x):
        K0, K1 = self.sectional_curvatures(t, x)
        n = self.dim
        return 2 * (n - 1) * K0 + (n - 1) * (n - 2) * K1

    def curvature_components(self, t, X):
        x, th = self._split(X)
        B = len(x)
        n = self.dim
        K0, K1 = self.sectional_curvatures(t, x)
        R = 2 * (n - 1) * K0 + (n - 1) * (n - 2) * K1
        ric = np.zeros((B, n, n))
        psi, _, _, phi, _ = self.profile_values(t, x)
        r_rad = (n - 1) * K0               # Ric(e_s, e_s)
        r_blk = K0 + (n - 2) * K1          # Ric(e_a, e_a)
        ric[:, 0, 0] = r_rad * phi ** 2
        ghat = geom.sphere_metric_diag(th)
        for a in range(self.block):
            ric[:, a + 1, a + 1] = r_blk * psi ** 2 * ghat[:, a]
        # grad R: only the radial component; centered difference on the grid scale
        h = 0.5 * (self.data.grid[1] - self.data.grid[0])
        xp = np.clip(x + h, 0.0, 1.0)
        xm = np.clip(x - h, 0.0, 1.0)
        dR = (self.scalar_curvature(t, xp) - self.scalar_curvature(t, xm)) / (xp - xm)
        gradR = np.zeros((B, n))
        gradR[:, 0] = dR / phi ** 2  # index raised with g^{xx}
        rm = np.maximum(np.abs(K0), np.abs(K1))
        return R, ric, gradR, rm

    # -- distance via Dijkstra on the (s, alpha) surface of revolution ----
    def _surface_graph(self, t: float, ns: int = 181, na: int = 121):
        key = (float(t), ns, na)
        if key in self._dist_cache:
            return self._dist_cache[key]
        xs = np.linspace(0.0, 1.0, ns)
        sp_psi, sp_phi = self._profiles_at(t)
        psi = np.maximum(sp_psi(xs), 0.0)
        phi = sp_phi(xs)
        # arclength coordinate of each x node
        ds_seg = 0.5 * (phi[1:] + phi[:-1]) * np.diff(xs)
        s = np.concatenate([[0.0], np.cumsum(ds_seg)])
        alphas = np.linspace(0.0, np.pi, na)
        if len(self._dist_cache) > 8:
            self._dist_cache.clear()
        self._dist_cache[key] = (xs, s, psi, alphas)
        return self._dist_cache[key]

    def _surface_distance(self, t, x0, a0, x1, a1):
        """Geodesic distance on the 2D warped slice ds^2 + psi^2 dalpha^2.

        Dijkstra on a (s, alpha) lattice with an extended stencil, followed by
        elastic relaxation of the extracted polyline.
        """
        import heapq

        xs, s, psi, alphas = self._surface_graph(t)
        ns, na = len(s), len(alphas)

        def node_id(i, j):
            return i * na + j

        i0 = int(np.argmin(np.abs(xs - x0)))
        j0 = int(np.argmin(np.abs(alphas - a0)))
        i1 = int(np.argmin(np.abs(xs - x1)))
        j1 = int(np.argmin(np.abs(alphas - a1)))

        offsets = [(di, dj) for di in range(-3, 4) for dj in range(-3, 4)
                   if (di, dj) != (0, 0) and np.gcd(abs(di), abs(dj)) == 1]

        dist = np.full(ns * na, np.inf)
        start = node_id(i0, j0)
        dist[start] = 0.0
        heap = [(0.0, start)]
        goal = node_id(i1, j1)
        prev = {}
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            if u == goal:
                break
            ui, uj = divmod(u, na)
            for di, dj in offsets:
                vi, vj = ui + di, uj + dj
                if not (0 <= vi < ns and 0 <= vj < na):
                    continue
                v = node_id(vi, vj)
                dsg = s[vi] - s[ui]
                psim = 0.5 * (psi[ui] + psi[vi])
                dal = (alphas[vj] - alphas[uj]) * psim
                w = float(np.hypot(dsg, dal))
                nd = d + w
                if nd < dist[v] - 1e-15:
                    dist[v] = nd
                    prev[v] = u
                    heapq.heappush(heap, (nd, v))

        # extract and relax the path for sub-grid accuracy
        path = [goal]
        while path[-1] != start and path[-1] in prev:
            path.append(prev[path[-1]])
        path = path[::-1]
        pts = np.array([(s[p // na], alphas[p % na]) for p in path])
        pts[0] = (np.interp(x0, xs, s), a0)
        pts[-1] = (np.interp(x1, xs, s), a1)
        return self._relax_path(t, pts, s)

    def _relax_path(self, t, pts, s_nodes, iters: int = 120):
        """Shorten a polyline in the (s, alpha) metric by local descent."""
        xs, s, psi, _ = self._surface_graph(t)

        def seg_len(P):
            mid_s = 0.5 * (P[1:, 0] + P[:-1, 0])
            psim = np.interp(mid_s, s, psi)
            dss = np.diff(P[:, 0])
            daa = np.diff(P[:, 1]) * psim
            return np.hypot(dss, daa)

        # resample to a uniform polyline
        L = np.concatenate([[0.0], np.cumsum(seg_len(pts))])
        if L[-1] <= 0:
            return 0.0
        K = 96
        u = np.linspace(0.0, L[-1], K)
        P = np.column_stack([np.interp(u, L, pts[:, 0]), np.interp(u, L, pts[:, 1])])
        step = L[-1] / K
        for _ in range(iters):
            moved = False
            for axis in (0, 1):
                Q = P.copy()
                # midpoint smoothing step toward neighbours, projected descent
                mid = 0.5 * (P[:-2] + P[2:])
                Q[1:-1, axis] = P[1:-1, axis] + 0.5 * (mid[:, axis] - P[1:-1, axis])
                Q[:, 0] = np.clip(Q[:, 0], s[0], s[-1])
                Q[:, 1] = np.clip(Q[:, 1], 0.0, np.pi)
                if seg_len(Q).sum() < seg_len(P).sum() - 1e-14 * step:
                    P = Q
                    moved = True
            if not moved:
                break
        return float(seg_len(P).sum())

    def arclength_of(self, t: float, x: float) -> float:
        xs, s, _, _ = self._surface_graph(t)
        return float(np.interp(x, xs, s))

    def x_of_arclength(self, t: float, sv: float) -> float:
        xs, s, _, _ = self._surface_graph(t)
        return float(np.interp(sv, s, xs))

    def total_arclength(self, t: float) -> float:
        _, s, _, _ = self._surface_graph(t)
        return float(s[-1])

    def distance_at(self, t, p, q):
        self._check_time(t)
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        u = geom.sphere_embed(p[None, 1:])[0]
        w = geom.sphere_embed(q[None, 1:])[0]
        ang = float(geom.sphere_angle(u[None], w[None])[0])
        return self._surface_distance(t, p[0], 0.0, q[0], ang)

    def ball_volume(self, t, center, r):
        self._check_time(t)
        if r <= 0:
            raise InvalidInputError("ball radius must be positive")
        center = np.asarray(center, dtype=float)
        xs, s, psi, alphas = self._surface_graph(t)
        if r <= 10.0 * (s[-1] - s[0]) / (len(s) - 1):
            return self._local_ball_volume(t, center, r)
        # distance field from center via Dijkstra over the whole lattice
        dist = self._distance_field(t, center[0])
        n = self.dim
        # full-manifold measure: psi^{n-1} ds * sin^{n-2}(alpha) dalpha * A_{n-2}
        A = geom.unit_sphere_area(n - 2)
        W = (psi[:, None] ** (n - 1)) * np.sin(alphas)[None, :] ** (n - 2)
        inside = dist <= r
        ws = np.gradient(s)
        wa = np.gradient(alphas)
        vol = A * np.sum(W * inside * ws[:, None] * wa[None, :])
        return float(vol)

    def _local_ball_volume(self, t, center, r):
        """Small balls (below the Dijkstra lattice scale): dense 1D slice
        quadrature with the short-distance metric d^2 ~ ds^2 + psi^2 dalpha^2."""
        n = self.dim
        s0 = self.arclength_of(t, center[0])
        svals = np.linspace(s0 - r, s0 + r, 401)
        svals = np.clip(svals, 0.0, self.total_arclength(t))
        xv = np.array([self.x_of_arclength(t, sv) for sv in svals])
        psi = np.maximum(self.profile_values(t, xv)[0], 1e-12)
        ds = svals - s0
        amax = np.minimum(np.sqrt(np.maximum(r * r - ds * ds, 0.0)) / psi, np.pi)
        if n == 3:
            cap = 1.0 - np.cos(amax)  # int_0^a sin
        else:
            cap = np.array([geom.sin_power_integral(n - 2, 0.0, a)
                            for a in amax])
        dens = geom.unit_sphere_area(n - 2) * psi ** (n - 1) * cap
        return float(np.trapezoid(dens, svals))

    def _distance_field(self, t, x0):
        """Distances from (x0, alpha=0) to all lattice nodes (ns, na)."""
        import heapq

        key = ("field", float(t), float(x0))
        if key in self._dist_cache:
            return self._dist_cache[key]
        xs, s, psi, alphas = self._surface_graph(t)
        ns, na = len(s), len(alphas)
        offsets = [(di, dj) for di in range(-2, 3) for dj in range(-2, 3)
                   if (di, dj) != (0, 0) and np.gcd(abs(di), abs(dj)) == 1]
        i0 = int(np.argmin(np.abs(xs - x0)))
        dist = np.full((ns, na), np.inf)
        dist[i0, 0] = 0.0
        heap = [(0.0, i0, 0)]
        while heap:
            d, ui, uj = heapq.heappop(heap)
            if d > dist[ui, uj]:
                continue
            for di, dj in offsets:
                vi, vj = ui + di, uj + dj
                if not (0 <= vi < ns and 0 <= vj < na):
                    continue
                dsg = s[vi] - s[ui]
                psim = 0.5 * (psi[ui] + psi[vi])
                dal = (alphas[vj] - alphas[uj]) * psim
                nd = d + float(np.hypot(dsg, dal))
                if nd < dist[vi, vj] - 1e-15:
                    dist[vi, vj] = nd
                    heapq.heappush(heap, (nd, vi, vj))
        # pole columns: all alphas identified; propagate the pole distance
        for i in (0, ns - 1):
            dmin = dist[i].min()
            dist[i] = dmin
        self._dist_cache[key] = dist
        return dist

    def length_scale(self, t):
        return self.total_arclength(t)

    def time_slice_log(self, t, base, targets):
        """Short-distance log map approximation in the (x, block) chart."""
        base = np.asarray(base, dtype=float)
        targets = np.atleast_2d(targets)
        sp_psi, sp_phi = self._profiles_at(t)
        out = np.zeros_like(targets)
        s0 = self.arclength_of(t, base[0])
        u0 = geom.sphere_embed(base[None, 1:])[0]
        u1 = geom.sphere_embed(targets[:, 1:])
        ang = geom.sphere_angle(np.broadcast_to(u0, u1.shape), u1)
        sv = np.array([self.arclength_of(t, x) for x in targets[:, 0]])
        out[:, 0] = (sv - s0) / float(sp_phi(base[0]))
        tang = u1 - np.cos(ang)[:, None] * u0[None, :]
        nrm = np.linalg.norm(tang, axis=1)
        tang = np.where((nrm > 1e-14)[:, None], tang / np.where(nrm == 0, 1.0, nrm)[:, None], 0.0)
        # block chart components of the unit-sphere log; g-length is psi*angle
        out[:, 1:] = geom.sphere_vel_from_embedding(
            np.broadcast_to(base[1:], (len(targets), self.block)).copy(),
            ang[:, None] * tang)
        return out

    def random_points(self, rng, k):
        x = rng.uniform(self.POLE_MARGIN * 2, 1.0 - self.POLE_MARGIN * 2, size=(k, 1))
        y = rng.normal(size=(k, self.block + 1))
        y /= np.linalg.norm(y, axis=1)[:, None]
        th = geom.sphere_unembed(y)
        return np.hstack([x, th])


def make_flow(spec: dict) -> FlowBackend:
    """Construct a backend from its JSON flow spec (see cli docs)."""
    kind = spec.get("kind")
    n = int(spec.get("n", 3))
    t_cap = float(spec.get("t_cap", DEFAULT_T_CAP))
    if kind == "euclidean":
        return EuclideanStatic(n=n, t_cap=t_cap)
    if kind == "shrinking_sphere":
        return ShrinkingSphere(n=n, T=float(spec.get("T", 1.0)), t_cap=t_cap)
    if kind == "shrinking_cylinder":
        return ShrinkingCylinder(n=n, T=float(spec.get("T", 1.0)), t_cap=t_cap)
    if kind == "rotsym":
        from . import rotsym

        if "snapshot" in spec:
            return rotsym.load_snapshot(spec["snapshot"])
        return rotsym.solve_from_spec(spec)[0]
    raise InvalidInputError(f"unknown flow kind {kind!r}")
