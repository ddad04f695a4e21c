"""Hyperspherical chart utilities shared by the sphere-like backends.

Chart convention for the unit sphere S^m embedded in R^{m+1}:

    y_1     = cos t1
    y_2     = sin t1 cos t2
    ...
    y_m     = sin t1 ... sin t_{m-1} cos t_m
    y_{m+1} = sin t1 ... sin t_{m-1} sin t_m

with t_1..t_{m-1} in [0, pi] and t_m periodic.  The metric is diagonal,
g_ii = prod_{j<i} sin^2 t_j.  All functions are batched over the leading
axis.
"""

from __future__ import annotations

import numpy as np

UNIT_BALL_VOL = {}  # cache for omega_n


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n (omega_n)."""
    from scipy.special import gamma

    if n not in UNIT_BALL_VOL:
        UNIT_BALL_VOL[n] = float(np.pi ** (n / 2.0) / gamma(n / 2.0 + 1.0))
    return UNIT_BALL_VOL[n]


def unit_sphere_area(m: int) -> float:
    """Area of the unit sphere S^m in R^{m+1}."""
    from scipy.special import gamma

    return float(2.0 * np.pi ** ((m + 1) / 2.0) / gamma((m + 1) / 2.0))


def sphere_embed(theta: np.ndarray) -> np.ndarray:
    """Map hyperspherical coords (B, m) to unit vectors in R^{m+1}."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    B, m = theta.shape
    y = np.empty((B, m + 1))
    sin_prod = np.ones(B)
    for i in range(m):
        y[:, i] = sin_prod * np.cos(theta[:, i])
        sin_prod = sin_prod * np.sin(theta[:, i])
    y[:, m] = sin_prod
    return y


def sphere_unembed(y: np.ndarray) -> np.ndarray:
    """Inverse of sphere_embed; y need not be exactly unit norm."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    B, mp1 = y.shape
    m = mp1 - 1
    theta = np.empty((B, m))
    # tail norms: r_i = |(y_{i+1}, ..., y_{m+1})|
    tail = np.sqrt(np.cumsum(y[:, ::-1] ** 2, axis=1))[:, ::-1]
    for i in range(m - 1):
        theta[:, i] = np.arctan2(tail[:, i + 1], y[:, i])
    theta[:, m - 1] = np.arctan2(y[:, m], y[:, m - 1])
    return theta


def sphere_metric_diag(theta: np.ndarray) -> np.ndarray:
    """Diagonal of the unit-sphere metric, shape (B, m)."""
    theta = np.atleast_2d(theta)
    B, m = theta.shape
    g = np.ones((B, m))
    sin2 = np.ones(B)
    for i in range(m):
        g[:, i] = sin2
        sin2 = sin2 * np.sin(theta[:, i]) ** 2
    return g


def sphere_embed_jacobian(theta: np.ndarray) -> np.ndarray:
    """d(embedding)/d(theta), shape (B, m+1, m).

    Products are accumulated with the sine at the differentiated slot
    replaced by its cosine, never divided out (safe on the polar axis).
    """
    theta = np.atleast_2d(theta)
    B, m = theta.shape
    s = np.sin(theta)
    c = np.cos(theta)
    J = np.zeros((B, m + 1, m))
    for i in range(m + 1):
        # y_i = (prod_{k<i} sin t_k) * (cos t_i if i < m else 1)
        for j in range(min(i + 1, m)):
            val = np.ones(B)
            for k in range(i):
                val = val * (c[:, k] if k == j else s[:, k])
            if i < m:
                val = val * (-s[:, i] if j == i else c[:, i])
            J[:, i, j] = val
    return J


def sphere_vel_to_embedding(theta: np.ndarray, vtheta: np.ndarray) -> np.ndarray:
    """Push chart velocities (B, m) to embedding velocities (B, m+1)."""
    J = sphere_embed_jacobian(theta)
    return np.einsum("bij,bj->bi", J, np.atleast_2d(vtheta))


def sphere_vel_from_embedding(theta: np.ndarray, vemb: np.ndarray) -> np.ndarray:
    """Project embedding velocities onto chart components (J^T J = diag g)."""
    J = sphere_embed_jacobian(theta)
    g = sphere_metric_diag(theta)
    jt_v = np.einsum("bij,bi->bj", J, np.atleast_2d(vemb))
    return jt_v / g


def sphere_christoffels(theta: np.ndarray) -> np.ndarray:
    """Unit-sphere Christoffel symbols in the hyperspherical chart, (B, m, m, m).

    Nonzero entries: G^k_{jk} = G^k_{kj} = cot t_j for j < k, and
    G^k_{jj} = -(g_jj / g_kk) cot t_k for k < j.  Scale invariant, so these
    also serve any round metric rho^2 * g_unit.
    """
    theta = np.atleast_2d(theta)
    B, m = theta.shape
    g = sphere_metric_diag(theta)
    cot = np.cos(theta) / np.sin(theta)
    gam = np.zeros((B, m, m, m))
    for k in range(m):
        for j in range(k):
            gam[:, k, j, k] = cot[:, j]
            gam[:, k, k, j] = cot[:, j]
        for j in range(k + 1, m):
            gam[:, k, j, j] = -(g[:, j] / g[:, k]) * cot[:, k]
    return gam


def sphere_angle(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Angle between unit vectors, batched, numerically safe."""
    u = np.atleast_2d(u)
    w = np.atleast_2d(w)
    dot = np.clip(np.sum(u * w, axis=1), -1.0, 1.0)
    return np.arccos(dot)


def rotation_from_pairs(src_a, src_b, dst_a, dst_b):
    """Orthogonal map R of R^d with R src_a = dst_a and R src_b = dst_b.

    src_a, dst_a unit vectors; src_b, dst_b unit and orthogonal to their
    partners.  Completed deterministically by Gram-Schmidt over the standard
    basis.  Batched over the leading axis; returns (B, d, d).
    """
    src_a = np.atleast_2d(src_a)
    B, d = src_a.shape
    src_b = np.atleast_2d(src_b)
    dst_a = np.broadcast_to(np.atleast_2d(dst_a), (B, d))
    dst_b = np.broadcast_to(np.atleast_2d(dst_b), (B, d))

    def complete(a, b):
        basis = np.empty((B, d, d))
        basis[:, 0] = a
        basis[:, 1] = b
        count = np.full(B, 2)
        for e in range(d):
            cand = np.zeros((B, d))
            cand[:, e] = 1.0
            for k in range(d):
                active = count > k
                proj = np.einsum("bi,bi->b", cand, basis[:, k])
                cand = cand - np.where(active, proj, 0.0)[:, None] * basis[:, k]
            nrm = np.linalg.norm(cand, axis=1)
            accept = (nrm > 1e-8) & (count < d)
            if not accept.any():
                continue
            cand = cand / np.where(nrm == 0, 1.0, nrm)[:, None]
            for b_idx in np.nonzero(accept)[0]:
                basis[b_idx, count[b_idx]] = cand[b_idx]
                count[b_idx] += 1
        return basis

    S = complete(src_a, src_b)  # rows are an orthonormal basis
    D = complete(dst_a, dst_b)
    # R = D^T S maps S-row i to D-row i
    return np.einsum("bki,bkj->bij", D, S)


def orthonormal_complement(v: np.ndarray) -> np.ndarray:
    """A deterministic unit vector orthogonal to each row of v."""
    v = np.atleast_2d(v)
    B, d = v.shape
    out = np.zeros((B, d))
    # pick the standard basis vector least aligned with v, then orthogonalize
    idx = np.argmin(np.abs(v), axis=1)
    out[np.arange(B), idx] = 1.0
    out = out - np.sum(out * v, axis=1)[:, None] * v
    return out / np.linalg.norm(out, axis=1)[:, None]


def sin_power_integral(m: int, a: float, b: float) -> float:
    """int_a^b sin(u)^m du by the standard recurrence (thread-safe; the
    scipy quadrature routines are not reentrant)."""
    if m < 0:
        raise ValueError("negative power")
    if m == 0:
        return float(b - a)
    if m == 1:
        return float(np.cos(a) - np.cos(b))
    head = (np.sin(a) ** (m - 1) * np.cos(a) - np.sin(b) ** (m - 1) * np.cos(b)) / m
    return float(head + (m - 1) / m * sin_power_integral(m - 2, a, b))


def simpson_weights(nodes: np.ndarray) -> np.ndarray:
    """Composite Simpson weights on a uniform grid (odd node count required;
    falls back to trapezoid on even counts)."""
    n = len(nodes)
    if n < 2:
        return np.zeros(n)
    h = (nodes[-1] - nodes[0]) / (n - 1)
    w = np.zeros(n)
    if n % 2 == 1:
        w[0] = w[-1] = 1.0
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= h / 3.0
    else:
        w[:] = h
        w[0] = w[-1] = h / 2.0
    return w
