"""L-geodesic shooting, exponential map, Jacobians, two-point minimization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

import conftest as orc
from lgeo_lab import geodesics as gd
from lgeo_lab import geometry as geom
from lgeo_lab.errors import InvalidInputError, MinimizationError
from lgeo_lab.flows import (EuclideanStatic, ShrinkingSphere, SpaceTimePoint)
from lgeo_lab.geodesics import MinimizeOptions, ShootVector, minimize, shoot


# ---- shoot -----------------------------------------------------------------

def test_euclid_shoot_straight_line(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    geo = shoot(euclid3, base, ShootVector((1.0, 0.0, 0.0)), 1.0, steps=32)
    assert np.allclose(geo.positions[-1], [2.0, 0.0, 0.0], atol=1e-12)
    # beta(sigma) = 2 sigma v along the whole path
    assert np.allclose(geo.positions[:, 0], 2 * geo.sigma_samples, atol=1e-12)
    assert geo.L == pytest.approx(2.0, abs=1e-12)


def test_sphere_shoot_stationary_v0(sphere3, sphere_base):
    """v = 0 keeps the point on its world line; L is the curvature integral."""
    tau = 0.5
    geo = shoot(sphere3, sphere_base, ShootVector((0.0, 0.0, 0.0)), tau, steps=64)
    assert np.allclose(geo.positions[-1], geo.positions[0], atol=1e-12)
    L_exact, _ = quad(lambda s: 2 * s ** 2 * 3 / (2 * (1 + s ** 2)), 0, np.sqrt(tau))
    assert geo.L == pytest.approx(L_exact, rel=1e-9)
    assert L_exact > 0


def test_sphere_shoot_closed_form_angle_and_energy(sphere3, sphere_base):
    tau, w = 0.5, 0.7
    g0 = sphere3.metric_components(0.0, sphere_base.x[None])[0]
    vch = sphere3.time_slice_log(0.0, sphere_base.x,
                                 np.array([[np.pi / 2, np.pi / 2, 1.0]]))[0]
    vch = vch / np.sqrt(vch @ g0 @ vch) * w
    geo = shoot(sphere3, sphere_base, ShootVector(tuple(vch)), tau, steps=64)
    u0 = geom.sphere_embed(sphere_base.x[None])[0]
    u1 = geom.sphere_embed(geo.positions[-1][None])[0]
    ang = float(geom.sphere_angle(u0[None], u1[None])[0])
    assert ang == pytest.approx(orc.sphere_lexp_angle(w, tau), rel=1e-8)
    u = orc.sphere_lexp_angle(w, tau)
    A = np.arctan(np.sqrt(tau))
    L_exact = 2 * np.sqrt(1.0) * u ** 2 / A + 3 * (np.sqrt(tau) - A)
    assert geo.L == pytest.approx(L_exact, rel=1e-8)


def test_shoot_partial_L_nondecreasing(sphere3, sphere_base):
    geo = shoot(sphere3, sphere_base, ShootVector((0.2, 0.1, 0.4)), 0.4, steps=48)
    assert np.all(np.diff(geo.partial_L) >= -1e-14)


def test_shoot_initial_velocity_consistency(sphere3, sphere_base):
    """|beta'(sigma_1)/2 - v| <= C sigma_1 (the 4 sigma Ric correction)."""
    v = np.array([0.3, 0.0, 0.5])
    for steps in (32, 64, 128):
        geo = shoot(sphere3, sphere_base, ShootVector(tuple(v)), 0.25, steps=steps)
        s1 = geo.sigma_samples[1]
        dev = np.linalg.norm(geo.velocities[1] / 2 - v)
        assert dev <= 2.0 * (np.linalg.norm(v) + 1) * s1


def test_shoot_rk4_order(euclid3, sphere3, sphere_base):
    """Endpoint error scales as O(steps^-4) on the sphere; exact on euclid."""
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    geo = shoot(euclid3, base, ShootVector((0.7, -0.2, 0.1)), 1.0, steps=16)
    assert np.allclose(geo.positions[-1], 2 * np.array([0.7, -0.2, 0.1]),
                       atol=1e-12)

    v = ShootVector((0.9, 0.0, 0.8))
    ref = shoot(sphere3, sphere_base, v, 0.5, steps=512).positions[-1]
    errs = []
    for steps in (16, 32, 64):
        e = shoot(sphere3, sphere_base, v, 0.5, steps=steps).positions[-1]
        errs.append(np.linalg.norm(e - ref))
    r1 = errs[0] / errs[1]
    r2 = errs[1] / errs[2]
    assert r1 > 10 and r2 > 10  # nominal 16 for a 4th-order scheme


def test_shoot_rejects_bad_args(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    with pytest.raises(InvalidInputError):
        shoot(euclid3, base, ShootVector((1.0, 0.0, 0.0)), 1.0, steps=8)
    with pytest.raises(Exception):
        shoot(euclid3, base, ShootVector((1.0, 0.0, 0.0)), 1e6)


# ---- lexp and jacobians ----------------------------------------------------

def test_lexp_euclid(euclid3):
    base = SpaceTimePoint((1.0, 2.0, 3.0), 0.5)
    v = np.array([0.3, -0.4, 0.2])
    end = gd.lexp(euclid3, base, ShootVector(tuple(v)), 0.81)
    assert np.allclose(end.x, base.x + 2 * np.sqrt(0.81) * v, atol=1e-12)
    assert end.time == pytest.approx(0.5 - 0.81)


def test_lexp_v0_world_line(sphere3, cylinder3, sphere_base, cylinder_base):
    for flow, b in ((sphere3, sphere_base), (cylinder3, cylinder_base)):
        end = gd.lexp(flow, b, ShootVector((0.0,) * 3), 0.3)
        assert np.allclose(end.x, b.x, atol=1e-12)


def test_lexp_rotsym_vs_sphere(rot_round, sphere3):
    """Round numeric backend endpoints agree with the closed-form sphere."""
    backend, _ = rot_round
    tb, tau = 0.2, 0.2
    base_r = SpaceTimePoint((0.5, np.pi / 2, 0.0), tb)
    base_s = SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), tb)
    E_r = gd._orth_basis_pub(backend, base_r)
    E_s = gd._orth_basis_pub(sphere3, base_s)
    c = np.array([0.5, 0.0, 0.8])
    geo_r = shoot(backend, base_r, ShootVector(tuple(E_r @ c)), tau, steps=64)
    geo_s = shoot(sphere3, base_s, ShootVector(tuple(E_s @ c)), tau, steps=64)
    d_r = backend.distance_at(tb - tau, base_r.x, geo_r.positions[-1])
    d_s = sphere3.distance_at(tb - tau, base_s.x, geo_s.positions[-1])
    assert d_r == pytest.approx(d_s, rel=0.01)
    assert geo_r.L == pytest.approx(geo_s.L, rel=0.01)


def test_lexp_jacobian_euclid(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    v = ShootVector((1.0, 0.0, 0.0))
    assert gd.lexp_jacobian(euclid3, base, v, 1.0) == pytest.approx(8.0, rel=1e-10)
    assert gd.lexp_jacobian(euclid3, base, v, 0.25) == pytest.approx(1.0, rel=1e-10)


def test_lexp_jacobian_sphere_closed_form(sphere3, sphere_base):
    tau = 0.5
    for w in (0.4, 1.2, 2.5):
        E = gd._orth_basis_pub(sphere3, sphere_base)
        v = ShootVector(tuple(E[:, 0] * w))
        det = gd.lexp_jacobian(sphere3, sphere_base, v, tau)
        assert det == pytest.approx(orc.sphere_lexp_det(w, tau), rel=1e-5)


def test_lexp_jacobian_sensitivity_vs_fd(sphere3, sphere_base):
    """Forward sensitivity cross-validated by finite differences."""
    E = gd._orth_basis_pub(sphere3, sphere_base)
    v = ShootVector(tuple(E @ np.array([0.8, 0.3, -0.2])))
    js = gd.lexp_jacobian(sphere3, sphere_base, v, 0.4)
    jf = gd.lexp_jacobian_fd(sphere3, sphere_base, v, 0.4)
    assert js == pytest.approx(jf, rel=1e-6)


def test_conjugate_sign_change_n2():
    """On S^2 the det flips sign past the conjugate angle (multiplicity 1)."""
    sp = ShrinkingSphere(n=2, T=1.0)
    base = SpaceTimePoint((np.pi / 2, 0.0), 0.0)
    tau = 0.5
    E = gd._orth_basis_pub(sp, base)
    w_conj = np.pi * sp.radius(0.0) / (2 * np.arctan(np.sqrt(tau)))
    d_before = gd.lexp_jacobian(sp, base, ShootVector(tuple(E[:, 0] * 0.8 * w_conj)), tau)
    d_after = gd.lexp_jacobian(sp, base, ShootVector(tuple(E[:, 0] * 1.2 * w_conj)), tau)
    assert d_before > 0 > d_after


def test_conjugate_double_zero_n3(sphere3, sphere_base):
    """On S^3 the transverse multiplicity is 2: the det dips to ~0, stays >= 0."""
    tau = 0.5
    E = gd._orth_basis_pub(sphere3, sphere_base)
    w_conj = np.pi * sphere3.radius(0.0) / (2 * np.arctan(np.sqrt(tau)))
    dets = [gd.lexp_jacobian(sphere3, sphere_base,
                             ShootVector(tuple(E[:, 0] * f * w_conj)), tau)
            for f in (0.5, 1.0, 1.3)]
    assert dets[0] > 100 * abs(dets[1])
    assert dets[2] > 100 * abs(dets[1])
    assert dets[2] > 0


# ---- minimize ---------------------------------------------------------------

def test_minimize_euclid_exact(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    res = minimize(euclid3, base, SpaceTimePoint((2.0, 0.0, 0.0), -1.0))
    assert res.ell == pytest.approx(1.0, rel=1e-7)
    assert res.L_value == pytest.approx(2.0, rel=1e-7)
    assert np.allclose(res.v_star.v, [1.0, 0.0, 0.0], atol=1e-6)
    assert res.n_minima == 1
    assert not res.on_cut_locus


def test_minimize_euclid_same_point(euclid3):
    base = SpaceTimePoint((0.3, 0.4, 0.5), 0.0)
    res = minimize(euclid3, base, SpaceTimePoint((0.3, 0.4, 0.5), -1.0))
    assert res.ell == pytest.approx(0.0, abs=1e-10)
    assert np.allclose(res.v_star.v, 0.0, atol=1e-6)


@given(st.floats(0.2, 3.0), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5),
       st.floats(-1.5, 1.5))
@settings(max_examples=20, deadline=None)
def test_minimize_euclid_property(tau, y1, y2, y3):
    eu = EuclideanStatic(n=3)
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    res = minimize(eu, base, SpaceTimePoint((y1, y2, y3), -tau),
                   MinimizeOptions(n_starts=4))
    d2 = y1 ** 2 + y2 ** 2 + y3 ** 2
    assert res.ell == pytest.approx(d2 / (4 * tau), rel=1e-6, abs=1e-9)


def test_minimize_sphere_closed_form(sphere3, sphere_base):
    tau = 0.25
    for th in (0.4, 1.2, 2.2):
        tgt = SpaceTimePoint((np.pi / 2, np.pi / 2, th), -tau)
        res = minimize(sphere3, sphere_base, tgt)
        assert res.ell == pytest.approx(orc.sphere_ell(th, tau), rel=1e-6)
        assert res.endpoint_error < 1e-7


def test_minimize_antipode_cut_locus(sphere3, sphere_base):
    """Antipodal target: symmetric continuum of minimizers, flagged cut."""
    tgt = SpaceTimePoint((np.pi / 2, np.pi / 2, np.pi), -0.25)
    res = minimize(sphere3, sphere_base, tgt)
    assert res.ell == pytest.approx(orc.sphere_ell(np.pi, 0.25), rel=1e-6)
    assert res.n_minima > 1
    assert res.on_cut_locus


def test_minimize_validity_reshoot(sphere3, sphere_base):
    """Re-shooting v_star reproduces the target and the L value."""
    tau = 0.3
    tgt = SpaceTimePoint((np.pi / 2, 1.9, 0.8), -tau)
    res = minimize(sphere3, sphere_base, tgt)
    geo = shoot(sphere3, sphere_base, res.v_star, tau, steps=48)
    d = sphere3.distance_at(-tau, geo.positions[-1], tgt.x)
    assert d <= 1e-6 * (1 + sphere3.length_scale(-tau))
    assert geo.L == pytest.approx(res.L_value, rel=1e-6)


def test_minimize_rejects_future_target(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    with pytest.raises(InvalidInputError):
        minimize(euclid3, base, SpaceTimePoint((1.0, 0.0, 0.0), 0.5))


def test_minimize_brute_force_equivalence(sphere3, sphere_base):
    """minimize's L matches a dense-grid multi-start search to 1e-3 relative."""
    rng = np.random.default_rng(5)
    tau = 0.25
    E = gd._orth_basis_pub(sphere3, sphere_base)
    # dense grid over shooting space (low resolution integrator)
    K = 22
    grid = np.stack(np.meshgrid(*([np.linspace(-4.5, 4.5, K)] * 3),
                                indexing="ij"), axis=-1).reshape(-1, 3)
    targets = []
    for _ in range(10):
        th = rng.uniform(0.2, np.pi - 0.3)
        targets.append(SpaceTimePoint((np.pi / 2, np.pi / 2, th), -tau))
    for tgt in targets:
        res = minimize(sphere3, sphere_base, tgt)
        # brute force: shoot the grid coarsely, rank by endpoint distance
        frame = gd.make_frame(sphere3, sphere_base.x, grid @ E.T)
        Xw0 = np.broadcast_to(frame.to_work(sphere_base.x[None])[0],
                              (len(grid), 3)).copy()
        Vw = frame.vel_to_work(sphere_base.x[None], grid @ E.T)
        resI = gd.integrate_batch(frame, 0.0, Xw0, Vw, tau, 24)
        ends = frame.from_work(resI.X_end)
        dists = np.array([sphere3.distance_at(-tau, e, tgt.x) for e in ends])
        top = np.argsort(dists, kind="stable")[:8]
        ref = gd.refine_batch(sphere3, sphere_base, tgt.x[None], tau,
                              (grid @ E.T)[top], steps=48, max_iter=30)
        assert ref.converged.any()
        L_bf = float(np.min(ref.L[ref.converged]))
        assert res.L_value <= L_bf + 1e-9 * (1 + abs(L_bf))
        assert abs(res.L_value - L_bf) <= 1e-3 * (1 + abs(L_bf))


def test_minimize_no_convergence_diagnostics(rot_dumbbell_early):
    """Unreachable targets fail loudly with diagnostics, never silently."""
    backend, _ = rot_dumbbell_early
    base = SpaceTimePoint((0.5, np.pi / 2, 0.0), 0.010)
    # target hugs the chart pole margin: trajectories leave the resolved region
    tgt = SpaceTimePoint((backend.POLE_MARGIN, np.pi / 2, 0.0), 0.002)
    with pytest.raises(MinimizationError) as exc:
        minimize(backend, base, tgt, MinimizeOptions(n_starts=4, max_iter=6))
    assert "best_residual" in exc.value.diagnostics


def test_reduced_distance_delegates(euclid3):
    from lgeo_lab.reduced import reduced_distance

    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    val = reduced_distance(euclid3, base, SpaceTimePoint((2.0, 0.0, 0.0), -1.0))
    assert val == pytest.approx(1.0, rel=1e-7)


def test_reduced_distance_worldline_short_tau(sphere3, sphere_base):
    """ell -> 0 down the world line as tau -> 0."""
    from lgeo_lab.reduced import reduced_distance

    tau = 1e-3
    tgt = SpaceTimePoint(sphere_base.coords, sphere_base.time - tau)
    val = reduced_distance(sphere3, sphere_base, tgt)
    max_R = 3 / (2 * (1 - sphere_base.time))
    assert abs(val) < 1e-2 * max_R


def test_minimize_rotsym_vs_sphere_closed_form(rot_round):
    backend, _ = rot_round
    tb, tau = 0.2, 0.2
    base_r = SpaceTimePoint((0.5, np.pi / 2, 0.0), tb)
    s1 = backend.arclength_of(tb - tau, 0.65)
    s0 = backend.arclength_of(tb - tau, 0.5)
    rho_end = np.sqrt(4 - 4 * (tb - tau))
    theta = (s1 - s0) / rho_end
    res = minimize(backend, base_r, SpaceTimePoint((0.65, np.pi / 2, 0.0), tb - tau),
                   MinimizeOptions(n_starts=8))
    assert res.ell == pytest.approx(orc.sphere_ell(theta, tau, t_base=tb), rel=2e-3)
