"""Reduced fields, dual volume quadratures, monotonicity, identities."""

import numpy as np
import pytest

import conftest as orc
from lgeo_lab import geodesics as gd
from lgeo_lab import reduced as rv
from lgeo_lab.errors import InvalidInputError, TailBoundError
from lgeo_lab.flows import SpaceTimePoint
from lgeo_lab.geodesics import MinimizeOptions, ShootVector, minimize, shoot
from lgeo_lab.reduced import GridSpec


# ---- fields ------------------------------------------------------------------

def test_field_euclid_exact(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    fld = rv.reduced_field(euclid3, base, 1.0, GridSpec(nodes=17, radius_sigmas=4.0))
    pts = fld.node_points()
    d2 = np.sum(pts ** 2, axis=1)
    assert np.max(np.abs(fld.ell.ravel() - d2 / 4.0)) < 1e-6
    assert not fld.cut_mask.any()
    assert not fld.fail_mask.any()


def test_field_sphere_short_time_comparison(sphere3, sphere_base):
    """tau small: ell ~ d^2/(4 tau) within 5% inside the injectivity scale."""
    tau = 0.01
    fld = rv.reduced_field(sphere3, sphere_base, tau, GridSpec(nodes=81))
    th = fld.axes[0]
    rho = sphere3.radius(sphere_base.time - tau)
    d = rho * th
    sel = (d > 0.15) & (d < 1.0)
    rel = np.abs(fld.ell[sel] - d[sel] ** 2 / (4 * tau)) / (d[sel] ** 2 / (4 * tau))
    assert np.max(rel) < 0.05


def test_field_empty_grid_rejected(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    with pytest.raises(InvalidInputError):
        rv.reduced_field(euclid3, base, 1.0, GridSpec(nodes=1))


def test_field_invalid_tau(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    with pytest.raises(InvalidInputError):
        rv.reduced_field(euclid3, base, -1.0)


def test_field_ell_matches_closed_form_sphere(sphere3, sphere_base):
    tau = 0.25
    fld = rv.reduced_field(sphere3, sphere_base, tau, GridSpec(nodes=121))
    th = fld.axes[0]
    exact = np.array([orc.sphere_ell(t, tau) for t in th])
    assert np.max(np.abs(fld.ell - exact)) < 1e-5


# ---- volume: normalization and cross-method agreement -------------------------

def test_volume_euclid_domain_unit(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    for tau in (0.25, 1.0, 4.0):
        res = rv.reduced_volume_domain(euclid3, base, tau,
                                       GridSpec(nodes=65, radius_sigmas=8.0))
        assert res.value_domain == pytest.approx(1.0, abs=1e-3)


def test_volume_euclid_pushforward_unit(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    res = rv.reduced_volume_pushforward(euclid3, base, 1.0,
                                        GridSpec(nodes=49), certify="sampled")
    assert res.value_pushforward == pytest.approx(1.0, abs=1e-3)
    assert res.detail["certified_nodes"] > 0


def test_volume_euclid_tail_error(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    with pytest.raises(TailBoundError):
        rv.reduced_volume_pushforward(euclid3, base, 1.0,
                                      GridSpec(nodes=25, radius_sigmas=3.8))
    with pytest.raises(TailBoundError):
        rv.reduced_volume_domain(euclid3, base, 1.0,
                                 GridSpec(nodes=25, radius_sigmas=3.0))


def test_volume_time_out_of_domain(sphere3, sphere_base):
    from lgeo_lab.errors import TimeOutOfDomainError

    with pytest.raises(TimeOutOfDomainError):
        rv.reduced_volume_domain(sphere3, sphere_base, 1000.0)


def test_volume_sphere_oracle_and_agreement(sphere3, sphere_base):
    """Both quadratures match the independent 1D oracle and each other."""
    for tau in (0.1, 0.25, 0.5):
        dom = rv.reduced_volume_domain(sphere3, sphere_base, tau,
                                       GridSpec(nodes=161))
        push = rv.reduced_volume_pushforward(sphere3, sphere_base, tau,
                                             GridSpec(nodes=129), certify="off")
        oracle = orc.sphere_volume_oracle(tau)
        assert dom.value_domain == pytest.approx(oracle, rel=1e-4)
        assert push.value_pushforward == pytest.approx(oracle, rel=1e-4)
        gap = abs(dom.value_domain - push.value_pushforward)
        assert gap <= max(0.01, dom.est_error + push.est_error)


def test_volume_cylinder_oracle_and_agreement(cylinder3, cylinder_base):
    tau = 0.2
    dom = rv.reduced_volume_domain(cylinder3, cylinder_base, tau,
                                   GridSpec(nodes=(81, 61)))
    push = rv.reduced_volume_pushforward(cylinder3, cylinder_base, tau,
                                         GridSpec(nodes=(49, 49)), certify="off")
    oracle = orc.cylinder_volume_oracle(tau)
    assert dom.value_domain == pytest.approx(oracle, rel=1e-3)
    assert push.value_pushforward == pytest.approx(oracle, rel=1e-3)


def test_volume_rotsym_cross_agreement(rot_dumbbell_early):
    """On the numeric backend the two quadratures act as mutual oracles."""
    backend, _ = rot_dumbbell_early
    base = SpaceTimePoint((0.5, np.pi / 2, 0.0), 0.010)
    tau = 0.004
    dom = rv.reduced_volume_domain(backend, base, tau,
                                   GridSpec(nodes=(61, 33), radius_sigmas=9.0))
    push = rv.reduced_volume_pushforward(backend, base, tau,
                                         GridSpec(nodes=(49, 33),
                                                  radius_sigmas=9.0))
    gap = abs(dom.value_domain - push.value_pushforward)
    assert gap <= max(0.01, dom.est_error + push.est_error)
    assert 0 < dom.value_domain <= 1 + 1e-3


def test_volume_upper_bound_various(sphere3, cylinder3, sphere_base, cylinder_base):
    for flow, b, tau in ((sphere3, sphere_base, 0.4),
                         (cylinder3, cylinder_base, 0.3)):
        res = rv.reduced_volume_domain(flow, b, tau, GridSpec(nodes=(91, 51)
                                                              if flow is cylinder3
                                                              else 121))
        assert res.value_domain <= 1 + 1e-3
        assert res.value_domain > 0


# ---- monotonicity --------------------------------------------------------------

def test_monotone_euclid_flat(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    results, violations = rv.monotone_check(
        euclid3, base, [0.25, 0.5, 1.0, 2.0], GridSpec(nodes=33))
    vals = [r.value_domain for r in results]
    assert all(abs(v - 1.0) < 1e-3 for v in vals)
    assert not violations


def test_monotone_sphere(sphere3, sphere_base):
    results, violations = rv.monotone_check(
        sphere3, sphere_base, [0.1, 0.2, 0.4], GridSpec(nodes=121))
    vals = [r.value_domain for r in results]
    assert not violations
    assert all(v <= 1 + 1e-3 for v in vals)
    assert vals[0] > vals[-1]  # strictly decreasing on the sphere


def test_monotone_unsorted_rejected(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    with pytest.raises(InvalidInputError):
        rv.monotone_check(euclid3, base, [1.0, 0.5])


# ---- identities ------------------------------------------------------------------

def test_identities_euclid_analytic(euclid3):
    """Residual and slacks vanish to 1e-6 on the exactly-sampled field."""
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    center, _ = rv.tau_field_bundle(euclid3, base, 1.0,
                                    GridSpec(nodes=21, radius_sigmas=4.0))
    rep = rv.identity_residuals(euclid3, base, center)
    assert np.max(np.abs(rep.res_hamilton_jacobi)) < 1e-6
    assert np.max(np.abs(rep.slack_heat_super)) < 1e-6
    assert np.max(np.abs(rep.slack_laplace_upper)) < 1e-6


def test_identities_sphere_signs(sphere3, sphere_base):
    center, _ = rv.tau_field_bundle(sphere3, sphere_base, 0.25,
                                    GridSpec(nodes=161))
    rep = rv.identity_residuals(sphere3, sphere_base, center)
    assert rep.n_unmasked > 0.9 * rep.n_nodes
    assert np.mean(rep.slack_heat_super >= -1e-6) >= 0.99
    assert np.mean(rep.slack_laplace_upper <= 1e-6) >= 0.99
    assert np.max(np.abs(rep.res_hamilton_jacobi)) < 1e-4


def test_identities_sphere_match_analytic_slacks(sphere3, sphere_base):
    """Numerical slack values agree with the closed-form field's slacks."""
    tau = 0.25
    center, _ = rv.tau_field_bundle(sphere3, sphere_base, tau,
                                    GridSpec(nodes=161))
    th = center.axes[0]
    n, Tt = 3, 1.0
    A = np.arctan(np.sqrt(tau / Tt))
    rho2 = 2 * (n - 1) * (Tt + tau)
    h = 1e-6

    def ell_t(tt, theta):
        aa = np.arctan(np.sqrt(tt / Tt))
        return ((n - 1) * np.sqrt(Tt) * theta ** 2 / aa
                + n * (np.sqrt(tt) - np.sqrt(Tt) * aa)) / (2 * np.sqrt(tt))

    k = len(th) // 2
    theta = th[k]
    lt = (ell_t(tau + h, theta) - ell_t(tau - h, theta)) / (2 * h)
    dth = (n - 1) * np.sqrt(Tt) * theta / (np.sqrt(tau) * A)
    d2 = (n - 1) * np.sqrt(Tt) / (np.sqrt(tau) * A)
    gn2 = dth ** 2 / rho2
    lap = (d2 + (n - 1) / np.tan(theta) * dth) / rho2
    R = n / (2 * (Tt + tau))
    ell = orc.sphere_ell(theta, tau)
    slack_super = lt - lap + gn2 - R + n / (2 * tau)
    slack_upper = 2 * lap - gn2 + R + (ell - n) / tau
    rep = rv.identity_residuals(sphere3, sphere_base, center)
    assert rep.meta["super_full"][k] == pytest.approx(slack_super, rel=1e-3)
    assert rep.meta["upper_full"][k] == pytest.approx(slack_upper, rel=1e-3)


def test_identities_all_masked_rejected(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    center, _ = rv.tau_field_bundle(euclid3, base, 1.0,
                                    GridSpec(nodes=9, radius_sigmas=4.0))
    center.cut_mask[:] = True
    with pytest.raises(InvalidInputError):
        rv.identity_residuals(euclid3, base, center)


def test_identities_requires_tau_bundle(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    fld = rv.reduced_field(euclid3, base, 1.0, GridSpec(nodes=9, radius_sigmas=4.0))
    with pytest.raises(InvalidInputError):
        rv.identity_residuals(euclid3, base, fld)


def test_residual_convergence_under_refinement(sphere3, sphere_base):
    """max |transport residual| drops >= 3x when grid and steps are halved."""
    tau = 0.25
    maxres = {}
    for nodes, steps, delta in ((41, 16, 4e-2), (81, 32, 2e-2)):
        center, _ = rv.tau_field_bundle(
            sphere3, sphere_base, tau,
            GridSpec(nodes=nodes, field_steps=steps), delta_rel=delta,
            five_point=False)
        rep = rv.identity_residuals(sphere3, sphere_base, center)
        maxres[nodes] = np.max(np.abs(rep.res_hamilton_jacobi))
    assert maxres[41] / maxres[81] >= 3.0


# ---- gradient identity ----------------------------------------------------------

def test_gradient_identity_euclid(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    tau = 1.0
    center, _ = rv.tau_field_bundle(euclid3, base, tau,
                                    GridSpec(nodes=21, radius_sigmas=4.0))
    rng = np.random.default_rng(9)
    geos = []
    for _ in range(5):
        tgt = SpaceTimePoint(tuple(rng.uniform(-1.5, 1.5, 3)), -tau)
        res = minimize(euclid3, base, tgt, MinimizeOptions(n_starts=4))
        geos.append(shoot(euclid3, base, res.v_star, tau, steps=32))
    rep = rv.identity_residuals(euclid3, base, center, geodesics=geos)
    assert np.max(rep.grad_gap) < 1e-3


def test_gradient_identity_sphere_refinement(sphere3, sphere_base):
    """The gap contracts by >= 3x under simultaneous grid/step halving."""
    tau = 0.25
    gaps = {}
    for nodes, steps in ((81, 16), (161, 32)):
        geos = []
        for th in np.linspace(0.3, 2.2, 6):
            tgt = SpaceTimePoint((np.pi / 2, np.pi / 2, th), -tau)
            res = minimize(sphere3, sphere_base, tgt, MinimizeOptions(n_starts=6))
            geos.append(shoot(sphere3, sphere_base, res.v_star, tau, steps=steps))
        center, _ = rv.tau_field_bundle(sphere3, sphere_base, tau,
                                        GridSpec(nodes=nodes))
        report = rv.identity_residuals(sphere3, sphere_base, center,
                                       geodesics=geos)
        gaps[nodes] = float(np.max(report.grad_gap))
    assert gaps[81] / gaps[161] >= 3.0


# ---- tau derivative stencils ----------------------------------------------------

def test_attach_tau_derivative_validation(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    spec = GridSpec(nodes=9, radius_sigmas=4.0)
    grid = rv._build_grid(euclid3, base, 1.0, spec)
    flds = [rv.reduced_field(euclid3, base, t, spec, grid_override=grid,
                             with_gradients=False)
            for t in (0.9, 1.0, 1.2)]
    with pytest.raises(InvalidInputError):
        rv.attach_tau_derivative(flds[1], flds)


def test_tau_derivative_euclid_accuracy(euclid3):
    base = SpaceTimePoint((0.0, 0.0, 0.0), 0.0)
    center, _ = rv.tau_field_bundle(euclid3, base, 1.0,
                                    GridSpec(nodes=9, radius_sigmas=4.0))
    pts = center.node_points()
    d2 = np.sum(pts ** 2, axis=1).reshape(center.ell.shape)
    exact = -d2 / 4.0  # d(ell)/dtau at tau=1
    assert np.max(np.abs(center.dell_dtau - exact)) < 1e-6
