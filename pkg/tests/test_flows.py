"""Model flow backends: closed forms, consistency, and error handling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgeo_lab import geometry as geom
from lgeo_lab.errors import ChartError, InvalidInputError, TimeOutOfDomainError
from lgeo_lab.flows import (EuclideanStatic, ShrinkingCylinder, ShrinkingSphere,
                            SpaceTimePoint, make_flow)

ALL_KINDS = ["euclidean", "shrinking_sphere", "shrinking_cylinder"]


def backends():
    return [EuclideanStatic(n=3), ShrinkingSphere(n=3, T=1.0),
            ShrinkingCylinder(n=3, T=1.0)]


def test_euclid_metric_identity(euclid3):
    p = SpaceTimePoint((0.3, -1.2, 2.0), 0.5)
    g = euclid3.metric_at(p)
    assert np.allclose(g.components, np.eye(3))
    assert g.volume_density == pytest.approx(1.0)


def test_sphere_metric_scale(sphere3):
    p = SpaceTimePoint((np.pi / 2, np.pi / 2, 0.3), 0.0)
    g = sphere3.metric_at(p)
    # rho^2 = 2(n-1)(T-t) = 4 at t=0
    assert g.components[0, 0] == pytest.approx(4.0)
    assert g.components[1, 1] == pytest.approx(4.0 * np.sin(np.pi / 2) ** 2)


def test_sphere_time_domain_error(sphere3):
    with pytest.raises(TimeOutOfDomainError):
        sphere3.metric_at(SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), 1.0))


def test_euclid_curvature_zero(euclid3):
    c = euclid3.curvature_at(SpaceTimePoint((1.0, 2.0, 3.0), 0.0))
    assert c.scalar == 0.0
    assert c.rm_norm == 0.0
    assert np.all(c.grad_scalar == 0)


def test_sphere_curvature_closed_form(sphere3):
    c = sphere3.curvature_at(SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), 0.0))
    assert c.scalar == pytest.approx(1.5)       # n/(2(T-t))
    assert c.rm_norm == pytest.approx(0.25)     # 1/(2(n-1)(T-t))
    assert np.allclose(c.grad_scalar, 0.0)


def test_cylinder_curvature_closed_form(cylinder3):
    c = cylinder3.curvature_at(SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), 0.0))
    assert c.scalar == pytest.approx(1.0)       # 1/(T-t) at n=3
    assert np.allclose(c.grad_scalar, 0.0)
    assert c.rm_norm == pytest.approx(0.5)      # 1/(2(n-2)(T-t))


def test_sphere_scalar_product_exact(sphere3):
    for t in np.linspace(-3.0, 0.9, 7):
        R = sphere3.curvature_at(
            SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), t)).scalar
        assert R * (sphere3.T - t) == pytest.approx(1.5, abs=1e-14)


def test_euclid_christoffels_vanish(euclid3):
    c = euclid3.christoffel_at(SpaceTimePoint((0.1, 0.2, 0.3), 0.0))
    assert np.all(c.christoffels == 0.0)


def test_sphere_christoffels_match_unit_sphere(sphere3):
    # scale invariance: the shrinking sphere carries unit-sphere symbols
    p = SpaceTimePoint((np.pi / 2, np.pi / 3, 1.0), 0.25)
    gam = sphere3.christoffel_at(p).christoffels
    assert gam[0, 1, 1] == pytest.approx(-np.sin(np.pi / 2) * np.cos(np.pi / 2),
                                         abs=1e-14)
    assert gam[1, 0, 1] == pytest.approx(1.0 / np.tan(np.pi / 2), abs=1e-14)
    # Gamma^1_{22} = -(g_22/g_11) cot(theta_1) = -sin cos at theta_1 = pi/3
    assert gam[1, 2, 2] == pytest.approx(-np.sin(np.pi / 3) * np.cos(np.pi / 3),
                                         rel=1e-12)
    sym = gam - np.swapaxes(gam, 1, 2)
    assert np.max(np.abs(sym)) < 1e-14


def test_rotsym_christoffels_match_sphere(rot_round, sphere3):
    """Round numeric backend agrees with the closed-form sphere symbols."""
    backend, _ = rot_round
    t = 0.2
    x = 0.37
    p = SpaceTimePoint((x, np.pi / 3, 0.7), t)
    gam_num = backend.christoffel_at(p).christoffels
    # closed form: psi = rho sin(pi x), phi = pi rho
    rho = np.sqrt(4 - 4 * t)
    psi, psi_x, phi = rho * np.sin(np.pi * x), rho * np.pi * np.cos(np.pi * x), np.pi * rho
    assert gam_num[0, 0, 0] == pytest.approx(0.0, abs=1e-3)
    assert gam_num[1, 0, 1] == pytest.approx(psi_x / psi, rel=1e-3)
    assert gam_num[0, 1, 1] == pytest.approx(-psi * psi_x / phi ** 2, rel=1e-3)


def test_distance_euclid(euclid3):
    assert euclid3.distance_at(0.0, (0, 0, 0), (2, 0, 0)) == pytest.approx(2.0)


def test_distance_sphere_antipodal(sphere3):
    d = sphere3.distance_at(0.0, (np.pi / 2, np.pi / 2, 0.0),
                            (np.pi / 2, np.pi / 2, np.pi))
    assert d == pytest.approx(2 * np.pi, rel=1e-12)  # pi * rho, rho = 2


def test_distance_rotsym_vs_sphere(rot_round, sphere3):
    backend, _ = rot_round
    t = 0.1
    rho = np.sqrt(4 - 4 * t)
    # points at angles 0.35 pi and 0.6 pi from the pole, same meridian offset
    p = (0.35, np.pi / 2, 0.0)
    q = (0.60, np.pi / 2, 1.0)
    d_num = backend.distance_at(t, p, q)
    ps = (0.35 * np.pi, np.pi / 2, 0.0)
    qs = (0.60 * np.pi, np.pi / 2, 1.0)
    d_cf = sphere3.distance_at(t, ps, qs)
    assert d_num == pytest.approx(d_cf, rel=0.01)


def test_ball_volume_euclid(euclid3):
    assert euclid3.ball_volume(0.0, (0, 0, 0), 1.0) == pytest.approx(4 * np.pi / 3)


def test_ball_volume_sphere_total(sphere3):
    v = sphere3.ball_volume(0.0, (np.pi / 2, np.pi / 2, 0.0), 2 * np.pi)
    assert v == pytest.approx(16 * np.pi ** 2, rel=1e-10)  # 2 pi^2 rho^3


def test_ball_volume_sphere_small(sphere3):
    v = sphere3.ball_volume(0.0, (np.pi / 2, np.pi / 2, 0.0), 0.1)
    assert v == pytest.approx(4 * np.pi / 3 * 0.1 ** 3, rel=0.01)


def test_ball_volume_cylinder_small(cylinder3):
    v = cylinder3.ball_volume(0.0, (np.pi / 2, np.pi / 2, 0.0), 0.05)
    assert v == pytest.approx(4 * np.pi / 3 * 0.05 ** 3, rel=0.01)


def test_ball_volume_rejects_nonpositive(euclid3):
    with pytest.raises(InvalidInputError):
        euclid3.ball_volume(0.0, (0, 0, 0), -1.0)


def test_time_domains():
    assert EuclideanStatic(n=3).time_domain().as_tuple() == (-100.0, 100.0, False)
    assert ShrinkingSphere(n=3, T=1.0).time_domain().as_tuple() == (-99.0, 1.0, True)


def test_rotsym_time_domain(rot_round):
    backend, report = rot_round
    lo, hi, open_hi = backend.time_domain().as_tuple()
    assert lo == 0.0
    assert hi == pytest.approx(0.8)


@pytest.mark.parametrize("flow", backends(), ids=ALL_KINDS)
def test_metric_positive_definite(flow):
    """Random (point, time) samples have positive-definite metrics."""
    rng = np.random.default_rng(7)
    pts = flow.random_points(rng, 1000)
    for t in (-1.0, 0.0, 0.7):
        g = flow.metric_components(t, pts)
        eig = np.linalg.eigvalsh(g)
        assert np.all(eig > 0)


@pytest.mark.parametrize("flow", backends(), ids=ALL_KINDS)
def test_ricci_flow_consistency(flow):
    """Centered dg/dt equals -2 Ric componentwise to O(h^2)."""
    rng = np.random.default_rng(11)
    pts = flow.random_points(rng, 16)
    t, h = 0.1, 1e-5
    dgdt = (flow.metric_components(t + h, pts)
            - flow.metric_components(t - h, pts)) / (2 * h)
    ric = flow.curvature_components(t, pts)[1]
    assert np.max(np.abs(dgdt + 2 * ric)) < 1e-7 * (1 + np.max(np.abs(ric)))


def test_ricci_flow_consistency_rotsym(rot_round):
    """The numeric backend also evolves by -2 Ric (to solver accuracy)."""
    backend, _ = rot_round
    rng = np.random.default_rng(13)
    pts = backend.random_points(rng, 12)
    t, h = 0.3, 2e-4
    dgdt = (backend.metric_components(t + h, pts)
            - backend.metric_components(t - h, pts)) / (2 * h)
    ric = backend.curvature_components(t, pts)[1]
    scale = np.max(np.abs(ric))
    assert np.max(np.abs(dgdt + 2 * ric)) < 0.02 * scale


@pytest.mark.parametrize("flow", backends(), ids=ALL_KINDS)
def test_scalar_lower_bound(flow):
    """R >= -n/r^2 wherever |Rm| <= r^-2 on the sampled cylinder."""
    from lgeo_lab.regularity import scalar_lower_bound_ok

    rng = np.random.default_rng(3)
    p = SpaceTimePoint(tuple(flow.random_points(rng, 1)[0]), 0.2)
    assert scalar_lower_bound_ok(flow, p, r=0.5)


def test_immutability_repeated_queries(sphere3):
    p = SpaceTimePoint((np.pi / 2, np.pi / 2, 0.3), 0.1)
    a = sphere3.curvature_at(p)
    b = sphere3.curvature_at(p)
    assert a.scalar == b.scalar
    assert np.array_equal(a.ricci, b.ricci)


@given(st.floats(-5.0, 0.9), st.floats(0.05, 3.0))
@settings(max_examples=25, deadline=None)
def test_sphere_volume_density_matches_det(t, th1):
    sp = ShrinkingSphere(n=3, T=1.0)
    p = SpaceTimePoint((th1 % np.pi or 0.5, 1.0, 2.0), t)
    m = sp.metric_at(p)
    assert m.volume_density == pytest.approx(
        np.sqrt(np.linalg.det(m.components)), rel=1e-12)


def test_make_flow_specs():
    f = make_flow({"kind": "shrinking_sphere", "n": 3, "T": 1.0})
    assert isinstance(f, ShrinkingSphere)
    with pytest.raises(InvalidInputError):
        make_flow({"kind": "nope"})


def test_chart_validation(sphere3):
    with pytest.raises(ChartError):
        sphere3.metric_at(SpaceTimePoint((4.0, 0.5, 0.5), 0.0))
