"""Shared fixtures and closed-form oracles for the test suite.

The shrinking-sphere L-geometry is fully solvable: an L-geodesic stays on
its great circle with angle u(sigma) = u'(0) sqrt(T-t) arctan(sigma/sqrt(T-t)),
which gives closed forms for the reduced distance, the L-exponential map and
its Jacobian, and (by 1D quadrature) the reduced volume.  The cylinder block
behaves identically one dimension down, with the axial part Euclidean.
These oracles are independent of the shooting/minimization code paths.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from lgeo_lab import geometry as geom
from lgeo_lab import rotsym
from lgeo_lab.flows import (EuclideanStatic, ShrinkingCylinder, ShrinkingSphere,
                            SpaceTimePoint)


# ---- closed-form oracles --------------------------------------------------

def sphere_ell(Theta, tau, t_base=0.0, n=3, T=1.0):
    """Reduced distance on the shrinking sphere, base angle Theta apart."""
    Tt = T - t_base
    A = np.arctan(np.sqrt(tau / Tt))
    return ((n - 1) * np.sqrt(Tt) * Theta ** 2 / A
            + n * (np.sqrt(tau) - np.sqrt(Tt) * A)) / (2 * np.sqrt(tau))


def sphere_volume_oracle(tau, t_base=0.0, n=3, T=1.0):
    """Reduced volume of the shrinking sphere by 1D quadrature."""
    rho = np.sqrt(2 * (n - 1) * (T - (t_base - tau)))
    pref = (4 * np.pi * tau) ** (-n / 2)
    val, _ = quad(lambda u: np.exp(-sphere_ell(u, tau, t_base, n, T))
                  * np.sin(u) ** (n - 1), 0, np.pi)
    return pref * geom.unit_sphere_area(n - 1) * rho ** n * val


def cylinder_ell(Theta, dz, tau, t_base=0.0, n=3, T=1.0):
    """Reduced distance on the shrinking cylinder (block angle, axial offset)."""
    Tt = T - t_base
    A = np.arctan(np.sqrt(tau / Tt))
    return ((n - 2) * np.sqrt(Tt) * Theta ** 2 / A
            + (n - 1) * (np.sqrt(tau) - np.sqrt(Tt) * A)) / (2 * np.sqrt(tau)) \
        + dz ** 2 / (4 * tau)


def cylinder_volume_oracle(tau, t_base=0.0, n=3, T=1.0):
    """Axial part integrates to a Gaussian; the block is a 1D quadrature."""
    rs = np.sqrt(2 * (n - 2) * (T - (t_base - tau)))
    pref = (4 * np.pi * tau) ** (-(n - 1) / 2)
    val, _ = quad(lambda u: np.exp(-cylinder_ell(u, 0.0, tau, t_base, n, T))
                  * np.sin(u) ** (n - 2), 0, np.pi)
    return pref * geom.unit_sphere_area(n - 2) * rs ** (n - 1) * val


def sphere_lexp_angle(w, tau, t_base=0.0, n=3, T=1.0):
    """Traveled angle of the L-geodesic with |v|_g = w."""
    Tt = T - t_base
    rho0 = np.sqrt(2 * (n - 1) * Tt)
    return 2 * w / rho0 * np.sqrt(Tt) * np.arctan(np.sqrt(tau / Tt))


def sphere_lexp_det(w, tau, t_base=0.0, n=3, T=1.0):
    """Closed-form Jacobian determinant of the sphere L-exponential map."""
    Tt = T - t_base
    A = np.arctan(np.sqrt(tau / Tt))
    rho0 = np.sqrt(2 * (n - 1) * Tt)
    rho_end = np.sqrt(2 * (n - 1) * (Tt + tau))
    u = sphere_lexp_angle(w, tau, t_base, n, T)
    du_dw = 2 * np.sqrt(Tt) * A / rho0
    if w == 0:
        return rho_end ** n * du_dw ** n
    return rho_end ** n * du_dw * (np.sin(u) / w) ** (n - 1)


# ---- fixtures --------------------------------------------------------------

@pytest.fixture(scope="session")
def euclid3():
    return EuclideanStatic(n=3)


@pytest.fixture(scope="session")
def sphere3():
    return ShrinkingSphere(n=3, T=1.0)


@pytest.fixture(scope="session")
def cylinder3():
    return ShrinkingCylinder(n=3, T=1.0)


@pytest.fixture(scope="session")
def sphere_base():
    return SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), 0.0)


@pytest.fixture(scope="session")
def cylinder_base():
    return SpaceTimePoint((np.pi / 2, np.pi / 2, 0.0), 0.0)


@pytest.fixture(scope="session")
def rot_round():
    """Round rot-sym solve over 80% of the lifespan (shared; ~15 s once)."""
    init = rotsym.round_profile(n=3, rho0=2.0, nodes=400)
    backend, report = rotsym.solve_rotsym(init, 0.8)
    assert report.stop_reason == "reached_t_end"
    return backend, report


@pytest.fixture(scope="session")
def rot_dumbbell():
    """Dumbbell solve run into the neckpinch blowup stop."""
    init = rotsym.dumbbell_profile(n=3, rho0=2.0, neck=0.9, nodes=400)
    backend, report = rotsym.solve_rotsym(init, 1.0)
    return backend, report


@pytest.fixture(scope="session")
def rot_dumbbell_early():
    """Dumbbell solved over a fully resolved pre-pinch window."""
    init = rotsym.dumbbell_profile(n=3, rho0=2.0, neck=0.9, nodes=400)
    backend, report = rotsym.solve_rotsym(init, 0.020)
    assert report.stop_reason == "reached_t_end"
    return backend, report
