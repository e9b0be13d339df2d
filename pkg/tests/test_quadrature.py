import math

import numpy as np
import pytest
from scipy import integrate

from lbconfine import potential as P
from lbconfine.polynomial import Polynomial
from lbconfine.quadrature import (InsufficientDegree, gaussian_constants, gibbs_integral, gibbs_rule,
                                  graded_panels, hermite_rule, spectral_constants, three_route_check,
                                  velocity_moment)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_gaussian_moments(n):
    A1, A2 = gaussian_constants(n, 16)
    assert A1 == pytest.approx(n, abs=1e-12)
    assert A2 == pytest.approx(n * (n + 2), abs=1e-11)


def test_hermite_rule_exactness_and_degree_guard():
    rule = hermite_rule(4, 1)                     # exact to degree 7
    x6 = Polynomial({(6,): 1.0}, 1)
    assert velocity_moment(x6, rule) == pytest.approx(15.0, rel=1e-13)     # 5!!
    with pytest.raises(InsufficientDegree):
        velocity_moment(Polynomial({(8,): 1.0}, 1), rule)


def test_graded_panels_cover_interval():
    for L in (0.3, 5.0, 37.0):
        e = graded_panels(L)
        assert e[0] == 0 and e[-1] == pytest.approx(L)
        assert np.all(np.diff(e) > 0)
        assert np.max(np.diff(e)) <= L / 8 * 1.5 + 1e-12


def test_gibbs_integral_against_adaptive_quadrature(presets):
    phi = presets["phi3"]
    L = P.truncation_box(phi)
    g = lambda x: x[..., 0] ** 2 + x[..., 1]
    ref, _ = integrate.dblquad(lambda y, x: g(np.array([x, y])) * math.exp(-float(phi(np.array([x, y])))),
                               -L[0], L[0], -L[1], L[1], epsabs=1e-12, epsrel=1e-11)
    assert gibbs_integral(phi, g) == pytest.approx(ref, rel=1e-8, abs=1e-10)


def test_gibbs_rule_converges_in_panel_nodes(presets):
    phi = presets["quartic"]
    a = gibbs_rule(phi, 8).integrate(np.sum(gibbs_rule(phi, 8).nodes ** 2, axis=1))
    b = gibbs_rule(phi, 16).integrate(np.sum(gibbs_rule(phi, 16).nodes ** 2, axis=1))
    assert a == pytest.approx(b, rel=1e-10)


def test_harmonic_constants_closed_form(presets):
    # e^{-phi} is the standard Gaussian; int phi dmu = n/2 + C
    phi = presets["harmonic"]
    c = spectral_constants(phi)
    C = math.log(2 * math.pi)
    assert c.lambda_31 == pytest.approx(1.0, abs=1e-12)
    assert c.lambda_21 == pytest.approx(1.0, abs=1e-10)
    assert c.lambda_11 == pytest.approx(2 + 2 * (1 + C), abs=1e-10)
    assert c.lambda_32 == pytest.approx(1 + 1 + C, abs=1e-10)
    assert c.Lambda_phi == pytest.approx(-0.25, abs=1e-10)
    np.testing.assert_allclose(c.V_phi, 0.0, atol=1e-12)


@pytest.mark.parametrize("name", ["harmonic", "phi1", "phi2", "phi3", "quartic"])
def test_mass_is_one_after_normalization(presets, name):
    assert spectral_constants(presets[name]).lambda_31 == pytest.approx(1.0, abs=1e-8)


def test_constant_shift_cancels_in_Lambda(presets):
    # Lambda and V are invariant under phi -> phi + const once the measure is renormalized
    phi = presets["phi3"]
    other = P.normalize(P.phi3(2, C=3.0))
    assert spectral_constants(other).Lambda_phi == pytest.approx(spectral_constants(phi).Lambda_phi, rel=1e-9)


def test_three_routes_agree_on_asymmetric_potential(presets):
    rep = three_route_check(presets["phi3"])
    assert rep.denominator_positive
    assert rep.agree
    assert abs(rep.V_numerator_direct[0]) > 1e-3          # V does not vanish for phi3
