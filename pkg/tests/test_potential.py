import math

import numpy as np
import pytest
from scipy import integrate

from lbconfine import potential as P


ALL = {
    "harmonic": P.harmonic(2),
    "phi1": P.phi1(2, beta=1.0, alpha=1.0),
    "phi1_b8": P.phi1(2, beta=8.0, alpha=1.0),
    "phi2": P.phi2(2),
    "phi3": P.phi3(2),
    "quartic": P.quartic_separable(2),
    "poly3d": P.polynomial({(2, 0, 0): 1.0, (0, 4, 0): 0.5, (0, 0, 2): 2.0, (1, 1, 0): 0.1}),
}


@pytest.mark.parametrize("name", sorted(ALL))
def test_gradient_matches_finite_differences(name):
    phi = ALL[name]
    rng = np.random.default_rng(1)
    x = rng.uniform(-1.5, 1.5, size=(20, phi.n))
    h = 1e-6
    fd = np.stack([(phi(x + h * e) - phi(x - h * e)) / (2 * h) for e in np.eye(phi.n)], axis=-1)
    np.testing.assert_allclose(phi.grad(x), fd, rtol=1e-6, atol=1e-6)


def test_dimension_mismatch():
    with pytest.raises(P.DimensionError):
        P.harmonic(2)(np.zeros(3))


def test_harmonic_normalization_constant():
    phi = P.normalize(P.harmonic(2))
    assert phi.C == pytest.approx(math.log(2 * math.pi), abs=1e-10)


def test_normalization_against_adaptive_quadrature():
    phi = P.normalize(P.phi2(2))
    L = P.truncation_box(phi)
    mass, _ = integrate.dblquad(lambda y, x: math.exp(-float(phi(np.array([x, y])))),
                                -L[0], L[0], -L[1], L[1], epsabs=1e-12, epsrel=1e-10)
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_truncation_box_level():
    phi = P.phi1(2, beta=1.0, alpha=1.0)
    L = P.truncation_box(phi)
    vmin = P.potential_minimum(phi)
    # on every face of the box e^{-phi} has dropped by at least 14 decades
    for k in range(2):
        x = np.zeros(2)
        x[k] = L[k]
        assert phi(x) - vmin >= 14 * math.log(10)


def test_S_phi_presets():
    assert set(P.compute_S_phi(P.phi1(3)).upper()) == {(0, 1), (0, 2), (1, 2)}
    assert len(P.compute_S_phi(P.phi2(2))) == 0
    assert len(P.compute_S_phi(P.phi3(2))) == 0
    assert len(P.compute_S_phi(P.phi3(3))) == 0
    assert P.compute_S_phi(P.harmonic(2)).upper() == [(0, 1)]


def test_S_phi_separable_certificate():
    # alpha = 2 with equal betas is exactly rotation invariant up to a constant
    phi = P.SeparablePowerPotential(n=2, betas=(1.0, 1.0), alphas=(2.0, 2.0))
    assert P.compute_S_phi(phi).upper() == [(0, 1)]


def test_virial_and_evenness():
    phi = P.harmonic(2)
    x = np.array([[1.0, 2.0]])
    # 2 phi + x.grad phi = |x|^2 + |x|^2
    assert P.virial(phi, x)[0] == pytest.approx(10.0)
    assert P.is_even(phi)
    assert not P.is_even(P.phi3(2))
    assert P.is_even_in_pair(P.phi1(2), 0, 1)


def test_from_dict_round_trip():
    for phi in ALL.values():
        again = P.from_dict(phi.to_dict())
        x = np.array([[0.3] * phi.n, [-1.1] * phi.n])
        np.testing.assert_allclose(again(x), phi(x), rtol=1e-14)
    with pytest.raises(ValueError):
        P.from_dict({"preset": "nope"})


def test_polynomial_potential_needs_growth():
    with pytest.raises(Exception):
        P.normalize(P.polynomial({(1, 0): 1.0, (0, 2): 1.0}))


def test_worked_evaluations():
    assert P.harmonic(2)(np.array([1.0, 1.0])) == pytest.approx(1.0)
    assert P.phi1(2, beta=1.0, alpha=1.0)(np.zeros(2)) == pytest.approx(1.0)
    p = P.polynomial({(4, 0): 1.0, (0, 1): -2.0})
    assert p(np.array([1.0, 1.0])) == pytest.approx(-1.0)
    np.testing.assert_allclose(P.harmonic(2).grad(np.array([1.0, 2.0])), [1.0, 2.0])
    np.testing.assert_allclose(P.phi1(3).grad(np.zeros(3)), 0.0)
    np.testing.assert_allclose(P.polynomial({(3, 0): 1.0}).grad(np.array([2.0, 0.0])), [12.0, 0.0])


def test_worked_virials():
    x = np.array([[0.7, -1.3]])
    h = P.harmonic(2, C=0.4)
    assert P.virial(h, x)[0] == pytest.approx(2 * np.sum(x ** 2) + 0.8)
    assert P.virial(P.phi3(2), np.zeros((1, 2)))[0] == pytest.approx(2 * P.phi3(2)(np.zeros(2)))
    assert P.virial(P.polynomial({(4, 0): 1.0}), np.array([[1.0, 0.0]]))[0] == pytest.approx(6.0)


def test_worked_angular_residuals():
    q = P.quartic_separable(2)
    assert P.angular_residual(q, 0, 1, np.array([[1.0, 1.0]]))[0] == pytest.approx(0.0)
    assert P.angular_residual(q, 0, 1, np.array([[1.0, 2.0]]))[0] == pytest.approx(24.0)
    sep = P.phi2(2)
    assert P.angular_residual(sep, 0, 1, np.array([[1.5, 0.0]]))[0] == pytest.approx(0.0, abs=1e-14)
    assert np.max(np.abs(P.angular_residual(P.phi1(2), 0, 1, np.random.default_rng(0).normal(size=(50, 2))))) < 1e-12


def test_normalize_idempotent():
    phi = P.normalize(P.phi1(2))
    assert P.normalize(phi).C == pytest.approx(phi.C, abs=1e-8)
