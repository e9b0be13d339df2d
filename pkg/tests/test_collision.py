import math

import numpy as np
import pytest
from scipy.special import erfc

from lbconfine.collision import (Projection, VelocityGrid, angular_factor, audit, build_collision_operator,
                                 build_nu, coercivity_lambda0, kernel_dimension, load_operator,
                                 save_operator)


@pytest.fixture(scope="module")
def op16():
    return build_collision_operator(VelocityGrid(2, 16, 6.0))


def test_angular_factor_closed_form():
    # int |cos theta| over the circle is 4, over the 2-sphere 2 pi
    assert angular_factor(2) == pytest.approx(4.0, rel=1e-12)
    assert angular_factor(3) == pytest.approx(2 * math.pi, rel=1e-12)


def test_nu_constant_for_maxwell_molecules():
    nu = build_nu(VelocityGrid(2, 12), gamma=0.0, q0=1.0)
    np.testing.assert_allclose(nu, 4.0, rtol=1e-10)
    nu3 = build_nu(VelocityGrid(3, 6), gamma=0.0, q0=2.0)
    np.testing.assert_allclose(nu3, 4 * math.pi, rtol=1e-10)


def test_nu_hard_spheres_grows_and_is_bounded_below():
    g = VelocityGrid(2, 12)
    nu = build_nu(g, gamma=1.0)
    speed = np.linalg.norm(g.nodes, axis=1)
    assert np.min(nu) > 0
    assert nu[np.argmax(speed)] > nu[np.argmin(speed)]


def test_velocity_tail_mass():
    assert erfc(6.0 / math.sqrt(2)) < 1e-8


def test_structure(op16):
    a = audit(op16)
    assert a["symmetry_residual"] < 1e-10 * a["norm"]
    assert a["min_eigenvalue"] >= -1e-10 * a["spectral_radius"]
    assert a["kernel_dimension"] == 4
    assert a["lambda0"] > 0
    assert a["correction_magnitude"] < 0.01


def test_collision_invariants_in_kernel(op16):
    P = Projection.for_grid(op16.grid)
    LB = op16.apply(P.basis.T)
    assert np.max(np.abs(LB)) < 1e-12 * np.max(np.abs(op16.L))
    # and the range of L is orthogonal to them
    rng = np.random.default_rng(3)
    f = rng.standard_normal(op16.grid.size)
    np.testing.assert_allclose(P.coefficients(op16.apply(f)), 0.0, atol=1e-10)


def test_h_theorem_surrogate(op16):
    lam0 = coercivity_lambda0(op16)
    P = Projection.for_grid(op16.grid)
    rng = np.random.default_rng(4)
    for _ in range(100):
        f = rng.standard_normal(op16.grid.size)
        g = f - P(f)
        lhs = op16.quadratic_form(f)
        rhs = lam0 * op16.grid.inner(op16.nu * g, g)
        assert lhs >= rhs * (1 - 1e-10)


def test_weighted_norm_lower_bound(op16):
    nu0 = float(np.min(op16.nu))
    f = np.random.default_rng(5).standard_normal(op16.grid.size)
    assert nu0 * op16.grid.inner(f, f) <= op16.grid.inner(op16.nu * f, f) + 1e-12


def test_cache_round_trip(tmp_path, op16):
    a = build_collision_operator(VelocityGrid(2, 10), cache_dir=str(tmp_path))
    b = build_collision_operator(VelocityGrid(2, 10), cache_dir=str(tmp_path))
    assert np.array_equal(a.K, b.K) and np.array_equal(a.nu, b.nu)
    p = tmp_path / "op.npz"
    save_operator(op16, str(p))
    c = load_operator(str(p))
    assert np.array_equal(c.L, op16.L)
    assert kernel_dimension(c) == 4


def test_invalid_parameters():
    with pytest.raises(ValueError):
        build_collision_operator(VelocityGrid(2, 8), gamma=-1.0)
    with pytest.raises(ValueError):
        VelocityGrid(2, 2)
