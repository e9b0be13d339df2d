import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lbconfine import potential as P
from lbconfine.collision import Projection, VelocityGrid, build_collision_operator
from lbconfine.kinetic import (PhaseField, PhaseGrid, SimulationError, Stepper, StepperOptions, bump,
                               build_initial, coercivity_diagnostic, conserved_densities, count_violations,
                               decay_fit, lagrange_weights, shift_matrix, simulate, step)


@pytest.fixture(scope="module")
def small():
    phi = P.normalize(P.phi1(2, beta=8.0, alpha=1.0))
    vg = VelocityGrid(2, 12, 6.0)
    op = build_collision_operator(vg)
    grid = PhaseGrid.build(phi, 12, vg)
    return phi, op, grid


# -- interpolation ---------------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.floats(0, 0.999), st.sampled_from([1, 3, 5]))
def test_lagrange_weights_reproduce_polynomials(r, order):
    offs, w = lagrange_weights(r, order)
    for deg in range(order + 1):
        assert np.sum(w * offs.astype(float) ** deg) == pytest.approx(r ** deg, abs=1e-12)


def test_even_order_rejected():
    with pytest.raises(ValueError):
        lagrange_weights(0.3, 2)


def test_integer_shift_is_exact_translation():
    f = np.random.default_rng(0).standard_normal(10)
    S = shift_matrix(10, 2.0)
    np.testing.assert_array_equal(S @ f, np.r_[0.0, 0.0, f[:-2]])
    Sp = shift_matrix(10, -3.0, periodic=True)
    np.testing.assert_allclose(Sp @ f, np.roll(f, -3), atol=1e-15)


def test_cubic_shift_exact_on_cubics_in_interior():
    N, d = 20, 0.37
    i = np.arange(N, dtype=float)
    f = 0.5 * i ** 3 - i ** 2 + 2
    g = shift_matrix(N, d) @ f
    exact = 0.5 * (i - d) ** 3 - (i - d) ** 2 + 2
    np.testing.assert_allclose(g[3:-3], exact[3:-3], rtol=1e-12)


@pytest.mark.parametrize("delta", [0.3, -0.8, 1.6])
def test_periodic_shift_is_contraction(delta):
    S = shift_matrix(32, delta, 3, periodic=True)
    assert np.linalg.norm(S, 2) <= 1 + 1e-12


# -- stepper -----------------------------------------------------------------------------------

def test_zero_stays_zero(small):
    phi, op, grid = small
    st_ = Stepper(grid, op, StepperOptions(dt=0.01))
    f = PhaseField(grid, np.zeros(grid.shape))
    for _ in range(100):
        f = step(f, st_)
    assert f.norm() < 1e-12
    assert f.t == pytest.approx(1.0)


def test_pure_collision_preserves_kernel(small):
    phi, op, grid = small
    st_ = Stepper(grid, op, StepperOptions(dt=0.05, force=False))
    st_.Sx = [np.broadcast_to(np.eye(grid.N), (grid.vgrid.m, grid.N, grid.N))] * 2   # transport off
    basis = Projection.for_grid(op.grid).basis                    # (m^2, 4)
    rng = np.random.default_rng(1)
    prof = rng.standard_normal((grid.N, grid.N, 4))
    f0 = (prof @ basis.T).reshape(grid.shape)
    f = f0
    for _ in range(20):
        f = st_.step(f)
    assert np.max(np.abs(f - f0)) < 1e-12 * np.max(np.abs(f0))


def test_periodic_free_transport_matches_characteristics():
    phi = P.normalize(P.phi1(2, beta=8.0))
    vg = VelocityGrid(2, 8, 3.0)
    grid = PhaseGrid.build(phi, 32, vg)
    dt = 0.05
    st_ = Stepper(grid, None, StepperOptions(dt=dt, collision=False, force=False, periodic=True))
    L = grid.half_widths[0]
    omega = 2 * math.pi / (2 * L)
    x1 = grid.axes[0].reshape(-1, 1, 1, 1)
    xi1 = vg.axis.reshape(1, 1, -1, 1)
    f0 = np.broadcast_to(np.sin(omega * x1), grid.shape).copy()
    f1 = st_.step(f0)
    exact = np.broadcast_to(np.sin(omega * (x1 - xi1 * dt)), grid.shape)
    # two half-step cubic interpolations, each off by at most (9/16)/4! (omega h)^4
    bound = 2 * (9 / 16) / 24 * (omega * grid.dx[0]) ** 4
    assert np.max(np.abs(f1 - exact)) <= bound


def test_cfl_guard(small):
    phi, op, grid = small
    with pytest.raises(SimulationError):
        Stepper(grid, op, StepperOptions(dt=5.0, cfl_max=1.0))


def test_nan_aborts(small):
    phi, op, grid = small
    st_ = Stepper(grid, op, StepperOptions(dt=0.01))
    f = np.zeros(grid.shape)
    f[3, 3, 3, 3] = np.nan
    with pytest.raises(SimulationError):
        st_.step(f)


# -- initial data --------------------------------------------------------------------------------

def test_build_initial_constraints(small):
    phi, op, grid = small
    f = build_initial(bump(grid))
    dens = conserved_densities(grid, P.compute_S_phi(phi))
    assert set(dens) == {"mass", "energy", "angular_12"}
    for g in dens.values():
        assert abs(np.sum(f.values * g) * grid.cell_volume) < 1e-10
    again = build_initial(f)
    assert np.max(np.abs(again.values - f.values)) < 1e-12 * np.max(np.abs(f.values))


def test_build_initial_removes_equilibrium(small):
    phi, op, grid = small
    sq = grid.sqrt_equilibrium()
    f = build_initial(PhaseField(grid, sq.copy()))
    assert abs(np.sum(f.values * sq) * grid.cell_volume) < 1e-10
    assert f.norm() < 1e-10


# -- decay fit and coercivity diagnostic -----------------------------------------------------------

def test_decay_fit_exact_exponential():
    t = np.linspace(0, 10, 50)
    rep = decay_fit(t, np.exp(-0.3 * t))
    assert rep.sigma == pytest.approx(0.3, abs=1e-10)
    assert rep.claim and rep.monotonicity_violations == 0


def test_decay_fit_constant():
    t = np.linspace(0, 10, 50)
    assert abs(decay_fit(t, np.full(50, 2.5)).sigma) < 1e-12


def test_decay_fit_oscillating_envelope():
    t = np.linspace(0, 10, 400)
    rep = decay_fit(t, np.exp(-0.3 * t) * (2 + np.cos(5 * t)))
    assert rep.window[1] - rep.window[0] >= 3 * 2 * math.pi / 5
    assert rep.sigma == pytest.approx(0.3, abs=0.05)
    assert rep.monotonicity_violations > 0


def test_decay_fit_shrinks_on_nonpositive():
    t = np.linspace(0, 10, 50)
    y = np.exp(-t)
    y[40:] = 0.0
    rep = decay_fit(t, y)
    assert rep.window[1] < 10 and "shrunk" in rep.note
    assert rep.sigma == pytest.approx(1.0, abs=1e-10)


def test_decay_fit_needs_samples():
    with pytest.raises(ValueError):
        decay_fit(np.arange(5.0), np.ones(5))


def test_count_violations():
    assert count_violations([1.0, 1.0, 1.0 + 1e-9, 0.5]) == 0
    assert count_violations([1.0, 1.1, 1.0]) == 1


def test_simulation_ledger_and_zero_run(small):
    phi, op, grid = small
    st_ = Stepper(grid, op, StepperOptions(dt=0.02))
    res = simulate(build_initial(bump(grid)), st_, T=2.0, output_interval=0.1)
    cols = res.ledger.columns
    assert cols[:4] == ["t", "mass", "energy", "angular_12"]
    assert {"l2_norm", "nu_norm", "boundary_loss", "dissipation"} <= set(cols)
    assert len(res.ledger.rows) == 21
    assert res.ledger.to_csv().splitlines()[0].startswith("t,mass,energy")
    assert res.step_violations == 0
    assert res.decay.sigma > 0
    assert res.coercivity["measured_C"] > 0
    # the dissipation never exceeds what the nu-norm allows
    assert np.all(res.ledger.column("dissipation") <= np.max(op.nu) * res.ledger.column("l2_norm") ** 2 * 1.0001)
    zero = simulate(PhaseField(grid, np.zeros(grid.shape)), st_, T=1.0)
    assert coercivity_diagnostic(zero.ledger)["status"] == "empty"
    assert np.max(zero.ledger.column("l2_norm")) == 0.0
