"""Phase-space time integration of the perturbation equation

    df/dt + xi . grad_x f - grad(phi) . grad_xi f + L f = 0,

with ``F = M_phi + M_phi^{1/2} f`` and ``M_phi = M(xi) e^{-phi(x)}``.

One step is a Strang splitting: half x-advection, half xi-advection, the
exact collision propagator ``exp(-dt L)`` in every spatial cell, then the
advection half-steps in reverse order.  Advection is semi-Lagrangian with
odd-degree Lagrange interpolation along each axis and zero inflow at the box
boundary; the mass that leaves the box is estimated and reported.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .collision import CollisionOperator, VelocityGrid
from .potential import AngularPairSet, Potential, compute_S_phi, truncation_box

MONOTONE_TOL = 1e-8


class SimulationError(RuntimeError):
    pass


# -- interpolation ---------------------------------------------------------------------

def lagrange_weights(r: float, order: int) -> tuple:
    """Offsets and weights of the odd-degree Lagrange stencil for a point at
    fractional position ``r`` in [0, 1) past the node with offset 0."""
    if order < 1 or order % 2 == 0:
        raise ValueError("interpolation order must be odd")
    s = (order + 1) // 2
    offsets = np.arange(-s + 1, s + 1)
    w = np.ones(len(offsets))
    for a, k in enumerate(offsets):
        for m in offsets:
            if m != k:
                w[a] *= (r - m) / (k - m)
    return offsets, w


def shift_matrix(N: int, delta: float, order: int = 3, periodic: bool = False) -> np.ndarray:
    """Matrix ``S`` with ``(S f)_i = f(i - delta)`` by Lagrange interpolation;
    nodes outside ``0..N-1`` are zero (or wrapped when periodic)."""
    S = np.zeros((N, N))
    for i in range(N):
        p = i - delta
        q = math.floor(p)
        offsets, w = lagrange_weights(p - q, order)
        for k, wk in zip(offsets, w):
            j = q + k
            if periodic:
                S[i, j % N] += wk
            elif 0 <= j < N:
                S[i, j] += wk
    return S


# -- grids ----------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PhaseGrid:
    """Uniform cell-centred spatial grid on the truncation box times a velocity grid."""

    phi: Potential
    N: int
    vgrid: VelocityGrid
    half_widths: tuple

    @classmethod
    def build(cls, phi: Potential, N: int, vgrid: VelocityGrid, half_widths=None) -> "PhaseGrid":
        if N < 2:
            raise ValueError("spatial grid needs at least 2 points per axis")
        if vgrid.n != phi.n:
            raise ValueError("velocity and spatial dimensions differ")
        hw = tuple(truncation_box(phi)) if half_widths is None else tuple(half_widths)
        return cls(phi, N, vgrid, hw)

    @property
    def n(self) -> int:
        return self.phi.n

    @property
    def dx(self) -> np.ndarray:
        return 2 * np.asarray(self.half_widths) / self.N

    @property
    def axes(self) -> List[np.ndarray]:
        return [-L + (np.arange(self.N) + 0.5) * d for L, d in zip(self.half_widths, self.dx)]

    @property
    def x_nodes(self) -> np.ndarray:
        """(N, ..., N, n) spatial node coordinates."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @property
    def shape(self):
        return (self.N,) * self.n + (self.vgrid.m,) * self.n

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx)) * self.vgrid.cell

    def xi_fields(self) -> np.ndarray:
        """(m, ..., m, n) velocity node coordinates."""
        ax = self.vgrid.axis
        return np.stack(np.meshgrid(*([ax] * self.n), indexing="ij"), axis=-1)

    def sqrt_equilibrium(self) -> np.ndarray:
        """``M_phi^{1/2}`` on the phase grid."""
        n = self.n
        ex = np.exp(-0.5 * self.phi(self.x_nodes))
        xi = self.xi_fields()
        ev = np.exp(-0.25 * np.sum(xi * xi, axis=-1)) * (2 * math.pi) ** (-n / 4)
        return ex.reshape(ex.shape + (1,) * n) * ev.reshape((1,) * n + ev.shape)


@dataclass
class PhaseField:
    grid: PhaseGrid
    values: np.ndarray
    t: float = 0.0

    def norm(self) -> float:
        return math.sqrt(float(np.sum(self.values ** 2)) * self.grid.cell_volume)


# -- conserved densities ---------------------------------------------------------------------

def conserved_densities(grid: PhaseGrid, S: AngularPairSet) -> Dict[str, np.ndarray]:
    """Densities ``g`` with conserved functionals ``<f, g>``: mass, energy and the
    angular momenta of ``S_phi``."""
    n = grid.n
    sq = grid.sqrt_equilibrium()
    X = grid.x_nodes.reshape((grid.N,) * n + (1,) * n + (n,))
    XI = grid.xi_fields().reshape((1,) * n + (grid.vgrid.m,) * n + (n,))
    phi = grid.phi(grid.x_nodes).reshape((grid.N,) * n + (1,) * n)
    out = {"mass": sq, "energy": (0.5 * np.sum(XI * XI, axis=-1) + phi) * sq}
    for i, j in S.upper():
        out[f"angular_{i + 1}{j + 1}"] = (X[..., i] * XI[..., j] - X[..., j] * XI[..., i]) * sq
    return out


def build_initial(f_raw: PhaseField, S: Optional[AngularPairSet] = None, tol: float = 1e-10) -> PhaseField:
    """Remove from ``f_raw`` its components along the conserved densities so that
    mass, energy and the ``S_phi`` angular momenta of the result vanish."""
    grid = f_raw.grid
    S = compute_S_phi(grid.phi) if S is None else S
    dens = list(conserved_densities(grid, S).values())
    dV = grid.cell_volume
    G = np.array([[np.sum(a * b) * dV for b in dens] for a in dens])
    rhs = np.array([np.sum(f_raw.values * g) * dV for g in dens])
    if np.linalg.cond(G) > 1e12:
        raise SimulationError("constraint Gram matrix is singular on this grid")
    coef = np.linalg.solve(G, rhs)
    f = f_raw.values - sum(c * g for c, g in zip(coef, dens))
    # one refinement sweep against round-off
    rhs = np.array([np.sum(f * g) * dV for g in dens])
    f = f - sum(c * g for c, g in zip(np.linalg.solve(G, rhs), dens))
    return PhaseField(grid, f, f_raw.t)


def bump(grid: PhaseGrid, amplitude: float = 0.5, center=None, width: Optional[float] = None,
         velocity_poly=(0.5, -0.4, 0.3)) -> PhaseField:
    """Smooth raw data: a Gaussian bump in ``x`` times
    ``(1 + p1 xi_1 + p2 xi_2 + p3 (xi_1^2 - 1)) M^{1/2}(xi)``.

    ``center`` and ``width`` are fractions of the box half-widths."""
    n = grid.n
    L = np.asarray(grid.half_widths)
    center = np.array([0.15, -0.1, 0.05][:n]) if center is None else np.asarray(center, dtype=float)
    width = 0.25 if width is None else width
    X = grid.x_nodes
    gx = np.exp(-0.5 * np.sum(((X - center * L) / (width * L)) ** 2, axis=-1))
    xi = grid.xi_fields()
    p1, p2, p3 = velocity_poly
    poly = 1 + p1 * xi[..., 0] + (p2 * xi[..., 1] if n > 1 else 0) + p3 * (xi[..., 0] ** 2 - 1)
    gv = poly * np.exp(-0.25 * np.sum(xi * xi, axis=-1))
    return PhaseField(grid, amplitude * gx.reshape(gx.shape + (1,) * n) * gv.reshape((1,) * n + gv.shape))


# -- stepper ----------------------------------------------------------------------------------

@dataclass
class StepperOptions:
    dt: float = 0.01
    order: int = 3
    collision: bool = True
    force: bool = True
    periodic: bool = False
    cfl_max: float = 4.0


class Stepper:
    """Precomputed Strang-splitting step for a fixed grid, operator and ``dt``."""

    def __init__(self, grid: PhaseGrid, op: Optional[CollisionOperator], options: StepperOptions):
        self.grid = grid
        self.op = op
        self.opt = options
        n, N, m = grid.n, grid.N, grid.vgrid.m
        dt = options.dt
        if dt <= 0:
            raise ValueError("dt must be positive")
        if options.collision and op is None:
            raise ValueError("collision step needs an operator")
        xi = grid.vgrid.axis
        half = 0.5 * dt
        # x-advection along axis k: f(x) <- f(x - xi_k dt/2); one matrix per xi_k value
        shifts = np.abs(xi).max() * half / grid.dx
        if np.any(shifts > options.cfl_max):
            raise SimulationError(f"x-advection shift {shifts.max():.2f} cells exceeds cfl_max")
        self.Sx = [np.stack([shift_matrix(N, v * half / grid.dx[k], options.order, options.periodic)
                             for v in xi]) for k in range(n)]
        # xi-advection along axis k: f(xi) <- f(xi + d_k phi dt/2); one matrix per spatial node
        self.Sv = None
        if options.force:
            g = grid.phi.grad(grid.x_nodes).reshape(-1, n)
            dv = -g * half / grid.vgrid.h
            if np.any(np.abs(dv) > options.cfl_max):
                raise SimulationError(f"xi-advection shift {np.abs(dv).max():.2f} cells exceeds cfl_max")
            self.Sv = [np.stack([shift_matrix(m, d, options.order) for d in dv[:, k]]) for k in range(n)]
        self.E = None
        if options.collision:
            lam, V = np.linalg.eigh(op.L)
            lam = np.where(lam < 1e-10 * np.max(np.abs(lam)), 0.0, lam)
            self.E = (V * np.exp(-dt * lam)) @ V.T
        self.sqrtM = grid.sqrt_equilibrium()
        self._loss = 0.0

    # each substep returns the new array; boundary outflow is accumulated in self._loss
    def _x_advect(self, f):
        n, N = self.grid.n, self.grid.N
        m = self.grid.vgrid.m
        for k in range(n):
            if not self.opt.periodic:
                self._loss += self._x_outflow(f, k)
            g = np.moveaxis(f, (n + k, k), (0, 1))                  # (m, N, ...)
            shp = g.shape
            g = np.matmul(self.Sx[k], g.reshape(m, N, -1)).reshape(shp)
            f = np.moveaxis(g, (0, 1), (n + k, k))
        return f

    def _xi_advect(self, f):
        if self.Sv is None:
            return f
        n, N, m = self.grid.n, self.grid.N, self.grid.vgrid.m
        P = N ** n
        for k in range(n):
            self._loss += self._xi_outflow(f, k)
            g = np.moveaxis(f.reshape((P,) + (m,) * n), k + 1, 1)     # (P, m, ...)
            shp = g.shape
            g = np.matmul(self.Sv[k], g.reshape(P, m, -1)).reshape(shp)
            f = np.moveaxis(g, 1, k + 1).reshape(f.shape)
        return f

    def _collide(self, f):
        if self.E is None:
            return f
        n, N, m = self.grid.n, self.grid.N, self.grid.vgrid.m
        return (f.reshape(N ** n, m ** n) @ self.E).reshape(f.shape)

    def _x_outflow(self, f, k):
        """Upwind estimate of the mass leaving through the x_k faces in a half step."""
        n = self.grid.n
        xi = self.grid.vgrid.axis
        dt = 0.5 * self.opt.dt
        vol = self.grid.cell_volume / self.grid.dx[k]
        shape = [1] * (2 * n)
        shape[n + k] = -1
        v = xi.reshape(shape)
        hi = np.take(np.abs(f) * self.sqrtM, [-1], axis=k) * np.clip(np.take(v, [0], axis=k), 0, None)
        lo = np.take(np.abs(f) * self.sqrtM, [0], axis=k) * np.clip(-np.take(v, [0], axis=k), 0, None)
        return float((hi.sum() + lo.sum()) * dt * vol)

    def _xi_outflow(self, f, k):
        n = self.grid.n
        dt = 0.5 * self.opt.dt
        vol = self.grid.cell_volume / self.grid.vgrid.h
        force = -self.grid.phi.grad(self.grid.x_nodes)[..., k].reshape((self.grid.N,) * n + (1,) * n)
        a = np.abs(f) * self.sqrtM
        hi = np.take(a, [-1], axis=n + k) * np.clip(force, 0, None)
        lo = np.take(a, [0], axis=n + k) * np.clip(-force, 0, None)
        return float((hi.sum() + lo.sum()) * dt * vol)

    def step(self, f: np.ndarray) -> np.ndarray:
        f = self._x_advect(f)
        f = self._xi_advect(f)
        f = self._collide(f)
        f = self._xi_advect(f)
        f = self._x_advect(f)
        if not np.all(np.isfinite(f)):
            raise SimulationError("non-finite values in the phase field")
        return f

    def pop_loss(self) -> float:
        out, self._loss = self._loss, 0.0
        return out


def step(f: PhaseField, stepper: Stepper) -> PhaseField:
    """Advance ``f`` by one step of ``stepper.opt.dt``."""
    return PhaseField(f.grid, stepper.step(f.values), f.t + stepper.opt.dt)


# -- ledger and reports ---------------------------------------------------------------------

@dataclass
class ConservationLedger:
    columns: List[str]
    rows: List[List[float]] = field(default_factory=list)

    def append(self, row: Dict[str, float]):
        self.rows.append([float(row[c]) for c in self.columns])

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([repr(v) for v in r])
        return buf.getvalue()


@dataclass
class DecayReport:
    sigma: float
    prefactor: float
    residual: float
    window: tuple
    samples: int
    monotonicity_violations: int
    claim: bool
    note: str = ""

    def to_dict(self):
        return {"sigma": self.sigma, "prefactor": self.prefactor, "fit_residual": self.residual,
                "fit_window": list(self.window), "samples": self.samples,
                "monotonicity_violations": self.monotonicity_violations, "claim": self.claim,
                "note": self.note}


def count_violations(norms: Sequence[float], tol: float = MONOTONE_TOL) -> int:
    v = np.asarray(norms, dtype=float)
    return int(np.sum(v[1:] > v[:-1] * (1 + tol)))


def decay_fit(t, norms, discard: float = 0.2, max_residual: float = 0.05,
              window: Optional[tuple] = None) -> DecayReport:
    """Least-squares fit of ``log |f(t)|`` over the window; ``sigma = -slope``.

    The default window drops the first ``discard`` fraction of the horizon.
    ``residual`` is the root-mean-square deviation of the logarithm from the fit.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(norms, dtype=float)
    if len(t) < 10:
        raise ValueError("decay_fit needs at least 10 samples")
    t0, t1 = window if window is not None else (t[0] + discard * (t[-1] - t[0]), t[-1])
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    note = ""
    bad = np.nonzero(sel & ~(y > 0))[0]
    if len(bad):
        t1 = t[bad[0] - 1] if bad[0] > 0 else t0
        sel &= t <= t1 + 1e-12
        sel &= y > 0
        note = f"window shrunk to end at t={t1!r}: non-positive norm values"
    if np.sum(sel) < 2:
        return DecayReport(float("nan"), float("nan"), float("inf"), (float(t0), float(t1)), int(np.sum(sel)),
                           count_violations(y), False, note or "too few samples in window")
    slope, intercept = np.polyfit(t[sel], np.log(y[sel]), 1)
    resid = np.log(y[sel]) - (slope * t[sel] + intercept)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return DecayReport(float(-slope), float(math.exp(intercept)), rms, (float(t0), float(t1)), int(np.sum(sel)),
                       count_violations(y), bool(rms < max_residual), note)


def coercivity_diagnostic(ledger: ConservationLedger, guard: float = 1e-14) -> dict:
    """Per unit window ``[k, k+1]``: ``int <Lf, f> ds / int |f|_nu^2 ds``."""
    t = ledger.column("t")
    diss = ledger.column("dissipation")
    nu2 = ledger.column("nu_norm") ** 2
    windows = []
    k = math.floor(t[0] + 1e-9)
    while k + 1 <= t[-1] + 1e-9:
        sel = (t >= k - 1e-9) & (t <= k + 1 + 1e-9)
        den = float(trapezoid(nu2[sel], t[sel]))
        num = float(trapezoid(diss[sel], t[sel]))
        windows.append({"window": [k, k + 1], "ratio": None if den < guard else num / den,
                        "nu_norm_sq_integral": den})
        k += 1
    ratios = [w["ratio"] for w in windows if w["ratio"] is not None]
    if not ratios:
        return {"status": "empty", "measured_C": None, "windows": windows}
    return {"status": "ok" if min(ratios) > 0 else "nonpositive", "measured_C": min(ratios),
            "windows": windows}


# -- driver -----------------------------------------------------------------------------------------

@dataclass
class SimulationResult:
    ledger: ConservationLedger
    decay: DecayReport
    coercivity: dict
    drifts: Dict[str, float]
    boundary_loss: float
    status: str
    step_violations: int
    initial_norm: float
    final: PhaseField = field(repr=False)
    steps: int = 0

    def summary(self) -> dict:
        return {"status": self.status, "steps": self.steps, "initial_norm": self.initial_norm,
                "final_norm": self.final.norm(), "drifts": self.drifts,
                "boundary_loss": self.boundary_loss, "step_monotonicity_violations": self.step_violations,
                "decay": self.decay.to_dict(), "coercivity": self.coercivity}


@dataclass
class DriftBounds:
    mass: float = 1e-6
    energy: float = 1e-5
    angular: float = 1e-5
    boundary_loss: float = 1e-6


def simulate(f0: PhaseField, stepper: Stepper, T: float, output_interval: float = 0.1,
             S: Optional[AngularPairSet] = None, bounds: DriftBounds = DriftBounds(),
             fit_discard: float = 0.2, fit_residual: float = 0.05) -> SimulationResult:
    """Integrate to ``T``, recording the ledger every ``output_interval``.

    Conservation drift of a functional ``<f, g>`` is reported relative to the
    Cauchy-Schwarz scale ``|f0| |g|``.  Boundary loss is reported relative to
    the initial perturbation mass ``int |f0| M_phi^{1/2}``, which makes it
    independent of the (arbitrary) amplitude of the linear perturbation.
    """
    grid = f0.grid
    S = compute_S_phi(grid.phi) if S is None else S
    dens = conserved_densities(grid, S)
    dV = grid.cell_volume
    op = stepper.op
    nu = None if op is None else op.nu.reshape((1,) * grid.n + (grid.vgrid.m,) * grid.n)
    pert_mass = float(np.sum(np.abs(f0.values) * stepper.sqrtM) * dV)
    loss_scale = pert_mass if pert_mass > 0 else 1.0
    columns = ["t"] + list(dens) + ["l2_norm", "nu_norm", "boundary_loss", "dissipation"]
    ledger = ConservationLedger(columns)
    n_steps = int(round(T / stepper.opt.dt))
    every = max(1, int(round(output_interval / stepper.opt.dt)))
    loss = 0.0
    stepper.pop_loss()

    def record(f, t):
        row = {"t": t, "boundary_loss": loss / loss_scale}
        for k, g in dens.items():
            row[k] = float(np.sum(f * g) * dV)
        row["l2_norm"] = math.sqrt(float(np.sum(f * f)) * dV)
        if op is not None:
            row["nu_norm"] = math.sqrt(float(np.sum(nu * f * f)) * dV)
            Lf = op.apply(f.reshape(-1, op.grid.size)).reshape(f.shape)
            row["dissipation"] = float(np.sum(Lf * f) * dV)
        else:
            row["nu_norm"] = row["l2_norm"]
            row["dissipation"] = 0.0
        ledger.append(row)

    f = f0.values.copy()
    record(f, f0.t)
    norm_prev = math.sqrt(float(np.sum(f * f)) * dV)
    violations = 0
    for s in range(1, n_steps + 1):
        f = stepper.step(f)
        loss += stepper.pop_loss()
        nrm = math.sqrt(float(np.sum(f * f)) * dV)
        if nrm > norm_prev * (1 + MONOTONE_TOL):
            violations += 1
        norm_prev = nrm
        if s % every == 0 or s == n_steps:
            record(f, f0.t + s * stepper.opt.dt)

    init_norm = ledger.rows[0][columns.index("l2_norm")]
    drifts = {}
    for k, g in dens.items():
        series = ledger.column(k)
        scale = init_norm * math.sqrt(float(np.sum(g * g)) * dV)
        drifts[k] = float(np.max(np.abs(series - series[0])) / scale) if scale > 0 else 0.0
    t = ledger.column("t")
    norms = ledger.column("l2_norm")
    if init_norm > 0 and len(t) >= 10:
        decay = decay_fit(t, norms, fit_discard, fit_residual)
    else:
        decay = DecayReport(float("nan"), float("nan"), float("inf"), (0.0, float(T)), len(t),
                            count_violations(norms), False, "no decay fit: zero or too short trajectory")
    coer = coercivity_diagnostic(ledger)
    status = "OK"
    if (drifts["mass"] > bounds.mass or drifts["energy"] > bounds.energy
            or any(v > bounds.angular for k, v in drifts.items() if k.startswith("angular"))):
        status = "FAILED-CONSERVATION"
    blost = loss / loss_scale
    if blost > bounds.boundary_loss:
        status = "FAILED-TRUNCATION" if status == "OK" else status + "+TRUNCATION"
    return SimulationResult(ledger, decay, coer, drifts, blost, status, violations, init_norm,
                            PhaseField(grid, f, f0.t + n_steps * stepper.opt.dt), n_steps)
