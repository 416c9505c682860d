import math

import numpy as np
import pytest
from scipy.interpolate import RectBivariateSpline

from cnsflow.core import VorticityField, diagnostics, fisher_information, mf_residual, solve_stream
from cnsflow.dynamics import (
    StepConfig, TrajectoryRecord, project_EI, regularized_energy, rhs_advection, run_trajectory,
    step_constrained, step_fp, step_ns, step_rescaled, _rk2,
)
from cnsflow.errors import ConfigError, DomainTooSmallError, StepSizeError
from cnsflow.grid import Grid
from cnsflow.initial import gaussian, oseen, perturbed, ring, two_blob


def l1(a, b):
    return a.grid.integrate(np.abs(a.values - b.values))


def run_steps(step, w, cfg, k):
    for _ in range(k):
        w = step(w, cfg)
    return w


# ---------------------------------------------------------------- advection


def test_advection_vanishes_for_radial_fields(grid):
    w = ring(grid)
    assert np.max(np.abs(rhs_advection(w, solve_stream(w)))) < 1e-10


def test_advection_is_mass_neutral(grid):
    w = two_blob(grid)
    assert abs(grid.integrate(rhs_advection(w, solve_stream(w)))) < 1e-12


def test_pure_advection_conserves_invariants(grid):
    w0 = two_blob(grid)
    d0 = diagnostics(w0)
    drifts = []
    for dt in (0.2, 0.1):
        w1 = _rk2(w0, lambda f: rhs_advection(f, solve_stream(f)), dt)
        d1 = diagnostics(w1)
        drifts.append(max(abs(d1.E - d0.E) / abs(d0.E), abs(d1.I - d0.I) / d0.I, abs(d1.S - d0.S) / abs(d0.S)))
    assert drifts[0] < 1e-5
    # one step: local error O(dt^3), so at least a factor 4 per halving
    assert drifts[1] < drifts[0] / 4


# ---------------------------------------------------------------- Navier-Stokes


def test_oseen_short_run(small_grid):
    cfg = StepConfig(nu=1.0, dt=4e-3, equation="ns", t_end=0.2, output_every=50)
    rec = run_trajectory(oseen(small_grid, 0.0), cfg)
    assert l1(rec.final, oseen(small_grid, 0.2)) < 1e-4
    assert rec.series("I")[-1] - 2.0 == pytest.approx(0.4, rel=1e-6)


def test_step_size_guard(grid):
    with pytest.raises(StepSizeError, match="diffusive"):
        step_ns(gaussian(grid), StepConfig(nu=1.0, dt=0.1, equation="ns"))
    with pytest.raises(StepSizeError, match="CFL"):
        step_ns(ring(grid, 1.0, 0.2), StepConfig(nu=1e-4, dt=2.0, equation="ns"))


def test_step_config_validation():
    with pytest.raises(ConfigError):
        StepConfig(nu=0.0)
    with pytest.raises(ConfigError):
        StepConfig(scheme="implicit")
    with pytest.raises(ConfigError):
        StepConfig(equation="energy")


# ---------------------------------------------------------------- constrained


def test_gaussian_is_stationary_under_constrained_flow(small_grid):
    w0 = gaussian(small_grid, 1.7)
    cfg = StepConfig(nu=1e-2, dt=1e-2, scheme="formula")
    w = run_steps(lambda f, c: step_constrained(f, c), w0, cfg, 100)
    assert l1(w, w0) < 1e-8


def test_projected_ring_conserves_and_dissipates(grid):
    cfg = StepConfig(nu=1.0, dt=1e-3, scheme="projected", t_end=0.1, output_every=10)
    rec = run_trajectory(ring(grid), cfg)
    E, I, S = rec.series("E"), rec.series("I"), rec.series("S")
    assert np.max(np.abs(E / E[0] - 1)) < 1e-6
    assert np.max(np.abs(I / I[0] - 1)) < 1e-6
    assert np.all(np.diff(S) < 0)
    assert np.max(np.abs(rec.series("Mx"))) < 1e-8 and np.max(np.abs(rec.series("My"))) < 1e-8


def test_entropy_decrement_matches_residual(grid):
    nu, dt = 1.0, 2e-4
    w0 = ring(grid)
    cfg = StepConfig(nu=nu, dt=dt, scheme="formula")
    w1 = step_constrained(w0, cfg)
    mid = VorticityField(grid, 0.5 * (w0.values + w1.values))
    from cnsflow.core import multipliers

    sv = solve_stream(mid)
    R = mf_residual(mid, sv, multipliers(diagnostics(mid, sv)))
    dS = (diagnostics(w1).S - diagnostics(w0).S) / dt
    assert dS == pytest.approx(-nu * R, rel=2e-2)


def test_formula_mode_is_second_order(grid):
    w0 = two_blob(grid)
    d0 = diagnostics(w0)
    drift = []
    for dt in (0.2, 0.1):
        rec = run_trajectory(w0, StepConfig(nu=1e-2, dt=dt, scheme="formula", t_end=2.0, output_every=100))
        drift.append(abs(rec.series("E")[-1] - d0.E) / abs(d0.E))
    assert drift[1] < drift[0] / 4


def test_projection_identity_on_target(grid):
    w = two_blob(grid)
    d = diagnostics(w)
    p = project_EI(w, d.E, d.I)
    assert p.da == 0.0 and p.db == 0.0 and p.iterations == 0
    assert np.array_equal(p.omega.values, w.values)


def test_projection_repairs_energy_offset(grid):
    w = two_blob(grid)
    d = diagnostics(w)
    p = project_EI(w, d.E * (1 + 1e-6), d.I)
    d1 = diagnostics(p.omega)
    assert p.iterations <= 2
    assert abs(d1.E / (d.E * (1 + 1e-6)) - 1) < 1e-12
    assert abs(d1.I / d.I - 1) < 1e-12
    assert abs(p.omega.mass() - w.mass()) < 1e-12


# ---------------------------------------------------------------- Fokker-Planck and rescaled


def test_fp_conserves_inertia_and_relaxes(small_grid):
    g = small_grid
    w0 = perturbed(two_blob(g, 2.5, 0.7), amplitude=0.3)
    cfg = StepConfig(nu=1.0, dt=5e-3, equation="fp", t_end=10.0, output_every=200)
    rec = run_trajectory(w0, cfg)
    I = rec.series("I")
    upto2 = rec.series("t") <= 2.0
    assert np.max(np.abs(I[upto2] / I[0] - 1)) < 1e-6
    S = rec.series("S")
    assert np.all(np.diff(S) <= 1e-13 * np.abs(S[1:]))
    # the limit is the Gaussian with the same inertia about the same centre
    mx, my = rec.diagnostics[-1].M
    X, Y = g.mesh()
    target = np.exp(-((X - mx) ** 2 + (Y - my) ** 2) / (2 * I[0])) / (2 * math.pi * I[0])
    assert g.integrate(np.abs(rec.final.values - target)) < 1e-3


def test_fp_gaussian_is_stationary(small_grid):
    w0 = gaussian(small_grid, 2.5)
    w = run_steps(step_fp, w0, StepConfig(nu=1.0, dt=5e-3, equation="fp"), 100)
    assert l1(w, w0) < 1e-8


def test_w_is_stationary_under_rescaled_flow(grid, W):
    w = run_steps(step_rescaled, W, StepConfig(dt=1e-3, equation="rescaled"), 100)
    assert l1(w, W) < 1e-8


def test_rescaled_flow_returns_to_w(small_grid):
    W = gaussian(small_grid, 2.0)
    w0 = perturbed(W, amplitude=0.1)
    rec = run_trajectory(w0, StepConfig(dt=5e-3, equation="rescaled", t_end=5.0, output_every=1000))
    assert l1(rec.final, W) < l1(w0, W)


def test_rescaled_matches_navier_stokes_in_similarity_variables():
    """NS from a perturbed Oseen vortex mapped by xi = x/sqrt(1+t),
    tau = log(1+t) agrees with the rescaled run at tau = 1."""
    big = Grid(18.0, 320)
    W_big = gaussian(big, 2.0)
    w_ns0 = perturbed(W_big, amplitude=0.1)
    t_end = math.e - 1.0
    dt = t_end / 900
    w_ns = run_steps(step_ns, w_ns0, StepConfig(nu=1.0, dt=dt, equation="ns"), 900)

    g = Grid(12.0, 256)
    w_r0 = perturbed(gaussian(g, 2.0), amplitude=0.1)
    rec = run_trajectory(w_r0, StepConfig(dt=1e-3, equation="rescaled", t_end=1.0, output_every=1000))

    spline = RectBivariateSpline(big.x, big.x, w_ns.values, kx=5, ky=5)
    s = math.sqrt(1.0 + t_end)
    mapped = (1.0 + t_end) * spline(g.x * s, g.x * s)
    assert g.integrate(np.abs(mapped - rec.final.values)) < 1e-3


# ---------------------------------------------------------------- energy-only equation


def test_energy_equation_keeps_regularized_energy(grid, W):
    delta = 2 * grid.h
    cfg = StepConfig(nu=1.0, dt=1e-3, scheme="formula", equation="energy", delta=delta,
                     t_end=0.05, output_every=50)
    rec = run_trajectory(W, cfg)
    e0, e1 = regularized_energy(W, delta), regularized_energy(rec.final, delta)
    assert abs(e1 / e0 - 1) < 1e-8
    assert abs(rec.final.mass() - 1) < 1e-12
    # the discrete multiplier agrees with the closed form
    from cnsflow.dynamics import energy_multiplier, regularized_fields

    rf = regularized_fields(W, delta)
    w, sp = W.values, grid.spectral()
    gx, gy = sp.grad(w)
    diff = sp.div(gx, gy, dealias=True)
    drift = sp.div(w * rf.grad_phi[0], w * rf.grad_phi[1], dealias=True)
    b_discrete = -(rf.phi * diff).sum() / (rf.phi * drift).sum()
    assert b_discrete == pytest.approx(energy_multiplier(W, rf), rel=1e-3)


# ---------------------------------------------------------------- trajectories


def test_zero_length_run(small_grid):
    rec = run_trajectory(gaussian(small_grid), StepConfig(t_end=0.0))
    assert rec.times == [0.0] and len(rec.diagnostics) == 1


def test_records_are_bitwise_reproducible(tmp_path, grid):
    cfg = StepConfig(nu=1e-2, dt=0.1, scheme="projected", t_end=1.0, output_every=2)
    w0 = two_blob(grid)
    for k in (1, 2):
        rec = run_trajectory(w0, cfg)
        rec.write_csv(tmp_path / f"d{k}.csv")
    assert (tmp_path / "d1.csv").read_bytes() == (tmp_path / "d2.csv").read_bytes()
    header = (tmp_path / "d1.csv").read_text().splitlines()[0]
    assert header == "t,Mx,My,E,I,S,Z2,K,V,a,b,residual"
    assert np.all(np.diff(rec.times) > 0)


def test_record_rejects_non_increasing_times(small_grid):
    rec = TrajectoryRecord()
    w = gaussian(small_grid)
    rec.append(0.0, w)
    with pytest.raises(ValueError):
        rec.append(0.0, w)


def test_step_errors_carry_the_time():
    g = Grid(7.0, 64)
    cfg = StepConfig(nu=1.0, dt=1e-2, equation="ns", t_end=3.0)
    with pytest.raises(DomainTooSmallError, match=r"at t="):
        run_trajectory(gaussian(g, 1.0), cfg)


def test_ns_dissipation_rates(small_grid):
    """Per-interval rates against quadrature of the right sides (midpoint)."""
    nu = 1.0
    cfg = StepConfig(nu=nu, dt=2e-3, equation="ns", t_end=0.2, output_every=25)
    rec = run_trajectory(oseen(small_grid), cfg)
    t = rec.series("t")
    for k in range(len(t) - 1):
        dt = t[k + 1] - t[k]
        dE = (rec.diagnostics[k + 1].E - rec.diagnostics[k].E) / dt
        dI = (rec.diagnostics[k + 1].I - rec.diagnostics[k].I) / dt
        z2 = 0.5 * (rec.diagnostics[k + 1].Z2 + rec.diagnostics[k].Z2)
        assert dI == pytest.approx(2 * nu, rel=5e-3)
        assert dE == pytest.approx(-nu * z2, rel=1e-2)
    # Fisher information of the final state is finite and positive
    assert fisher_information(rec.final) > 0
