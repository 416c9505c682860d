import math

import numpy as np
import pytest

from cnsflow.core import diagnostics, mf_residual, multipliers, solve_stream
from cnsflow.errors import ConfigError
from cnsflow.grid import Grid
from cnsflow.meanfield import (
    NoMaximizerError, canonical_table, concavity_check, entropy_star, free_energy,
    microcanonical_state, oseen_field, radial_functionals, radial_integral, solve_mf_radial,
)

from oracles import gaussian_energy, gaussian_entropy, radial_energy, w_profile


@pytest.fixture(scope="module")
def state_w():
    return solve_mf_radial(-0.5, 0.0)


@pytest.fixture(scope="module")
def state_2():
    return solve_mf_radial(-0.5, 2.0)


def test_b_zero_gives_w(state_w):
    s = state_w
    assert np.max(np.abs(s.omega - w_profile(s.r))) < 1e-6 * w_profile(0.0)
    assert s.I == pytest.approx(2.0, rel=1e-6)
    assert s.E == pytest.approx(gaussian_energy(2.0), rel=1e-6)
    assert s.E == pytest.approx(radial_energy(w_profile), rel=1e-6)
    assert s.S == pytest.approx(gaussian_entropy(2.0), abs=1e-6)
    assert free_energy(s) == pytest.approx(-math.log(4 * math.pi), abs=1e-6)


@pytest.mark.parametrize("a, b", [(-0.5, 2.0), (-0.5, -5.0), (-1.0, 15.0), (-0.5, 7.5 * math.pi)])
def test_state_invariants(a, b):
    s = solve_mf_radial(a, b)
    assert s.mass() == pytest.approx(1.0, abs=1e-8)
    support = s.omega > 1e-12 * s.omega.max()
    gibbs = np.exp(b * s.psi + 0.5 * a * s.r**2) / s.Z
    assert np.max(np.abs(gibbs[support] / s.omega[support] - 1)) < 1e-8
    assert s.virial() == pytest.approx(-1 / (4 * math.pi), abs=1e-6)
    # radial Poisson (1/r)(r psi')' = -w, second-order differences
    dr = s.r[1] - s.r[0]
    k = slice(1, -1)
    rp = s.r[k]
    lap = ((rp + dr / 2) * (s.psi[2:] - s.psi[1:-1]) - (rp - dr / 2) * (s.psi[1:-1] - s.psi[:-2])) / (rp * dr * dr)
    # the enclosed-mass quadrature is least accurate in the first few cells
    away = rp > 50 * dr
    assert np.max(np.abs(lap + s.omega[k])[away]) < 1e-4 * s.omega.max()
    assert s.tail_mass < 1e-10


def test_concentration_as_b_grows():
    I = [solve_mf_radial(-0.5, b).I for b in (0.0, 4 * math.pi, 7.5 * math.pi)]
    assert I[0] > I[1] > I[2]


def test_negative_b_is_unique_from_two_starts():
    first = solve_mf_radial(-0.5, -5.0)
    r = first.r
    other = np.exp(-((r - 3.0) ** 2))
    other /= radial_integral(r, other)
    second = solve_mf_radial(-0.5, -5.0, initial=other)
    assert radial_integral(r, np.abs(first.omega - second.omega)) < 1e-8


def test_rejects_inadmissible_multipliers():
    with pytest.raises(ConfigError, match="8"):
        solve_mf_radial(-0.5, 8 * math.pi)
    with pytest.raises(ConfigError):
        solve_mf_radial(0.1, 1.0)


def test_gauge_invariance(state_2):
    shifted = solve_mf_radial(-0.5, 2.0, gauge=3.7)
    assert free_energy(shifted) == pytest.approx(free_energy(state_2), abs=1e-12)


def test_state_minimises_free_energy(state_2):
    s = state_2
    rng = np.random.default_rng(5)
    F0 = free_energy(s)
    for _ in range(5):
        c = rng.normal(size=4)
        bump = sum(ck * np.cos((k + 1) * s.r / 2.0) for k, ck in enumerate(c))
        w = s.omega * np.exp(0.05 * bump)
        w /= radial_integral(s.r, w)
        E, I, S = radial_functionals(s.r, w)
        assert S - s.b * E - s.a * I > F0


def test_free_energy_derivatives(state_2):
    """The envelope theorem for F(b, a) = inf (S - bE - aI): dF/db = -E and
    dF/da = -I."""
    (p,) = canonical_table([-0.5], [2.0])
    assert p.dF_db == pytest.approx(-state_2.E, rel=1e-2)
    assert p.dF_da == pytest.approx(-state_2.I, rel=1e-2)


def test_free_energy_is_concave():
    points = canonical_table([-0.6, -0.5, -0.4], [0.0, 2.0, 4.0], fd_step=None)
    report = concavity_check(points)
    assert report is not None and len(report.points) == 1
    assert report.concave


def test_single_point_table_skips_concavity():
    points = canonical_table([-0.5], [1.0], fd_step=None)
    assert len(points) == 1 and concavity_check(points) is None


def test_microcanonical_inverts_w():
    s = microcanonical_state(gaussian_energy(2.0), 2.0)
    assert abs(s.b) < 1e-4 and abs(s.a + 0.5) < 1e-4


def test_legendre_round_trip(state_2):
    s = microcanonical_state(state_2.E, state_2.I)
    assert abs(s.a + 0.5) < 1e-4 and abs(s.b - 2.0) < 1e-4
    assert s.E == pytest.approx(state_2.E, rel=1e-6)
    assert s.I == pytest.approx(state_2.I, rel=1e-6)
    assert entropy_star(state_2.E, state_2.I) == pytest.approx(s.S, abs=1e-6)


def test_entropy_star_is_convex(state_2):
    E0, I0 = state_2.E, state_2.I
    hE, hI = 1e-3 * abs(E0), 1e-3 * I0
    S = lambda dE, dI: entropy_star(E0 + dE, I0 + dI)
    s0 = S(0, 0)
    see = (S(hE, 0) - 2 * s0 + S(-hE, 0)) / hE**2
    sii = (S(0, hI) - 2 * s0 + S(0, -hI)) / hI**2
    sei = (S(hE, hI) - S(hE, -hI) - S(-hE, hI) + S(-hE, -hI)) / (4 * hE * hI)
    assert np.all(np.linalg.eigvalsh([[see, sei], [sei, sii]]) > 0)


def test_unattainable_energy_is_reported():
    with pytest.raises(NoMaximizerError):
        microcanonical_state(0.5, 2.0, points=2001, max_iter=20)


def test_grid_cross_validation(grid, state_2):
    w = state_2.to_grid(grid)
    sv = solve_stream(w)
    from cnsflow.core import Multipliers

    assert mf_residual(w, sv, Multipliers(state_2.a, state_2.b)) < 1e-4
    m = multipliers(diagnostics(w, sv))
    assert m.a == pytest.approx(state_2.a, abs=1e-3)
    assert m.b == pytest.approx(state_2.b, abs=1e-3)


def test_oseen_field(grid):
    w0 = oseen_field(0.0, grid)
    # cell centres nearest the origin sit at r^2 = h^2/2
    assert w0.values.max() == pytest.approx(np.exp(-grid.h**2 / 8) / (4 * math.pi), rel=1e-12)
    assert w0.values.max() == pytest.approx(1 / (4 * math.pi), rel=3e-3)
    assert oseen_field(3.0, Grid(24.0, 256)).values.max() == pytest.approx(1 / (16 * math.pi), rel=3e-3)
    assert diagnostics(w0).I == pytest.approx(2.0, abs=1e-10)
    assert w0.mass() == pytest.approx(1.0, abs=1e-12)
