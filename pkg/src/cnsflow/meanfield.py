"""Radial solutions of the mean-field equation ``w = exp(b psi + a r^2/2)/Z``
and the canonical / microcanonical thermodynamics built on them.

The radial stream function is the free-space Green representation
``psi(r) = -(1/2pi) [log r m(r) + int_r^inf log s 2 pi s w(s) ds]`` with
``m(r)`` the enclosed mass, evaluated with the trapezoid rule on a uniform
r-grid.

Sign note: ``F(b, a) = inf (S - bE - aI)`` has ``dF/db = -E`` and
``dF/da = -I`` (envelope theorem); the Legendre pair
``S*(I, E) = sup (F + bE + aI)`` uses the same signs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import VorticityField
from .errors import ConfigError, ConvergenceError
from .grid import Grid
from .initial import oseen

B_CRITICAL = 8.0 * math.pi
TAIL_MASS = 1e-10
DAMPING = 0.5
CONTINUATION_START = 6.0 * math.pi


class NoMaximizerError(ConvergenceError):
    """(E, I) outside the range reached by the canonical family."""


@dataclass
class MeanFieldState:
    a: float
    b: float
    r: np.ndarray
    omega: np.ndarray
    psi: np.ndarray
    Z: float
    E: float
    I: float
    S: float
    F: float
    iterations: int = 0
    tail_mass: float = 0.0

    def mass(self) -> float:
        return radial_integral(self.r, self.omega)

    def virial(self) -> float:
        """``int w x.grad psi`` (equals -1/4pi for any unit-mass state)."""
        dpsi = -_enclosed_mass(self.r, self.omega) / (2.0 * math.pi * np.where(self.r > 0, self.r, 1.0))
        dpsi[0] = 0.0
        return radial_integral(self.r, self.omega * self.r * dpsi)

    def to_grid(self, grid: Grid) -> VorticityField:
        X, Y = grid.mesh()
        R = np.hypot(X, Y)
        w = np.interp(R.ravel(), self.r, self.omega, right=0.0).reshape(R.shape)
        return VorticityField(grid, w).normalized()


@dataclass(frozen=True)
class ThermoPoint:
    a: float
    b: float
    F: float
    E: float
    I: float
    S: float
    dF_da: float = math.nan
    dF_db: float = math.nan


# ---------------------------------------------------------------- radial quadrature


def _trap_weights(r: np.ndarray) -> np.ndarray:
    dr = r[1] - r[0]
    w = np.full(r.size, dr)
    w[0] = w[-1] = 0.5 * dr
    return 2.0 * math.pi * r * w


def radial_integral(r: np.ndarray, f: np.ndarray) -> float:
    """``int_{R^2} f(|x|) dx`` by the trapezoid rule in r."""
    return float(np.dot(_trap_weights(r), f))


def _enclosed_mass(r, w):
    g = 2.0 * math.pi * r * w
    dr = r[1] - r[0]
    out = np.zeros_like(r)
    out[1:] = np.cumsum(0.5 * dr * (g[1:] + g[:-1]))
    return out


def radial_stream(r: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Free-space stream function of a radial density."""
    dr = r[1] - r[0]
    m = _enclosed_mass(r, w)
    logr = np.log(np.where(r > 0, r, 1.0))
    g = 2.0 * math.pi * r * logr * w
    tail = np.zeros_like(r)
    tail[:-1] = np.cumsum((0.5 * dr * (g[1:] + g[:-1]))[::-1])[::-1]
    return -(logr * m + tail) / (2.0 * math.pi)


def radial_functionals(r: np.ndarray, w: np.ndarray) -> tuple[float, float, float]:
    """(E, I, S) of a radial density by the solver's quadrature."""
    psi = radial_stream(r, w)
    pos = w > 0
    S = radial_integral(r, np.where(pos, w * np.log(np.where(pos, w, 1.0)), 0.0))
    return 0.5 * radial_integral(r, psi * w), 0.5 * radial_integral(r, r * r * w), S


def _r_max(a: float, b: float) -> float:
    # exp(a r^2/2) r^(-b/2pi) below ~exp(-32) of its peak
    base = math.sqrt(2.0 * 32.0 / -a)
    if b < 0:
        base *= 1.0 + (-b / (2.0 * math.pi)) * 0.1
    return base


# ---------------------------------------------------------------- solver


def _gibbs(r, psi, a, b, gauge=0.0):
    expo = b * (psi + gauge) + 0.5 * a * r * r
    expo -= expo.max()
    unnorm = np.exp(expo)
    return unnorm / radial_integral(r, unnorm), expo


def _finish(r, w, a, b, iterations) -> MeanFieldState:
    psi = radial_stream(r, w)
    expo = b * psi + 0.5 * a * r * r
    Z = radial_integral(r, np.exp(expo))
    E = 0.5 * radial_integral(r, psi * w)
    I = 0.5 * radial_integral(r, r * r * w)
    S = radial_integral(r, w * (expo - math.log(Z)))
    m = _enclosed_mass(r, w)
    tail = float(max(0.0, m[-1] - m[int(0.9 * (r.size - 1))]))
    return MeanFieldState(a=a, b=b, r=r, omega=w, psi=psi, Z=Z, E=E, I=I, S=S,
                          F=S - b * E - a * I, iterations=iterations, tail_mass=tail)


def _iterate(r, w, a, b, tol, max_iter, gauge):
    theta = DAMPING
    prev_change = math.inf
    for it in range(1, max_iter + 1):
        target, _ = _gibbs(r, radial_stream(r, w), a, b, gauge)
        new = (1.0 - theta) * w + theta * target
        change = radial_integral(r, np.abs(new - w))
        w = new
        if change < tol:
            return w, it
        if change > prev_change:
            theta *= 0.5
        prev_change = change
    raise ConvergenceError(
        f"mean-field iteration at (a={a}, b={b}) not converged after {max_iter} "
        f"iterations (last L1 change {change:.2e}); approach b in smaller continuation steps"
    )


def solve_mf_radial(a: float, b: float, points: int = 16001, tol: float = 1e-12,
                    max_iter: int = 20000, initial: np.ndarray | MeanFieldState | None = None,
                    r_max: float | None = None, gauge: float = 0.0) -> MeanFieldState:
    """Radial mean-field state for multipliers (a, b), a < 0 and b < 8 pi.

    Damped fixed-point iteration (factor 0.5, halved whenever the L1 change
    grows) of ``w -> exp(b psi[w] + a r^2/2)/Z``, converged when the L1
    change drops below ``tol``. Beyond b = 6 pi the solution is reached by
    continuation in b from 6 pi. ``gauge`` shifts psi inside the exponent;
    Z absorbs it.
    """
    if not a < 0:
        raise ConfigError(f"mean-field multiplier a must be < 0, got {a}")
    if not b < B_CRITICAL:
        raise ConfigError(f"mean-field multiplier b must satisfy b < 8*pi ({B_CRITICAL:.6f}), got {b}")
    if r_max is None:
        r_max = _r_max(a, b)
    r = np.linspace(0.0, r_max, points)

    if isinstance(initial, MeanFieldState):
        w = np.interp(r, initial.r, initial.omega, right=0.0)
        w /= radial_integral(r, w)
    elif initial is not None:
        w = np.asarray(initial, dtype=float)
    else:
        w, _ = _gibbs(r, np.zeros_like(r), a, 0.0)

    total = 0
    if initial is None and b > CONTINUATION_START:
        for bc in np.linspace(CONTINUATION_START, b, 9)[:-1]:
            w, it = _iterate(r, w, a, bc, tol, max_iter, gauge)
            total += it
    w, it = _iterate(r, w, a, b, tol, max_iter, gauge)
    state = _finish(r, w, a, b, total + it)
    if state.tail_mass > TAIL_MASS and r_max < 1e3:
        return solve_mf_radial(a, b, points=int(points * 1.5) | 1, tol=tol, max_iter=max_iter,
                               initial=state, r_max=1.5 * r_max, gauge=gauge)
    return state


def free_energy(state: MeanFieldState) -> float:
    """``S - bE - aI``."""
    return state.S - state.b * state.E - state.a * state.I


# ---------------------------------------------------------------- canonical ensemble


def canonical_point(a: float, b: float, fd_step: float | None = 1e-3, **kw) -> ThermoPoint:
    s = solve_mf_radial(a, b, **kw)
    dF_da = dF_db = math.nan
    if fd_step:
        h = fd_step
        fa = [free_energy(solve_mf_radial(a + sgn * h, b, initial=s, **kw)) for sgn in (1, -1)]
        fb = [free_energy(solve_mf_radial(a, b + sgn * h, initial=s, **kw)) for sgn in (1, -1)]
        dF_da = (fa[0] - fa[1]) / (2 * h)
        dF_db = (fb[0] - fb[1]) / (2 * h)
    return ThermoPoint(a, b, free_energy(s), s.E, s.I, s.S, dF_da, dF_db)


def canonical_table(a_list, b_list, fd_step: float | None = 1e-3, **kw) -> list[ThermoPoint]:
    """Solve every (a, b) pair of the product grid and tabulate F, E, I, S
    with central-difference derivatives of F."""
    return [canonical_point(float(a), float(b), fd_step, **kw) for a in a_list for b in b_list]


def free_energy_hessian(a: float, b: float, step: float = 1e-2, **kw) -> np.ndarray:
    """Central-difference Hessian of F in (a, b)."""
    base = solve_mf_radial(a, b, **kw)

    def F(da, db):
        return free_energy(solve_mf_radial(a + da, b + db, initial=base, **kw))

    h = step
    f0 = free_energy(base)
    faa = (F(h, 0) - 2 * f0 + F(-h, 0)) / h**2
    fbb = (F(0, h) - 2 * f0 + F(0, -h)) / h**2
    fab = (F(h, h) - F(h, -h) - F(-h, h) + F(-h, -h)) / (4 * h * h)
    return np.array([[faa, fab], [fab, fbb]])


@dataclass
class ConcavityReport:
    points: list = field(default_factory=list)
    max_eigenvalue: float = -math.inf

    @property
    def concave(self) -> bool:
        return bool(self.points) and self.max_eigenvalue <= 0.0


def concavity_check(points: list[ThermoPoint], step: float = 1e-2, **kw) -> ConcavityReport | None:
    """Hessian eigenvalues of F at the interior points of the table grid;
    ``None`` when the grid has no interior point."""
    a_vals = sorted({p.a for p in points})
    b_vals = sorted({p.b for p in points})
    if len(a_vals) < 3 or len(b_vals) < 3:
        if len(points) < 2:
            return None
    interior = [p for p in points
                if (len(a_vals) < 3 or a_vals[0] < p.a < a_vals[-1])
                and (len(b_vals) < 3 or b_vals[0] < p.b < b_vals[-1])]
    report = ConcavityReport()
    for p in interior:
        eig = np.linalg.eigvalsh(free_energy_hessian(p.a, p.b, step, **kw))
        report.points.append((p.a, p.b, eig))
        report.max_eigenvalue = max(report.max_eigenvalue, float(eig.max()))
    return report


# ---------------------------------------------------------------- microcanonical ensemble


def legendre_value(state: MeanFieldState, E: float, I: float) -> float:
    """``F(b, a) + bE + aI`` at the state's multipliers."""
    return free_energy(state) + state.b * E + state.a * I


def microcanonical_state(E: float, I: float, tol: float = 1e-10, max_iter: int = 60,
                         fd_step: float = 1e-4, start: tuple[float, float] | None = None,
                         **kw) -> MeanFieldState:
    """Maximise ``F(b, a) + bE + aI`` over (a, b) with the radial solver in
    the loop; the maximiser's state has energy E and inertia I.

    The gradient of the objective is ``(I - I(a,b), E - E(a,b))``; the
    Hessian is built from central differences of (I, E) and the Newton step
    is backtracked until the objective increases and (a, b) stays in the
    admissible region.
    """
    if not I > 0:
        raise ConfigError(f"moment of inertia must be positive, got {I}")
    a, b = start if start is not None else (-1.0 / I, 0.0)
    state = solve_mf_radial(a, b, **kw)
    obj = legendre_value(state, E, I)
    for _ in range(max_iter):
        res = np.array([I - state.I, E - state.E])
        if abs(res[0]) <= tol * I and abs(res[1]) <= tol * max(abs(E), 1e-12):
            return state
        h = fd_step
        try:
            sa = [solve_mf_radial(a + s * h, b, initial=state, **kw) for s in (1, -1)]
            sb = [solve_mf_radial(a, b + s * h, initial=state, **kw) for s in (1, -1)]
        except (ConvergenceError, ConfigError) as exc:
            raise NoMaximizerError(
                f"(E={E}, I={I}): solver breaks down at (a={a}, b={b}); target outside the attainable range"
            ) from exc
        # Jacobian of (I, E) in (a, b); the objective Hessian is its negative
        J = np.array([
            [(sa[0].I - sa[1].I) / (2 * h), (sb[0].I - sb[1].I) / (2 * h)],
            [(sa[0].E - sa[1].E) / (2 * h), (sb[0].E - sb[1].E) / (2 * h)],
        ])
        step = np.linalg.solve(J, res)
        lam = 1.0
        while True:
            na, nb = a + lam * step[0], b + lam * step[1]
            if nb >= B_CRITICAL - 1e-3:
                if lam < 1e-6:
                    raise NoMaximizerError(
                        f"(E={E}, I={I}): ascent pushes b to 8*pi; target outside the attainable range"
                    )
                lam *= 0.5
                continue
            if na < 0:
                try:
                    cand = solve_mf_radial(na, nb, initial=state, **kw)
                except ConvergenceError:
                    cand = None
                if cand is not None:
                    cobj = legendre_value(cand, E, I)
                    if cobj >= obj - 1e-14 * max(1.0, abs(obj)):
                        break
            if lam < 1e-6:
                raise NoMaximizerError(f"(E={E}, I={I}): line search failed at (a={a}, b={b})")
            lam *= 0.5
        a, b, state, obj = na, nb, cand, cobj
    raise NoMaximizerError(f"(E={E}, I={I}): no convergence after {max_iter} Newton steps")


def entropy_star(E: float, I: float, **kw) -> float:
    """``S*(I, E) = sup_{a,b} (F(b, a) + bE + aI)``."""
    return legendre_value(microcanonical_state(E, I, **kw), E, I)


def oseen_field(t: float, grid: Grid) -> VorticityField:
    """Oseen vortex of unit viscosity sampled on the grid."""
    return oseen(grid, t)
