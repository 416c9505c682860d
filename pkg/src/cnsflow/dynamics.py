"""Explicit RK2 integrators for the vorticity equations and trajectory runs.

All right-hand sides are written as spectral divergences of fluxes with the
2/3 rule applied, so the discrete mass is conserved to round-off.

Equations (``StepConfig.equation``):

``ns``          ``w_t + u.grad w = nu lap w``
``constrained`` ``w_t + u.grad w = nu div[w grad(log w - b psi - a|x|^2/2)]``
                with (a, b) keeping E and I fixed
``fp``          ``w_t = nu div(grad w - a w x)``, ``a = -1/I``
``rescaled``    ``w_tau + v.grad w = lap w + div(xi w / 2)`` (unit viscosity)
``energy``      energy-only constraint (a = 0) with the regularised kernel
                g_delta, the Kolmogorov equation of the essential vortex process
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import (
    DegenerateStateError,
    FlowDiagnostics,
    Multipliers,
    StreamVelocity,
    VorticityField,
    check_boundary,
    diagnostics,
    mf_residual,
    moment_of_inertia,
    multipliers,
    solve_stream,
)
from .errors import CnsflowError, ConfigError, ConvergenceError, StepSizeError
from .grid import FreeSpaceConvolver, Grid
from .particles import RegularizedKernel

EQUATIONS = ("ns", "constrained", "fp", "rescaled", "energy")
SCHEMES = ("formula", "projected")
ADVECTION = ("spectral", "none")

CFL_MAX = 0.5
PROJECTION_TOL = 1e-12


@dataclass
class StepConfig:
    nu: float = 1e-2
    dt: float = 1e-3
    scheme: str = "projected"
    advection: str = "spectral"
    t_end: float = 1.0
    output_every: int = 10
    equation: str = "constrained"
    delta: float | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError(f"nu must be > 0, got {self.nu}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.t_end < 0:
            raise ConfigError(f"t_end must be >= 0, got {self.t_end}")
        if self.output_every < 1:
            raise ConfigError(f"output_every must be >= 1, got {self.output_every}")
        for name, value, allowed in (
            ("scheme", self.scheme, SCHEMES),
            ("advection", self.advection, ADVECTION),
            ("equation", self.equation, EQUATIONS),
        ):
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")
        if self.equation == "energy" and not (self.delta and self.delta > 0):
            raise ConfigError("equation 'energy' needs a regularisation length delta > 0")


# ---------------------------------------------------------------- helpers


def _advect(omega: VorticityField, u: np.ndarray) -> np.ndarray:
    w = omega.values
    return -omega.grid.spectral().div(u[0] * w, u[1] * w, dealias=True)


def rhs_advection(omega: VorticityField, sv: StreamVelocity) -> np.ndarray:
    """``-u.grad w`` written as ``-div(u w)`` (u is divergence free)."""
    return _advect(omega, sv.u)


def _diffusive_eigenvalue(grid: Grid) -> float:
    kcut = math.pi * (grid.n / 3.0) / grid.L
    return 2.0 * kcut * kcut


def check_step_size(omega: VorticityField, u: np.ndarray | None, nu: float, dt: float) -> None:
    grid = omega.grid
    if u is not None:
        umax = float(np.sqrt(u[0] ** 2 + u[1] ** 2).max())
        cfl = umax * dt / grid.h
        if cfl > CFL_MAX:
            raise StepSizeError(f"CFL number {cfl:.3f} exceeds {CFL_MAX} (dt={dt})")
    stiff = nu * dt * _diffusive_eigenvalue(grid)
    if stiff > 2.0:
        raise StepSizeError(
            f"diffusive stability nu*dt*k^2 = {stiff:.3f} exceeds 2 for explicit RK2 (dt={dt})"
        )


def _rk2(omega: VorticityField, rhs, dt: float) -> VorticityField:
    """Heun's method."""
    k1 = rhs(omega)
    mid = VorticityField(omega.grid, omega.values + dt * k1)
    k2 = rhs(mid)
    return VorticityField(omega.grid, omega.values + 0.5 * dt * (k1 + k2))


# ---------------------------------------------------------------- NS


def ns_rhs(omega: VorticityField, nu: float, advection: bool = True) -> np.ndarray:
    sp = omega.grid.spectral()
    gx, gy = sp.grad(omega.values)
    out = nu * sp.div(gx, gy, dealias=True)
    if advection:
        out += rhs_advection(omega, solve_stream(omega))
    return out


def step_ns(omega: VorticityField, cfg: StepConfig) -> VorticityField:
    adv = cfg.advection == "spectral"
    sv = solve_stream(omega)
    check_step_size(omega, sv.u if adv else None, cfg.nu, cfg.dt)
    return _rk2(omega, lambda w: ns_rhs(w, cfg.nu, adv), cfg.dt)


# ---------------------------------------------------------------- constrained


def constrained_rhs(omega: VorticityField, nu: float, advection: bool = True,
                    sv: StreamVelocity | None = None,
                    m: Multipliers | None = None) -> np.ndarray:
    """Right side with multipliers from the closed form at this state."""
    if sv is None:
        sv = solve_stream(omega)
    if m is None:
        m = multipliers(diagnostics(omega, sv))
    grid = omega.grid
    sp = grid.spectral()
    X, Y = grid.mesh()
    w = omega.values
    gx, gy = sp.grad(w)
    px, py = sv.grad_psi
    fx = gx - m.b * w * px - m.a * w * X
    fy = gy - m.b * w * py - m.a * w * Y
    out = nu * sp.div(fx, fy, dealias=True)
    if advection:
        out += rhs_advection(omega, sv)
    return out


def step_constrained(omega: VorticityField, cfg: StepConfig,
                     targets: tuple[float, float] | None = None) -> VorticityField:
    """One RK2 step of the constrained equation, multipliers recomputed at
    each stage. With ``scheme="projected"`` the result is then pulled back
    onto ``E = targets[0], I = targets[1]`` (defaults: the input's values)."""
    adv = cfg.advection == "spectral"
    sv = solve_stream(omega)
    check_step_size(omega, sv.u if adv else None, cfg.nu, cfg.dt)
    if cfg.scheme == "projected" and targets is None:
        d = diagnostics(omega, sv)
        targets = (d.E, d.I)
    first = [True]

    def rhs(w):
        if first[0]:
            first[0] = False
            return constrained_rhs(w, cfg.nu, adv, sv=sv)
        return constrained_rhs(w, cfg.nu, adv)

    out = _rk2(omega, rhs, cfg.dt)
    if cfg.scheme == "projected":
        out = project_EI(out, *targets).omega
    return out


class Projection(NamedTuple):
    omega: VorticityField
    da: float
    db: float
    iterations: int


def _energy_inertia(omega: VorticityField):
    sv = solve_stream(omega, check=False)
    w = omega.values
    X, Y = omega.grid.mesh()
    m = w.sum()
    mx, my = (X * w).sum() / m, (Y * w).sum() / m
    q = 0.5 * ((X - mx) ** 2 + (Y - my) ** 2)
    E = 0.5 * omega.grid.integrate(sv.psi * w)
    I = omega.grid.integrate(q * w)
    return E, I, sv.psi, q


def project_EI(omega: VorticityField, E_target: float, I_target: float,
               tol: float = PROJECTION_TOL, max_iter: int = 20) -> Projection:
    """Move ``omega`` along ``div[w grad(-db psi - da |x|^2/2)]`` (psi frozen
    at the input) until E and I hit their targets.

    The map is affine in (da, db); E is quadratic and I nearly linear in the
    result, so 2-D Newton with exact derivatives converges in a couple of
    iterations for drift-sized corrections.
    """
    grid = omega.grid
    sp = grid.spectral()
    X, Y = grid.mesh()
    w = omega.values
    sv = solve_stream(omega, check=False)
    px, py = sv.grad_psi
    g_b = -sp.div(w * px, w * py)
    g_a = -sp.div(w * X, w * Y)

    da = db = 0.0
    cur = omega
    for it in range(max_iter + 1):
        E, I, psi, q = _energy_inertia(cur)
        rE, rI = E - E_target, I - I_target
        if abs(rE) <= tol * abs(E_target) and abs(rI) <= tol * abs(I_target):
            return Projection(cur, da, db, it)
        if it == max_iter:
            break
        J = np.array([
            [grid.integrate(psi * g_a), grid.integrate(psi * g_b)],
            [grid.integrate(q * g_a), grid.integrate(q * g_b)],
        ])
        step = np.linalg.solve(J, [-rE, -rI])
        da += step[0]
        db += step[1]
        cur = VorticityField(grid, w + da * g_a + db * g_b)
    raise ConvergenceError(
        f"E/I projection did not converge in {max_iter} Newton iterations "
        f"(residuals dE={rE:.3e}, dI={rI:.3e})"
    )


# ---------------------------------------------------------------- FP


def fp_rhs(omega: VorticityField, nu: float) -> np.ndarray:
    a = -1.0 / moment_of_inertia(omega)
    grid = omega.grid
    sp = grid.spectral()
    X, Y = grid.mesh()
    w = omega.values
    gx, gy = sp.grad(w)
    return nu * sp.div(gx - a * w * X, gy - a * w * Y, dealias=True)


def step_fp(omega: VorticityField, cfg: StepConfig) -> VorticityField:
    """Heat flow modified to keep I fixed; ``a = -1/I`` recomputed per stage."""
    check_step_size(omega, None, cfg.nu, cfg.dt)
    return _rk2(omega, lambda w: fp_rhs(w, cfg.nu), cfg.dt)


# ---------------------------------------------------------------- rescaled


def rescaled_rhs(w: VorticityField, advection: bool = True) -> np.ndarray:
    grid = w.grid
    sp = grid.spectral()
    X, Y = grid.mesh()
    v = w.values
    gx, gy = sp.grad(v)
    out = sp.div(gx + 0.5 * X * v, gy + 0.5 * Y * v, dealias=True)
    if advection:
        out += rhs_advection(w, solve_stream(w))
    return out


def step_rescaled(w: VorticityField, cfg: StepConfig) -> VorticityField:
    """Navier-Stokes in self-similar variables ``xi = x/sqrt(1+t)``,
    ``tau = log(1+t)``; written for unit viscosity, ``cfg.nu`` is unused."""
    adv = cfg.advection == "spectral"
    sv = solve_stream(w)
    check_step_size(w, sv.u if adv else None, 1.0, cfg.dt)
    return _rk2(w, lambda f: rescaled_rhs(f, adv), cfg.dt)


# ---------------------------------------------------------------- energy-only, g_delta


@lru_cache(maxsize=8)
def _regularized_convolver(grid: Grid, delta: float) -> FreeSpaceConvolver:
    k = RegularizedKernel(delta)
    return FreeSpaceConvolver(
        grid,
        lambda dx, dy: k.g(dx, dy),
        lambda dx, dy: k.grad(dx, dy)[0],
        lambda dx, dy: k.grad(dx, dy)[1],
        lambda dx, dy: k.laplacian(dx, dy),
    )


@dataclass
class RegularizedFields:
    phi: np.ndarray
    grad_phi: tuple[np.ndarray, np.ndarray]
    lap_phi: np.ndarray

    @property
    def u(self) -> np.ndarray:
        return np.stack([self.grad_phi[1], -self.grad_phi[0]])


def regularized_fields(omega: VorticityField, delta: float) -> RegularizedFields:
    """``phi = g_delta * w`` with its gradient and Laplacian, all by direct
    (zero-padded) convolution with the closed-form kernels."""
    check_boundary(omega)
    phi, gx, gy, lap = _regularized_convolver(omega.grid, float(delta))(omega.values)
    return RegularizedFields(phi, (gx, gy), lap)


def energy_multiplier(omega: VorticityField, rf: RegularizedFields) -> float:
    """``b(t) = int w lap(g*w) / int w |grad g*w|^2`` (negative)."""
    w = omega.values
    gx, gy = rf.grad_phi
    return float((w * rf.lap_phi).sum() / (w * (gx * gx + gy * gy)).sum())


def energy_rhs(omega: VorticityField, delta: float, nu: float = 1.0,
               advection: bool = True) -> np.ndarray:
    """Forward Kolmogorov equation of the essential vortex process:
    ``w_t + div(u w) = nu div(grad w + b w grad phi)``.

    ``b`` is the discrete counterpart of :func:`energy_multiplier`: the
    ratio is formed after the divergences, ``b = -<phi, D grad w> / <phi,
    D(w grad phi)>``, so the diffusive part keeps ``E_delta = 1/2 int phi w``
    fixed exactly in continuous time (the closed form only up to
    discretization error)."""
    rf = regularized_fields(omega, delta)
    sp = omega.grid.spectral()
    w = omega.values
    gx, gy = sp.grad(w)
    px, py = rf.grad_phi
    diff = sp.div(gx, gy, dealias=True)
    drift = sp.div(w * px, w * py, dealias=True)
    b = -float((rf.phi * diff).sum() / (rf.phi * drift).sum())
    out = nu * (diff + b * drift)
    if advection:
        out += _advect(omega, rf.u)
    return out


def step_energy(omega: VorticityField, cfg: StepConfig) -> VorticityField:
    adv = cfg.advection == "spectral"
    rf = regularized_fields(omega, cfg.delta)
    check_step_size(omega, rf.u if adv else None, cfg.nu, cfg.dt)
    return _rk2(omega, lambda w: energy_rhs(w, cfg.delta, cfg.nu, adv), cfg.dt)


def regularized_energy(omega: VorticityField, delta: float) -> float:
    rf = regularized_fields(omega, delta)
    return 0.5 * omega.grid.integrate(rf.phi * omega.values)


# ---------------------------------------------------------------- trajectories


@dataclass
class TrajectoryRecord:
    times: list[float] = field(default_factory=list)
    diagnostics: list[FlowDiagnostics] = field(default_factory=list)
    multipliers: list[Multipliers] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    min_relative: list[float] = field(default_factory=list)
    final: VorticityField | None = None

    CSV_HEADER = ("t", "Mx", "My", "E", "I", "S", "Z2", "K", "V", "a", "b", "residual")

    def append(self, t: float, omega: VorticityField) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"record times must increase ({t} after {self.times[-1]})")
        sv = solve_stream(omega)
        d = diagnostics(omega, sv)
        try:
            m = multipliers(d)
            res = mf_residual(omega, sv, m)
        except DegenerateStateError:
            m, res = Multipliers(math.nan, math.nan), math.nan
        self.times.append(t)
        self.diagnostics.append(d)
        self.multipliers.append(m)
        self.residuals.append(res)
        self.min_relative.append(omega.min_relative())

    def series(self, name: str) -> np.ndarray:
        if name == "t":
            return np.array(self.times)
        if name == "residual":
            return np.array(self.residuals)
        if name in ("a", "b"):
            return np.array([getattr(m, name) for m in self.multipliers])
        if name in ("Mx", "My"):
            return np.array([d.M[name == "My"] for d in self.diagnostics])
        return np.array([getattr(d, name) for d in self.diagnostics])

    def rows(self):
        for t, d, m, r in zip(self.times, self.diagnostics, self.multipliers, self.residuals):
            dd = d.as_dict()
            yield [t, dd["Mx"], dd["My"], d.E, d.I, d.S, d.Z2, d.K, d.V, m.a, m.b, r]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.CSV_HEADER)
            for row in self.rows():
                writer.writerow([format(float(v), ".17g") for v in row])


def _stepper(cfg: StepConfig):
    if cfg.equation == "ns":
        return lambda w, targets: step_ns(w, cfg)
    if cfg.equation == "constrained":
        return lambda w, targets: step_constrained(w, cfg, targets)
    if cfg.equation == "fp":
        return lambda w, targets: step_fp(w, cfg)
    if cfg.equation == "rescaled":
        return lambda w, targets: step_rescaled(w, cfg)
    return lambda w, targets: step_energy(w, cfg)


def run_trajectory(omega0: VorticityField, cfg: StepConfig,
                   snapshot_dir: str | Path | None = None) -> TrajectoryRecord:
    """Integrate to ``cfg.t_end`` recording diagnostics every
    ``cfg.output_every`` steps (and at the end).

    In projected mode every step is pulled back to the initial (E, I). Time
    is accumulated as ``step * dt`` so records are bitwise reproducible.
    """
    from .io import write_field_snapshot

    nsteps = int(round(cfg.t_end / cfg.dt))
    if abs(nsteps * cfg.dt - cfg.t_end) > 1e-9 * max(1.0, cfg.t_end):
        raise ConfigError(f"t_end={cfg.t_end} is not a multiple of dt={cfg.dt}")
    step = _stepper(cfg)
    record = TrajectoryRecord()
    omega = omega0
    targets = None
    if cfg.equation == "constrained" and cfg.scheme == "projected":
        d0 = diagnostics(omega0)
        targets = (d0.E, d0.I)

    def output(k):
        record.append(k * cfg.dt, omega)
        if snapshot_dir is not None:
            d = record.diagnostics[-1]
            path = Path(snapshot_dir) / f"snapshot_{k:07d}.bin"
            write_field_snapshot(path, omega, k * cfg.dt, d)

    output(0)
    for k in range(1, nsteps + 1):
        try:
            omega = step(omega, targets)
        except CnsflowError as exc:
            exc.args = (f"at t={k * cfg.dt:.6g}: {exc}",)
            raise
        if k % cfg.output_every == 0 or k == nsteps:
            output(k)
    record.final = omega
    return record
