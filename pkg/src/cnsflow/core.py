"""Vorticity fields, the free-space stream function and the scalar functionals
consumed by the multiplier formulas.

Conventions: ``S = int w log w`` (decreasing along dissipative flows),
``u = grad_perp psi = (d_y psi, -d_x psi)`` so that ``curl u = w``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import DegenerateStateError, DomainTooSmallError
from .grid import Grid, newton_convolver

BOUNDARY_MASS_LIMIT = 1e-8
CLIP_REL = 1e-14
NEG_TOL = 1e-8
DENOM_REL = 1e-8


@dataclass
class VorticityField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid n={self.grid.n}"
            )

    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def normalized(self) -> "VorticityField":
        return VorticityField(self.grid, self.values / self.mass())

    def copy(self) -> "VorticityField":
        return VorticityField(self.grid, self.values.copy())

    def clip_level(self) -> float:
        return CLIP_REL * float(self.values.max())

    def min_relative(self) -> float:
        """Most negative value relative to the peak (0 when nonnegative)."""
        return min(0.0, float(self.values.min())) / float(self.values.max())


@dataclass
class StreamVelocity:
    psi: np.ndarray
    u: np.ndarray  # shape (2, n, n)

    @property
    def grad_psi(self) -> tuple[np.ndarray, np.ndarray]:
        # u = (d_y psi, -d_x psi)
        return -self.u[1], self.u[0]


@dataclass(frozen=True)
class FlowDiagnostics:
    M: tuple[float, float]
    E: float
    I: float
    S: float
    Z2: float
    K: float
    V: float

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["Mx"], out["My"] = out.pop("M")
        return out


@dataclass(frozen=True)
class Multipliers:
    a: float
    b: float


def boundary_mass_fraction(omega: VorticityField) -> float:
    v = np.abs(omega.values)
    edge = v[0].sum() + v[-1].sum() + v[1:-1, 0].sum() + v[1:-1, -1].sum()
    return float(edge / v.sum())


def boundary_ratio(omega: VorticityField) -> float:
    """Largest |w| on the outermost ring of cells relative to max |w|."""
    v = np.abs(omega.values)
    edge = max(v[0].max(), v[-1].max(), v[:, 0].max(), v[:, -1].max())
    return float(edge / v.max())


def check_boundary(omega: VorticityField, limit: float = BOUNDARY_MASS_LIMIT) -> None:
    ratio = boundary_ratio(omega)
    if ratio > limit:
        raise DomainTooSmallError(ratio, limit, boundary_mass_fraction(omega))


def solve_stream(omega: VorticityField, check: bool = True) -> StreamVelocity:
    """Free-space stream function ``psi = -(1/2pi) log|.| * omega`` and
    velocity ``u = grad_perp psi`` (spectral derivatives)."""
    if check:
        check_boundary(omega)
    grid = omega.grid
    psi = newton_convolver(grid)(omega.values)
    dx, dy = grid.spectral().grad(psi)
    return StreamVelocity(psi=psi, u=np.stack([dy, -dx]))


def center_of_mass(omega: VorticityField) -> tuple[float, float]:
    X, Y = omega.grid.mesh()
    w = omega.values
    m = w.sum()
    return float((X * w).sum() / m), float((Y * w).sum() / m)


def entropy(omega: VorticityField) -> float:
    w = omega.values
    pos = w > omega.clip_level()
    return omega.grid.integrate(w[pos] * np.log(w[pos]))


def moment_of_inertia(omega: VorticityField) -> float:
    X, Y = omega.grid.mesh()
    mx, my = center_of_mass(omega)
    return 0.5 * omega.grid.integrate(((X - mx) ** 2 + (Y - my) ** 2) * omega.values)


def fisher_information(omega: VorticityField) -> float:
    """``int |grad w|^2 / w`` over cells above the clip level."""
    gx, gy = omega.grid.spectral().grad(omega.values)
    w = omega.values
    pos = w > omega.clip_level()
    return omega.grid.integrate((gx[pos] ** 2 + gy[pos] ** 2) / w[pos])


def diagnostics(omega: VorticityField, sv: StreamVelocity | None = None) -> FlowDiagnostics:
    if sv is None:
        sv = solve_stream(omega)
    grid = omega.grid
    X, Y = grid.mesh()
    w = omega.values
    M = center_of_mass(omega)
    px, py = sv.grad_psi
    rx, ry = X - M[0], Y - M[1]
    return FlowDiagnostics(
        M=M,
        E=0.5 * grid.integrate(sv.psi * w),
        I=0.5 * grid.integrate((rx * rx + ry * ry) * w),
        S=entropy(omega),
        Z2=grid.integrate(w * w),
        K=grid.integrate(w * (px * px + py * py)),
        V=grid.integrate(w * (rx * px + ry * py)),
    )


def multipliers(d: FlowDiagnostics) -> Multipliers:
    """Closed-form multipliers keeping E and I constant along the
    constrained flow.

    They solve ``Z2 = b K + a V`` and ``-2 = b V + 2 a I``; the determinant
    ``2 I K - V^2`` is nonnegative by Cauchy-Schwarz.
    """
    den = 2.0 * d.I * d.K - d.V * d.V
    if not den > DENOM_REL * 2.0 * d.I * d.K:
        raise DegenerateStateError(
            f"multiplier denominator 2IK - V^2 = {den:.3e} is below "
            f"{DENOM_REL:.0e} * 2IK (Cauchy-Schwarz near-equality)"
        )
    b = (2.0 * d.I * d.Z2 + 2.0 * d.V) / den
    a = -(2.0 * d.K + d.V * d.Z2) / den
    return Multipliers(a=a, b=b)


def constrained_flux(omega: VorticityField, sv: StreamVelocity, m: Multipliers):
    """``grad w - b w grad psi - a w x``, i.e. ``w grad(log w - b psi - a|x|^2/2)``."""
    X, Y = omega.grid.mesh()
    w = omega.values
    gx, gy = omega.grid.spectral().grad(w)
    px, py = sv.grad_psi
    return gx - m.b * w * px - m.a * w * X, gy - m.b * w * py - m.a * w * Y


def mf_residual(omega: VorticityField, sv: StreamVelocity, m: Multipliers) -> float:
    """``int w |grad(log w - b psi - a|x|^2/2)|^2``; zero exactly on
    mean-field states with multipliers (a, b)."""
    fx, fy = constrained_flux(omega, sv, m)
    w = omega.values
    pos = w > omega.clip_level()
    return omega.grid.integrate((fx[pos] ** 2 + fy[pos] ** 2) / w[pos])


def recentered(omega: VorticityField) -> VorticityField:
    """Shift by the centre of mass with a spectral phase ramp so that M = 0."""
    mx, my = center_of_mass(omega)
    sp = omega.grid.spectral()
    hat = sp.fwd(omega.values)
    shifted = sp.inv(hat * np.exp(sp.ikx * mx + sp.iky * my))
    return VorticityField(omega.grid, shifted)


def with_values(omega: VorticityField, values: np.ndarray) -> VorticityField:
    return replace(omega, values=values)


__all__ = [
    "VorticityField",
    "StreamVelocity",
    "FlowDiagnostics",
    "Multipliers",
    "solve_stream",
    "diagnostics",
    "multipliers",
    "mf_residual",
    "fisher_information",
    "entropy",
    "moment_of_inertia",
    "center_of_mass",
    "recentered",
    "check_boundary",
    "boundary_mass_fraction",
    "boundary_ratio",
]

