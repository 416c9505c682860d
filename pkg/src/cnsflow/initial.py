"""Initial-condition families. Every constructor returns a unit-mass field
with its centre of mass at the origin."""

from __future__ import annotations

import numpy as np

from .core import VorticityField, center_of_mass
from .grid import Grid


def gaussian(grid: Grid, I: float = 2.0) -> VorticityField:
    """Radial Gaussian with moment of inertia ``I`` (per-axis variance I)."""
    X, Y = grid.mesh()
    w = np.exp(-(X * X + Y * Y) / (2.0 * I)) / (2.0 * np.pi * I)
    return VorticityField(grid, w).normalized()


def oseen(grid: Grid, t: float = 0.0) -> VorticityField:
    """Oseen vortex ``exp(-|x|^2 / 4(t+1)) / (4 pi (t+1))`` (unit viscosity)."""
    if t < 0:
        raise ValueError(f"Oseen time must be >= 0, got {t}")
    X, Y = grid.mesh()
    s = 4.0 * (t + 1.0)
    return VorticityField(grid, np.exp(-(X * X + Y * Y) / s) / (np.pi * s))


def ring(grid: Grid, r0: float = 2.0, width: float = 0.5) -> VorticityField:
    """Annulus of radius r0. The profile is symmetrised in r so the field
    is smooth at the origin (a bare Gaussian in r - r0 has a cusp there)."""
    X, Y = grid.mesh()
    r = np.hypot(X, Y)
    s = 2.0 * width**2
    return VorticityField(grid, np.exp(-((r - r0) ** 2) / s) + np.exp(-((r + r0) ** 2) / s)).normalized()


def two_blob(grid: Grid, separation: float = 2.0, sigma: float = 0.6) -> VorticityField:
    X, Y = grid.mesh()
    d = separation / 2.0
    w = np.exp(-((X - d) ** 2 + Y * Y) / (2 * sigma**2))
    w += np.exp(-((X + d) ** 2 + Y * Y) / (2 * sigma**2))
    return VorticityField(grid, w).normalized()


def random_smooth(grid: Grid, seed: int = 0, modes: int = 4, amplitude: float = 0.6,
                  envelope: float = 1.5) -> VorticityField:
    """Gaussian envelope modulated by ``exp`` of a random low-mode Fourier
    series; strictly positive and smooth. The centre of mass is moved to
    the origin by re-evaluating the analytic expression at shifted points."""
    rng = np.random.default_rng(seed)
    kx, ky = np.meshgrid(np.arange(-modes, modes + 1), np.arange(-modes, modes + 1))
    k = np.stack([kx.ravel(), ky.ravel()], axis=1) * (np.pi / 4.0)
    amp = rng.normal(size=len(k)) / (1.0 + (k * k).sum(axis=1))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=len(k))
    X, Y = grid.mesh()

    def evaluate(cx, cy):
        xs, ys = X + cx, Y + cy
        field = np.zeros_like(X)
        for (ax, ay), c, p in zip(k, amp, phase):
            field += c * np.cos(ax * xs + ay * ys + p)
        return np.exp(-(xs**2 + ys**2) / (2.0 * envelope) + amplitude * field)

    cx = cy = 0.0
    for _ in range(30):
        om = VorticityField(grid, evaluate(cx, cy)).normalized()
        mx, my = center_of_mass(om)
        if max(abs(mx), abs(my)) < 1e-13:
            break
        cx, cy = cx + mx, cy + my
    return om


def perturbed(base: VorticityField, amplitude: float = 0.05, center=(1.0, 0.5),
              width: float = 0.7) -> VorticityField:
    """Base field plus a small off-centre Gaussian bump, renormalised."""
    X, Y = base.grid.mesh()
    bump = np.exp(-((X - center[0]) ** 2 + (Y - center[1]) ** 2) / (2 * width**2))
    bump *= amplitude / base.grid.integrate(bump)
    return VorticityField(base.grid, base.values + bump).normalized()


FAMILIES = {
    "gaussian": gaussian,
    "oseen": oseen,
    "ring": ring,
    "two-blob": two_blob,
    "random": random_smooth,
}
