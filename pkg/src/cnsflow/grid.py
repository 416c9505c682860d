"""Uniform cell-centred grid on the square [-L, L]^2 and its spectral machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.special import j0, j1

from .errors import ConfigError

# -(mean of log|x| over the unit square centred at 0)
SELF_POTENTIAL_C0 = 1.5 + 0.5 * math.log(2.0) - math.pi / 4.0


_WORKERS = 1


def set_fft_workers(workers: int) -> None:
    """Thread count for scipy.fft. Every transform is computed per-axis, so
    results do not depend on it."""
    global _WORKERS
    _WORKERS = max(1, int(workers))


def fft_workers() -> int:
    return _WORKERS


def rfft2(a):
    return sfft.rfft2(a, workers=_WORKERS)


def irfft2(a, shape):
    return sfft.irfft2(a, s=shape, workers=_WORKERS)


@dataclass(frozen=True)
class Grid:
    """Truncation of the plane to [-L, L]^2 with n cells per axis.

    Arrays on the grid are indexed ``[i, j]`` with ``i`` along x and ``j``
    along y; cell centres sit at ``-L + (i + 1/2) h``.
    """

    L: float = 12.0
    n: int = 256

    def __post_init__(self):
        if self.n < 16 or self.n % 2:
            raise ConfigError(f"grid n must be even and >= 16, got {self.n}")
        if not self.L > 0:
            raise ConfigError(f"grid half-width L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def x(self) -> np.ndarray:
        return -self.L + (np.arange(self.n) + 0.5) * self.h

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return _mesh(self)

    def integrate(self, values: np.ndarray) -> float:
        """Midpoint rule."""
        return float(self.cell_area * np.sum(values))

    def spectral(self) -> "Spectral":
        return _spectral(self)


@lru_cache(maxsize=16)
def _mesh(grid: Grid):
    X, Y = np.meshgrid(grid.x, grid.x, indexing="ij")
    X.flags.writeable = False
    Y.flags.writeable = False
    return X, Y


class Spectral:
    """Periodic spectral operators on a grid (real FFT along the last axis).

    First derivatives drop the Nyquist mode so that they are real and
    skew-adjoint; summation by parts then holds exactly on the grid.
    """

    def __init__(self, grid: Grid):
        n, h = grid.n, grid.h
        self.grid = grid
        self.shape = (n, n)
        kx = 2.0 * np.pi * sfft.fftfreq(n, d=h)
        ky = 2.0 * np.pi * sfft.rfftfreq(n, d=h)
        self.ksq = kx[:, None] ** 2 + ky[None, :] ** 2
        kx_d = kx.copy()
        kx_d[n // 2] = 0.0
        ky_d = ky.copy()
        ky_d[-1] = 0.0
        self.ikx = 1j * kx_d[:, None] * np.ones_like(ky_d)[None, :]
        self.iky = 1j * np.ones_like(kx_d)[:, None] * ky_d[None, :]
        ix = np.abs(sfft.fftfreq(n, d=1.0 / n))
        iy = sfft.rfftfreq(n, d=1.0 / n)
        cut = n / 3.0
        self.dealias = ((ix[:, None] < cut) & (iy[None, :] < cut)).astype(float)

    def fwd(self, f):
        return rfft2(f)

    def inv(self, fh):
        return irfft2(fh, self.shape)

    def grad(self, f):
        fh = rfft2(f)
        return self.inv(self.ikx * fh), self.inv(self.iky * fh)

    def div(self, fx, fy, dealias=False):
        hat = self.ikx * rfft2(fx) + self.iky * rfft2(fy)
        if dealias:
            hat = hat * self.dealias
        return self.inv(hat)

    def laplacian(self, f):
        return self.inv(-self.ksq * rfft2(f))

    def apply_dealias(self, f):
        return self.inv(self.dealias * rfft2(f))


@lru_cache(maxsize=16)
def _spectral(grid: Grid) -> Spectral:
    return Spectral(grid)


class FreeSpaceConvolver:
    """Aperiodic convolution ``h^2 sum_j k(x_i - x_j) f_j`` on a grid.

    Each kernel is sampled at every grid offset and the input is zero-padded
    to the doubled grid, so there are no periodic images. With several
    kernels the forward transform of the input is shared and a tuple is
    returned.
    """

    def __init__(self, grid: Grid, *kernels):
        n, h = grid.n, grid.h
        d = np.arange(2 * n)
        d = np.where(d < n, d, d - 2 * n) * h
        DX, DY = np.meshgrid(d, d, indexing="ij")
        self.grid = grid
        self.kernel_hats = [rfft2(k(DX, DY)) * grid.cell_area for k in kernels]

    def __call__(self, f: np.ndarray):
        n = self.grid.n
        pad = np.zeros((2 * n, 2 * n))
        pad[:n, :n] = f
        fh = rfft2(pad)
        out = tuple(irfft2(fh * kh, (2 * n, 2 * n))[:n, :n] for kh in self.kernel_hats)
        return out[0] if len(out) == 1 else out


def _newton_kernel(h):
    def kernel(dx, dy):
        r2 = dx * dx + dy * dy
        with np.errstate(divide="ignore"):
            k = -np.log(r2) / (4.0 * np.pi)
        k[0, 0] = -(math.log(h) - SELF_POTENTIAL_C0) / (2.0 * np.pi)
        return k

    return kernel


def _truncated_newton_kernel(grid: Grid):
    """Discrete kernel of the log potential acting on band-limited data.

    The Green's function truncated at radius R = 2*sqrt(2) L (the box
    diameter) has the Fourier transform
    ``(1 - J0(kR))/k^2 - R log(R) J1(kR)/k``; sampling it on a 4x padded
    periodic grid and transforming back gives kernel values that make the
    aperiodic convolution spectrally accurate for smooth data that vanishes
    at the box edge.
    """
    n, h = grid.n, grid.h
    m = 4 * n
    R = 2.0 * math.sqrt(2.0) * grid.L
    kx = 2.0 * np.pi * sfft.fftfreq(m, d=h)
    ky = 2.0 * np.pi * sfft.rfftfreq(m, d=h)
    k = np.sqrt(kx[:, None] ** 2 + ky[None, :] ** 2)
    kR = k * R
    with np.errstate(divide="ignore", invalid="ignore"):
        ghat = (1.0 - j0(kR)) / k**2 - R * math.log(R) * j1(kR) / k
    ghat[0, 0] = R * R / 4.0 - 0.5 * R * R * math.log(R)
    table = irfft2(ghat, (m, m)) / grid.cell_area

    def kernel(dx, dy):
        i = np.rint(dx / h).astype(int) % m
        j = np.rint(dy / h).astype(int) % m
        return table[i, j]

    return kernel


@lru_cache(maxsize=16)
def newton_convolver(grid: Grid, method: str = "spectral") -> FreeSpaceConvolver:
    """Convolution with -(1/2pi) log|x|.

    ``method="spectral"`` uses the truncated-kernel construction above.
    ``method="midpoint"`` samples log|x| at the offsets and replaces the
    singular self-cell by the cell-averaged potential -(1/2pi)(log h - c0);
    it is second order.
    """
    if method == "spectral":
        return FreeSpaceConvolver(grid, _truncated_newton_kernel(grid))
    if method == "midpoint":
        return FreeSpaceConvolver(grid, _newton_kernel(grid.h))
    raise ValueError(f"unknown Poisson method {method!r}")
