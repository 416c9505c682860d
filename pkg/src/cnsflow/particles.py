"""Stochastic point vortices with a regularised log interaction.

Three processes share one Euler-Maruyama driver:

* ``plain``      ``dx_i = grad_perp_i H dt + sqrt(2) dw_i``
* ``essential``  adds ``-b_N grad_i H dt`` with ``b_N = lap H / |grad H|^2``,
  which removes the Ito drift of H
* ``projected``  also projects the noise onto the level set of H and adds
  the curvature drift that cancels the Ito term of the projected noise, so
  that ``dH = 0`` exactly in continuous time

Derivation of the projected process. With ``n = grad H / |grad H|`` and
``P = 1 - n n^T`` (in R^{2N}), take ``dx = A dt + sqrt(2) P dw``. Ito's
formula gives ``dH = (grad H . A + tr(P D^2 H)) dt`` and
``tr(P D^2 H) = lap H - n^T D^2 H n``. Choosing
``A = grad_perp H - b_N grad H + (grad H^T D^2 H grad H / |grad H|^4) grad H``
makes the drift vanish, because ``grad H . grad_perp H = 0`` particle by
particle. The Hessian form is evaluated pairwise as
``(1/2N) sum_{i != j} (v_i - v_j)^T D^2 g(x_i - x_j) (v_i - v_j)``.

Noise is counter-based: step ``k`` of an ensemble with seed ``s`` draws one
block of normals from Philox keyed by ``s`` at counter ``(0, k, 0, 0)``;
particle ``p`` reads row ``streams[p]`` of that block.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from .errors import DegenerateStateError, ParticleDomainError

# probe OpenMP before TBB (old TBB builds warn on import)
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

PROCESSES = ("plain", "essential", "projected")
GRAD_EPS = 1e-300

_INV_2PI = 1.0 / (2.0 * math.pi)
_INV_4PI = 1.0 / (4.0 * math.pi)


@dataclass(frozen=True)
class RegularizedKernel:
    """``g_delta(x) = -(1/4pi) log(|x|^2 + delta^2)`` and its derivatives."""

    delta: float

    def g(self, dx, dy):
        return -_INV_4PI * np.log(dx * dx + dy * dy + self.delta**2)

    def grad(self, dx, dy):
        s = dx * dx + dy * dy + self.delta**2
        return -_INV_2PI * dx / s, -_INV_2PI * dy / s

    def grad_perp(self, dx, dy):
        gx, gy = self.grad(dx, dy)
        return gy, -gx

    def laplacian(self, dx, dy):
        s = dx * dx + dy * dy + self.delta**2
        return -(self.delta**2) / (math.pi * s * s)

    def hessian(self, dx, dy):
        """Components (g_xx, g_xy, g_yy)."""
        s = dx * dx + dy * dy + self.delta**2
        c = -_INV_2PI
        return c * (1 / s - 2 * dx * dx / s**2), c * (-2 * dx * dy / s**2), c * (1 / s - 2 * dy * dy / s**2)


# ---------------------------------------------------------------- pair kernels


@numba.njit(parallel=True, cache=True)
def _pair_sums(pos, delta):
    """Per particle: sum_{j != i} grad g(x_i - x_j) and sum_{j != i} lap g."""
    n = pos.shape[0]
    d2 = delta * delta
    grad = np.zeros((n, 2))
    lap = np.zeros(n)
    for i in numba.prange(n):
        gx = 0.0
        gy = 0.0
        lp = 0.0
        xi = pos[i, 0]
        yi = pos[i, 1]
        for j in range(n):
            if j == i:
                continue
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            s = dx * dx + dy * dy + d2
            gx -= dx / s
            gy -= dy / s
            lp -= d2 / (s * s)
        grad[i, 0] = gx * _INV_2PI
        grad[i, 1] = gy * _INV_2PI
        lap[i] = lp / math.pi
    return grad, lap


@numba.njit(parallel=True, cache=True)
def _pair_energy(pos, delta):
    """Per particle: sum_{j > i} g(x_i - x_j)."""
    n = pos.shape[0]
    d2 = delta * delta
    out = np.zeros(n)
    for i in numba.prange(n):
        acc = 0.0
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            acc += math.log(dx * dx + dy * dy + d2)
        out[i] = -acc * _INV_4PI
    return out


@numba.njit(parallel=True, cache=True)
def _pair_row_energy(pos, delta):
    """Per particle: mean over j != i of g(x_i - x_j)."""
    n = pos.shape[0]
    d2 = delta * delta
    out = np.zeros(n)
    for i in numba.prange(n):
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            acc += math.log(dx * dx + dy * dy + d2)
        out[i] = -acc * _INV_4PI / (n - 1)
    return out


@numba.njit(parallel=True, cache=True)
def _hessian_form(pos, v, delta):
    """Per particle: sum_{j != i} (v_i - v_j)^T D^2 g(x_i - x_j) (v_i - v_j)."""
    n = pos.shape[0]
    d2 = delta * delta
    out = np.zeros(n)
    for i in numba.prange(n):
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            wx = v[i, 0] - v[j, 0]
            wy = v[i, 1] - v[j, 1]
            s = dx * dx + dy * dy + d2
            xw = dx * wx + dy * wy
            acc += (wx * wx + wy * wy) / s - 2.0 * xw * xw / (s * s)
        out[i] = -acc * _INV_2PI
    return out


@numba.njit(cache=True)
def _deposit(pos, h, L, n, bw, half):
    grid = np.zeros((n, n))
    wx = np.empty(2 * half + 1)
    wy = np.empty(2 * half + 1)
    inv = 1.0 / (2.0 * bw * bw)
    for p in range(pos.shape[0]):
        ci = int(math.floor((pos[p, 0] + L) / h))
        cj = int(math.floor((pos[p, 1] + L) / h))
        sx = 0.0
        sy = 0.0
        for k in range(2 * half + 1):
            i = ci - half + k
            j = cj - half + k
            if 0 <= i < n:
                xc = -L + (i + 0.5) * h - pos[p, 0]
                wx[k] = math.exp(-xc * xc * inv)
            else:
                wx[k] = 0.0
            if 0 <= j < n:
                yc = -L + (j + 0.5) * h - pos[p, 1]
                wy[k] = math.exp(-yc * yc * inv)
            else:
                wy[k] = 0.0
            sx += wx[k]
            sy += wy[k]
        for a in range(2 * half + 1):
            i = ci - half + a
            if wx[a] == 0.0:
                continue
            fx = wx[a] / sx
            for b in range(2 * half + 1):
                if wy[b] != 0.0:
                    grid[i, cj - half + b] += fx * wy[b] / sy
    return grid


def set_threads(count: int) -> None:
    numba.set_num_threads(max(1, min(int(count), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------- ensemble


@dataclass(frozen=True)
class VortexEnsemble:
    positions: np.ndarray
    delta: float
    seed: int
    streams: np.ndarray
    step_index: int = 0
    t: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 2:
            raise ValueError(f"positions must have shape (N>=2, 2), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "streams", np.asarray(self.streams, dtype=np.int64))

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    def permuted(self, perm) -> "VortexEnsemble":
        perm = np.asarray(perm)
        return replace(self, positions=self.positions[perm], streams=self.streams[perm])


def _generator(seed: int, counter_word: int, purpose: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 0x5eed], dtype=np.uint64)
    counter = np.array([0, counter_word, purpose, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def init_ensemble(omega, N: int, delta: float, seed: int) -> VortexEnsemble:
    """I.i.d. samples of the grid density: cell by cumulative weight, then a
    uniform position inside the cell."""
    grid = omega.grid
    w = np.clip(omega.values, 0.0, None).ravel()
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    rng = _generator(seed, 0, 1)
    u = rng.random((N, 3))
    cells = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), cdf.size - 1)
    i, j = np.divmod(cells, grid.n)
    h = grid.h
    pos = np.stack([-grid.L + (i + u[:, 1]) * h, -grid.L + (j + u[:, 2]) * h], axis=1)
    return VortexEnsemble(pos, float(delta), int(seed), np.arange(N, dtype=np.int64))


def _noise(e: VortexEnsemble) -> np.ndarray:
    rows = int(e.streams.max()) + 1
    block = _generator(e.seed, e.step_index, 0).standard_normal((rows, 2))
    return block[e.streams]


# ---------------------------------------------------------------- observables


def hamiltonian_N(e: VortexEnsemble) -> float:
    """``H = (1/N) sum_{j<r} g_delta(x_j - x_r)``."""
    return float(_pair_energy(e.positions, e.delta).sum() / e.N)


def empirical_energy(e: VortexEnsemble) -> tuple[float, float]:
    """Unbiased pair estimate ``H/(N-1)`` of ``1/2 int int g w w`` and its
    standard error from the first-order (Hoeffding) projection."""
    rows = _pair_row_energy(e.positions, e.delta)
    est = 0.5 * float(rows.mean())
    return est, float(rows.std(ddof=1) / math.sqrt(e.N))


def empirical_inertia(e: VortexEnsemble) -> float:
    c = e.positions - e.positions.mean(axis=0)
    return 0.5 * float((c * c).sum(axis=1).mean())


@dataclass(frozen=True)
class Gradients:
    grad: np.ndarray  # grad_i H, shape (N, 2)
    lap: float  # lap H
    norm2: float  # |grad H|^2


def gradients(e: VortexEnsemble) -> Gradients:
    g, lap = _pair_sums(e.positions, e.delta)
    grad = g / e.N
    return Gradients(grad, float(lap.sum() / e.N), float((grad * grad).sum()))


def b_N(e: VortexEnsemble, gr: Gradients | None = None) -> float:
    """``lap H / |grad H|^2`` with self-interactions excluded."""
    gr = gradients(e) if gr is None else gr
    if not gr.norm2 > GRAD_EPS:
        raise DegenerateStateError(f"|grad H|^2 = {gr.norm2:.3e}: b_N undefined")
    return gr.lap / gr.norm2


def curvature_drift(e: VortexEnsemble, gr: Gradients) -> np.ndarray:
    """``(grad H^T D^2 H grad H / |grad H|^4) grad H``."""
    q = 0.5 * float(_hessian_form(e.positions, gr.grad, e.delta).sum()) / e.N
    return (q / gr.norm2**2) * gr.grad


# ---------------------------------------------------------------- stepping


def _step(e: VortexEnsemble, dt: float, process: str, noise: bool = True,
          interaction: bool = True, b_override: float | None = None) -> VortexEnsemble:
    if process not in PROCESSES:
        raise ValueError(f"process must be one of {PROCESSES}, got {process!r}")
    if dt == 0:
        return e
    dw = math.sqrt(dt) * _noise(e) if noise else np.zeros_like(e.positions)
    drift = np.zeros_like(e.positions)
    kick = math.sqrt(2.0) * dw
    if interaction:
        gr = gradients(e)
        drift[:, 0] = gr.grad[:, 1]
        drift[:, 1] = -gr.grad[:, 0]
        if process != "plain":
            b = b_N(e, gr) if b_override is None else b_override
            drift -= b * gr.grad
        if process == "projected":
            if not gr.norm2 > GRAD_EPS:
                raise DegenerateStateError(f"|grad H|^2 = {gr.norm2:.3e}: projection undefined")
            drift += curvature_drift(e, gr)
            kick -= (float((gr.grad * kick).sum()) / gr.norm2) * gr.grad
    pos = e.positions + drift * dt + kick
    return replace(e, positions=pos, step_index=e.step_index + 1, t=e.t + dt)


def step_plain(e: VortexEnsemble, dt: float, **kw) -> VortexEnsemble:
    return _step(e, dt, "plain", **kw)


def step_essential(e: VortexEnsemble, dt: float, **kw) -> VortexEnsemble:
    """Euler-Maruyama step of the essential process (b_N at the current
    configuration)."""
    return _step(e, dt, "essential", **kw)


def step_projected(e: VortexEnsemble, dt: float, **kw) -> VortexEnsemble:
    """Euler-Maruyama step of the energy-conserving process; uses the same
    Brownian increments as :func:`step_essential` for the same ensemble."""
    return _step(e, dt, "projected", **kw)


STEPPERS = {"plain": step_plain, "essential": step_essential, "projected": step_projected}


def projection_terms(e: VortexEnsemble, dt: float) -> tuple[float, float]:
    """Mean per-particle size of the two extra terms of the projected
    process over one step: curvature drift ``|c_i| dt`` and noise
    projection ``|sqrt(2) (grad H . dw / |grad H|^2) grad_i H|``."""
    gr = gradients(e)
    c = curvature_drift(e, gr)
    dw = math.sqrt(dt) * _noise(e)
    proj = math.sqrt(2.0) * (float((gr.grad * dw).sum()) / gr.norm2) * gr.grad
    return (float(np.linalg.norm(c, axis=1).mean() * dt),
            float(np.linalg.norm(proj, axis=1).mean()))


def deposit_density(e: VortexEnsemble, grid, bandwidth: float):
    """Gaussian-kernel density of the empirical measure on ``grid``. Each
    particle's weights are renormalised on the grid so the mass is exact."""
    from .core import VorticityField

    pos = e.positions
    outside = int(np.sum(np.any(np.abs(pos) >= grid.L, axis=1)))
    if outside:
        raise ParticleDomainError(f"{outside} particles lie outside the grid [-L, L]^2")
    half = int(math.ceil(6.0 * bandwidth / grid.h)) + 1
    acc = _deposit(pos, grid.h, grid.L, grid.n, float(bandwidth), half)
    return VorticityField(grid, acc / (e.N * grid.cell_area))


@dataclass
class ParticleStats:
    t: list
    H: list
    b_N: list
    I_emp: list
    E_emp: list

    HEADER = ("t", "H", "b_N", "I_emp", "E_emp")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.HEADER)
            for row in zip(self.t, self.H, self.b_N, self.I_emp, self.E_emp):
                writer.writerow([format(float(v), ".17g") for v in row])


def run_particles(e: VortexEnsemble, dt: float, t_end: float, process: str = "essential",
                  output_every: int = 10) -> tuple[VortexEnsemble, ParticleStats]:
    nsteps = int(round(t_end / dt))
    stepper = STEPPERS[process]
    stats = ParticleStats([], [], [], [], [])

    def record(ens):
        H = hamiltonian_N(ens)
        stats.t.append(ens.step_index * dt)
        stats.H.append(H)
        stats.b_N.append(b_N(ens))
        stats.I_emp.append(empirical_inertia(ens))
        stats.E_emp.append(H / (ens.N - 1))

    record(e)
    for k in range(1, nsteps + 1):
        e = stepper(e, dt)
        if k % output_every == 0 or k == nsteps:
            record(e)
    return e, stats
