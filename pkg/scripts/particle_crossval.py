"""Moments of the deposited particle density against the regularised
energy PDE started from W, for several ensemble sizes and seeds.

    python3 scripts/particle_crossval.py --N 1000 4000 --seeds 4
"""

import argparse
import time

import numpy as np

from cnsflow.core import diagnostics
from cnsflow.dynamics import StepConfig, run_trajectory
from cnsflow.grid import Grid
from cnsflow.initial import gaussian
from cnsflow.particles import deposit_density, init_ensemble, run_particles


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, nargs="+", default=[1000, 4000])
    p.add_argument("--seeds", type=int, default=4)
    p.add_argument("--t-end", type=float, default=0.5)
    p.add_argument("--dt", type=float, default=2e-3)
    p.add_argument("--process", default="essential")
    args = p.parse_args()

    g = Grid(12.0, 256)
    W = gaussian(g, 2.0)
    delta = 2 * g.h
    rec = run_trajectory(W, StepConfig(nu=1.0, dt=1e-3, scheme="formula", equation="energy",
                                       delta=delta, t_end=args.t_end, output_every=100))
    pde = rec.diagnostics[-1]
    print(f"PDE: E={pde.E:.6f} I={pde.I:.5f}")
    for N in args.N:
        start = time.perf_counter()
        E, I = [], []
        for seed in range(args.seeds):
            e, _ = run_particles(init_ensemble(W, N, delta, seed), args.dt, args.t_end, args.process,
                                 output_every=1000)
            d = diagnostics(deposit_density(e, g, 2 * g.h))
            E.append(d.E)
            I.append(d.I)
        E, I = np.array(E), np.array(I)
        se = lambda v: v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else float("nan")
        print(f"N={N}: E={E.mean():.6f} +- {se(E):.1e} ({E.mean() / pde.E - 1:+.2%}), "
              f"I={I.mean():.5f} +- {se(I):.1e} ({I.mean() / pde.I - 1:+.2%}); "
              f"{time.perf_counter() - start:.0f} s")


if __name__ == "__main__":
    main()
