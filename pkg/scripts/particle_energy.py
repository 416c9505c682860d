"""Energy drift of the three particle processes on matched noise, the dt
dependence of the projected drift, and the size of the projection terms
against N.

    python3 scripts/particle_energy.py --replicas 20
"""

import argparse

import numpy as np

from cnsflow.grid import Grid
from cnsflow.initial import gaussian
from cnsflow.particles import STEPPERS, hamiltonian_N, init_ensemble, projection_terms


def drift(W, delta, process, N, dt, T, seeds):
    out = []
    for seed in seeds:
        e0 = init_ensemble(W, N, delta, seed)
        e = e0
        for _ in range(int(round(T / dt))):
            e = STEPPERS[process](e, dt)
        out.append(abs(hamiltonian_N(e) - hamiltonian_N(e0)))
    return float(np.mean(out))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--replicas", type=int, default=20)
    p.add_argument("--T", type=float, default=0.1)
    args = p.parse_args()

    g = Grid(12.0, 256)
    W = gaussian(g, 2.0)
    delta = 2 * g.h
    seeds = range(args.replicas)
    for process in ("plain", "essential", "projected"):
        print(f"{process:>10}: mean |H(T)-H(0)| = {drift(W, delta, process, args.N, 1e-4, args.T, seeds):.3e}")
    prev = None
    for dt in (2e-4, 1e-4, 5e-5):
        d = drift(W, delta, "projected", args.N, dt, args.T, seeds)
        ratio = "" if prev is None else f" (ratio to 2 dt: {d / prev:.2f})"
        print(f"projected dt={dt:.0e}: {d:.3e}{ratio}")
        prev = d
    print("projection terms per particle (curvature drift, noise projection):")
    sizes = []
    for N in (64, 256, 1024):
        c, n = np.mean([projection_terms(init_ensemble(W, N, delta, s), 1e-3) for s in range(4)], axis=0)
        sizes.append((N, c, n))
        print(f"  N={N:5d}: {c:.3e} {n:.3e}")
    Ns = np.log([s[0] for s in sizes])
    for k, name in ((1, "curvature drift"), (2, "noise projection")):
        slope = np.polyfit(Ns, np.log([s[k] for s in sizes]), 1)[0]
        print(f"  {name} scales as N^{slope:.2f}")


if __name__ == "__main__":
    main()
