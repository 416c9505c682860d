"""Canonical table F, E, I, S over an (a, b) grid, with the central
differences of F and a concavity check.

    python3 scripts/thermo_table.py --a -0.6 -0.5 -0.4 --b 0 5 10 15 20
"""

import argparse

from cnsflow.meanfield import B_CRITICAL, canonical_table, concavity_check


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--a", type=float, nargs="+", default=[-0.6, -0.5, -0.4])
    p.add_argument("--b", type=float, nargs="+", default=[0.0, 5.0, 10.0, 15.0, 20.0])
    args = p.parse_args()

    points = canonical_table(args.a, args.b)
    print(f"{'a':>6} {'b':>7} {'F':>13} {'E':>12} {'I':>10} {'dF/da':>10} {'dF/db':>11}")
    for q in points:
        print(f"{q.a:6.3f} {q.b:7.3f} {q.F:13.9f} {q.E:12.8f} {q.I:10.6f} {q.dF_da:10.6f} {q.dF_db:11.8f}")
    report = concavity_check(points)
    if report is not None:
        print(f"concave: {report.concave} (max Hessian eigenvalue {report.max_eigenvalue:.3e}, "
              f"{len(report.points)} interior points)")
    print("I * (-a) against 1 - b/(8 pi):")
    for q in points:
        print(f"  a={q.a:.3f} b={q.b:.3f}: {-q.a * q.I:.8f} {1 - q.b / B_CRITICAL:.8f}")


if __name__ == "__main__":
    main()
