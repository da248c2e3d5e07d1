"""Refinement study on the unit disk against the closed-form radial mode.

With no boundary potential the first eigenvalue of the linear problem on
the unit disk is I1(1)/I0(1); the P1 discretization should approach it at
second order in the mesh size.  Prints one row per refinement level and
the observed orders between consecutive levels.
"""

import argparse
import math

from steklov import BoundaryDensity, generate_disk, solve_linear


def bessel_i_ratio(x, terms=40):
    i0 = sum((x / 2.0) ** (2 * k) / math.factorial(k) ** 2 for k in range(terms))
    i1 = sum(
        (x / 2.0) ** (1 + 2 * k) / (math.factorial(k) * math.factorial(k + 1))
        for k in range(terms)
    )
    return i1 / i0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "--h",
        type=float,
        nargs="+",
        default=[0.4, 0.2, 0.1, 0.05, 0.025],
        help="mesh sizes, finest last",
    )
    args = ap.parse_args()

    target = bessel_i_ratio(1.0)
    print(f"reference value I1(1)/I0(1) = {target:.16f}")
    print(f"{'h':>8} {'vertices':>9} {'lambda':>20} {'error':>12} {'order':>7}")
    prev_err = None
    for h in args.h:
        mesh = generate_disk(h)
        pair = solve_linear(mesh, BoundaryDensity.constant(mesh, 0.0), 0.0)
        err = abs(pair.lam - target)
        order = "" if prev_err is None else f"{math.log2(prev_err / err):7.3f}"
        print(f"{h:8.3f} {mesh.n_vertices:9d} {pair.lam:20.12f} {err:12.3e} {order}")
        prev_err = err


if __name__ == "__main__":
    main()
