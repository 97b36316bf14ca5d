"""Relative MEVP error of the three Krylov subspaces on a stiff RC network.

The network is two RC rails, one fast and one slow, coupled by a single
resistor. Its generator -C^{-1}G has eigenvalues spread over a ratio of
about 4.7e6. For a fixed step h the error of exp(hA)v is tabulated against
the subspace dimension m, and then against the rational shift gamma.

    python3 demos/krylov_error_study.py [--n 100] [--seed 0] [--h 0.4p]
"""
import argparse

import numpy as np

from matex.benches import stiff_rc, stiffness_ratio
from matex.cli import parse_time
from matex.krylov import INVERT, STANDARD, error_surface, rational


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--h", type=parse_time, default=0.4e-12)
    ap.add_argument("--m-max", type=int, default=20)
    args = ap.parse_args()

    C, G = stiff_rc(n=args.n, seed=args.seed)
    ratio, lam_min, lam_max = stiffness_ratio(C, G)
    print(f"stiff bench: n={args.n}, eigenvalues {lam_min:.3g} .. {lam_max:.3g}, ratio {ratio:.3g}")
    v = 1.0 - np.random.default_rng(args.seed).random(args.n)
    h = args.h
    ms = list(range(1, args.m_max + 1))

    curves = {name: error_surface(C, G, v, var, [h], ms)[0]
              for name, var in (("standard", STANDARD), ("invert", INVERT), ("rational", rational(h)))}
    print(f"\nrelative error at h = {h:.3g} s (rational gamma = h)")
    print(f"{'m':>3} {'standard':>11} {'invert':>11} {'rational':>11}")
    for k, m in enumerate(ms):
        print(f"{m:>3} " + " ".join(f"{curves[c][k]:11.3e}" for c in ("standard", "invert", "rational")))

    # larger steps: the standard basis stays on its plateau, the others keep converging
    h2, m2 = 1e-12, 8
    gammas = h2 * np.logspace(-2, 2, 9)
    print(f"\nrational error at h = {h2:.0e} s, m = {m2}, as gamma sweeps four decades")
    for g in gammas:
        e = error_surface(C, G, v, rational(g), [h2], [m2])[0, 0]
        print(f"  gamma/h = {g / h2:8.3g}   error {e:.3e}")


if __name__ == "__main__":
    main()
