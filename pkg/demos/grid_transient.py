"""Transient of a small power-grid model with fixed-step and exponential solvers.

A 10x10 resistive mesh with grounded capacitors, supply pads and pulsed
current loads is simulated with trapezoidal steps at the smallest
breakpoint gap and with the invert and rational exponential integrators,
which step from breakpoint to breakpoint. The script prints accuracy
against TR, the substitution and factorization counts, and then repeats
the run with two node capacitors removed (singular C).

    python3 demos/grid_transient.py [--out DIR]
"""
import argparse
import pathlib
import time

import numpy as np

from matex.benches import rc_grid_netlist
from matex.cli import compare_solutions
from matex.integrate import run_fixed_step, run_matex
from matex.krylov import INVERT, rational
from matex.mna import stamp
from matex.netlist import parse_netlist
from matex.sources import global_transition_spots
from matex.sparsela import counters

T_STOP = 10e-9


def run_all(circuit, label, out=None):
    sys_ = stamp(circuit)
    gts = global_transition_spots(circuit, T_STOP)
    h = gts.min_gap()
    print(f"\n[{label}] {sys_.n} unknowns, {len(gts)} breakpoints, smallest gap {h:.3g} s, "
          f"rank(C) = {np.linalg.matrix_rank(sys_.C.toarray())}")
    runs = {}
    for name, fn in (("tr", lambda: run_fixed_step(sys_, "tr", h, T_STOP, gts)),
                     ("imatex", lambda: run_matex(sys_, INVERT, 1e-6, T_STOP, gts)),
                     ("rmatex", lambda: run_matex(sys_, rational(1e-10), 1e-6, T_STOP, gts))):
        counters.reset()
        t0 = time.perf_counter()
        sol = fn()
        wall = time.perf_counter() - t0
        lu, solves = counters.snapshot()
        runs[name] = sol
        d = sol.diagnostics
        print(f"  {name:7s} {len(sol.times):5d} points  {solves:5d} solves  {lu} LU  "
              f"peak m {d['peak_m']:2d}  {wall * 1e3:7.1f} ms")
        if out is not None:
            sol.to_csv(out / f"{label}_{name}.csv")
    for name in ("imatex", "rmatex"):
        mx, avg = compare_solutions(runs[name], runs["tr"])
        print(f"  {name} vs tr: max {mx * 1e6:.2f} uV, avg {avg * 1e6:.3f} uV")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=pathlib.Path, default=None, help="directory for CSV waveforms")
    args = ap.parse_args()
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    run_all(parse_netlist(rc_grid_netlist()), "grid", args.out)
    run_all(parse_netlist(rc_grid_netlist(skip_caps=("n3_3", "n6_7"))), "grid_singular_c", args.out)


if __name__ == "__main__":
    main()
