"""Split the load currents into groups and superpose the group transients.

Each pulse is cut into single bumps; bumps that share a shape and onset
share a group. A group only needs a fresh Krylov basis at its own
breakpoints, and every other global breakpoint is reached by rescaling the
latest basis. The script prints the grouping, per-group work, the
difference to a single run, and a runtime model fed with the measured
counts.

    python3 demos/decomposition.py [--groups 4] [--workers 4]
"""
import argparse
import time

import numpy as np

from matex.benches import rc_grid_netlist
from matex.cli import compare_solutions
from matex.drmatex import CostModelParams, estimate_speedup, run_drmatex
from matex.integrate import run_fixed_step, run_matex
from matex.krylov import rational
from matex.mna import stamp
from matex.netlist import parse_netlist
from matex.sources import global_transition_spots, group_by_bump
from matex.sparsela import lu_decompose, solve

T_STOP = 10e-9


def time_per_solve(sys_, repeats=200):
    f = lu_decompose(sys_.G)
    b = np.ones(sys_.n)
    t0 = time.perf_counter()
    for _ in range(repeats):
        solve(f, b)
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--groups", type=int, default=4)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    circuit = parse_netlist(rc_grid_netlist())
    sys_ = stamp(circuit)
    gts = global_transition_spots(circuit, T_STOP)
    plan = group_by_bump(circuit, T_STOP, args.groups)
    print(f"{len(gts)} global breakpoints; {len(plan.groups)} groups")
    for g in plan.groups:
        print(f"  group {g.group_id}: {len(g.lts):3d} local breakpoints, bumps {', '.join(g.source_ids)}")

    single = run_matex(sys_, rational(1e-10), 1e-6, T_STOP, gts)
    dr = run_drmatex(circuit, args.groups, 1e-6, T_STOP, workers=args.workers, gamma=1e-10)
    mx, _ = compare_solutions(dr, single)
    print(f"\nsingle run: {single.diagnostics['basis_builds']} bases, "
          f"{single.diagnostics['subs_pairs']} solves, peak m {single.diagnostics['peak_m']}")
    for g in dr.diagnostics["per_group"]:
        print(f"  group {g['group_id']}: {g['basis_builds']:3d} bases, {g['subs_pairs']:4d} solves, "
              f"peak m {g['peak_m']}")
    print(f"decomposed vs single: max difference {mx:.2e} V")

    # runtime model with the measured counts
    t_bs = time_per_solve(sys_)
    K = len(gts) - 1
    k = max(g["basis_builds"] for g in dr.diagnostics["per_group"])
    m = single.diagnostics["krylov_subs"] / max(single.diagnostics["basis_builds"], 1)
    tr = run_fixed_step(sys_, "tr", gts.min_gap(), T_STOP, gts)
    p = CostModelParams(K=K, k=k, m=m, T_bs=t_bs, T_H=0.0, T_e=0.0, T_serial=0.0,
                        N=tr.diagnostics["steps"])
    est = estimate_speedup(p)
    print(f"\nmodel (K={K}, k={k}, mean m={m:.2f}, {t_bs * 1e6:.1f} us/solve, N={p.N}): "
          f"{est['vs_single']:.2f}x over one exponential run, {est['vs_fixed']:.2f}x over fixed steps")


if __name__ == "__main__":
    main()
