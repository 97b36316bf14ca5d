"""Acceptance checks, one per criterion.

Each check prints a single ``PASS``/``FAIL criterion N: ...`` line. Run
with ``pytest -s tests/test_acceptance.py`` or directly as a script.
"""
import math
import sys
import time

import numpy as np
import pytest

from matex.benches import rc_grid_netlist, rc_ladder, stiff_rc
from matex.cli import compare_solutions
from matex.drmatex import run_drmatex
from matex.integrate import exp_march, run_fixed_step, run_matex
from matex.krylov import INVERT, STANDARD, KrylovOperator, error_surface, mevp_eval, rational
from matex.mna import dc_analysis, stamp
from matex.netlist import parse_netlist
from matex.sources import global_transition_spots, group_by_bump
from matex.sparsela import counters, lu_decompose

T_STOP = 10e-9
GAMMA = 1e-10
EPS = 1e-6


def report(n, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    return ok


def _grid(**kw):
    circuit = parse_netlist(rc_grid_netlist(**kw))
    return circuit, stamp(circuit), global_transition_spots(circuit, T_STOP)


def criterion_1():
    circuit, sys_, gts = _grid()
    n_groups = len(group_by_bump(circuit, T_STOP, 4).groups)
    t0 = time.perf_counter()
    dr = run_drmatex(circuit, 4, EPS, T_STOP, workers=4, gamma=GAMMA)
    t1 = time.perf_counter()
    single = run_matex(sys_, rational(GAMMA), EPS, T_STOP, gts)
    t2 = time.perf_counter()
    diff, _ = compare_solutions(dr, single)
    ok = diff <= 1e-4 and n_groups >= 3 and t1 - t0 < 10 and t2 - t1 < 10
    return report(1, ok, f"drmatex vs rmatex max diff {diff:.3g} V (<= 1e-4) on {sys_.node_count} nodes, "
                         f"{circuit.count('I')} pulse sources in {n_groups} groups; runtimes "
                         f"{t1 - t0:.2f} s / {t2 - t1:.2f} s (< 10 s)")


def criterion_2():
    _, sys_, gts = _grid()
    h_upper = gts.min_gap()
    t0 = time.perf_counter()
    rm = run_matex(sys_, rational(GAMMA), EPS, T_STOP, gts)
    t1 = time.perf_counter()
    tr = run_fixed_step(sys_, "tr", h_upper, T_STOP, gts)
    t2 = time.perf_counter()
    mx, avg = compare_solutions(rm, tr)
    ok = mx <= 1e-4 and avg <= 4e-5 and t1 - t0 < 10 and t2 - t1 < 10
    return report(2, ok, f"rmatex vs tr(h={h_upper:.3g} s) max {mx:.3g} V (<= 1e-4), "
                         f"avg {avg:.3g} V (<= 4e-5); runtimes {t1 - t0:.2f} s / {t2 - t1:.2f} s")


STIFF_SEEDS = (0, 1, 2, 3)


def criterion_3():
    h, m = 0.4e-12, 3
    errs = {"standard": [], "invert": [], "rational": []}
    for seed in STIFF_SEEDS:
        C, G = stiff_rc(n=100, seed=seed)
        v = 1.0 - np.random.default_rng(seed).random(100)
        for name, var in (("standard", STANDARD), ("invert", INVERT), ("rational", rational(h))):
            errs[name].append(error_surface(C, G, v, var, [h], [m])[0, 0])
    gm = {k: math.exp(np.mean(np.log(e))) for k, e in errs.items()}
    ratio = gm["standard"] / gm["invert"]
    ok = gm["rational"] < gm["invert"] < gm["standard"] and ratio >= 10
    per_seed = ", ".join(f"{s}:{a / b:.1f}x" for s, a, b in zip(STIFF_SEEDS, errs["standard"], errs["invert"]))
    return report(3, ok, f"m=3 h=0.4ps geometric mean over seeds {list(STIFF_SEEDS)}: "
                         f"standard {gm['standard']:.3g}, invert {gm['invert']:.3g}, "
                         f"rational {gm['rational']:.3g}; standard/invert {ratio:.1f}x (>= 10; "
                         f"per seed {per_seed})")


def criterion_4():
    sys_ = stamp(parse_netlist("* rc\nR1 a 0 1k\nC1 a 0 1p\n"))
    T = 5e-9
    hs = [T / 2 ** k for k in range(6, 11)]
    slopes = {}
    for method in ("be", "tr"):
        errs = [abs(run_fixed_step(sys_, method, h, T, x0=[1.0]).states[-1, 0] - math.exp(-T / 1e-9))
                for h in hs]
        slopes[method] = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    ok = abs(slopes["be"] - 1) <= 0.2 and abs(slopes["tr"] - 2) <= 0.2
    return report(4, ok, f"global error slopes BE {slopes['be']:.3f} (1 +- 0.2), "
                         f"TR {slopes['tr']:.3f} (2 +- 0.2) over h = T/64..T/1024")


def criterion_5():
    circuit, sys_, gts = _grid()
    tr = run_fixed_step(sys_, "tr", 10e-12, T_STOP, gts)
    rm = run_matex(sys_, rational(GAMMA), EPS, T_STOP, gts)
    dr = run_drmatex(circuit, 4, EPS, T_STOP, gamma=GAMMA)
    K = len(gts) - 1
    m_peak = rm.diagnostics["peak_m"]
    ksubs = rm.diagnostics["krylov_subs"]
    per_group = [g["basis_builds"] for g in dr.diagnostics["per_group"]]
    single = rm.diagnostics["basis_builds"]
    ok = (tr.diagnostics["subs_pairs"] == 1000 and ksubs <= K * m_peak and m_peak <= 8
          and len(per_group) >= 2 and max(per_group) < single)
    return report(5, ok, f"tr {tr.diagnostics['subs_pairs']} substitution pairs (== 1000); rmatex "
                         f"Krylov pairs {ksubs} <= K*m_peak = {K}*{m_peak} = {K * m_peak}, m_peak "
                         f"{m_peak} (<= 8), plus {rm.diagnostics['context_subs']} input-correction "
                         f"solves; drmatex per-group builds {per_group} < single-run {single}")


def criterion_6():
    circuit, sys_, gts = _grid()
    counts = {}
    for name, run in (("imatex", lambda: run_matex(sys_, INVERT, EPS, T_STOP, gts)),
                      ("rmatex", lambda: run_matex(sys_, rational(GAMMA), EPS, T_STOP, gts)),
                      ("drmatex", lambda: run_drmatex(circuit, 4, EPS, T_STOP, workers=2, gamma=GAMMA))):
        counters.reset()
        run()
        counts[name] = counters.snapshot()[0]
    ok = all(c <= 2 for c in counts.values())
    return report(6, ok, "sparse LU factorizations per run " +
                  ", ".join(f"{k} {v}" for k, v in counts.items()) + " (<= 2)")


def criterion_7():
    _, sys_, gts = _grid(skip_caps=("n3_3", "n6_7"))
    rank = np.linalg.matrix_rank(sys_.C.toarray())
    tr = run_fixed_step(sys_, "tr", gts.min_gap(), T_STOP, gts)
    diffs = {}
    for name, var in (("imatex", INVERT), ("rmatex", rational(GAMMA))):
        diffs[name] = compare_solutions(run_matex(sys_, var, EPS, T_STOP, gts), tr)[0]
    try:
        run_matex(sys_, STANDARD, EPS, T_STOP, gts)
        refused = False
    except ValueError:
        refused = True
    ok = rank < sys_.n and refused and all(d <= 1e-4 for d in diffs.values())
    return report(7, ok, f"rank(C) {rank} < n {sys_.n}; vs tr(h_upper) imatex {diffs['imatex']:.3g} V, "
                         f"rmatex {diffs['rmatex']:.3g} V (<= 1e-4); standard refused without force: "
                         f"{refused}")


def criterion_8():
    # basis level: one basis whose residual is checked at h/2 and h, as the
    # marcher builds it when an output point splits the segment
    worst = unchecked = 0.0
    h = 4e-12
    for seed in range(3):
        C, G = rc_ladder(30, seed=seed)
        v = np.random.default_rng(seed).random(30)
        for var in (INVERT, rational(1e-12), rational(h)):
            op = KrylovOperator.build(C, G, var)
            ref = mevp_eval(op.arnoldi(v, h / 2, eps=EPS), h / 2)
            reused = mevp_eval(op.arnoldi(v, [h / 2, h], eps=EPS), h / 2)
            blind = mevp_eval(op.arnoldi(v, h, eps=EPS), h / 2)
            worst = max(worst, np.linalg.norm(reused - ref) / np.linalg.norm(ref))
            unchecked = max(unchecked, np.linalg.norm(blind - ref) / np.linalg.norm(ref))
    # transient level: midpoints from the reused basis vs midpoints as step ends
    circuit = parse_netlist(rc_grid_netlist(rows=5, cols=6, n_sources=3, n_pads=2))
    sys_ = stamp(circuit)
    gts = global_transition_spots(circuit, T_STOP)
    mids = 0.5 * (np.array(gts.times[:-1]) + np.array(gts.times[1:]))
    split = run_matex(sys_, rational(GAMMA), EPS, T_STOP, gts.union(mids))
    at = [int(np.argmin(np.abs(split.times - t))) for t in mids]
    fG = lu_decompose(sys_.G)
    op = KrylovOperator.build(sys_.C, sys_.G, rational(GAMMA))
    grid = sorted(set(gts.times) | set(mids.tolist()))
    times, states, _, _ = exp_march(sys_, op, fG, sys_.u, dc_analysis(sys_, factor=fG),
                                    list(gts), grid, EPS)
    pick = [int(np.argmin(np.abs(times - t))) for t in mids]
    scale = np.abs(split.states).max()
    march = np.abs(states[pick] - split.states[at]).max() / scale
    ok = worst <= 10 * EPS and march <= 10 * EPS
    return report(8, ok, f"midpoint from reused basis vs fresh basis: 30 states, 3 seeds x 3 variants, "
                         f"worst relative difference {worst:.3g}; {sys_.n}-state grid transient, "
                         f"{len(mids)} midpoints, {march:.3g} (both <= 10*eps = {10 * EPS:g}); a basis "
                         f"checked only at h gives {unchecked:.3g} at h/2")


def criterion_9():
    h, m = 1e-12, 8
    C, G = stiff_rc(n=100, seed=0)
    v = 1.0 - np.random.default_rng(0).random(100)
    gammas = h * np.logspace(-1, 1, 9)
    errs = np.array([error_surface(C, G, v, rational(g), [h], [m])[0, 0] for g in gammas])
    spread = errs.max() / errs.min()
    return report(9, spread < 10, f"stiff bench h=1ps m=8, gamma in h*[0.1, 10]: errors "
                                  f"{errs.min():.3g}..{errs.max():.3g}, spread {spread:.2f}x (< 10)")


def criterion_10():
    circuit, _, _ = _grid()
    outs = {w: run_drmatex(circuit, 4, EPS, T_STOP, workers=w, gamma=GAMMA).to_csv() for w in (1, 2, 8)}
    same = outs[1] == outs[2] == outs[8]
    return report(10, same, f"drmatex CSV bytes identical for workers 1, 2, 8: {same} "
                            f"({len(outs[1])} bytes)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion_{k}" for k in range(1, 11)])
def test_acceptance(check):
    assert check()


if __name__ == "__main__":
    results = [check() for check in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
