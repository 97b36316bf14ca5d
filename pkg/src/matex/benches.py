"""Synthetic test circuits.

``stiff_rc`` builds the two-rail RC system used for MEVP error studies;
``rc_grid_netlist`` writes a small power-grid style netlist with supply pads
and pulse loads on a regular transition grid.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def stiffness_ratio(C, G):
    """``Re(lambda_min) / Re(lambda_max)`` of ``A = -C^{-1} G``."""
    Cd = sp.csc_matrix(C).toarray()
    Gd = sp.csc_matrix(G).toarray()
    lam = np.linalg.eigvals(-np.linalg.solve(Cd, Gd)).real
    return lam.min() / lam.max(), lam.min(), lam.max()


def _rail(n, r, c, rng, jitter):
    rs = r * (1 + jitter * (rng.random(n) - 0.5))
    cs = c * (1 + jitter * (rng.random(n) - 0.5))
    G = np.zeros((n, n))
    for i in range(n - 1):
        g = 1.0 / rs[i]
        G[i, i] += g
        G[i + 1, i + 1] += g
        G[i, i + 1] -= g
        G[i + 1, i] -= g
    G[0, 0] += 1.0 / rs[-1]  # rail head tied to ground
    return G, cs


def stiff_rc(n=100, stiffness=4.7e6, slowest=8.49e10, seed=0, jitter=0.2, iterations=8):
    """Two RC rails, one fast and one slow, coupled by a single resistor.

    Node capacitances are near-uniform; the fast rail's conductances are
    scaled up until the eigenvalue spread of ``-C^{-1} G`` matches
    ``stiffness``, then ``C`` is rescaled so the least negative eigenvalue
    sits at ``-slowest``. Returns sparse ``(C, G)`` with diagonal ``C``.
    """
    rng = np.random.default_rng(seed)
    nf = n // 2
    ns = n - nf
    Gf, cf = _rail(nf, 1.0, 1.0, rng, jitter)
    Gs, cs = _rail(ns, 1.0, 1.0, rng, jitter)
    cdiag = np.concatenate([cf, cs])
    a, b = nf - 1, n - 1

    def assemble(scale):
        G = np.zeros((n, n))
        G[:nf, :nf] = scale * Gf
        G[nf:, nf:] = Gs
        G[a, a] += 1.0
        G[b, b] += 1.0
        G[a, b] -= 1.0
        G[b, a] -= 1.0
        return G

    scale = 1.0
    for _ in range(iterations):
        ratio, _, _ = stiffness_ratio(sp.diags(cdiag), assemble(scale))
        if abs(np.log(ratio / stiffness)) < 1e-3:
            break
        scale *= stiffness / ratio
    G = assemble(scale)
    _, _, lmax = stiffness_ratio(sp.diags(cdiag), G)
    cdiag = cdiag * abs(lmax) / slowest
    return sp.diags(cdiag).tocsc(), sp.csc_matrix(G)


def rc_grid_netlist(rows=10, cols=10, n_sources=8, seed=0, r_seg=0.1, c_node=3e-13,
                    r_pad=0.2, l_pad=None, vdd=1.0, n_pads=4, i_peak=5e-3,
                    grid=10e-12, t_stop=10e-9, skip_caps=(), offset=0.0):
    """Power-grid style RC mesh as netlist text.

    Supply pads sit at evenly spread mesh nodes, each fed by ``vdd`` through
    ``r_pad`` (and ``l_pad`` in series when given). ``n_sources`` pulse loads
    draw up to ``i_peak`` with every corner on a ``grid`` lattice, using
    three distinct bump shapes so the loads fall into several groups.
    Nodes listed in ``skip_caps`` get no grounded capacitor.
    """
    rng = np.random.default_rng(seed)
    lines = [f"* rc grid {rows}x{cols}, {n_sources} pulse loads"]
    node = lambda i, j: f"n{i}_{j}"
    k = 0
    for i in range(rows):
        for j in range(cols):
            if j + 1 < cols:
                k += 1
                lines.append(f"R{k} {node(i, j)} {node(i, j + 1)} {r_seg * (1 + 0.2 * rng.random()):.6g}")
            if i + 1 < rows:
                k += 1
                lines.append(f"R{k} {node(i, j)} {node(i + 1, j)} {r_seg * (1 + 0.2 * rng.random()):.6g}")
    for i in range(rows):
        for j in range(cols):
            if node(i, j) in skip_caps:
                continue
            lines.append(f"C{i}_{j} {node(i, j)} 0 {c_node * (1 + 0.5 * rng.random()):.6g}")
    flat = np.linspace(0, rows * cols - 1, n_pads).round().astype(int)
    for p, idx in enumerate(flat):
        i, j = divmod(int(idx), cols)
        if l_pad:
            lines.append(f"Vdd{p} vdd{p} 0 {vdd}")
            lines.append(f"Lpad{p} vdd{p} pad{p} {l_pad:.6g}")
            lines.append(f"Rpad{p} pad{p} {node(i, j)} {r_pad}")
        else:
            lines.append(f"Vdd{p} vdd{p} 0 {vdd}")
            lines.append(f"Rpad{p} vdd{p} {node(i, j)} {r_pad}")
    # three bump shapes (in grid units: rise, width, fall, period)
    shapes = [(5, 10, 5, 100), (10, 20, 10, 250), (2, 6, 2, 0)]
    for s in range(n_sources):
        i, j = int(rng.integers(rows)), int(rng.integers(cols))
        tr, pw, tf, per = shapes[s % len(shapes)]
        td = int(rng.integers(0, 60)) * grid + (offset if s % 2 else 0.0)
        amp = i_peak * (0.5 + 0.5 * rng.random())
        lines.append(f"I{s} {node(i, j)} 0 PULSE(0 {amp:.6g} {td:.6g} {tr * grid:.6g} "
                     f"{tf * grid:.6g} {pw * grid:.6g} {per * grid:.6g})")
    lines.append(f".tran {grid:.6g} {t_stop:.6g}")
    lines.append(".end")
    return "\n".join(lines) + "\n"


def rc_ladder(n=30, r=1.0, c=1e-12, seed=0):
    """Grounded RC ladder as sparse ``(C, G)`` with a nonsingular ``C``."""
    rng = np.random.default_rng(seed)
    G, _ = _rail(n, r, c, rng, 0.3)
    cs = c * (1 + 0.3 * (rng.random(n) - 0.5))
    return sp.diags(cs).tocsc(), sp.csc_matrix(G)
