"""Modified nodal analysis: ``C x' = -G x + B u(t)``.

Unknowns are the non-ground node voltages (in circuit node order) followed
by one branch current per voltage source and inductor (in element order).

Sign conventions, following SPICE:

* ``I n+ n- val`` drives ``val`` amperes from ``n+`` through the source into
  ``n-``: ``B[n+] = -1``, ``B[n-] = +1``.
* ``V n+ n- val`` enforces ``v(n+) - v(n-) = val``; its branch current flows
  from ``n+`` through the source to ``n-``.
* ``L n+ n- val`` has branch current from ``n+`` to ``n-`` with
  ``-L di/dt = -(v(n+) - v(n-))``, so the inductor puts ``-L`` on the
  diagonal of ``C`` and keeps ``G`` incidence-symmetric like a voltage source.

Worked 2x2 example: ``I1 0 a 1`` feeding ``L1 a 0 1n`` gives unknowns
``(v_a, i_L1)`` and::

    C = [[0,   0 ],     G = [[0, 1],     B = [[1],
         [0, -1n ]]          [1, 0]]          [0]]

Row 1 is KCL at ``a`` (``i_L1 = 1``), row 2 is ``-1n di/dt = -v_a``. The DC
solution is ``v_a = 0``, ``i_L1 = 1``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

from .netlist import Circuit, topology_diagnostics
from .sparsela import LuFactor, SingularMatrix, lu_decompose, solve


class SingularTopology(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        detail = ", ".join(f"{d.kind}({d.subject})" for d in diagnostics[:5])
        super().__init__(f"circuit cannot be stamped: {detail}")


@dataclass(frozen=True, eq=False)
class MnaSystem:
    C: sp.csc_matrix
    G: sp.csc_matrix
    B: sp.csc_matrix
    state_names: tuple  # "v(node)" or "i(element)"
    input_names: tuple  # source element names, one per column of B
    sources: tuple      # the source elements, aligned with input_names
    node_count: int

    @property
    def n(self):
        return self.C.shape[0]

    @property
    def s(self):
        return self.B.shape[1]

    def u(self, t) -> np.ndarray:
        """Source values at time ``t``, one entry per column of ``B``."""
        return np.array([el.waveform.value(t) if el.waveform is not None else el.value
                         for el in self.sources], dtype=float)

    def b(self, t) -> np.ndarray:
        return self.B @ self.u(t)

    def state_index(self, name) -> int:
        name = name.lower()
        key = name if name.startswith(("v(", "i(")) else f"v({name})"
        try:
            return self.state_names.index(key)
        except ValueError:
            raise KeyError(name) from None

    def probe_indices(self, names):
        return [self.state_index(n) for n in names]


def stamp(circuit: Circuit) -> MnaSystem:
    fatal = [d for d in topology_diagnostics(circuit)
             if d.kind in ("FloatingNode", "VSourceLoop", "VSourceConflict", "InductorLoop")]
    if fatal:
        raise SingularTopology(fatal)

    nidx = circuit.node_index
    nn = len(circuit.nodes)
    branches = [el for el in circuit.elements if el.kind in ("V", "L")]
    sources = [el for el in circuit.elements if el.kind in ("I", "V")]
    bidx = {el.name: nn + k for k, el in enumerate(branches)}
    sidx = {el.name: k for k, el in enumerate(sources)}
    n = nn + len(branches)

    crow, ccol, cval = [], [], []
    grow, gcol, gval = [], [], []
    brow, bcol, bval = [], [], []

    def quad(rows, cols, vals, a, b, g):
        for r, c, v in ((a, a, g), (b, b, g), (a, b, -g), (b, a, -g)):
            if r is not None and c is not None:
                rows.append(r)
                cols.append(c)
                vals.append(v)

    def incidence(a, b, k):
        # branch current k leaves a, enters b; symmetric rows/cols in G
        for node, sgn in ((a, 1.0), (b, -1.0)):
            if node is not None:
                grow.extend((node, k))
                gcol.extend((k, node))
                gval.extend((sgn, sgn))

    for el in circuit.elements:
        a = nidx.get(el.node_pos)
        b = nidx.get(el.node_neg)
        if el.kind == "R":
            quad(grow, gcol, gval, a, b, 1.0 / el.value)
        elif el.kind == "C":
            quad(crow, ccol, cval, a, b, el.value)
        elif el.kind == "L":
            k = bidx[el.name]
            incidence(a, b, k)
            crow.append(k)
            ccol.append(k)
            cval.append(-el.value)
        elif el.kind == "V":
            k = bidx[el.name]
            incidence(a, b, k)
            brow.append(k)
            bcol.append(sidx[el.name])
            bval.append(1.0)
        elif el.kind == "I":
            col = sidx[el.name]
            for node, sgn in ((a, -1.0), (b, 1.0)):
                if node is not None:
                    brow.append(node)
                    bcol.append(col)
                    bval.append(sgn)

    C = sp.csc_matrix((cval, (crow, ccol)), shape=(n, n))
    G = sp.csc_matrix((gval, (grow, gcol)), shape=(n, n))
    B = sp.csc_matrix((bval, (brow, bcol)), shape=(n, len(sources)))
    for M in (C, G, B):
        M.sum_duplicates()
        M.eliminate_zeros()
        M.sort_indices()
    names = tuple(f"v({nd})" for nd in circuit.nodes) + tuple(f"i({el.name})" for el in branches)
    return MnaSystem(C, G, B, names, tuple(el.name for el in sources), tuple(sources), nn)


def dc_analysis(sys: MnaSystem, u0=None, factor: Optional[LuFactor] = None) -> np.ndarray:
    """Solve ``G x = B u0`` (``u0`` defaults to the sources at t = 0)."""
    if u0 is None:
        u0 = sys.u(0.0)
    rhs = sys.B @ np.asarray(u0, dtype=float)
    if not np.any(rhs):
        return np.zeros(sys.n)
    if factor is None:
        factor = lu_decompose(sys.G)
    x = solve(factor, rhs)
    resid = np.max(np.abs(sys.G @ x - rhs))
    if not resid <= 1e-9 * np.max(np.abs(rhs)):
        raise SingularMatrix(int(np.argmax(np.abs(sys.G @ x - rhs))),
                             f"DC residual {resid:.3e} exceeds tolerance")
    return x


def export_matrix_market(sys: MnaSystem, directory, stem="mna"):
    """Write ``C``, ``G`` and ``B`` as Matrix Market coordinate files."""
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for label, M in (("C", sys.C), ("G", sys.G), ("B", sys.B)):
        path = os.path.join(directory, f"{stem}_{label}.mtx")
        scipy.io.mmwrite(path, sp.coo_matrix(M), field="real", precision=17)
        paths[label] = path
    return paths
