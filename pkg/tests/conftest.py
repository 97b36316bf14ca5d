import numpy as np
import pytest

from matex.benches import rc_grid_netlist
from matex.integrate import run_matex
from matex.krylov import rational
from matex.mna import stamp
from matex.netlist import parse_netlist
from matex.sources import global_transition_spots

T_STOP = 10e-9


def rc_ladder_netlist(n=30, seed=0, n_sources=3, t_stop=2e-9):
    """RC ladder with a grounded capacitor on every node, driven only by
    current sources, so ``C`` is diagonal and invertible."""
    rng = np.random.default_rng(seed)
    lines = ["* rc ladder"]
    for k in range(1, n):
        lines.append(f"R{k} n{k} n{k + 1} {1.0 + rng.random():.6g}")
    lines.append("Rg n1 0 0.5")
    lines.append(f"Rt n{n} 0 2.0")
    for k in range(1, n + 1):
        lines.append(f"C{k} n{k} 0 {1e-12 * (1 + rng.random()):.6g}")
    for s in range(n_sources):
        node = int(rng.integers(1, n + 1))
        td = 0.1e-9 * (s + 1)
        lines.append(f"I{s} n{node} 0 PULSE(0 {1e-3 * (s + 1)} {td:.6g} 50p 80p 200p 700p)")
    lines.append(f".tran 10p {t_stop:.6g}")
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def grid_circuit():
    return parse_netlist(rc_grid_netlist())


@pytest.fixture(scope="session")
def grid_sys(grid_circuit):
    return stamp(grid_circuit)


@pytest.fixture(scope="session")
def grid_gts(grid_circuit):
    return global_transition_spots(grid_circuit, T_STOP)


@pytest.fixture(scope="session")
def grid_rmatex(grid_sys, grid_gts):
    return run_matex(grid_sys, rational(1e-10), 1e-6, T_STOP, grid_gts)


@pytest.fixture(scope="session")
def ladder_circuit():
    return parse_netlist(rc_ladder_netlist())
