"""Matrix-exponential transient simulation of linear power-delivery networks."""
from .drmatex import CostModelParams, estimate_speedup, run_drmatex
from .integrate import TransientSolution, run_fixed_step, run_matex
from .krylov import INVERT, STANDARD, KrylovVariant, arnoldi, mevp_eval, rational
from .mna import MnaSystem, dc_analysis, stamp
from .netlist import Circuit, parse_netlist, read_netlist
from .sources import BreakpointSet, global_transition_spots, group_by_bump

__all__ = [
    "BreakpointSet", "Circuit", "CostModelParams", "INVERT", "KrylovVariant", "MnaSystem",
    "STANDARD", "TransientSolution", "arnoldi", "dc_analysis", "estimate_speedup",
    "global_transition_spots", "group_by_bump", "mevp_eval", "parse_netlist", "rational",
    "read_netlist", "run_drmatex", "run_fixed_step", "run_matex", "stamp",
]
