"""Batch front end: ``simulate``, ``compare``, ``error-sweep``, ``decompose``.

Exit codes: 0 success, 1 netlist parse error, 2 numeric failure,
3 configuration error or unreadable file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import benches
from .drmatex import run_drmatex
from .integrate import GridMismatch, StepTooLarge, TransientSolution, run_fixed_step, run_matex
from .krylov import (DEFAULT_EPS, DEFAULT_GAMMA, DEFAULT_M_MAX, INVERT, STANDARD, error_surface,
                     rational)
from .mna import SingularTopology, stamp
from .netlist import NetlistError, UnknownSuffix, parse_value, read_netlist
from .sources import global_transition_spots, group_by_bump

METHODS = ("be", "tr", "imatex", "rmatex", "drmatex")
EXIT_PARSE, EXIT_NUMERIC, EXIT_CONFIG = 1, 2, 3


class ConfigError(ValueError):
    pass


def parse_time(token) -> float:
    """Seconds from ``"10ps"``, ``"10p"`` or ``"1e-11"``."""
    tok = str(token).strip()
    try:
        return parse_value(tok)
    except (UnknownSuffix, ValueError):
        if tok.lower().endswith("s"):
            return parse_value(tok[:-1])
        raise


def _time_arg(token):
    try:
        return parse_time(token)
    except (UnknownSuffix, ValueError) as exc:
        raise argparse.ArgumentTypeError(f"bad time value {token!r}: {exc}") from None


@dataclass
class RunConfig:
    netlist_path: str
    method: str
    h: Optional[float] = None
    gamma: Optional[float] = None
    eps: float = DEFAULT_EPS
    m_max: int = DEFAULT_M_MAX
    groups: int = 4
    workers: int = 1
    probes: Optional[list] = None
    out_path: Optional[str] = None
    dense_output_dt: Optional[float] = None
    seed: int = 0

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.method in ("be", "tr"):
            if self.h is None:
                raise ConfigError(f"--h is required for {self.method}")
            if not self.h > 0:
                raise ConfigError("--h must be positive")
        if self.gamma is not None and self.method not in ("rmatex", "drmatex"):
            raise ConfigError("--gamma applies only to rmatex and drmatex")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("--gamma must be positive")
        if self.dense_output_dt is not None and self.method not in ("imatex", "rmatex"):
            raise ConfigError("--dense-output applies only to imatex and rmatex")
        if not self.eps > 0 or self.m_max < 1 or self.groups < 1 or self.workers < 1:
            raise ConfigError("--eps, --m-max, --groups and --workers must be positive")
        return self

    @property
    def effective_workers(self):
        cap = os.environ.get("MATEX_THREADS")
        if cap:
            try:
                return max(1, min(self.workers, int(cap)))
            except ValueError:
                raise ConfigError(f"MATEX_THREADS must be an integer, got {cap!r}") from None
        return self.workers


def simulate(cfg: RunConfig) -> TransientSolution:
    """Run one configured transient and return the solution."""
    cfg.validate()
    circuit = read_netlist(cfg.netlist_path)
    if circuit.tran is None:
        raise ConfigError("netlist has no .tran directive")
    t_stop = circuit.tran.t_stop
    gamma = cfg.gamma if cfg.gamma is not None else DEFAULT_GAMMA
    if cfg.method == "drmatex":
        return run_drmatex(circuit, cfg.groups, cfg.eps, t_stop, cfg.effective_workers,
                           gamma, cfg.probes, cfg.m_max)
    system = stamp(circuit)
    gts = global_transition_spots(circuit, t_stop)
    if cfg.method in ("be", "tr"):
        return run_fixed_step(system, cfg.method, cfg.h, t_stop, gts, cfg.probes)
    variant = INVERT if cfg.method == "imatex" else rational(gamma)
    return run_matex(system, variant, cfg.eps, t_stop, gts, cfg.probes, cfg.m_max,
                     dense_output=cfg.dense_output_dt)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def diagnostics_summary(sol: TransientSolution) -> dict:
    d = sol.diagnostics
    keys = ("method", "dc_seconds", "tran_seconds", "total_seconds", "subs_pairs", "krylov_subs",
            "context_subs", "peak_m", "lu_count", "basis_builds", "splits", "max_est_error",
            "groups", "workers", "per_group")
    out = {k: d[k] for k in keys if k in d}
    out["points"] = len(sol.times)
    return _jsonable(out)


def _json_path(out_path):
    stem, ext = os.path.splitext(out_path)
    return stem + ".json" if ext.lower() == ".csv" else out_path + ".json"


def cmd_simulate(cfg: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    sol = simulate(cfg)
    if cfg.out_path:
        sol.to_csv(cfg.out_path)
        with open(_json_path(cfg.out_path), "w") as fh:
            json.dump(diagnostics_summary(sol), fh, indent=2)
    else:
        sol.to_csv(stdout)
    return 0


@dataclass
class CompareReport:
    max_diff: float
    avg_diff: float
    runs: dict = field(default_factory=dict)
    speedup: Optional[float] = None

    def to_json(self, **kw):
        return json.dumps(_jsonable(asdict(self)), **kw)


def compare_solutions(test: TransientSolution, ref: TransientSolution) -> tuple:
    """Max and mean absolute node-voltage difference, reference
    interpolated onto the test grid."""
    if test.names != ref.names:
        raise GridMismatch("solutions store different states")
    end_t, end_r = test.times[-1], ref.times[-1]
    if abs(end_t - end_r) > 1e-6 * max(end_t, end_r):
        raise GridMismatch(f"simulated spans differ: {end_t:g} s vs {end_r:g} s")
    times = test.times[test.times <= end_r]
    cols = [j for j, n in enumerate(test.names) if n.startswith("v(")]
    a = test.states[:len(times)][:, cols]
    b = ref.interp(times)[:, cols]
    d = np.abs(a - b)
    return float(d.max()), float(d.mean())


def cmd_compare(test_cfg: RunConfig, ref_cfg: RunConfig) -> CompareReport:
    runs = {}
    sols = []
    for label, cfg in (("test", test_cfg), ("reference", ref_cfg)):
        t0 = time.perf_counter()
        sol = simulate(cfg)
        wall = time.perf_counter() - t0
        d = sol.diagnostics
        runs[label] = {"method": cfg.method, "runtime": wall, "subs_pairs": d.get("subs_pairs"),
                       "basis_builds": d.get("basis_builds", 0), "peak_m": d.get("peak_m", 0)}
        sols.append(sol)
    mx, avg = compare_solutions(*sols)
    t_run, r_run = runs["test"]["runtime"], runs["reference"]["runtime"]
    return CompareReport(mx, avg, runs, r_run / t_run if t_run > 0 else None)


def error_sweep_rows(n=100, stiffness=4.7e6, variants=("standard", "invert", "rational"),
                     h_grid=(4e-13,), m_grid=range(1, 31), gammas=(None,), seed=0):
    """Rows ``(variant, h, m, gamma, rel_err)`` on the stiff two-rail bench.

    A ``None`` gamma means "same as h" for the rational variant.
    """
    C, G = benches.stiff_rc(n=n, stiffness=stiffness, seed=seed)
    v = 1.0 - np.random.default_rng(seed).random(n)
    rows = []
    m_grid = list(m_grid)
    for kind in variants:
        for h in h_grid:
            for g in (gammas if kind == "rational" else (None,)):
                if kind == "standard":
                    var = STANDARD
                elif kind == "invert":
                    var = INVERT
                else:
                    var = rational(h if g is None else g)
                errs = error_surface(C, G, v, var, [h], m_grid)[0]
                for m, e in zip(m_grid, errs):
                    rows.append((kind, h, m, var.gamma if var.gamma else "", float(e)))
    return rows


def _csv_list(text, conv=str):
    return [conv(t) for t in str(text).split(",") if t.strip()]


def _add_run_flags(p, prefix=""):
    p.add_argument(f"--{prefix}method", required=True, choices=METHODS)
    p.add_argument(f"--{prefix}h", type=_time_arg, default=None)
    p.add_argument(f"--{prefix}gamma", type=_time_arg, default=None)
    p.add_argument(f"--{prefix}eps", type=float, default=DEFAULT_EPS)
    p.add_argument(f"--{prefix}m-max", type=int, default=DEFAULT_M_MAX)
    p.add_argument(f"--{prefix}groups", type=int, default=4)
    p.add_argument(f"--{prefix}workers", type=int, default=1)
    p.add_argument(f"--{prefix}dense-output", type=_time_arg, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matex", description="Matrix-exponential transient "
                                     "simulation of linear RC/RLC power networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one transient and write CSV + JSON diagnostics")
    p.add_argument("netlist")
    _add_run_flags(p)
    p.add_argument("--probes", type=_csv_list, default=None, help="comma-separated node names")
    p.add_argument("--out", default=None, help="CSV path; diagnostics go next to it as .json")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("compare", help="voltage differences between two methods")
    p.add_argument("netlist")
    _add_run_flags(p)
    _add_run_flags(p, prefix="ref-")
    p.add_argument("--probes", type=_csv_list, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("error-sweep", help="MEVP relative error vs (h, m, gamma) on a stiff RC bench")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--stiffness", type=float, default=4.7e6)
    p.add_argument("--variants", type=_csv_list, default=["standard", "invert", "rational"])
    p.add_argument("--h", type=lambda s: _csv_list(s, parse_time), default=[4e-13])
    p.add_argument("--m-max", type=int, default=DEFAULT_M_MAX)
    p.add_argument("--gamma", type=lambda s: _csv_list(s, parse_time), default=[None])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("decompose", help="print the source grouping plan as JSON")
    p.add_argument("netlist")
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--out", default=None)
    return parser


def _config(args, prefix=""):
    g = lambda k: getattr(args, prefix + k)
    return RunConfig(args.netlist, g("method"), g("h"), g("gamma"), g("eps"), g("m_max"),
                     g("groups"), g("workers"), args.probes, getattr(args, "out", None),
                     g("dense_output"), getattr(args, "seed", 0))


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run(args) -> int:
    if args.command == "simulate":
        return cmd_simulate(_config(args))
    if args.command == "compare":
        test = replace(_config(args), out_path=None)
        ref = replace(_config(args, "ref_"), out_path=None)
        _emit(cmd_compare(test, ref).to_json(indent=2) + "\n", args.out)
        return 0
    if args.command == "error-sweep":
        if not 1 <= args.n <= 500:
            raise ConfigError("--n must be between 1 and 500")
        rows = error_sweep_rows(args.n, args.stiffness, args.variants, args.h,
                                range(1, min(args.m_max, args.n) + 1), args.gamma, args.seed)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("variant", "h", "m", "gamma", "rel_err"))
        w.writerows(rows)
        _emit(buf.getvalue(), args.out)
        return 0
    if args.command == "decompose":
        circuit = read_netlist(args.netlist)
        if circuit.tran is None:
            raise ConfigError("netlist has no .tran directive")
        plan = group_by_bump(circuit, circuit.tran.t_stop, args.groups)
        _emit(plan.to_json(indent=2) + "\n", args.out)
        return 0
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        return _run(args)
    except NetlistError as exc:
        print(f"matex: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ArithmeticError, SingularTopology) as exc:
        print(f"matex: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, StepTooLarge, GridMismatch, OSError, ValueError) as exc:
        print(f"matex: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
