"""Transient engines: fixed-step BE/TR and the matrix-exponential marcher.

Between consecutive input breakpoints every source is affine in time, so on
a segment starting at ``a`` with length ``h`` the exact solution of
``C x' = -G x + B u`` is::

    x(a + tau) = exp(tau A) (x(a) + F) - P(tau)

with ``y_a = G^{-1} B u(a)``, ``y_e = G^{-1} B u(a + h)``,
``z = G^{-1} C (y_e - y_a) / h`` and::

    F      = -y_a + z
    P(tau) = -(y_a + tau (y_e - y_a) / h) + z

``exp(tau A) v`` comes from one Krylov basis built at ``a`` and evaluated at
every requested ``tau`` in the segment, so output points that are not
anchors cost no extra substitutions.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from .krylov import (DEFAULT_EPS, DEFAULT_M_MAX, KrylovOperator, KrylovVariant,
                     NoConvergence, mevp_eval, variant_matrices)
from .mna import MnaSystem, dc_analysis
from .sources import MERGE_TOL, BreakpointSet
from .sparsela import LuFactor, SingularMatrix, lu_decompose, solve

MAX_SPLITS = 24
ZERO_RTOL = 1e-13


class StepTooLarge(ValueError):
    def __init__(self, h, h_upper):
        self.h = h
        self.h_upper = h_upper
        super().__init__(f"step {h:.6g} s exceeds the smallest breakpoint gap {h_upper:.6g} s")


class GridMismatch(ValueError):
    pass


class SingularG(SingularMatrix):
    pass


# --- solution container ---------------------------------------------------

def format_eng(x: float, digits: int = 12) -> str:
    """Engineering notation: ``digits`` significant digits, exponent a
    multiple of three (``-12.3400000000e-3``)."""
    x = float(x)
    if x == 0.0:
        return "0"
    if not math.isfinite(x):
        return repr(x)
    mant, exp = f"{x:.{digits - 1}e}".split("e")
    exp = int(exp)
    sign = "-" if mant.startswith("-") else ""
    figs = mant.lstrip("-").replace(".", "")
    shift = exp % 3
    head, tail = figs[:shift + 1], figs[shift + 1:]
    body = f"{head}.{tail}" if tail else head
    e3 = exp - shift
    return f"{sign}{body}e{e3}" if e3 else f"{sign}{body}"


def _column_label(name: str) -> str:
    return name[2:-1] if name.startswith("v(") else name


@dataclass(eq=False)
class TransientSolution:
    """Time grid, stored state columns and run diagnostics.

    ``states[i, j]`` is state ``names[j]`` at ``times[i]``. ``steps`` holds
    one record per evaluated point; ``diagnostics`` holds run totals.
    """

    times: np.ndarray
    states: np.ndarray
    names: tuple
    steps: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float).reshape(len(self.times), len(self.names))
        if len(self.times) and self.times[0] != 0.0:
            raise ValueError("solutions start at t = 0")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("solution times must be strictly increasing")

    def column(self, name) -> np.ndarray:
        name = name.lower()
        for key in (name, f"v({name})"):
            if key in self.names:
                return self.states[:, self.names.index(key)]
        raise KeyError(name)

    def interp(self, times) -> np.ndarray:
        """States linearly interpolated onto ``times``."""
        times = np.asarray(times, dtype=float)
        lo, hi = self.times[0], self.times[-1]
        if times.min() < lo - MERGE_TOL or times.max() > hi * (1 + 1e-12) + MERGE_TOL:
            raise GridMismatch(f"requested span [{times.min():g}, {times.max():g}] "
                               f"outside solution span [{lo:g}, {hi:g}]")
        return np.column_stack([np.interp(times, self.times, self.states[:, j])
                                for j in range(len(self.names))])

    def to_csv(self, path_or_file=None, digits=12) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time"] + [_column_label(n) for n in self.names])
        for t, row in zip(self.times, self.states):
            w.writerow([format_eng(t, digits)] + [format_eng(x, digits) for x in row])
        text = buf.getvalue()
        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            with open(path_or_file, "w", newline="") as fh:
                fh.write(text)
        elif path_or_file is not None:
            path_or_file.write(text)
        return text

    @classmethod
    def read_csv(cls, path_or_text) -> "TransientSolution":
        if isinstance(path_or_text, str) and "\n" in path_or_text:
            text = path_or_text
        else:
            with open(path_or_text) as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        names = tuple(h if h.startswith("i(") else f"v({h})" for h in header[1:])
        data = np.array([[float(x) for x in r] for r in body]).reshape(len(body), len(header))
        return cls(data[:, 0], data[:, 1:], names)


def _probe_setup(sys: MnaSystem, probes):
    if probes is None:
        return None, sys.state_names
    idx = sys.probe_indices(probes)
    return np.array(idx, dtype=int), tuple(sys.state_names[i] for i in idx)


# --- fixed-step baselines -------------------------------------------------

def step_be(sys: MnaSystem, factor: LuFactor, x_t, u_th, h):
    """Backward Euler: ``(C/h + G) x_{t+h} = (C/h) x_t + B u(t+h)``."""
    rhs = sys.C @ np.asarray(x_t, dtype=float) / h + sys.B @ np.asarray(u_th, dtype=float)
    return solve(factor, rhs)


def step_tr(sys: MnaSystem, factor: LuFactor, x_t, u_t, u_th, h):
    """Trapezoidal rule:
    ``(C/h + G/2) x_{t+h} = (C/h - G/2) x_t + B (u_t + u_th) / 2``."""
    x_t = np.asarray(x_t, dtype=float)
    u_mid = 0.5 * (np.asarray(u_t, dtype=float) + np.asarray(u_th, dtype=float))
    rhs = sys.C @ x_t / h - 0.5 * (sys.G @ x_t) + sys.B @ u_mid
    return solve(factor, rhs)


def fixed_step_matrix(sys: MnaSystem, method: str, h: float):
    if method == "be":
        return (sys.C / h + sys.G).tocsc()
    if method == "tr":
        return (sys.C / h + 0.5 * sys.G).tocsc()
    raise ValueError(f"unknown fixed-step method {method!r}")


def run_fixed_step(sys: MnaSystem, method: str, h: float, t_stop: float,
                   gts: Optional[BreakpointSet] = None, probes=None,
                   x0=None) -> TransientSolution:
    """March ``ceil(t_stop / h)`` uniform steps of BE or TR from the DC point.

    One factorization of the step matrix serves every step. When ``gts`` is
    given, ``h`` may not exceed its smallest gap (a larger step would skip
    input corners).
    """
    method = method.lower()
    if not h > 0 or not t_stop > 0:
        raise ValueError("h and t_stop must be positive")
    if gts is not None:
        h_upper = gts.min_gap()
        if h > h_upper * (1 + 1e-9):
            raise StepTooLarge(h, h_upper)
    idx, names = _probe_setup(sys, probes)
    t0 = time.perf_counter()
    if x0 is None:
        x = dc_analysis(sys)
        dc_lu = 0 if not np.any(sys.b(0.0)) else 1
    else:
        x = np.asarray(x0, dtype=float)
        dc_lu = 0
    t1 = time.perf_counter()
    factor = lu_decompose(fixed_step_matrix(sys, method, h))
    n_steps = max(1, math.ceil(t_stop / h - 1e-9))
    times = h * np.arange(n_steps + 1)
    keep = (lambda v: v) if idx is None else (lambda v: v[idx])
    out = np.empty((n_steps + 1, len(names)))
    out[0] = keep(x)
    u_prev = sys.u(0.0)
    for k in range(1, n_steps + 1):
        u_next = sys.u(times[k])
        if method == "be":
            x = step_be(sys, factor, x, u_next, h)
        else:
            x = step_tr(sys, factor, x, u_prev, u_next, h)
        out[k] = keep(x)
        u_prev = u_next
    t2 = time.perf_counter()
    diag = {"method": method, "h": h, "steps": n_steps, "lu_count": 1, "dc_lu_count": dc_lu,
            "subs_pairs": n_steps, "peak_m": 0, "basis_builds": 0,
            "dc_seconds": t1 - t0, "tran_seconds": t2 - t1, "total_seconds": t2 - t0}
    return TransientSolution(times, out, names, [], diag)


# --- matrix-exponential marcher -------------------------------------------

@dataclass(frozen=True, eq=False)
class StepContext:
    """Affine-input correction terms for one segment of length ``h``."""

    F: np.ndarray
    P: np.ndarray
    b_t: np.ndarray
    b_th: np.ndarray
    y_t: np.ndarray
    y_th: np.ndarray
    z: np.ndarray
    h: float

    def P_at(self, tau):
        """``P`` evaluated at an interior offset ``tau`` of the segment."""
        if tau == self.h:
            return self.P
        return -(self.y_t + (tau / self.h) * (self.y_th - self.y_t)) + self.z


class _GSolver:
    """``G^{-1}`` applications that skip zero right-hand sides and count
    the substitutions they do perform."""

    def __init__(self, factor: LuFactor):
        self.factor = factor
        self.subs = 0

    def __call__(self, rhs):
        if not np.any(rhs):
            return np.zeros_like(rhs, dtype=float)
        self.subs += 1
        return solve(self.factor, rhs)


def _context(sys, gsolve, b_t, b_th, h, y_t=None):
    if y_t is None:
        y_t = gsolve(b_t)
    y_th = y_t if np.array_equal(b_t, b_th) else gsolve(b_th)
    z = gsolve(sys.C @ ((y_th - y_t) / h))
    return StepContext(-y_t + z, -y_th + z, b_t, b_th, y_t, y_th, z, h)


def build_step_context(sys: MnaSystem, factor_G: LuFactor, b_t, b_th, h) -> StepContext:
    """Correction terms ``F`` and ``P`` for a segment of length ``h``.

    Uses ``A^{-1} b = -G^{-1} b`` and ``A^{-2} d = G^{-1} C G^{-1} d`` so
    ``C`` is never inverted; costs at most three solves with ``G`` (two when
    ``G^{-1} b_t`` is carried over from the previous segment).
    """
    b_t = np.asarray(b_t, dtype=float)
    b_th = np.asarray(b_th, dtype=float)
    return _context(sys, _GSolver(factor_G), b_t, b_th, h)


def _is_zero(v, scale):
    return float(np.linalg.norm(v)) <= ZERO_RTOL * scale


def exp_march(sys: MnaSystem, op: KrylovOperator, factor_G: LuFactor,
              u_fn: Callable[[float], np.ndarray], x0, anchors: Sequence[float],
              grid: Sequence[float], eps=DEFAULT_EPS, m_max=DEFAULT_M_MAX,
              probes=None, label="matex"):
    """Exponential marching with one Krylov basis per anchor segment.

    ``anchors`` and ``grid`` are sorted and both start at 0 and end at the
    final time; every anchor must be a grid point. Grid points between two
    anchors are evaluated from the basis built at the earlier anchor.
    Returns ``(times, states, steps, stats)``.
    """
    idx = probes
    keep = (lambda v: v.copy()) if idx is None else (lambda v: v[idx])
    gsolve = _GSolver(factor_G)
    grid = np.asarray(grid, dtype=float)
    anchors = list(anchors)
    stats = {"krylov_subs": 0, "basis_builds": 0, "peak_m": 0, "splits": 0, "max_est_error": 0.0}
    steps = []
    states = [keep(np.asarray(x0, dtype=float))]
    times = [0.0]

    def segment(a, e, x_a, y_a, outs, depth):
        """March ``x_a`` from ``a`` to ``e``; record ``outs``; return ``(x_e, y_e)``."""
        h = e - a
        ctx = _context(sys, gsolve, sys.B @ u_fn(a), sys.B @ u_fn(e), h, y_a)
        v = x_a + ctx.F
        scale = float(np.linalg.norm(x_a)) + float(np.linalg.norm(ctx.y_t)) + float(np.linalg.norm(ctx.z))
        if _is_zero(v, scale):
            v = np.zeros_like(v)
        offsets = [t - a for t in outs] + [h]
        try:
            basis = op.arnoldi(v, offsets, eps=eps, m_max=m_max, anchor_t=a)
        except NoConvergence as exc:
            if depth >= MAX_SPLITS:
                raise NoConvergence(exc.m_max, exc.last_r, a) from None
            mid = a + 0.5 * h
            stats["splits"] += 1
            steps.append({"method": label, "kind": "StepSplit", "t": a, "h": h,
                          "m_used": exc.m_max, "subs_pairs": exc.m_max, "est_error": exc.last_r})
            stats["krylov_subs"] += min(exc.m_max, len(v))
            x_m, y_m = segment(a, mid, x_a, ctx.y_t, [t for t in outs if t <= mid + MERGE_TOL], depth + 1)
            return segment(mid, e, x_m, y_m, [t for t in outs if t > mid + MERGE_TOL], depth + 1)
        stats["krylov_subs"] += basis.solves
        stats["basis_builds"] += 1
        stats["peak_m"] = max(stats["peak_m"], basis.m)
        est = basis.residual / basis.beta if basis.beta else 0.0
        stats["max_est_error"] = max(stats["max_est_error"], est)
        x_e = None
        for k, t in enumerate(outs):
            tau = t - a
            x_t = mevp_eval(basis, tau) - ctx.P_at(tau)
            times.append(float(t))
            states.append(keep(x_t))
            steps.append({"method": label, "kind": "basis" if k == 0 else "snapshot", "t": float(t),
                          "h": tau, "m_used": basis.m,
                          "subs_pairs": basis.solves if k == 0 else 0, "est_error": est})
            if abs(t - e) <= MERGE_TOL:
                x_e = x_t
        if x_e is None:
            x_e = mevp_eval(basis, h) - ctx.P
        return x_e, ctx.y_th

    x = np.asarray(x0, dtype=float)
    y = None
    for a, e in zip(anchors, anchors[1:]):
        lo = np.searchsorted(grid, a + MERGE_TOL, side="right")
        hi = np.searchsorted(grid, e + MERGE_TOL, side="right")
        x, y = segment(a, e, x, y, list(grid[lo:hi]), 0)
    stats["context_subs"] = gsolve.subs
    stats["subs_pairs"] = stats["krylov_subs"] + gsolve.subs
    return np.array(times), np.array(states), steps, stats


def _factor_plan(sys: MnaSystem, variant: KrylovVariant, factor_G=None, factor_X1=None):
    """Factor ``G`` and the variant's ``X1``; the invert variant shares one."""
    lu = 0
    if factor_G is None:
        try:
            factor_G = lu_decompose(sys.G)
        except SingularMatrix as exc:
            raise SingularG(exc.pivot, "G is singular; step corrections need G^{-1}") from None
        lu += 1
    if variant.kind == "invert":
        factor_X1 = factor_G
    elif factor_X1 is None:
        factor_X1 = lu_decompose(variant_matrices(sys.C, sys.G, variant)[0])
        lu += 1
    return factor_G, KrylovOperator.build(sys.C, sys.G, variant, factor=factor_X1), lu


def run_matex(sys: MnaSystem, variant: KrylovVariant, eps=DEFAULT_EPS, t_stop=None,
              gts: Optional[BreakpointSet] = None, probes=None, m_max=DEFAULT_M_MAX,
              dense_output: Optional[float] = None, force=False,
              factor_G=None, factor_X1=None) -> TransientSolution:
    """Adaptive exponential integration stepping from breakpoint to breakpoint.

    Each step runs to the next point of ``gts``; the input is affine in
    between, so the step is exact up to the Krylov residual budget ``eps``.
    ``dense_output`` adds evenly spaced output points evaluated from the
    current basis at no extra substitution cost. The standard variant
    needs an invertible ``C`` and is refused unless ``force`` is set.
    """
    if variant.kind == "standard" and not force:
        raise ValueError("standard Krylov transient needs force=True (C must be nonsingular)")
    if gts is None:
        raise ValueError("run_matex needs the breakpoint set")
    if t_stop is None:
        t_stop = gts[-1]
    gts = gts.union([0.0, t_stop]).clip(t_stop)
    idx, names = _probe_setup(sys, probes)
    t0 = time.perf_counter()
    factor_G, op, lu = _factor_plan(sys, variant, factor_G, factor_X1)
    x0 = dc_analysis(sys, factor=factor_G)
    t1 = time.perf_counter()
    grid = gts
    if dense_output:
        n = int(math.floor(t_stop / dense_output + 1e-9))
        grid = gts.union(dense_output * np.arange(n + 1)).clip(t_stop)
    times, states, steps, stats = exp_march(sys, op, factor_G, sys.u, x0, list(gts), list(grid),
                                            eps, m_max, idx, label=str(variant))
    t2 = time.perf_counter()
    diag = {"method": str(variant), "lu_count": lu, "dc_lu_count": 0, "steps": len(gts) - 1,
            "dc_seconds": t1 - t0, "tran_seconds": t2 - t1, "total_seconds": t2 - t0, **stats}
    return TransientSolution(times, states, names, steps, diag)
