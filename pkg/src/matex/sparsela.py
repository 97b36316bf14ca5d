"""Sparse direct factorization and small dense matrix exponentials.

The factorization is a thin contract over SuperLU (``scipy.sparse.linalg.splu``)
with COLAMD column ordering and partial pivoting. Every factorization and
every forward/backward substitution pair is tallied in :data:`counters`, which
the transient engines and the cost model read back.
"""
from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

PIVOT_RTOL = 1e-14


class SingularMatrix(ArithmeticError):
    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"zero pivot at index {pivot}")


class DimensionMismatch(ValueError):
    pass


class ExpmOverflow(ArithmeticError):
    pass


class OpCounters:
    """Process-wide tallies of LU factorizations and substitution pairs."""

    def __init__(self):
        self._lock = threading.Lock()
        self.lu = 0
        self.solves = 0

    def add_lu(self):
        with self._lock:
            self.lu += 1

    def add_solve(self):
        with self._lock:
            self.solves += 1

    def snapshot(self):
        with self._lock:
            return self.lu, self.solves

    def reset(self):
        with self._lock:
            self.lu = 0
            self.solves = 0


counters = OpCounters()


@dataclass(frozen=True, eq=False)
class LuFactor:
    """``A[perm_r][:, perm_c] = L @ U`` for a square sparse matrix ``A``."""

    L: sp.csc_matrix
    U: sp.csc_matrix
    row_perm: np.ndarray
    col_perm: np.ndarray
    n: int
    fill_stats: dict
    _lu: spla.SuperLU = field(repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def solve(self, b):
        return solve(self, b)


def lu_decompose(A) -> LuFactor:
    A = sp.csc_matrix(A, dtype=float)
    n, ncol = A.shape
    if n != ncol:
        raise DimensionMismatch(f"matrix is {n}x{ncol}, expected square")
    amax = abs(A).max() if A.nnz else 0.0
    if amax == 0.0:
        raise SingularMatrix(0, "matrix is identically zero")
    A.sort_indices()
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        # SuperLU reports "Factor is exactly singular" without a location
        raise SingularMatrix(_first_zero_pivot(A), str(exc)) from exc
    counters.add_lu()

    udiag = np.abs(lu.U.diagonal())
    small = np.flatnonzero(udiag < PIVOT_RTOL * amax)
    # SuperLU's perm_r / perm_c scatter original indices into factor
    # positions; expose the gather form instead
    row_perm = np.argsort(lu.perm_r)
    col_perm = np.argsort(lu.perm_c)
    if small.size:
        raise SingularMatrix(int(col_perm[small[0]]))
    stats = {"nnz_A": int(A.nnz), "nnz_L": int(lu.L.nnz), "nnz_U": int(lu.U.nnz)}
    return LuFactor(L=lu.L, U=lu.U, row_perm=row_perm, col_perm=col_perm,
                    n=n, fill_stats=stats, _lu=lu)


def _first_zero_pivot(A):
    # locating the pivot needs a dense pass; skip it for big systems
    if A.shape[0] > 2000:
        return -1
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, _ = scipy.linalg.lu_factor(A.toarray(), check_finite=False)
    d = np.abs(np.diag(lu))
    idx = np.flatnonzero(~(d > PIVOT_RTOL * abs(A).max()))
    return int(idx[0]) if idx.size else -1


def solve(factor: LuFactor, b) -> np.ndarray:
    """One forward and one backward substitution against ``factor``."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != factor.n:
        raise DimensionMismatch(f"rhs has length {b.shape[0]}, factor is {factor.n}")
    # SuperLU objects are not safe for concurrent solves
    with factor._lock:
        x = factor._lu.solve(b)
    counters.add_solve()
    return x


def expm_dense(H, scale=1.0) -> np.ndarray:
    """``exp(scale * H)`` for a small dense matrix.

    Scaling and squaring with a degree-13 diagonal Pade approximant
    (``scipy.linalg.expm``).
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {H.shape}")
    if H.shape[0] == 0:
        return np.zeros((0, 0))
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(scale * H)
    if not np.all(np.isfinite(E)):
        raise ExpmOverflow(f"exp(h*H) is not finite for h={scale!r}")
    return E
