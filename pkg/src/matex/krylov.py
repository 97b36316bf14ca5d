"""Arnoldi bases for ``exp(h A) v`` with ``A = -C^{-1} G`` never formed.

Three subspaces are supported:

* standard  ``K_m(A, v)``,             operator applied as ``-C^{-1} G v``
* invert    ``K_m(A^{-1}, v)``,        operator applied as ``-G^{-1} C v``
* rational  ``K_m((I - gA)^{-1}, v)``, operator applied as ``(C + gG)^{-1} C v``

Each needs one LU factorization (of ``C``, ``G`` or ``C + gG``) and one
substitution pair per basis vector. The projected generator ``Hp`` turns
the Hessenberg matrix back into an approximation of ``A``::

    standard  Hp = H
    invert    Hp = H^{-1}
    rational  Hp = (I - H^{-1}) / g

so that ``exp(h A) v ~ beta V exp(h Hp) e1`` for any ``h`` without touching
the large matrices again.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .sparsela import LuFactor, expm_dense, lu_decompose, solve

DEFAULT_GAMMA = 1e-10
DEFAULT_EPS = 1e-6
DEFAULT_M_MAX = 30
BREAKDOWN_RTOL = 1e-14
REORTH_ETA = 0.7


class KrylovError(ArithmeticError):
    pass


class NoConvergence(KrylovError):
    def __init__(self, m_max, last_r, t=None):
        self.m_max = m_max
        self.last_r = last_r
        self.t = t
        where = f" at t={t:.6g}" if t is not None else ""
        super().__init__(f"residual {last_r:.3e} above budget after m={m_max}{where}")


class SingularHessenberg(KrylovError):
    pass


class OracleUnavailable(ValueError):
    pass


@dataclass(frozen=True)
class KrylovVariant:
    kind: str
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("standard", "invert", "rational"):
            raise ValueError(f"unknown Krylov variant {self.kind!r}")
        if self.kind == "rational":
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("rational variant needs gamma > 0")
        elif self.gamma is not None:
            object.__setattr__(self, "gamma", None)

    def __str__(self):
        return f"rational(gamma={self.gamma:g})" if self.kind == "rational" else self.kind


STANDARD = KrylovVariant("standard")
INVERT = KrylovVariant("invert")


def rational(gamma=DEFAULT_GAMMA) -> KrylovVariant:
    return KrylovVariant("rational", float(gamma))


def variant_matrices(C, G, variant: KrylovVariant):
    """``(X1, X2, weight)``: matrix to factorize, matrix applied before each
    solve, and the residual weighting matrix."""
    C = sp.csc_matrix(C)
    G = sp.csc_matrix(G)
    if variant.kind == "standard":
        return C, G, C
    if variant.kind == "invert":
        return G, C, G
    X1 = (C + variant.gamma * G).tocsc()
    return X1, C, (X1 / variant.gamma).tocsc()


def _sign(variant):
    return 1.0 if variant.kind == "rational" else -1.0


def propagator(H, variant: KrylovVariant) -> np.ndarray:
    m = H.shape[0]
    if variant.kind == "standard":
        return np.array(H, dtype=float)
    Hinv = _hess_inverse(H)
    if variant.kind == "invert":
        return Hinv
    return (np.eye(m) - Hinv) / variant.gamma


def _hess_inverse(H):
    m = H.shape[0]
    if m == 0:
        return np.zeros((0, 0))
    try:
        lu, piv = scipy.linalg.lu_factor(H, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularHessenberg(str(exc)) from None
    d = np.abs(np.diag(lu))
    if not np.all(d > 1e-14 * max(np.max(np.abs(H)), 1e-300)):
        raise SingularHessenberg("Hessenberg matrix is numerically singular")
    return scipy.linalg.lu_solve((lu, piv), np.eye(m))


@dataclass(frozen=True, eq=False)
class KrylovBasis:
    """Arnoldi output: ``Op V = V H + h_{m+1,m} v_{m+1} e_m^T``."""

    V: np.ndarray
    H_raw: np.ndarray  # (m+1) x m
    beta: float
    variant: KrylovVariant
    v_next: np.ndarray
    weighted_next: float = 0.0  # ||weight @ v_{m+1}||
    anchor_t: float = 0.0
    breakdown: bool = False
    solves: int = 0
    residual: float = 0.0

    @property
    def m(self):
        return self.V.shape[1]

    @property
    def H(self):
        return self.H_raw[:self.m, :self.m]

    @property
    def h_next(self):
        return float(self.H_raw[self.m, self.m - 1]) if self.m else 0.0

    @cached_property
    def Hp(self):
        return propagator(self.H, self.variant)

    def truncate(self, m) -> "KrylovBasis":
        """Leading ``m``-dimensional basis; Arnoldi bases are nested."""
        if m >= self.m:
            return self
        return KrylovBasis(self.V[:, :m], self.H_raw[:m + 1, :m], self.beta, self.variant,
                           self.V[:, m], np.nan, self.anchor_t, False, m)

    def expm_e1(self, h):
        return expm_dense(self.Hp, h)[:, 0]


def _residual_coeff(H, Hp, variant, h):
    """``|e_m^T X exp(h Hp) e1|`` with ``X = I`` (standard) or ``H^{-1}``."""
    m = H.shape[0]
    y = expm_dense(Hp, h)[:, 0]
    if variant.kind != "standard":
        # e_m^T H^{-1} y without forming the inverse
        y = scipy.linalg.solve(H, y, check_finite=False) if m > 1 else y / H[0, 0]
    return abs(y[-1])


def residual_estimate(basis: KrylovBasis, h, weight=None) -> float:
    """Posterior residual of ``C x' + G x`` for the basis evaluated at ``h``.

    ``weight`` is ``C`` (standard), ``G`` (invert) or ``(C + gG)/g``
    (rational); when omitted the norm recorded at build time is used.
    """
    if basis.m == 0 or basis.h_next == 0.0:
        return 0.0
    wn = basis.weighted_next if weight is None else float(np.linalg.norm(weight @ basis.v_next))
    coeff = max(_residual_coeff(basis.H, basis.Hp, basis.variant, hh) for hh in np.atleast_1d(h))
    return basis.beta * basis.h_next * wn * coeff


def arnoldi(factor: LuFactor, X2, v, h, variant: KrylovVariant, eps=DEFAULT_EPS,
            m_max=DEFAULT_M_MAX, *, weight=None, anchor_t=0.0, require_convergence=True):
    """Build a Krylov basis for ``exp(h A) v`` by modified Gram-Schmidt.

    Each iteration costs one ``solve(factor, X2 @ v_j)``. Iteration stops at
    the first ``j`` whose residual estimate is below ``eps * ||v||`` (``h`` may
    be a sequence, in which case the largest estimate is used), at a happy
    breakdown, or at ``m_max``.

    Raises :class:`NoConvergence` when ``m_max`` is reached without meeting
    the budget, unless ``require_convergence`` is false.
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    beta = float(np.linalg.norm(v))
    if beta == 0.0:
        return KrylovBasis(np.zeros((n, 0)), np.zeros((1, 0)), 0.0, variant, np.zeros(n),
                           anchor_t=anchor_t, breakdown=True)
    m_max = min(int(m_max), n)
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    sign = _sign(variant)
    hs = np.atleast_1d(np.asarray(h, dtype=float))
    budget = eps * beta

    V = np.zeros((n, m_max + 1))
    Hr = np.zeros((m_max + 1, m_max))
    V[:, 0] = v / beta
    r = np.inf
    solves = 0
    for j in range(m_max):
        w = sign * solve(factor, X2 @ V[:, j])
        solves += 1
        w0 = np.linalg.norm(w)
        for i in range(j + 1):
            Hr[i, j] = w @ V[:, i]
            w -= Hr[i, j] * V[:, i]
        wn = np.linalg.norm(w)
        if wn < REORTH_ETA * w0:
            for i in range(j + 1):
                c = w @ V[:, i]
                Hr[i, j] += c
                w -= c * V[:, i]
            wn = np.linalg.norm(w)
        m = j + 1
        if wn <= BREAKDOWN_RTOL * w0:
            Hr[m, j] = 0.0
            return KrylovBasis(V[:, :m].copy(), Hr[:m + 1, :m].copy(), beta, variant,
                               np.zeros(n), 0.0, anchor_t, True, solves, 0.0)
        Hr[m, j] = wn
        V[:, m] = w / wn
        wnorm = float(np.linalg.norm(weight @ V[:, m])) if weight is not None else 1.0
        H = Hr[:m, :m]
        try:
            Hp = propagator(H, variant)
            coeff = max(_residual_coeff(H, Hp, variant, hh) for hh in hs)
            r = beta * wn * wnorm * coeff
        except (SingularHessenberg, ArithmeticError, np.linalg.LinAlgError):
            r = np.inf
        if r < budget or m == m_max:
            basis = KrylovBasis(V[:, :m].copy(), Hr[:m + 1, :m].copy(), beta, variant,
                                V[:, m].copy(), wnorm, anchor_t, False, solves, r)
            if r >= budget and require_convergence:
                raise NoConvergence(m_max, r / beta, anchor_t)
            return basis
    raise AssertionError("unreachable")


def mevp_eval(basis: KrylovBasis, h) -> np.ndarray:
    """``beta V exp(h Hp) e1``; reuses the basis for any ``h >= 0``."""
    if basis.m == 0:
        return np.zeros(basis.V.shape[0])
    return basis.beta * (basis.V @ basis.expm_e1(h))


@dataclass(frozen=True, eq=False)
class KrylovOperator:
    """A factorized ``X1`` together with ``X2`` and the residual weight."""

    variant: KrylovVariant
    factor: LuFactor
    X2: sp.csc_matrix
    weight: sp.csc_matrix

    @classmethod
    def build(cls, C, G, variant: KrylovVariant, factor: Optional[LuFactor] = None):
        X1, X2, weight = variant_matrices(C, G, variant)
        if factor is None:
            factor = lu_decompose(X1)
        return cls(variant, factor, X2, weight)

    def arnoldi(self, v, h, eps=DEFAULT_EPS, m_max=DEFAULT_M_MAX, **kw):
        return arnoldi(self.factor, self.X2, v, h, self.variant, eps, m_max,
                       weight=self.weight, **kw)


# --- dense reference and error surfaces -----------------------------------

def dense_generator(C, G) -> np.ndarray:
    """``A = -C^{-1} G`` as a dense matrix; requires nonsingular ``C``."""
    Cd = np.asarray(sp.csc_matrix(C).toarray(), dtype=float)
    Gd = np.asarray(sp.csc_matrix(G).toarray(), dtype=float)
    try:
        with warnings.catch_warnings():
            # an exactly zero pivot is reported below as OracleUnavailable
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(Cd)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise OracleUnavailable(str(exc)) from None
    if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * np.max(np.abs(Cd)):
        raise OracleUnavailable("C is singular; exp(hA) has no explicit generator")
    return -scipy.linalg.lu_solve(lu, Gd)


def dense_mevp(C, G, v, h) -> np.ndarray:
    """Reference ``exp(h A) v``.

    With diagonal positive ``C`` and symmetric ``G`` the generator is similar
    to a symmetric matrix and is evaluated by eigendecomposition; otherwise
    by dense ``expm``.
    """
    Cd = sp.csc_matrix(C)
    Gd = sp.csc_matrix(G).toarray()
    v = np.asarray(v, dtype=float)
    diag = Cd.diagonal()
    if (Cd - sp.diags(diag)).count_nonzero() == 0 and np.all(diag > 0) and np.allclose(Gd, Gd.T, rtol=0, atol=0):
        s = 1.0 / np.sqrt(diag)
        S = -(s[:, None] * Gd * s[None, :])
        lam, Q = np.linalg.eigh(S)
        y = Q @ (np.exp(h * lam) * (Q.T @ (v / s)))
        return s * y
    A = dense_generator(C, G)
    return scipy.linalg.expm(h * A) @ v


def error_surface(C, G, v, variant: KrylovVariant, h_grid, m_grid):
    """True relative MEVP error for each ``(h, m)``: ``errs[i, j]`` for
    ``h_grid[i]`` and ``m_grid[j]``."""
    n = C.shape[0]
    if n > 500:
        raise ValueError("error surfaces need n <= 500 for the dense reference")
    dense_generator(C, G)  # raises OracleUnavailable on singular C
    op = KrylovOperator.build(C, G, variant)
    m_top = min(max(m_grid), n)
    full = op.arnoldi(v, h_grid[0], eps=0.0, m_max=m_top, require_convergence=False)
    errs = np.empty((len(h_grid), len(m_grid)))
    refs = [dense_mevp(C, G, v, h) for h in h_grid]
    for j, m in enumerate(m_grid):
        basis = full.truncate(m)
        for i, h in enumerate(h_grid):
            ref = refs[i]
            try:
                approx = mevp_eval(basis, h)
                errs[i, j] = np.linalg.norm(ref - approx) / np.linalg.norm(ref)
            except (SingularHessenberg, ArithmeticError):
                errs[i, j] = np.inf
    return errs
