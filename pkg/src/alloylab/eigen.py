"""Lowest eigenpairs and exact eigenvalue counting for assembled pencils (K, W)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

from .operator import AssembledOperator

DENSE_MAX = 1500          # dense eigh up to this dimension
CROSS_CHECK_MAX = 200     # dense cross-check of inertia counts
START_SEED = 20240611     # fixed Krylov start vector seed
DEGENERACY_RTOL = 1e-9


class EigenSolverError(RuntimeError):
    def __init__(self, msg, best_residual=np.inf):
        super().__init__(f"{msg} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class FactorizationBreakdown(ArithmeticError):
    pass


@dataclass(eq=False)
class Eigenpair:
    value: float
    vector: np.ndarray        # unit 2-norm, W-orthonormal basis
    residual: float
    nodal: np.ndarray         # W^{-1/2} vector: dof values with Σ w φ^2 = 1


@dataclass(eq=False)
class GroundState:
    pair: Eigenpair
    degenerate: bool
    gap: float
    positivity_violation: bool

    @property
    def value(self) -> float:
        return self.pair.value

    @property
    def nodal(self) -> np.ndarray:
        return self.pair.nodal


@dataclass(frozen=True)
class CountReport:
    energy: float
    count: int
    method: str
    energy_used: float
    retried: bool = False
    dense_count: int | None = None


def _default_tol(S) -> float:
    return 1e-8 * max(1.0, float(abs(S).sum(axis=1).max()))


def _pairs(S, vals, vecs, sqrt_w) -> list:
    out = []
    for j in range(len(vals)):
        v = vecs[:, j] / np.linalg.norm(vecs[:, j])
        Sv = S @ v
        lam = float(v @ Sv)
        out.append(Eigenpair(lam, v, float(np.linalg.norm(Sv - lam * v)), v / sqrt_w))
    return out


def _lanczos(S: sp.csr_matrix, k: int, tol: float, seed: int = START_SEED) -> tuple:
    """Shift-invert Lanczos with full reorthogonalization for the k lowest eigenpairs."""
    n = S.shape[0]
    diag = S.diagonal()
    rad = np.asarray(abs(S).sum(axis=1)).ravel() - np.abs(diag)
    low = float((diag - rad).min())
    sigma = low - 1e-3 * (1.0 + abs(low))           # strictly below the spectrum
    lu = splu(sp.csc_matrix(S - sigma * sp.identity(n)))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    V = np.zeros((n, min(n, 64)))
    V[:, 0] = v / np.linalg.norm(v)
    alpha, beta = [], []
    best = np.inf
    j = 0
    while True:
        if j + 1 >= V.shape[1] and V.shape[1] < n:
            V = np.hstack([V, np.zeros((n, min(n, 2 * V.shape[1]) - V.shape[1]))])
        w = lu.solve(V[:, j])
        a = V[:, j] @ w
        w -= a * V[:, j]
        if j > 0:
            w -= beta[-1] * V[:, j - 1]
        for _ in range(2):
            w -= V[:, :j + 1] @ (V[:, :j + 1].T @ w)
        b = np.linalg.norm(w)
        alpha.append(a)
        m = j + 1
        if m >= k and (m % 5 == 0 or b < 1e-12 or m == n):
            theta, s = sla.eigh_tridiagonal(np.array(alpha), np.array(beta)) if m > 1 else \
                (np.array(alpha), np.ones((1, 1)))
            order = np.argsort(theta)[::-1][:k]
            lam = sigma + 1.0 / theta[order]
            X = V[:, :m] @ s[:, order]
            res = np.linalg.norm(S @ X - X * lam, axis=0)
            best = min(best, res.max())
            if res.max() <= tol or b < 1e-12 or m == n:
                if res.max() > tol:
                    raise EigenSolverError("Lanczos did not reach the requested tolerance", res.max())
                idx = np.argsort(lam)
                return lam[idx], X[:, idx]
        if m >= n:
            raise EigenSolverError("Lanczos exhausted the space", best)
        beta.append(b)
        V[:, j + 1] = w / b
        j += 1


def lowest_eigenpairs(op: AssembledOperator, k: int = 1, tol: float | None = None,
                      method: str = "auto") -> list:
    if k < 1 or k > op.dim:
        raise ValueError(f"k must lie in [1, {op.dim}]")
    S = op.matrix
    tol = _default_tol(S) if tol is None else tol
    sqrt_w = np.sqrt(op.mass)
    if method == "auto":
        method = "dense" if op.dim <= DENSE_MAX else "lanczos"
    if method == "dense":
        vals, vecs = sla.eigh(S.toarray(), subset_by_index=[0, k - 1])
    elif method == "lanczos":
        vals, vecs = _lanczos(S, k, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    pairs = _pairs(S, vals, vecs, sqrt_w)
    worst = max(p.residual for p in pairs)
    if worst > tol:
        raise EigenSolverError("eigenpairs above tolerance", worst)
    return pairs


def lambda_min(op: AssembledOperator) -> float:
    return lowest_eigenpairs(op, 1)[0].value


def ground_state(op: AssembledOperator, tol: float | None = None) -> GroundState:
    k = 2 if op.dim >= 2 else 1
    pairs = lowest_eigenpairs(op, k, tol)
    p = pairs[0]
    if p.vector.sum() < 0:
        p = Eigenpair(p.value, -p.vector, p.residual, -p.nodal)
    gap = pairs[1].value - p.value if k == 2 else np.inf
    degenerate = bool(gap <= DEGENERACY_RTOL * max(1.0, abs(p.value)))
    tol_pos = 10 * (tol if tol is not None else 1e-10)
    violation = bool(p.vector.min() < -tol_pos)
    return GroundState(p, degenerate, float(gap), violation)


# -- counting ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Banded:
    perm: np.ndarray
    band: np.ndarray      # band[i, j] = K[i, i-j] in permuted order
    w: np.ndarray         # permuted mass
    bw: int
    rowscale: np.ndarray


def _banded(K: sp.csr_matrix, w: np.ndarray) -> _Banded:
    K = sp.csr_matrix(K)
    perm = reverse_cuthill_mckee(K, symmetric_mode=True)
    Kp = sp.coo_matrix(K[perm][:, perm])
    lower = Kp.row >= Kp.col
    r, c, v = Kp.row[lower], Kp.col[lower], Kp.data[lower]
    bw = int((r - c).max()) if r.size else 0
    band = np.zeros((K.shape[0], bw + 1))
    np.add.at(band, (r, r - c), v)
    rowscale = np.asarray(abs(Kp).sum(axis=1)).ravel()
    return _Banded(perm, band, np.asarray(w)[perm], bw, rowscale)


def _ldl_negatives(B: _Banded, energies: np.ndarray):
    """Negative-pivot counts of K - E·W (no pivoting), vectorized over E.

    Returns (counts, breakdown) where breakdown marks shifts with a tiny pivot.
    """
    E = np.asarray(energies, float)
    n, bw = B.band.shape[0], B.bw
    nE = E.size
    s = bw + 1
    win = np.zeros((nE, s, s))
    for i in range(min(s, n)):
        for j in range(0, min(i, bw) + 1):
            win[:, i, i - j] = B.band[i, j]
            win[:, i - j, i] = B.band[i, j]
        win[:, i, i] -= E * B.w[i]
    neg = np.zeros(nE, dtype=np.int64)
    broke = np.zeros(nE, dtype=bool)
    eps = np.finfo(float).eps
    for k in range(n):
        piv = win[:, 0, 0].copy()
        thr = 64 * eps * (B.rowscale[k] + np.abs(E) * B.w[k] + 1e-300)
        broke |= np.abs(piv) <= thr
        neg += piv < 0
        safe = np.where(piv == 0, 1.0, piv)
        l = win[:, 1:, 0] / safe[:, None]
        nxt = np.zeros_like(win)
        nxt[:, :bw, :bw] = win[:, 1:, 1:] - safe[:, None, None] * l[:, :, None] * l[:, None, :]
        r = k + s
        if r < n:
            for j in range(bw + 1):
                if r - j > k:
                    nxt[:, bw, bw - j] = B.band[r, j]
                    nxt[:, bw - j, bw] = B.band[r, j]
            nxt[:, bw, bw] -= E * B.w[r]
        win = nxt
    return neg, broke


def count_eigenvalues(op: AssembledOperator, energies, cross_check: bool = True,
                      banded: _Banded | None = None) -> tuple:
    """Counts #{λ ≤ E} for each E by LDLᵀ inertia; returns (counts, reports)."""
    E = np.atleast_1d(np.asarray(energies, float))
    B = banded if banded is not None else _banded(op.stiffness, op.mass)
    used = E.copy()
    counts, broke = _ldl_negatives(B, used)
    retried = np.zeros(E.size, dtype=bool)
    for _ in range(5):
        if not broke.any():
            break
        retried |= broke
        used[broke] = used[broke] + 1e-10 * (1 + np.abs(used[broke]))
        c2, b2 = _ldl_negatives(B, used[broke])
        counts[broke] = c2
        idx = np.flatnonzero(broke)
        broke[:] = False
        broke[idx[b2]] = True
    if broke.any():
        raise FactorizationBreakdown(f"LDL breakdown persists at E={used[broke]}")
    dense = None
    if cross_check and op.dim <= CROSS_CHECK_MAX:
        ev = sla.eigh(op.stiffness.toarray(), np.diag(op.mass), eigvals_only=True)
        dense = np.searchsorted(ev, used, side="right")
    reports = [CountReport(float(E[i]), int(counts[i]), "inertia", float(used[i]), bool(retried[i]),
                           None if dense is None else int(dense[i])) for i in range(E.size)]
    return counts, reports


def counting_function(op: AssembledOperator, E: float) -> CountReport:
    return count_eigenvalues(op, [E])[1][0]


def dense_count(op: AssembledOperator, E: float) -> int:
    ev = sla.eigh(op.stiffness.toarray(), np.diag(op.mass), eigvals_only=True)
    return int(np.searchsorted(ev, E, side="right"))
