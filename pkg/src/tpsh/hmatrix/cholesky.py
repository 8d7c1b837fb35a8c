"""Approximate Cholesky factorisation of symmetric H-matrices."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .blocks import (Compensation, Dense, Hier, LowRank, _rel, add_lowrank, addmul, dense_cholesky,
                     leaves, matmat)


class CholeskyBreakdown(np.linalg.LinAlgError):
    """A diagonal leaf lost positive definiteness; tighten the truncation."""


def _solve_lower(L, R):
    """``L^{-1} R`` for a dense right-hand side block ``R`` (overwritten)."""
    if isinstance(L, Dense):
        R[:] = sla.solve_triangular(L.a, R, lower=True, check_finite=False)
        return R
    s0, s1 = (_rel(L.rows, c) for c in L.rows.children)
    _solve_lower(L.children[0][0], R[s0])
    matmat(L.children[1][0], R[s0], R[s1], alpha=-1.0)
    _solve_lower(L.children[1][1], R[s1])
    return R


def _solve_upper(L, R):
    """``L^{-T} R`` (overwrites ``R``)."""
    if isinstance(L, Dense):
        R[:] = sla.solve_triangular(L.a, R, lower=True, trans="T", check_finite=False)
        return R
    s0, s1 = (_rel(L.rows, c) for c in L.rows.children)
    _solve_upper(L.children[1][1], R[s1])
    matmat(L.children[1][0], R[s1], R[s0], trans=True, alpha=-1.0)
    _solve_upper(L.children[0][0], R[s0])
    return R


def _trsm_rt(B, L, eps):
    """Overwrite ``B`` with ``X`` solving ``X L^T = B``."""
    if isinstance(B, LowRank):
        if B.rank:
            B.V = _solve_lower(L, B.V.copy())
        return B
    if isinstance(B, Dense):
        B.a = np.ascontiguousarray(_solve_lower(L, B.a.T.copy()).T)
        return B
    if isinstance(L, Dense):
        for row in B.children:
            row[0] = _trsm_rt(row[0], L, eps)
        return B
    L00, L10, L11 = L.children[0][0], L.children[1][0], L.children[1][1]
    for row in B.children:
        row[0] = _trsm_rt(row[0], L00, eps)
        row[1] = addmul(row[1], row[0], L10, -1.0, eps)
        row[1] = _trsm_rt(row[1], L11, eps)
    return B


def trsm_tolerance(eps_chol: float) -> float:
    """Tolerance of the triangular-solve truncations.

    These cannot be compensated, so they run at ``eps_chol**2`` (never
    below ``1e-12``).
    """
    return max(eps_chol * eps_chol, 1e-12)


def _chol(A, eps, comp):
    F = comp.pop(A.rows)
    if F is not None:
        A = add_lowrank(A, F, F, eps, comp)
    if isinstance(A, Dense):
        L = dense_cholesky(A.a)
        if L is None:
            raise CholeskyBreakdown(f"non-positive pivot in leaf {A.rows}")
        A.a = L
        return A
    if not isinstance(A, Hier) or A.mode != "sym":
        raise TypeError("diagonal blocks must be dense or symmetric hierarchical")
    A.children[0][0] = _chol(A.children[0][0], eps, comp)
    A.children[1][0] = _trsm_rt(A.children[1][0], A.children[0][0], trsm_tolerance(eps))
    L10 = A.children[1][0]
    A.children[1][1] = addmul(A.children[1][1], L10, L10, -1.0, eps, comp)
    A.children[1][1] = _chol(A.children[1][1], eps, comp)
    A.mode = "lower"
    return A


def _plans(L):
    fwd, bwd = [], []

    def emit(b, r0):
        if isinstance(b, Dense):
            fwd.append((0, r0, r0 + b.a.shape[0], b.a))
            return
        s0, s1 = b.rows.children
        off1 = r0 + s1.start - b.rows.start
        emit(b.children[0][0], r0)
        for rr, cc, leaf, _ in leaves(b.children[1][0], off1, r0):
            fwd.append((1, rr, cc, leaf))
        emit(b.children[1][1], off1)

    emit(L, 0)
    # the transposed sweep runs the same operations backwards
    for op in reversed(fwd):
        bwd.append(op)
    return fwd, bwd


class HCholeskyFactor:
    """Lower-triangular H-matrix ``L`` with ``L L^T`` close to the input."""

    def __init__(self, root, tree, eps_chol: float):
        self.root = root
        self.tree = tree
        self.eps_chol = eps_chol
        self._fwd, self._bwd = _plans(root)

    @property
    def shape(self):
        return self.root.shape

    def storage(self) -> int:
        return self.root.storage()

    def storage_bytes(self) -> int:
        return 8 * self.storage()

    def apply_L(self, v, transposed=False):
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v if v.ndim == 2 else v[:, None])
        matmat(self.root, v if v.ndim == 2 else v[:, None], out, trans=transposed)
        return out if v.ndim == 2 else out[:, 0]

    def solve(self, rhs, transposed=False):
        """Solve ``L y = rhs`` (or ``L^T y = rhs``) by block substitution."""
        x = np.array(rhs, dtype=float, copy=True)
        if x.shape[0] != self.shape[0]:
            raise ValueError("dimension mismatch")
        if not transposed:
            for op in self._fwd:
                if op[0] == 0:
                    _, r0, r1, a = op
                    x[r0:r1] = sla.solve_triangular(a, x[r0:r1], lower=True, check_finite=False)
                else:
                    _, r0, c0, b = op
                    m, n = b.shape
                    if isinstance(b, Dense):
                        x[r0:r0 + m] -= b.a @ x[c0:c0 + n]
                    elif b.rank:
                        x[r0:r0 + m] -= b.U @ (b.V.T @ x[c0:c0 + n])
        else:
            for op in self._bwd:
                if op[0] == 0:
                    _, r0, r1, a = op
                    x[r0:r1] = sla.solve_triangular(a, x[r0:r1], lower=True, trans="T",
                                                    check_finite=False)
                else:
                    _, r0, c0, b = op
                    m, n = b.shape
                    if isinstance(b, Dense):
                        x[c0:c0 + n] -= b.a.T @ x[r0:r0 + m]
                    elif b.rank:
                        x[c0:c0 + n] -= b.V @ (b.U.T @ x[r0:r0 + m])
        return x

    def solve_llt(self, rhs):
        """``(L L^T)^{-1} rhs``; the preconditioner application."""
        return self.solve(self.solve(rhs), transposed=True)

    def to_dense(self):
        from .blocks import to_dense
        return np.tril(to_dense(self.root))


def hcholesky(h, eps_chol: float = 1e-4, inplace: bool = False) -> HCholeskyFactor:
    """Recursive 2x2 block Cholesky with truncated updates.

    ``L11 = chol(A11)``, ``L21 = A21 L11^{-T}``, ``A22 <- A22 - L21 L21^T``,
    then recurse on ``A22``; dense leaves use LAPACK.

    Truncations inside the Schur update ``A22 - L21 L21^T`` hand their
    remainders to the diagonal blocks of ``A22`` (positive semidefinite
    compensation), and so do any ``h.pending`` terms. For an SPD input the
    leaves therefore stay positive definite at every ``eps_chol``; a
    :class:`CholeskyBreakdown` still signals a numerically indefinite input.
    """
    if not h.symmetric:
        raise ValueError("hcholesky needs a symmetric H-matrix")
    work = h.root if inplace else h.root.copy()
    comp = Compensation()
    if h.pending is not None:
        comp.merge(h.pending)
        if inplace:
            h.pending = None
    root = _chol(work, eps_chol, comp)
    return HCholeskyFactor(root, h.tree, eps_chol)


def solve_triangular(f: HCholeskyFactor, rhs, transposed: bool = False):
    return f.solve(rhs, transposed)
