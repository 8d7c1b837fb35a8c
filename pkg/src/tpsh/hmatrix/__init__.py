"""Hierarchical-matrix approximation of thin-plate kernel matrices.

Vectors passed to :class:`HMatrix` methods are in cluster-tree order, that
is, position ``k`` belongs to original point ``tree.perm[k]``.
"""

from __future__ import annotations

import csv

import numpy as np

from .. import core
from ..cluster import BlockTree
from .blocks import (Compensation, Dense, Hier, LowRank, add_lowrank, agglomerate, leaves,
                     to_dense, truncate, truncate_dense)
from .chebyshev import ClusterBasis, interpolated_kernel

DEFAULT_P = 6
DEFAULT_EPS = 1e-8


class HMatrix:
    """Block-structured matrix over a :class:`~tpsh.cluster.BlockTree`.

    With ``symmetric=True`` only the lower blocks are stored and the upper
    ones are applied as transposes. ``pending`` holds diagonal compensation
    terms from truncations made with ``compensate=True``; they are part of
    the matrix for :func:`hcholesky` but ignored by :meth:`matvec`.
    """

    def __init__(self, root, blocks: BlockTree, symmetric: bool, pending: Compensation | None = None):
        self.root = root
        self.blocks = blocks
        self.symmetric = symmetric
        self.pending = pending
        self._plan = None

    @property
    def tree(self):
        return self.blocks.tree

    @property
    def shape(self):
        return self.root.shape

    def copy(self) -> "HMatrix":
        pending = None
        if self.pending is not None:
            pending = Compensation()
            pending.merge(self.pending)
        return HMatrix(self.root.copy(), self.blocks, self.symmetric, pending)

    def touch(self):
        """Drop cached matvec data after in-place edits."""
        self._plan = None

    def leaves(self):
        return list(leaves(self.root))

    def storage(self) -> int:
        """Stored floating-point entries."""
        return self.root.storage()

    def storage_bytes(self) -> int:
        return 8 * self.storage()

    def to_dense(self) -> np.ndarray:
        return to_dense(self.root)

    def ranks(self) -> list[int]:
        return [b.rank for _, _, b, _ in leaves(self.root) if isinstance(b, LowRank)]

    def _build_plan(self):
        plan = []
        for r0, c0, b, mirror in leaves(self.root):
            m, n = b.shape
            if isinstance(b, Dense):
                plan.append((r0, r0 + m, c0, c0 + n, b.a, None, mirror))
            elif b.rank:
                plan.append((r0, r0 + m, c0, c0 + n, b.U, b.V, mirror))
        self._plan = plan
        return plan

    def matvec(self, v):
        """``H @ v`` for a vector or a matrix of column vectors."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.shape[1]:
            raise ValueError(f"dimension mismatch: {v.shape[0]} != {self.shape[1]}")
        plan = self._plan if self._plan is not None else self._build_plan()
        y = np.zeros((self.shape[0],) + v.shape[1:])
        for r0, r1, c0, c1, a, b, mirror in plan:
            if b is None:
                y[r0:r1] += a @ v[c0:c1]
                if mirror:
                    y[c0:c1] += a.T @ v[r0:r1]
            else:
                y[r0:r1] += a @ (b.T @ v[c0:c1])
                if mirror:
                    y[c0:c1] += b @ (a.T @ v[r0:r1])
        return y

    __matmul__ = matvec


def matvec(h: HMatrix, v):
    return h.matvec(v)


def recompress(block: LowRank, eps_rel: float) -> LowRank:
    """Rank-truncated SVD of ``U V^T`` at relative spectral tolerance ``eps_rel``."""
    U, V = truncate(block.U, block.V, eps_rel)
    return LowRank(block.rows, block.cols, U, V)


def assemble_hmatrix(points, blocks: BlockTree, p: int = DEFAULT_P, eps_rel: float | None = DEFAULT_EPS,
                     symmetric: bool = True) -> HMatrix:
    """Thin-plate kernel matrix in H-format.

    ``points`` are in original order (they are permuted by ``blocks.tree``).
    Near-field leaves are exact. Far-field leaves use tensor Chebyshev
    interpolation of degree ``p`` on both cluster boxes and are recompressed
    to ``eps_rel`` (skipped when ``eps_rel`` is ``None``).
    """
    if p < 0:
        raise ValueError("Chebyshev degree must be >= 0")
    tree = blocks.tree
    pts = np.asarray(points, dtype=float)[tree.perm]
    basis = ClusterBasis(pts, p)

    def far(s, t):
        if eps_rel is None:
            U, V = interpolated_kernel(s.lo, s.hi, t.lo, t.hi, p, pts[s.start:s.stop], pts[t.start:t.stop])
            return LowRank(s, t, U, V)
        ns, _, Qs, Rs = basis.get(s)
        nt, _, Qt, Rt = basis.get(t)
        w, sv, zt = np.linalg.svd(Rs @ core.phi2_matrix(ns, nt) @ Rt.T)
        r = int(np.count_nonzero(sv > eps_rel * sv[0])) if sv[0] > 0 else 0
        return LowRank(s, t, Qs @ (w[:, :r] * sv[:r]), Qt @ zt[:r].T)

    def build(node, diag):
        s, t = node.rows, node.cols
        if node.kind == "dense":
            a = core.phi2_matrix(pts[s.start:s.stop], pts[t.start:t.stop])
            if diag:
                a = 0.5 * (a + a.T)
            return Dense(s, t, a)
        if node.kind == "admissible":
            return far(s, t)
        sym = symmetric and diag
        kids = [[None if (sym and j > i) else build(c, diag and i == j) for j, c in enumerate(row)]
                for i, row in enumerate(node.children)]
        return Hier(s, t, kids, "sym" if sym else "full")

    return HMatrix(build(blocks.root, True), blocks, symmetric)


def from_dense(A, blocks: BlockTree, eps_rel: float = DEFAULT_EPS, symmetric: bool = False) -> HMatrix:
    """H-format of a given matrix (cluster order); far-field leaves by truncated SVD."""
    A = np.asarray(A, dtype=float)

    def build(node, diag):
        s, t = node.rows, node.cols
        a = A[s.start:s.stop, t.start:t.stop]
        if node.kind == "dense":
            return Dense(s, t, a.copy())
        if node.kind == "admissible":
            w, sv, zt = np.linalg.svd(a, full_matrices=False)
            r = int(np.count_nonzero(sv > eps_rel * sv[0])) if sv.size and sv[0] > 0 else 0
            return LowRank(s, t, w[:, :r] * sv[:r], zt[:r].T.copy())
        sym = symmetric and diag
        kids = [[None if (sym and j > i) else build(c, diag and i == j) for j, c in enumerate(row)]
                for i, row in enumerate(node.children)]
        return Hier(s, t, kids, "sym" if sym else "full")

    return HMatrix(build(blocks.root, True), blocks, symmetric)


def _coarsen(b, eps, protect, comp):
    # protect: block sits on the diagonal and must stay factorisable
    if isinstance(b, LowRank):
        return b
    if isinstance(b, Dense):
        m, n = b.shape
        if protect or m == 0 or n == 0:
            return b
        trial = Compensation() if comp is not None else None
        U, V = truncate_dense(b.a, eps, trial, b.rows, b.cols)
        if (m + n) * U.shape[1] < m * n:
            if comp is not None:
                comp.merge(trial)
            return LowRank(b.rows, b.cols, U, V.copy())
        return b
    for i, j, c in list(b.stored()):
        b.children[i][j] = _coarsen(c, eps, protect and i == j, comp)
    kids = [(i, j, c) for i, j, c in b.stored()]
    if not protect and all(isinstance(c, LowRank) for _, _, c in kids):
        before = sum(c.storage() * (2 if b.mode == "sym" and i != j else 1) for i, j, c in kids)
        trial = Compensation() if comp is not None else None
        merged = agglomerate(b, eps, trial)
        # ties keep the finer structure (merging would gain nothing)
        if merged.storage() < before:
            if comp is not None:
                comp.merge(trial)
            return merged
    return b


def _pending(h, compensate):
    if not compensate:
        return None
    if not h.symmetric:
        raise ValueError("compensation needs symmetric storage")
    if h.pending is None:
        h.pending = Compensation()
    return h.pending


def coarsen(h: HMatrix, eps_rel: float = DEFAULT_EPS, inplace: bool = False,
            keep_diagonal: bool = False, compensate: bool = False) -> HMatrix:
    """Bottom-up merging of low-rank siblings whenever storage strictly shrinks.

    Dense leaves that truncate to strictly cheaper factors become low rank
    first. ``keep_diagonal`` leaves diagonal blocks untouched so the result
    can still be Cholesky-factorised; ``compensate`` records the discarded
    parts in ``pending`` (see :class:`~tpsh.hmatrix.blocks.Compensation`).
    """
    out = h if inplace else h.copy()
    out.root = _coarsen(out.root, eps_rel, keep_diagonal, _pending(out, compensate))
    out.touch()
    return out


def _symmetrize_diag(b):
    if isinstance(b, Dense):
        b.a = 0.5 * (b.a + b.a.T)
    elif isinstance(b, Hier) and b.mode == "sym":
        for i in range(len(b.children)):
            _symmetrize_diag(b.children[i][i])


def low_rank_update(h: HMatrix, X, Y, eps_rel: float = DEFAULT_EPS, inplace: bool = False,
                    compensate: bool = False) -> HMatrix:
    """``h + X Y^T`` with low-rank leaves truncated and dense leaves exact.

    For symmetric storage ``X Y^T`` must be symmetric; diagonal dense leaves
    are re-symmetrised afterwards.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape or X.shape[0] != h.shape[0]:
        raise ValueError("X and Y must both have shape (N, r)")
    out = h if inplace else h.copy()
    out.root = add_lowrank(out.root, X, Y, eps_rel, _pending(out, compensate))
    if out.symmetric:
        _symmetrize_diag(out.root)
    out.touch()
    return out


def dump_blocks_csv(h: HMatrix, path) -> None:
    """Per-leaf structure: offsets, sizes, kind and rank."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_offset", "col_offset", "rows", "cols", "kind", "rank"])
        for r0, c0, b, _ in leaves(h.root):
            m, n = b.shape
            if isinstance(b, Dense):
                w.writerow([r0, c0, m, n, "dense", min(m, n)])
            else:
                w.writerow([r0, c0, m, n, "lowrank", b.rank])


from .cholesky import CholeskyBreakdown, HCholeskyFactor, hcholesky, solve_triangular  # noqa: E402

__all__ = [
    "HMatrix", "LowRank", "Dense", "Hier", "assemble_hmatrix", "from_dense", "recompress",
    "coarsen", "matvec", "low_rank_update", "dump_blocks_csv", "hcholesky", "HCholeskyFactor",
    "solve_triangular", "CholeskyBreakdown", "Compensation",
]
