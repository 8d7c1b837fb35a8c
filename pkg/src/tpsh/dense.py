"""Dense saddle-point system, reference solver and Schur-complement reduction.

The constrained interpolation problem is

    [ G    P ] [ c   ]   [ f ]
    [ P^T  0 ] [ lam ] = [ 0 ]

with ``G_ij = phi(|x_i - x_j|)`` and ``P_ij = b_j(x_i)``.  Eliminating ``Q``
pivot points whose rows of ``P`` are invertible leaves a symmetric positive
definite system for the remaining coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .geometry import NodeSet
from .kernel import TPS, Interpolant, KernelOrder, kernel_matrix, poly_matrix

DUPLICATE_RTOL = 1e-12


class UnisolvencyError(ValueError):
    """The nodes do not determine polynomials of degree ``< m`` uniquely."""


class SingularSystemError(np.linalg.LinAlgError):
    """The saddle matrix (or the pivot block) is singular."""


def _points(nodes):
    return nodes.points if isinstance(nodes, NodeSet) else np.atleast_2d(np.asarray(nodes, dtype=float))


def check_nodes(points, order: KernelOrder = TPS) -> None:
    """Reject duplicate points and non-unisolvent sets."""
    from scipy.spatial import cKDTree

    n = len(points)
    if n < order.nbasis:
        raise UnisolvencyError(f"{n} points cannot be unisolvent for {order.nbasis} polynomials")
    if n > 1:
        diam = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
        q = cKDTree(points).query(points, k=2)[0][:, 1].min()
        if q < DUPLICATE_RTOL * max(diam, 1.0):
            raise SingularSystemError("duplicate interpolation points")
    P = poly_matrix(order, points)
    norms = np.linalg.norm(P, axis=0)
    if np.any(norms == 0.0):
        raise UnisolvencyError("points are not unisolvent (P has a zero column)")
    s = np.linalg.svd(P / norms, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise UnisolvencyError("points are not unisolvent (P is rank deficient)")


@dataclass
class SaddleSystem:
    """Dense blocks ``G``, ``P`` and data ``f`` of the constrained kernel system."""

    points: np.ndarray
    G: np.ndarray
    P: np.ndarray
    f: np.ndarray
    order: KernelOrder = TPS

    @property
    def n(self) -> int:
        return len(self.points)

    def matrix(self) -> np.ndarray:
        """Full symmetric saddle matrix ``[[G, P], [P^T, 0]]``."""
        q = self.P.shape[1]
        return np.block([[self.G, self.P], [self.P.T, np.zeros((q, q))]])


def assemble_dense(nodes, order: KernelOrder = TPS, f_values=None) -> SaddleSystem:
    pts = _points(nodes)
    check_nodes(pts, order)
    G = kernel_matrix(order, pts, pts)
    G = 0.5 * (G + G.T)
    P = poly_matrix(order, pts)
    f = np.zeros(len(pts)) if f_values is None else np.asarray(f_values, dtype=float)
    if f.shape[0] != len(pts):
        raise ValueError("f_values length does not match the number of nodes")
    return SaddleSystem(pts, G, P, f, order)


def solve_dense(sys: SaddleSystem) -> Interpolant:
    """Reference solve by a symmetric indefinite (Bunch-Kaufman) factorisation."""
    q = sys.P.shape[1]
    rhs = np.concatenate([sys.f, np.zeros((q,) + sys.f.shape[1:])])
    try:
        sol = sla.solve(sys.matrix(), rhs, assume_a="sym", check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError("non-finite solution")
    return Interpolant(sys.points, sol[:sys.n], sol[sys.n:], sys.order)


def select_pivot_points(nodes, order: KernelOrder = TPS) -> np.ndarray:
    """Choose ``Q`` nodes whose rows of ``P`` form a well-conditioned block.

    For linear polynomials the choice is greedy simplex-volume growth: the
    point of largest norm, then the point farthest from it, then the point
    farthest from the line through the first two (largest triangle). Higher
    degrees use column-pivoted QR on ``P^T``. Ties go to the lowest index.
    """
    pts = _points(nodes)
    qn = order.nbasis
    def first_max(d):
        # rounding must not break ties
        return int(np.flatnonzero(d >= d.max() * (1 - 1e-12))[0])

    if order.m == 2:
        chosen = [first_max(np.einsum("ij,ij->i", pts, pts))]
        while len(chosen) < qn:
            base = pts[chosen[0]]
            E = (pts[chosen[1:]] - base).T
            R = pts - base
            if E.size:
                Qb, _ = np.linalg.qr(E)
                R = R - (R @ Qb) @ Qb.T
            d = np.einsum("ij,ij->i", R, R)
            d[chosen] = -1.0
            chosen.append(first_max(d))
        piv = np.array(chosen)
    else:
        _, _, perm = sla.qr(poly_matrix(order, pts).T, pivoting=True, mode="economic")
        piv = np.sort(perm[:qn])
    P1 = poly_matrix(order, pts[piv])
    if np.linalg.matrix_rank(P1) < qn:
        raise UnisolvencyError("no unisolvent pivot subset found")
    return piv


@dataclass
class SchurReduction:
    """Elimination data for the pivot points and the Lagrange multipliers.

    With ``M = [[P1^T, 0], [G11, P1]]``, ``W_row = [G21, P2]`` and
    ``W_col = [P2^T; G12]`` the reduced operator is
    ``S = G22 - W_row M^{-1} W_col``.  ``rest`` fixes the ordering of the
    reduced unknowns.
    """

    pivot: np.ndarray
    rest: np.ndarray
    M: np.ndarray
    M_lu: tuple
    W_row: np.ndarray
    W_col: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    G22: np.ndarray | None = None

    @property
    def q(self) -> int:
        return len(self.pivot)

    @property
    def n_reduced(self) -> int:
        return len(self.rest)

    def minv(self, b):
        return sla.lu_solve(self.M_lu, b)

    def correction_factors(self):
        """``(X, Y)`` with ``W_row M^{-1} W_col = X Y^T``; rank at most ``2Q``."""
        return self.W_row, self.minv(self.W_col).T

    def correction(self, v):
        return self.W_row @ self.minv(self.W_col @ v)

    def apply(self, G22_apply, v):
        """``S v`` given a callable for ``G22 v``."""
        return G22_apply(v) - self.correction(v)

    def rhs(self):
        """Right-hand side ``f2 - W_row M^{-1} [0; f1]`` of the reduced system."""
        top = np.concatenate([np.zeros_like(self.f1), self.f1])
        return self.f2 - self.W_row @ self.minv(top)

    def observed_rank(self, rtol: float = 1e-12) -> int:
        """Numerical rank of the eliminated correction ``X Y^T``."""
        X, Y = self.correction_factors()
        if X.shape[0] == 0:
            return 0
        _, rx = np.linalg.qr(X)
        _, ry = np.linalg.qr(Y)
        s = np.linalg.svd(rx @ ry.T, compute_uv=False)
        return int(np.count_nonzero(s > rtol * s[0])) if s[0] > 0 else 0


def reduce_points(points, f, pivot, order: KernelOrder = TPS, rest=None) -> SchurReduction:
    """Build the reduction from point data without forming ``G22``."""
    points = np.asarray(points, dtype=float)
    f = np.asarray(f, dtype=float)
    pivot = np.asarray(pivot)
    if rest is None:
        mask = np.ones(len(points), dtype=bool)
        mask[pivot] = False
        rest = np.flatnonzero(mask)
    rest = np.asarray(rest)
    x1, x2 = points[pivot], points[rest]
    P1 = poly_matrix(order, x1)
    P2 = poly_matrix(order, x2)
    G11 = kernel_matrix(order, x1, x1)
    G21 = kernel_matrix(order, x2, x1)
    q = len(pivot)
    M = np.block([[P1.T, np.zeros((q, q))], [G11, P1]])
    M_lu = sla.lu_factor(M, check_finite=False)
    if np.min(np.abs(np.diag(M_lu[0]))) <= 1e-14 * np.max(np.abs(M)):
        raise SingularSystemError("pivot block M is singular")
    W_row = np.hstack([G21, P2])
    W_col = np.vstack([P2.T, G21.T])
    return SchurReduction(pivot, rest, M, M_lu, W_row, W_col, f[pivot], f[rest])


def schur_reduce(sys: SaddleSystem, pivot) -> SchurReduction:
    red = reduce_points(sys.points, sys.f, pivot, sys.order)
    red.G22 = sys.G[np.ix_(red.rest, red.rest)]
    return red


def schur_matrix(red: SchurReduction, G22=None) -> np.ndarray:
    """Dense ``S`` (test oracle)."""
    G22 = red.G22 if G22 is None else G22
    X, Y = red.correction_factors()
    return G22 - X @ Y.T


def schur_backsubstitute(red: SchurReduction, c2, f1=None, order: KernelOrder = TPS, points=None):
    """Recover ``(c, lam)`` in the original node order from the reduced solution ``c2``."""
    f1 = red.f1 if f1 is None else np.asarray(f1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    top = np.concatenate([np.zeros_like(f1), f1])
    sol = red.minv(top - red.W_col @ c2)
    q = red.q
    n = q + red.n_reduced
    c = np.zeros((n,) + c2.shape[1:])
    c[red.pivot] = sol[:q]
    c[red.rest] = c2
    return c, sol[q:]


def solve_schur_dense(sys: SaddleSystem, pivot=None) -> Interpolant:
    """Solve through the Schur complement with a dense Cholesky factorisation."""
    pivot = select_pivot_points(sys.points, sys.order) if pivot is None else pivot
    red = schur_reduce(sys, pivot)
    if red.n_reduced:
        S = schur_matrix(red)
        c2 = sla.cho_solve(sla.cho_factor(0.5 * (S + S.T), lower=True), red.rhs())
    else:
        c2 = np.zeros(0)
    c, lam = schur_backsubstitute(red, c2)
    return Interpolant(sys.points, c, lam, sys.order)
