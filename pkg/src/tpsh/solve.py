"""Interpolation pipeline: Schur operator, preconditioned CG, reconstruction.

The unknowns of the reduced system are ordered like the cluster tree of the
non-pivot nodes; conversion to and from the original node order happens at
the boundaries of :class:`TPSSolver`.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .cluster import build_block_tree, build_cluster_tree
from .dense import (assemble_dense, check_nodes, reduce_points, schur_backsubstitute,
                    select_pivot_points, solve_dense)
from .hmatrix import DEFAULT_EPS, DEFAULT_P, HMatrix, assemble_hmatrix, coarsen, hcholesky, low_rank_update
from .kernel import TPS, Interpolant, KernelOrder


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the hierarchical solver.

    ``eta = 1`` and ``leaf_size = 64`` differ from the block-tree defaults:
    the tighter admissibility keeps the matrix-vector product accurate
    enough for 1e-5 agreement with the dense solve, and larger leaves make
    the factorisation cheaper without costing CG iterations.
    ``coarsen_operator`` merges low-rank siblings of the assembled ``G22`` at
    ``eps_rel`` before it is used for matrix-vector products.
    """

    p: int = DEFAULT_P
    eta: float = 1.0
    leaf_size: int = 64
    eps_rel: float = DEFAULT_EPS
    eps_chol: float = 1e-4
    cg_tol: float = 1e-8
    cg_maxit: int = 500
    coarsen_operator: bool = True

    def __post_init__(self):
        if not 0.0 < self.cg_tol < 1.0:
            raise ValueError("cg_tol must lie in (0, 1)")
        if self.cg_maxit < 1:
            raise ValueError("cg_maxit must be >= 1")
        if self.p < 0:
            raise ValueError("p must be >= 0")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        if not 0.0 < self.eps_rel < 1.0 or not 0.0 < self.eps_chol < 1.0:
            raise ValueError("tolerances must lie in (0, 1)")


@dataclass
class SolveReport:
    """Outcome of one solve; timings are milliseconds."""

    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    n: int = 0
    nrhs: int = 1
    storage_bytes: int = 0
    factor_bytes: int = 0
    update_rank: int = 0
    timings: dict = field(default_factory=dict)
    residuals: list = field(default_factory=list)

    def to_json(self, timings: bool = True) -> str:
        d = asdict(self)
        if not timings:
            d.pop("timings")
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SolveReport":
        return cls(**json.loads(text))


class SolverError(RuntimeError):
    """Base class of pipeline failures that carry a report."""

    def __init__(self, message, report: SolveReport | None = None):
        super().__init__(message)
        self.report = report


class NotConverged(SolverError):
    """PCG stopped at ``cg_maxit`` above the tolerance."""


class NotPositiveDefinite(SolverError):
    """PCG met ``p^T A p <= 0`` (operator or preconditioner not SPD)."""


def apply_schur(h: HMatrix, red, v):
    """``S v = G22 v - W_row M^{-1} W_col v``.

    ``v`` is in the order of ``red.rest``; ``h`` approximates ``G22`` in the
    cluster order of its tree.
    """
    v = np.asarray(v, dtype=float)
    perm = h.tree.perm
    out = np.empty_like(v)
    out[perm] = h.matvec(v[perm])
    return out - red.correction(v)


def pcg(apply, precond, rhs, cfg: SolverConfig | None = None, tol: float | None = None,
        maxit: int | None = None):
    """Preconditioned CG for one or several right-hand sides (columns).

    Stops when ``|rhs - apply(x)| <= tol |rhs|`` for every column, checked
    with the true residual. Returns ``(x, report)``; ``report.converged`` is
    false when ``maxit`` is reached. Raises :class:`NotPositiveDefinite` on
    non-positive curvature.
    """
    cfg = cfg or SolverConfig()
    tol = cfg.cg_tol if tol is None else tol
    maxit = cfg.cg_maxit if maxit is None else maxit
    precond = precond or (lambda r: r.copy())
    b = np.asarray(rhs, dtype=float)
    vec = b.ndim == 1
    B = b[:, None] if vec else b
    n, k = B.shape
    X = np.zeros((n, k))
    bnorm = np.linalg.norm(B, axis=0)
    report = SolveReport(n=n, nrhs=k)
    target = tol * bnorm
    active = bnorm > 0.0
    R = B.copy()
    res = np.zeros(k)
    res[active] = 1.0
    it = 0
    if active.any():
        Z = precond(R)
        P = Z.copy()
        rz = np.einsum("ij,ij->j", R, Z)
        while it < maxit:
            it += 1
            cols = np.flatnonzero(active)
            AP = apply(P[:, cols])
            pap = np.einsum("ij,ij->j", P[:, cols], AP)
            if np.any(pap <= 0.0):
                report.iterations = it
                report.converged = False
                report.residual = float(np.max(np.linalg.norm(R[:, cols], axis=0) / bnorm[cols]))
                raise NotPositiveDefinite("non-positive curvature in CG", report)
            alpha = rz[cols] / pap
            X[:, cols] += P[:, cols] * alpha
            R[:, cols] -= AP * alpha
            rn = np.linalg.norm(R[:, cols], axis=0)
            hit = rn <= target[cols]
            if hit.any():
                # accept only on the true residual
                sel = cols[hit]
                true = B[:, sel] - apply(X[:, sel])
                tn = np.linalg.norm(true, axis=0)
                ok = tn <= target[sel]
                res[sel[ok]] = tn[ok] / bnorm[sel[ok]]
                active[sel[ok]] = False
                R[:, sel[~ok]] = true[:, ~ok]
                restart = sel[~ok]
            else:
                restart = np.zeros(0, dtype=int)
            report.residuals.append(float(np.max(rn / bnorm[cols])))
            cols = np.flatnonzero(active)
            if cols.size == 0:
                break
            Zc = precond(R[:, cols])
            rz_new = np.einsum("ij,ij->j", R[:, cols], Zc)
            beta = rz_new / rz[cols]
            beta[np.isin(cols, restart)] = 0.0
            P[:, cols] = Zc + P[:, cols] * beta
            rz[cols] = rz_new
        if active.any():
            cols = np.flatnonzero(active)
            res[cols] = np.linalg.norm(B[:, cols] - apply(X[:, cols]), axis=0) / bnorm[cols]
            report.converged = bool(np.all(res[cols] <= tol))
    report.iterations = it
    report.residual = float(res.max()) if k else 0.0
    return (X[:, 0] if vec else X), report


RHS_RTOL = 1e-12


def _ms(t0):
    return round(1000.0 * (time.perf_counter() - t0), 3)


class TPSSolver:
    """Set-up of the hierarchical thin-plate solver for a fixed node set.

    Pivot selection, clustering, H-matrix assembly and the preconditioner do
    not depend on the data, so one instance solves for any number of value
    vectors (``solve`` accepts a matrix with one column per function).
    """

    def __init__(self, nodes, cfg: SolverConfig | None = None):
        t_all = time.perf_counter()
        self.cfg = cfg = cfg or SolverConfig()
        pts = np.asarray(getattr(nodes, "points", nodes), dtype=float)
        self.points = pts
        self.timings = {}
        t0 = time.perf_counter()
        check_nodes(pts, TPS)
        self.pivot = select_pivot_points(pts, TPS)
        self.red = reduce_points(pts, np.zeros(len(pts)), self.pivot, TPS)
        self.update_rank = self.red.observed_rank()
        self.timings["setup"] = _ms(t0)
        self.h = None
        self.factor = None
        if self.red.n_reduced == 0:
            self.timings["total_setup"] = _ms(t_all)
            return
        rest = pts[self.red.rest]
        t0 = time.perf_counter()
        self.tree = build_cluster_tree(rest, cfg.leaf_size)
        self.blocks = build_block_tree(self.tree, cfg.eta)
        self.timings["cluster"] = _ms(t0)
        t0 = time.perf_counter()
        h = assemble_hmatrix(rest, self.blocks, cfg.p, cfg.eps_rel)
        if cfg.coarsen_operator:
            # diagonal blocks stay dense/hierarchical: the factor is built from h
            h = coarsen(h, cfg.eps_rel, inplace=True, keep_diagonal=True)
        self.h = h
        self.timings["assemble"] = _ms(t0)
        perm = self.tree.perm
        X, Y = self.red.correction_factors()
        self._X, self._Y = np.ascontiguousarray(X[perm]), np.ascontiguousarray(Y[perm])
        t0 = time.perf_counter()
        target = low_rank_update(h, -self._X, self._Y, cfg.eps_rel, compensate=True)
        self.timings["update"] = _ms(t0)
        t0 = time.perf_counter()
        self.factor = hcholesky(target, cfg.eps_chol, inplace=True)
        self.timings["factor"] = _ms(t0)
        self.timings["total_setup"] = _ms(t_all)

    @property
    def n(self) -> int:
        return len(self.points)

    def schur(self, v):
        """``S v`` with ``v`` in cluster order (vector or columns)."""
        return self.h.matvec(v) - self._X @ (self._Y.T @ v)

    def precondition(self, r):
        return self.factor.solve_llt(r)

    def report_base(self, nrhs: int) -> SolveReport:
        return SolveReport(
            n=self.n,
            nrhs=nrhs,
            storage_bytes=self.h.storage_bytes() if self.h is not None else 0,
            factor_bytes=self.factor.storage_bytes() if self.factor is not None else 0,
            update_rank=self.update_rank,
            timings=dict(self.timings),
        )

    def solve(self, f_values, raise_on_failure: bool = True):
        """Interpolants for the value vector(s) ``f_values`` and the report.

        Returns one :class:`~tpsh.kernel.Interpolant` for a vector and a list
        for a matrix of columns.
        """
        F = np.asarray(f_values, dtype=float)
        vec = F.ndim == 1
        F2 = F[:, None] if vec else F
        if F2.shape[0] != self.n:
            raise ValueError(f"expected {self.n} values, got {F2.shape[0]}")
        if not np.all(np.isfinite(F2)):
            raise ValueError("function values must be finite")
        red = self.red
        report = self.report_base(F2.shape[1])
        t0 = time.perf_counter()
        F1, F2r = F2[red.pivot], F2[red.rest]
        top = np.vstack([np.zeros_like(F1), F1])
        poly = red.W_row @ red.minv(top)
        rhs = F2r - poly
        # data from P_{m-1} leaves only rounding noise; the exact answer is c2 = 0
        scale = np.linalg.norm(F2r, axis=0) + np.linalg.norm(poly, axis=0)
        rhs[:, np.linalg.norm(rhs, axis=0) <= RHS_RTOL * scale] = 0.0
        if red.n_reduced:
            perm = self.tree.perm
            c_perm, cg = pcg(self.schur, self.precondition, rhs[perm], self.cfg)
            c2 = np.empty_like(c_perm)
            c2[perm] = c_perm
            report.iterations = cg.iterations
            report.residual = cg.residual
            report.converged = cg.converged
            report.residuals = cg.residuals
        else:
            c2 = np.zeros((0, F2.shape[1]))
        report.timings["pcg"] = _ms(t0)
        t0 = time.perf_counter()
        c, lam = schur_backsubstitute(red, c2, F1)
        report.timings["backsubstitute"] = _ms(t0)
        out = [Interpolant(self.points, c[:, j].copy(), lam[:, j].copy(), TPS,
                           {"method": "hmatrix"}) for j in range(F2.shape[1])]
        if raise_on_failure and not report.converged:
            raise NotConverged(f"PCG stopped after {report.iterations} iterations "
                               f"at residual {report.residual:.3e}", report)
        return (out[0] if vec else out), report


def interpolate(nodes, f_values, order: KernelOrder = TPS, cfg: SolverConfig | None = None):
    """Interpolant of ``f_values`` at ``nodes`` and its :class:`SolveReport`.

    The hierarchical path handles ``m = d = 2``; other orders use the dense
    saddle-point solve. Raises :class:`NotConverged` (with the report) if PCG
    does not reach ``cg_tol``.
    """
    pts = np.asarray(getattr(nodes, "points", nodes), dtype=float)
    if not order.is_tps2d:
        return interpolate_dense(pts, f_values, order)
    solver = TPSSolver(pts, cfg)
    return solver.solve(f_values)


def interpolate_dense(nodes, f_values, order: KernelOrder = TPS):
    """Direct solve of the full saddle-point system (reference path)."""
    t0 = time.perf_counter()
    pts = np.asarray(getattr(nodes, "points", nodes), dtype=float)
    f = np.asarray(f_values, dtype=float)
    if f.shape != (len(pts),):
        raise ValueError("need one value per node")
    s = solve_dense(assemble_dense(pts, order, f))
    s.meta["method"] = "dense"
    report = SolveReport(n=len(pts), timings={"dense": _ms(t0)})
    return s, report
