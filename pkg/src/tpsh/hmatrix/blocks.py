"""Block types of the hierarchical matrix format and their basic algebra.

A block lives on ``rows x cols`` (two clusters of one cluster tree) and is
one of

* :class:`Dense` -- full array,
* :class:`LowRank` -- factor pair with value ``U @ V.T``,
* :class:`Hier` -- children over ``rows.parts() x cols.parts()``.

Diagonal ``Hier`` blocks carry a ``mode``: ``"full"`` stores every child,
``"sym"`` stores the lower children and mirrors ``children[0][1]`` from
``children[1][0]``, ``"lower"`` treats ``children[0][1]`` as zero.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla


class Dense:
    __slots__ = ("rows", "cols", "a")

    def __init__(self, rows, cols, a):
        self.rows, self.cols, self.a = rows, cols, a

    @property
    def shape(self):
        return self.a.shape

    def storage(self) -> int:
        return self.a.size

    def copy(self):
        return Dense(self.rows, self.cols, self.a.copy())


class LowRank:
    __slots__ = ("rows", "cols", "U", "V")

    def __init__(self, rows, cols, U, V):
        self.rows, self.cols, self.U, self.V = rows, cols, U, V

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    def storage(self) -> int:
        return self.U.size + self.V.size

    def copy(self):
        return LowRank(self.rows, self.cols, self.U.copy(), self.V.copy())

    @classmethod
    def zero(cls, rows, cols):
        return cls(rows, cols, np.zeros((rows.size, 0)), np.zeros((cols.size, 0)))


class Hier:
    __slots__ = ("rows", "cols", "children", "mode")

    def __init__(self, rows, cols, children, mode="full"):
        self.rows, self.cols, self.children, self.mode = rows, cols, children, mode

    @property
    def shape(self):
        return (self.rows.size, self.cols.size)

    def storage(self) -> int:
        return sum(c.storage() for row in self.children for c in row if c is not None)

    def copy(self):
        kids = [[None if c is None else c.copy() for c in row] for row in self.children]
        return Hier(self.rows, self.cols, kids, self.mode)

    def stored(self):
        """``(i, j, child)`` for every stored child."""
        for i, row in enumerate(self.children):
            for j, c in enumerate(row):
                if c is not None:
                    yield i, j, c


def _rel(outer, inner):
    return slice(inner.start - outer.start, inner.stop - outer.start)


class Compensation:
    """Discarded parts of symmetric truncations, waiting for their diagonal blocks.

    Dropping ``E = W S Z^T`` from the lower block ``sigma x tau`` of a
    symmetric matrix and adding ``W S W^T`` to block ``sigma x sigma`` and
    ``Z S Z^T`` to ``tau x tau`` changes the matrix by a positive
    semidefinite term, so positive definiteness survives any truncation.
    The diagonal terms are stored as factors ``F`` (value ``F F^T``) per
    cluster id and added when the diagonal block is next touched.
    """

    def __init__(self):
        self.pending: dict[int, list[np.ndarray]] = {}

    def __bool__(self):
        return bool(self.pending)

    def add(self, cl, F):
        if F.shape[1]:
            self.pending.setdefault(cl.id, []).append(F)

    def merge(self, other):
        for key, parts in other.pending.items():
            self.pending.setdefault(key, []).extend(parts)

    def pop(self, cl):
        """Accumulated factor for ``cl`` (recompressed), or ``None``."""
        parts = self.pending.pop(cl.id, None)
        if not parts:
            return None
        F = np.hstack(parts)
        if F.shape[1] > 1:
            q, r = np.linalg.qr(F)
            lam, z = np.linalg.eigh(r @ r.T)
            lam = np.clip(lam[::-1], 0.0, None)
            z = z[:, ::-1]
            keep = int(np.count_nonzero(lam > 1e-12 * lam[0])) if lam[0] > 0 else 0
            F = q @ (z[:, :keep] * np.sqrt(lam[:keep]))
        return F


def _split(qu, ru, qv, rv, eps, comp, rows, cols):
    # eps < 0 means the absolute threshold -eps
    w, s, zt = np.linalg.svd(ru @ rv.T, full_matrices=False)
    tol = -eps if eps < 0 else eps * (s[0] if s.size else 0.0)
    r = int(np.count_nonzero(s > tol)) if s.size and s[0] > 0 else 0
    if comp is not None and r < s.size and s[r] > 0:
        sq = np.sqrt(s[r:])
        comp.add(rows, qu @ (w[:, r:] * sq))
        comp.add(cols, qv @ (zt[r:].T * sq))
    return qu @ (w[:, :r] * s[:r]), qv @ zt[:r].T


def spectral_norm(b) -> float:
    if b.rank == 0:
        return 0.0
    ru = np.linalg.qr(b.U, mode="r")
    rv = np.linalg.qr(b.V, mode="r")
    return float(np.linalg.norm(ru @ rv.T, 2))


def truncate(U, V, eps, comp=None, rows=None, cols=None):
    """Shortest factor pair with ``|U V^T - U' V'^T|_2 <= eps * sigma_max``.

    With a :class:`Compensation` the dropped part is recorded for the
    diagonal blocks of ``rows`` and ``cols``.
    """
    k = U.shape[1]
    if k == 0:
        return U, V
    qu, ru = np.linalg.qr(U)
    qv, rv = np.linalg.qr(V)
    return _split(qu, ru, qv, rv, eps, comp, rows, cols)


def truncate_dense(a, eps, comp=None, rows=None, cols=None):
    """Truncated SVD factors of a full block."""
    m, n = a.shape
    if m >= n:
        q, r = np.linalg.qr(a)
        return _split(q, r, np.eye(n), np.eye(n), eps, comp, rows, cols)
    q, r = np.linalg.qr(a.T)
    return _split(np.eye(m), r.T, q, np.eye(m), eps, comp, rows, cols)


def to_dense(b) -> np.ndarray:
    m, n = b.shape
    if isinstance(b, Dense):
        return b.a.copy()
    if isinstance(b, LowRank):
        return b.U @ b.V.T
    out = np.zeros((m, n))
    rparts, cparts = b.rows.parts(), b.cols.parts()
    for i, j, c in b.stored():
        rs, cs = _rel(b.rows, rparts[i]), _rel(b.cols, cparts[j])
        out[rs, cs] = to_dense(c)
        if b.mode == "sym" and i != j:
            out[cs, rs] = out[rs, cs].T
    return out


def sub(b, r, c):
    """Read-only sub-block of ``b`` on ``r x c``.

    ``r`` and ``c`` must be ``b``'s own clusters or, where ``b`` is split,
    its children.
    """
    if r is b.rows and c is b.cols:
        return b
    if isinstance(b, Dense):
        return Dense(r, c, b.a[_rel(b.rows, r), _rel(b.cols, c)])
    if isinstance(b, LowRank):
        return LowRank(r, c, b.U[_rel(b.rows, r)], b.V[_rel(b.cols, c)])
    i = b.rows.parts().index(r)
    j = b.cols.parts().index(c)
    child = b.children[i][j]
    if child is None:
        raise ValueError("sub-block of a symmetric or triangular block is not stored")
    return child


def matmat(b, X, out, trans=False, alpha=1.0):
    """``out += alpha * b @ X`` (``b.T @ X`` with ``trans``); 2-D ``X``."""
    if isinstance(b, Dense):
        out += alpha * ((b.a.T if trans else b.a) @ X)
        return out
    if isinstance(b, LowRank):
        if b.rank:
            if trans:
                out += b.V @ (alpha * (b.U.T @ X))
            else:
                out += b.U @ (alpha * (b.V.T @ X))
        return out
    rparts, cparts = b.rows.parts(), b.cols.parts()
    for i, j, c in b.stored():
        rs, cs = _rel(b.rows, rparts[i]), _rel(b.cols, cparts[j])
        if trans:
            matmat(c, X[rs], out[cs], True, alpha)
        else:
            matmat(c, X[cs], out[rs], False, alpha)
        if b.mode == "sym" and i != j:
            if trans:
                matmat(c, X[cs], out[rs], False, alpha)
            else:
                matmat(c, X[rs], out[cs], True, alpha)
    return out


def apply(b, X, trans=False):
    m, n = b.shape
    X2 = X if X.ndim == 2 else X[:, None]
    out = np.zeros(((n if trans else m), X2.shape[1]))
    matmat(b, X2, out, trans)
    return out if X.ndim == 2 else out[:, 0]


def add_lowrank(b, X, Y, eps, comp=None):
    """In place ``b += X Y^T`` with truncation of low-rank targets.

    Returns the (possibly replaced) block.
    """
    if X.shape[1] == 0:
        return b
    if isinstance(b, Dense):
        b.a += X @ Y.T
        return b
    if isinstance(b, LowRank):
        b.U, b.V = truncate(np.hstack([b.U, X]), np.hstack([b.V, Y]), eps, comp, b.rows, b.cols)
        return b
    rparts, cparts = b.rows.parts(), b.cols.parts()
    for i, j, c in list(b.stored()):
        rs, cs = _rel(b.rows, rparts[i]), _rel(b.cols, cparts[j])
        b.children[i][j] = add_lowrank(c, X[rs], Y[cs], eps, comp)
    return b


def add_dense(b, D, eps, comp=None):
    """In place ``b += D`` for a (small) full array ``D``."""
    if isinstance(b, Dense):
        b.a += D
        return b
    if isinstance(b, LowRank):
        b.U, b.V = truncate_dense(D + b.U @ b.V.T, eps, comp, b.rows, b.cols)
        return b
    rparts, cparts = b.rows.parts(), b.cols.parts()
    for i, j, c in list(b.stored()):
        rs, cs = _rel(b.rows, rparts[i]), _rel(b.cols, cparts[j])
        b.children[i][j] = add_dense(c, D[rs, cs], eps, comp)
    return b


def agglomerate(b, eps, comp=None):
    """Merge a ``Hier`` block whose stored children are all low rank."""
    rparts, cparts = b.rows.parts(), b.cols.parts()
    m, n = b.shape
    Us, Vs = [], []
    for i, j, c in b.stored():
        pieces = [(i, j, c.U, c.V)]
        if b.mode == "sym" and i != j:
            pieces.append((j, i, c.V, c.U))
        for ii, jj, U, V in pieces:
            if U.shape[1] == 0:
                continue
            Ub = np.zeros((m, U.shape[1]))
            Vb = np.zeros((n, U.shape[1]))
            Ub[_rel(b.rows, rparts[ii])] = U
            Vb[_rel(b.cols, cparts[jj])] = V
            Us.append(Ub)
            Vs.append(Vb)
    if not Us:
        return LowRank.zero(b.rows, b.cols)
    U, V = truncate(np.hstack(Us), np.hstack(Vs), eps, comp, b.rows, b.cols)
    return LowRank(b.rows, b.cols, U, V)


def addmul(C, A, B, alpha, eps, comp=None):
    """In place ``C += alpha * A @ B.T`` with truncation; returns ``C``.

    ``A`` lives on ``C.rows x K`` and ``B`` on ``C.cols x K`` for a common
    cluster ``K``. A ``"sym"`` target only receives its lower half, so the
    product must be symmetric there. ``comp`` collects the truncation
    remainders when ``C`` belongs to a symmetric matrix that is factorised
    later.
    """
    if isinstance(A, LowRank) or isinstance(B, LowRank):
        if isinstance(A, LowRank):
            if A.rank == 0:
                return C
            X, Y = alpha * A.U, apply(B, A.V)
        else:
            if B.rank == 0:
                return C
            X, Y = alpha * apply(A, B.V), B.U
        return add_lowrank(C, X, Y, eps, comp)
    if isinstance(A, Dense) and isinstance(B, Dense):
        return add_dense(C, alpha * (A.a @ B.a.T), eps, comp)

    K = A.cols
    kparts = K.parts()
    if isinstance(C, Hier):
        rparts, cparts = C.rows.parts(), C.cols.parts()
        for i, j, c in list(C.stored()):
            for k in kparts:
                c = addmul(c, sub(A, rparts[i], k), sub(B, cparts[j], k), alpha, eps, comp)
            C.children[i][j] = c
        return C
    if isinstance(C, LowRank) and not (C.rows.is_leaf and C.cols.is_leaf):
        rparts, cparts = C.rows.parts(), C.cols.parts()
        T = Hier(C.rows, C.cols, [[LowRank.zero(r, c) for c in cparts] for r in rparts])
        # the product may be much larger than C (cancellation), so measure
        # the intermediate truncations against the scale of C itself
        inner = eps
        if C.rank and eps > 0:
            inner = -eps * spectral_norm(C)
        addmul(T, A, B, alpha, inner, comp)
        T = agglomerate(T, inner, comp)
        return add_lowrank(C, T.U, T.V, eps, comp)
    for k in kparts:
        C = addmul(C, sub(A, C.rows, k), sub(B, C.cols, k), alpha, eps, comp)
    return C


def leaves(b, r0=0, c0=0, mirror=False):
    """``(row_offset, col_offset, block, mirrored)`` for every stored leaf.

    ``mirrored`` marks leaves that also stand for their transpose (strictly
    lower leaves inside ``"sym"`` blocks).
    """
    if not isinstance(b, Hier):
        yield r0, c0, b, mirror
        return
    rparts, cparts = b.rows.parts(), b.cols.parts()
    for i, j, c in b.stored():
        yield from leaves(
            c,
            r0 + rparts[i].start - b.rows.start,
            c0 + cparts[j].start - b.cols.start,
            mirror or (b.mode == "sym" and i != j),
        )


def dense_cholesky(a):
    """Lower Cholesky factor of a dense leaf; ``None`` on breakdown."""
    try:
        return sla.cholesky(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None
