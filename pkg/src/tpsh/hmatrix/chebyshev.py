"""Tensor Chebyshev interpolation of the thin-plate kernel on cluster boxes."""

from __future__ import annotations

import numpy as np

from .. import core

# boxes thinner than this fraction of the longest side are padded
_MIN_WIDTH = 1e-10


def cheb_points(p: int) -> np.ndarray:
    """Chebyshev points of the first kind on ``[-1, 1]``, degree ``p``."""
    k = np.arange(p + 1)
    return np.cos((2 * k + 1) * np.pi / (2 * p + 2))


def lagrange_1d(p: int, t) -> np.ndarray:
    """Lagrange basis at Chebyshev points, evaluated at ``t``; shape ``(len(t), p+1)``."""
    t = np.asarray(t, dtype=float)
    nodes = cheb_points(p)
    if p == 0:
        return np.ones((len(t), 1))
    k = np.arange(p + 1)
    w = (-1.0) ** k * np.sin((2 * k + 1) * np.pi / (2 * p + 2))
    diff = t[:, None] - nodes[None, :]
    hit = diff == 0.0
    diff[hit] = 1.0
    terms = w / diff
    out = terms / terms.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    if rows.any():
        out[rows] = hit[rows].astype(float)
    return out


def _padded_box(lo, hi):
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
    width = hi - lo
    pad = max(_MIN_WIDTH * max(width.max(), 1.0), 0.0)
    thin = width < pad
    lo[thin] -= 0.5 * pad
    hi[thin] += 0.5 * pad
    return lo, hi


def box_nodes(lo, hi, p: int) -> np.ndarray:
    """Tensor Chebyshev grid of a box; ``(p+1)^2`` points, first axis slowest."""
    lo, hi = _padded_box(lo, hi)
    t = cheb_points(p)
    gx = 0.5 * (lo[0] + hi[0]) + 0.5 * (hi[0] - lo[0]) * t
    gy = 0.5 * (lo[1] + hi[1]) + 0.5 * (hi[1] - lo[1]) * t
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def box_lagrange(lo, hi, p: int, x) -> np.ndarray:
    """Tensor Lagrange basis of the box evaluated at ``x``; shape ``(len(x), (p+1)^2)``."""
    lo, hi = _padded_box(lo, hi)
    x = np.atleast_2d(x)
    tx = (2 * x[:, 0] - lo[0] - hi[0]) / (hi[0] - lo[0])
    ty = (2 * x[:, 1] - lo[1] - hi[1]) / (hi[1] - lo[1])
    Lx = lagrange_1d(p, tx)
    Ly = lagrange_1d(p, ty)
    return (Lx[:, :, None] * Ly[:, None, :]).reshape(len(x), -1)


def interpolated_kernel(lo_s, hi_s, lo_t, hi_t, p: int, x, y):
    """Raw factors ``(U, V)`` of the interpolated kernel on ``x x y``.

    ``U V^T`` approximates ``phi_2(|x_i - y_j|)`` with rank ``(p+1)^2``; the
    node-to-node kernel matrix is folded into ``V``.
    """
    U = box_lagrange(lo_s, hi_s, p, x)
    K = core.phi2_matrix(box_nodes(lo_s, hi_s, p), box_nodes(lo_t, hi_t, p))
    V = box_lagrange(lo_t, hi_t, p, y) @ K.T
    return U, V


class ClusterBasis:
    """Per-cluster Chebyshev data, computed once and shared by all blocks."""

    def __init__(self, points, p: int):
        self.points = points
        self.p = p
        self._cache = {}

    def get(self, cl):
        hit = self._cache.get(cl.id)
        if hit is None:
            nodes = box_nodes(cl.lo, cl.hi, self.p)
            L = box_lagrange(cl.lo, cl.hi, self.p, self.points[cl.start:cl.stop])
            Q, R = np.linalg.qr(L)
            hit = self._cache[cl.id] = (nodes, L, Q, R)
        return hit
