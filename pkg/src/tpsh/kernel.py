"""Polyharmonic kernels, polynomial spaces and interpolant evaluation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import core


@dataclass(frozen=True)
class KernelOrder:
    """Smoothness order ``m`` and space dimension ``d`` of the spline.

    Thin-plate splines in the plane are ``m = d = 2``.
    """

    m: int = 2
    d: int = 2

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise ValueError("m and d must be positive integers")
        if 2 * self.m <= self.d:
            raise ValueError(f"need m > d/2, got m={self.m}, d={self.d}")

    @property
    def exponent(self) -> int:
        return 2 * self.m - self.d

    @property
    def nbasis(self) -> int:
        """Dimension of the polynomials of total degree ``m - 1``."""
        return comb(self.m - 1 + self.d, self.d)

    @property
    def is_tps2d(self) -> bool:
        return self.m == 2 and self.d == 2


TPS = KernelOrder(2, 2)


def phi(order: KernelOrder, r):
    """Polyharmonic radial function.

    ``r**(2m-d) * log(r)`` for even ``d`` and ``r**(2m-d)`` for odd ``d``,
    extended by continuity with ``phi(0) = 0``. No sign normalisation is
    applied; the sign only flips the definiteness of the kernel form, not the
    interpolant.
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("phi is defined for r >= 0")
    k = order.exponent
    if order.d % 2:
        return r**k
    out = np.zeros_like(r)
    pos = r > 0
    rp = r[pos]
    out[pos] = rp**k * np.log(rp)
    return out if out.ndim else float(out)


def kernel_matrix(order: KernelOrder, x, y):
    """Kernel block ``phi(|x_i - y_j|)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if order.is_tps2d:
        return core.phi2_matrix(x, y)
    diff = x[:, None, :] - y[None, :, :]
    return phi(order, np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)))


def poly_basis(order) -> list[tuple[int, ...]]:
    """Monomial exponents spanning polynomials of degree ``< m``.

    Graded lexicographic: by total degree, then lexicographically descending
    in the leading variable, so ``(m, d) = (2, 2)`` gives ``1, x, y``.
    ``order`` is a :class:`KernelOrder` or a plain ``(m, d)`` pair; the pair
    form skips the ``m > d/2`` check, which only concerns the kernel.
    """
    m, d = (order.m, order.d) if isinstance(order, KernelOrder) else map(int, order)
    if m < 1 or d < 1:
        raise ValueError("m and d must be positive integers")
    out = []
    for deg in range(m):
        terms = [e for e in itertools.product(range(deg + 1), repeat=d) if sum(e) == deg]
        out.extend(sorted(terms, reverse=True))
    return out


def poly_matrix(order: KernelOrder, x) -> np.ndarray:
    """Evaluate the monomial basis at the rows of ``x``; shape ``(n, Q)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    cols = [np.prod(x**np.asarray(e), axis=1) for e in poly_basis(order)]
    return np.column_stack(cols)


@dataclass
class Interpolant:
    """Kernel expansion ``sum_i c_i phi(|x - x_i|) + sum_j lam_j b_j(x)``."""

    points: np.ndarray
    c: np.ndarray
    lam: np.ndarray
    order: KernelOrder = TPS
    meta: dict = field(default_factory=dict)

    def moment_residual(self) -> float:
        """``max |P^T c|``; zero for a well-formed interpolant."""
        P = poly_matrix(self.order, self.points)
        return float(np.max(np.abs(P.T @ self.c))) if len(self.c) else 0.0

    def __call__(self, x):
        return evaluate(self, x)


def eval_interpolant(s: Interpolant, x) -> float:
    """Value of ``s`` at a single point."""
    return float(evaluate(s, np.asarray(x, dtype=np.float64)[None, :])[0])


def evaluate(s: Interpolant, x, chunk: int = 4096) -> np.ndarray:
    """Evaluate ``s`` at the rows of ``x`` by direct summation."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = poly_matrix(s.order, x) @ s.lam
    if len(s.c) == 0:
        return out
    if s.order.is_tps2d:
        return out + core.phi2_apply(x, s.points, s.c)
    for i in range(0, len(x), chunk):
        out[i:i + chunk] += kernel_matrix(s.order, x[i:i + chunk], s.points) @ s.c
    return out
