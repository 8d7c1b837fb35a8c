import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import corners
from tpsh.kernel import (TPS, Interpolant, KernelOrder, eval_interpolant, evaluate, kernel_matrix,
                         phi, poly_basis, poly_matrix)


@pytest.mark.parametrize("m,d,r,want", [
    (2, 2, 1.0, 0.0),
    (2, 2, 0.0, 0.0),
    (2, 3, 0.5, 0.5),
    (2, 2, math.e, math.e ** 2),
])
def test_phi_examples(m, d, r, want):
    assert phi(KernelOrder(m, d), r) == pytest.approx(want, abs=1e-15, rel=1e-12)


def test_phi_rejects_negative_radius():
    with pytest.raises(ValueError):
        phi(TPS, -1.0)


def test_order_requires_m_above_half_d():
    with pytest.raises(ValueError):
        KernelOrder(1, 2)
    with pytest.raises(ValueError):
        KernelOrder(0, 1)


@given(st.floats(1e-300, 1e-3))
def test_phi_continuous_at_zero(r):
    assert abs(phi(TPS, r)) <= 1e-3


@given(st.floats(1e-3, 10.0))
def test_phi_smooth_derivative(r):
    # d/dr r^2 log r = r (2 log r + 1)
    h = 1e-6 * r
    fd = (phi(TPS, r + h) - phi(TPS, r - h)) / (2 * h)
    assert fd == pytest.approx(r * (2 * math.log(r) + 1), rel=1e-5, abs=1e-8)


def test_poly_basis_examples():
    assert poly_basis(KernelOrder(2, 2)) == [(0, 0), (1, 0), (0, 1)]
    assert poly_basis((1, 2)) == [(0, 0)]
    assert poly_basis(KernelOrder(3, 2)) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


@pytest.mark.parametrize("m", [1, 2, 3, 4])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_poly_basis_size(m, d):
    assert len(poly_basis((m, d))) == math.comb(m - 1 + d, d)
    if 2 * m > d:
        assert KernelOrder(m, d).nbasis == len(poly_basis(KernelOrder(m, d)))


def test_poly_matrix_columns():
    x = np.array([[2.0, 3.0]])
    np.testing.assert_array_equal(poly_matrix(KernelOrder(3, 2), x), [[1, 2, 3, 4, 6, 9]])


def test_eval_constant_part():
    s = Interpolant(corners(), np.zeros(4), np.array([1.0, 0.0, 0.0]))
    assert eval_interpolant(s, np.array([0.3, 0.7])) == 1.0


def test_eval_single_node():
    s = Interpolant(np.zeros((1, 2)), np.zeros(1), np.array([2.0, 0.0, 0.0]))
    assert eval_interpolant(s, np.array([0.3, 0.4])) == 2.0


def test_eval_corners_xy_matches_generic_elimination():
    x = corners()
    f = x[:, 0] * x[:, 1]
    G = kernel_matrix(TPS, x, x)
    P = poly_matrix(TPS, x)
    A = np.block([[G, P], [P.T, np.zeros((3, 3))]])
    sol = np.linalg.solve(A, np.concatenate([f, np.zeros(3)]))
    s = Interpolant(x, sol[:4], sol[4:])
    want = sum(sol[i] * phi(TPS, np.linalg.norm(x[i] - 0.5)) for i in range(4)) \
        + sol[4] + 0.5 * sol[5] + 0.5 * sol[6]
    assert eval_interpolant(s, np.array([0.5, 0.5])) == pytest.approx(want, rel=1e-13)


def test_constant_shift_of_kernel_is_invisible(rng):
    # sum c_i = 0 makes phi -> phi + kappa irrelevant
    x = rng.random((30, 2))
    P = poly_matrix(TPS, x)
    c = rng.standard_normal(30)
    c -= P @ np.linalg.lstsq(P, c, rcond=None)[0]
    s = Interpolant(x, c, rng.standard_normal(3))
    y = rng.random((50, 2))
    base = evaluate(s, y)
    for kappa in (-3.0, 0.5, 10.0):
        shifted = (kernel_matrix(TPS, y, x) + kappa) @ c + poly_matrix(TPS, y) @ s.lam
        np.testing.assert_allclose(shifted, base, atol=1e-12 * (1 + abs(kappa)) * np.abs(c).sum())


def test_evaluate_general_order_matches_direct_sum(rng):
    order = KernelOrder(3, 2)
    x = rng.random((12, 2))
    c = rng.standard_normal(12)
    lam = rng.standard_normal(order.nbasis)
    s = Interpolant(x, c, lam, order)
    y = rng.random((5, 2))
    r = np.linalg.norm(y[:, None] - x[None], axis=2)
    want = phi(order, r) @ c + poly_matrix(order, y) @ lam
    np.testing.assert_allclose(evaluate(s, y), want, rtol=1e-12)


def test_moment_residual(rng):
    x = rng.random((10, 2))
    s = Interpolant(x, np.ones(10), np.zeros(3))
    assert s.moment_residual() == pytest.approx(10.0)
