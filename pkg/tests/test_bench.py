import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tpsh.bench import (CSV_HEADER, ConvergenceRow, StudySpec, TestFunction, convergence_study,
                        eval_test_function, fit_rate, get_function, measure_error, read_study_csv,
                        study_rates, write_plot_script)
from tpsh.dense import assemble_dense, solve_dense
from tpsh.geometry import Domain, uniform_nodes
from tpsh.kernel import TPS, Interpolant, kernel_matrix, poly_matrix
from tpsh.solve import SolverConfig

SQ = Domain.UNIT_SQUARE


def test_test_function_examples():
    assert eval_test_function("expxy", [0.0, 0.0]) == 1.0
    assert eval_test_function("r105", [0.0, 0.0]) == 0.0
    want = (0.75 * math.exp(-2) + 0.75 * math.exp(-(1 / 49 + 0.1)) + 0.5 * math.exp(-14.5)
            - 0.2 * math.exp(-65))
    assert eval_test_function("franke", [0.0, 0.0]) == pytest.approx(want, rel=1e-14)
    assert want == pytest.approx(0.7664, abs=5e-5)


def test_radial_functions_use_distance_from_origin():
    x = np.array([[0.3, 0.4], [-0.3, 0.4]])
    np.testing.assert_allclose(get_function("r276")(x), 0.5**2.76)
    np.testing.assert_allclose(get_function("r105")(x), 0.5**1.05)


def test_unknown_function():
    with pytest.raises(ValueError):
        get_function("sinc")


def test_measure_error_linear_reproduction(rng):
    x = rng.random((60, 2))
    lin = TestFunction("lin", lambda y: 1 + np.atleast_2d(y)[:, 0] - 2 * np.atleast_2d(y)[:, 1])
    s = solve_dense(assemble_dense(x, f_values=lin(x)))
    linf, l2 = measure_error(s, lin, SQ, 256)
    assert linf <= 1e-9 and l2 <= linf


def test_measure_error_zero_interpolant():
    s = Interpolant(np.zeros((1, 2)), np.zeros(1), np.zeros(3))
    linf, l2 = measure_error(s, "expxy", SQ, 128)
    assert linf == pytest.approx(math.e, rel=1e-15)
    assert measure_error(lambda y: np.zeros(len(y)), "expxy", "square", 128)[0] == linf


def test_measure_error_resolution_check():
    s = Interpolant(np.zeros((1, 2)), np.zeros(1), np.zeros(3))
    with pytest.raises(ValueError):
        measure_error(s, "expxy", SQ, 100)


def test_measure_error_independent_dense_script():
    # independent path: full saddle matrix by broadcasting, LU solve, direct sums
    x = uniform_nodes(SQ, 17).points
    f = get_function("franke")(x)
    r = np.linalg.norm(x[:, None] - x[None], axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        G = np.where(r > 0, r * r * np.log(r), 0.0)
    P = np.column_stack([np.ones(len(x)), x])
    A = np.block([[G, P], [P.T, np.zeros((3, 3))]])
    sol = np.linalg.solve(A, np.concatenate([f, np.zeros(3)]))
    t = np.arange(512) / 511
    g = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
    vals = np.empty(len(g))
    for i in range(0, len(g), 4096):
        gi = g[i:i + 4096]
        rr = np.linalg.norm(gi[:, None] - x[None], axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            K = np.where(rr > 0, rr * rr * np.log(rr), 0.0)
        vals[i:i + 4096] = K @ sol[:289] + sol[289] + gi @ sol[290:]
    want = np.abs(vals - get_function("franke")(g)).max()
    s = solve_dense(assemble_dense(x, f_values=f))
    got = measure_error(s, "franke", SQ, 512)[0]
    assert got == pytest.approx(want, rel=5e-3)


def test_fit_rate_examples():
    h = 2.0 ** -np.arange(1, 7)
    assert fit_rate(h, h**2) == pytest.approx(2.0, abs=1e-12)
    assert fit_rate(h, np.full(6, 3.0)) == pytest.approx(0.0, abs=1e-12)
    noise = 1 + 0.01 * np.random.default_rng(0).uniform(-1, 1, 6)
    assert fit_rate(h, h**1.5 * noise) == pytest.approx(1.5, abs=0.05)


@pytest.mark.parametrize("h,e", [([1, 2], [1, 2]), ([1, 2, 0], [1, 2, 3]), ([1, 2, 3], [1, -2, 3]),
                                 ([1, 2, 3], [1, 2])])
def test_fit_rate_errors(h, e):
    with pytest.raises(ValueError):
        fit_rate(h, e)


@given(st.floats(-3, 3), st.floats(1e-6, 1e6), st.lists(st.floats(0.5, 2.0), min_size=4, max_size=8))
def test_fit_rate_scale_invariant(rate, kappa, jitter):
    h = 2.0 ** -np.arange(len(jitter))
    e = h**rate * np.array(jitter)
    assert fit_rate(h, kappa * e) == pytest.approx(fit_rate(h, e), abs=1e-9)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.sampled_from(["expxy", "franke"]), st.integers(1, 10**7), finite, finite, finite, finite,
       st.integers(-1, 500), st.floats(0, 1e9))
def test_csv_row_round_trip(name, n, h, hmin, e1, e2, it, ms):
    row = ConvergenceRow(name, "square", "uniform", n, h, hmin, e1, e2, it, ms)
    assert ConvergenceRow.from_csv(row.to_csv()) == row


def test_single_level_linear_study(tmp_path):
    lin = TestFunction("lin", lambda y: 0.5 - np.atleast_2d(y)[:, 0] + np.atleast_2d(y)[:, 1])
    rows = convergence_study(StudySpec(functions=(lin,), levels=1, resolution=128), tmp_path / "s.csv")
    assert len(rows) == 1 and rows[0].err_linf <= 1e-9 and rows[0].iters == 0


def test_uniform_study_franke_monotone(tmp_path):
    out = tmp_path / "study.csv"
    spec = StudySpec(domain="square", functions=("franke",), levels=4, resolution=256)
    rows = convergence_study(spec, out)
    errs = [r.err_linf for r in rows]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert [r.N for r in rows] == [81, 289, 1089, 4225]
    assert all(a.h > b.h for a, b in zip(rows, rows[1:]))
    back = read_study_csv(out)
    assert back == rows
    text = out.read_bytes()
    assert text.splitlines()[0] == ",".join(CSV_HEADER).encode() and b"\r" not in text


def test_bdry_study_sets_hmin(tmp_path):
    spec = StudySpec(mode="bdry", functions=("expxy",), levels=2, resolution=128, method="dense")
    rows = convergence_study(spec)
    assert [r.h for r in rows] == [0.25, 0.125]
    for r in rows:
        assert r.hmin == r.h**2 and r.mode == "bdry"


def test_study_is_reproducible():
    spec = StudySpec(functions=("r105", "expxy"), levels=2, resolution=128)
    a, b = convergence_study(spec), convergence_study(spec)
    assert [(r.N, r.err_linf, r.err_l2, r.iters) for r in a] == [(r.N, r.err_linf, r.err_l2, r.iters) for r in b]


def test_study_records_failures_and_continues(tmp_path):
    spec = StudySpec(functions=("franke",), levels=2, start=3, resolution=128,
                     cfg=SolverConfig(cg_maxit=1))
    msgs = []
    rows = convergence_study(spec, tmp_path / "f.csv", log=msgs.append)
    assert len(rows) == 2
    assert rows[0].ok and not rows[1].ok and math.isnan(rows[1].err_linf)
    assert any("failed" in m for m in msgs)
    assert len(read_study_csv(tmp_path / "f.csv")) == 2


def test_study_spec_validation():
    with pytest.raises(ValueError):
        StudySpec(mode="random")
    with pytest.raises(ValueError):
        StudySpec(method="fmm")
    with pytest.raises(ValueError):
        StudySpec(levels=0)
    with pytest.raises(ValueError):
        StudySpec(functions=("nope",))
    assert StudySpec(mode="bdry").start == 2 and StudySpec().start == 3


def test_study_rates_and_plot_script(tmp_path):
    rows = [ConvergenceRow("a", "square", "uniform", 4**k, 2.0**-k, 2.0**-k, 2.0**(-2 * k), 1.0, 0, 1.0)
            for k in range(1, 5)]
    assert study_rates(rows)["a"] == pytest.approx(2.0)
    assert study_rates(rows, "N")["a"] == pytest.approx(-1.0)
    assert study_rates(rows, norm="l2")["a"] == pytest.approx(0.0)
    csv_path = tmp_path / "s.csv"
    csv_path.write_text("\n".join([",".join(CSV_HEADER)] + [",".join(r.to_csv()) for r in rows]) + "\n")
    script = write_plot_script(tmp_path / "s.csv", tmp_path / "s.gp", image=tmp_path / "s.png")
    text = script.read_text()
    assert "s.csv" in text and "logscale" in text and "s.png" in text
