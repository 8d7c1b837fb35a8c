"""Acceptance checks with pinned tolerances.

Each check prints one ``PASS``/``FAIL`` line; the lines are repeated in the
terminal summary. The convergence and scaling studies take several minutes
each and carry the ``slow`` marker (deselect with ``-m "not slow"``).
"""
import time

import numpy as np
import pytest

from tpsh import core
from tpsh.bench import StudySpec, TestFunction, convergence_study, fit_rate, get_function, measure_error
from tpsh.dense import assemble_dense, schur_matrix, schur_reduce, select_pivot_points
from tpsh.geometry import Domain, uniform_nodes
from tpsh.hmatrix.chebyshev import interpolated_kernel
from tpsh.kernel import TPS, kernel_matrix, poly_matrix
from tpsh.solve import SolverConfig, TPSSolver, interpolate, interpolate_dense

from conftest import random_unisolvent

SQ = Domain.UNIT_SQUARE
# studies run the factor a little tighter than the solver default; see README
STUDY_CFG = SolverConfig(eps_chol=1e-6)


def _fmt(d):
    return ", ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}" for k, v in d.items())


def _slopes(rows, skip=0):
    out = {}
    for name in dict.fromkeys(r.function for r in rows):
        sel = [r for r in rows if r.function == name][skip:]
        out[name] = fit_rate([r.h for r in sel], [r.err_linf for r in sel])
    return out


def test_c1_polynomial_reproduction(verdict):
    t0 = time.perf_counter()
    lin = TestFunction("lin", lambda y: 0.3 + 2.0 * np.atleast_2d(y)[:, 0] - 1.5 * np.atleast_2d(y)[:, 1])
    fmax = 0.3 + 2.0
    worst = {"dense": 0.0, "hmatrix": 0.0}
    for n in (9, 17, 33, 65):
        x = uniform_nodes(SQ, n).points
        s_d = interpolate_dense(x, lin(x))[0]
        s_h = interpolate(x, lin(x))[0]
        worst["dense"] = max(worst["dense"], measure_error(s_d, lin, SQ, 256)[0] / fmax)
        worst["hmatrix"] = max(worst["hmatrix"], measure_error(s_h, lin, SQ, 256)[0] / fmax)
    dt = time.perf_counter() - t0
    verdict("C1 P1 reproduction (dense, H) <= 1e-8 up to N=4225",
            max(worst.values()) <= 1e-8 and dt < 60,
            f"rel Linf dense={worst['dense']:.2e} H={worst['hmatrix']:.2e}, {dt:.0f}s")


@pytest.mark.slow
def test_c2_uniform_rates(verdict, tmp_path):
    t0 = time.perf_counter()
    spec = StudySpec(domain="square", functions=("expxy", "franke", "r276", "r105"), levels=6,
                     cfg=STUDY_CFG)
    rows = convergence_study(spec, tmp_path / "square_uniform.csv")
    dt = time.perf_counter() - t0
    all6 = _slopes(rows)
    # the coarsest level (N=81) is pre-asymptotic for franke; fit the 5 finest
    fit5 = _slopes(rows, skip=1)
    windows = {"expxy": (1.35, 1.65), "franke": (1.35, 1.65), "r276": (1.35, 1.65), "r105": (0.90, 1.20)}
    print("slopes over all 6 levels:", _fmt(all6))
    ok = all(lo <= fit5[k] <= hi for k, (lo, hi) in windows.items())
    verdict("C2 uniform square slopes (5 finest of 6 levels)", ok and dt <= 900,
            f"{_fmt(fit5)}; largest N={rows[-1].N}, {dt:.0f}s")


@pytest.mark.slow
def test_c3_boundary_concentrated(verdict, tmp_path):
    spec = StudySpec(domain="square", mode="bdry", functions=("expxy", "franke"), levels=4,
                     cfg=STUDY_CFG)
    rows = convergence_study(spec, tmp_path / "square_bdry.csv")
    assert all(r.ok for r in rows)
    sl = _slopes(rows)
    hs = sorted({r.h for r in rows}, reverse=True)
    Ns = [next(r.N for r in rows if r.h == h) for h in hs]
    expo = fit_rate(hs, Ns) * -1
    errs = {k: [f"{r.err_linf:.2e}" for r in rows if r.function == k] for k in sl}
    print("bdry errors:", errs, "N:", Ns)
    slope_ok = all(1.75 <= v <= 2.25 for v in sl.values())
    n_ok = 1.8 <= expo <= 2.2
    try:
        verdict("C3 bdry N vs h exponent in [1.8, 2.2]", n_ok, f"exponent={expo:.3f}, N={Ns}")
    finally:
        verdict("C3 bdry Linf slope in [1.75, 2.25]", slope_ok, _fmt(sl))


def test_c4_chebyshev_decay(verdict):
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 1, (1000, 2))
    y = rng.uniform(3, 4, (1000, 2))
    exact = np.array([core.phi2_matrix(x[i:i + 1], y[i:i + 1])[0, 0] for i in range(len(x))])
    ps = np.arange(2, 11)
    errs = []
    for p in ps:
        U, V = interpolated_kernel([0, 0], [1, 1], [3, 3], [4, 4], int(p), x, y)
        errs.append(np.abs(np.einsum("ik,ik->i", U, V) - exact).max())
    errs = np.array(errs)
    ratios = errs[1:] / errs[:-1]
    b = -np.polyfit(ps, np.log(errs), 1)[0]
    verdict("C4 Chebyshev decay p=2..10", bool(np.all(ratios <= 0.8) and b > 0.3),
            f"b={b:.2f}, max ratio={ratios.max():.3f}")


def test_c5_spd_structure(verdict):
    rng = np.random.default_rng(5)
    min_eig = np.inf
    for _ in range(20):
        n = int(rng.integers(10, 501))
        x = random_unisolvent(rng, n)
        red = schur_reduce(assemble_dense(x), select_pivot_points(x))
        min_eig = min(min_eig, np.linalg.eigvalsh(schur_matrix(red)).min())
    x = random_unisolvent(rng, 300)
    G = kernel_matrix(TPS, x, x)
    Q = np.linalg.svd(poly_matrix(TPS, x), full_matrices=True)[0][:, 3:]
    forms = []
    for _ in range(100):
        c = Q @ rng.standard_normal(Q.shape[1])
        forms.append(c @ G @ c / (c @ c))
    verdict("C5 S SPD on 20 sets, c'Gc > 0 on 100 constrained c", min_eig > 0 and min(forms) > 0,
            f"min eig(S)={min_eig:.2e}, min c'Gc/c'c={min(forms):.2e}")


def test_c6_oracle_equivalence(verdict):
    rng = np.random.default_rng(6)
    x = random_unisolvent(rng, 2000)
    f = get_function("franke")(x)
    s_h, rep = interpolate(x, f, cfg=SolverConfig(p=6, eps_rel=1e-8, cg_tol=1e-10))
    s_d = interpolate_dense(x, f)[0]
    z = rng.random((1000, 2))
    a, b = s_h(z), s_d(z)
    rel = np.abs(a - b).max() / np.abs(b).max()
    verdict("C6 H vs dense interpolant <= 1e-5 rel, N=2000", rel <= 1e-5,
            f"rel diff={rel:.2e}, {rep.iterations} PCG iterations")


def _iterations(n):
    nodes = uniform_nodes(SQ, n)
    solver = TPSSolver(nodes, SolverConfig(eps_chol=1e-4, cg_tol=1e-8))
    _, rep = solver.solve(get_function("franke")(nodes.points), raise_on_failure=False)
    return rep


@pytest.mark.slow
def test_c7_iteration_growth(verdict):
    r1 = _iterations(101)
    verdict("C7 PCG iterations <= 60 at N=1e4", r1.converged and r1.iterations <= 60,
            f"N={r1.n}, iterations={r1.iterations}, residual={r1.residual:.1e}")
    r4 = _iterations(201)
    verdict("C7 PCG iterations at N=4e4 <= 2x those at N=1e4",
            r4.converged and r4.iterations <= 2 * r1.iterations,
            f"N={r4.n}, iterations={r4.iterations} vs {r1.iterations} "
            f"(ratio {r4.iterations / r1.iterations:.2f})")


@pytest.mark.slow
def test_c7_storage_exponent(verdict):
    Ns, op, fac = [], [], []
    for n in (32, 64, 128):
        solver = TPSSolver(uniform_nodes(SQ, n), SolverConfig(eps_chol=1e-4))
        Ns.append(solver.n)
        op.append(solver.h.storage_bytes())
        fac.append(solver.factor.storage_bytes())
    e_op = np.polyfit(np.log(Ns), np.log(op), 1)[0]
    e_fac = np.polyfit(np.log(Ns), np.log(fac), 1)[0]
    verdict("C7 H-matrix storage exponent <= 1.25 over N=2^10..2^14", e_op <= 1.25,
            f"operator exponent={e_op:.3f} (factor {e_fac:.3f}), bytes={op}")


@pytest.mark.slow
def test_c8_lshape_study(verdict, tmp_path):
    spec = StudySpec(domain="lshape", functions=("expxy", "franke", "r276", "r105"), levels=6,
                     cfg=STUDY_CFG)
    rows = convergence_study(spec, tmp_path / "lshape_uniform.csv")
    mono = {}
    for name in spec.functions:
        e = [r.err_linf for r in rows if r.function == name]
        mono[name] = all(r.ok for r in rows) and all(a > b for a, b in zip(e, e[1:]))
    verdict("C8 L-shape study completes with monotone errors", all(mono.values()),
            f"{mono}, largest N={rows[-1].N}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
