"""Test functions, error measurement and convergence studies."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import core
from .geometry import (DEFAULT_RESOLUTION, Domain, NodeSet, boundary_concentrated_nodes,
                       uniform_nodes)
from .kernel import TPS, Interpolant, poly_matrix
from .solve import SolverConfig, SolverError, TPSSolver, interpolate_dense

CSV_HEADER = ["function", "domain", "mode", "N", "h", "hmin", "err_linf", "err_l2", "iters", "ms"]
MODES = ("uniform", "bdry")
METHODS = ("dense", "hmatrix")


def _xy(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x[:, 0], x[:, 1]


def r105(x):
    a, b = _xy(x)
    return np.hypot(a, b) ** 1.05


def r276(x):
    a, b = _xy(x)
    return np.hypot(a, b) ** 2.76


def expxy(x):
    a, b = _xy(x)
    return np.exp(a * b)


def franke(x):
    """Franke-type test function; the second bump is
    ``0.75 exp(-(9x+1)^2/49 - 0.1 (9y+1)^2)``."""
    a, b = _xy(x)
    return (0.75 * np.exp(-0.25 * ((9 * a - 2) ** 2 + (9 * b - 2) ** 2))
            + 0.75 * np.exp(-(9 * a + 1) ** 2 / 49.0 - 0.1 * (9 * b + 1) ** 2)
            + 0.5 * np.exp(-0.25 * ((9 * a - 7) ** 2 + (9 * b - 3) ** 2))
            - 0.2 * np.exp(-(9 * a - 4) ** 2 - (9 * b - 7) ** 2))


@dataclass(frozen=True)
class TestFunction:
    name: str
    f: Callable

    __test__ = False  # not a pytest class

    def __call__(self, x):
        return self.f(x)


TEST_FUNCTIONS = {t.name: t for t in (TestFunction("r105", r105), TestFunction("r276", r276),
                                      TestFunction("expxy", expxy), TestFunction("franke", franke))}


def get_function(t) -> TestFunction:
    if isinstance(t, TestFunction):
        return t
    try:
        return TEST_FUNCTIONS[t]
    except KeyError:
        raise ValueError(f"unknown test function {t!r}; expected one of {sorted(TEST_FUNCTIONS)}") from None


def eval_test_function(t, x):
    """Value(s) of a test function; a single point gives a float."""
    x = np.asarray(x, dtype=float)
    out = get_function(t)(x)
    return float(out[0]) if x.ndim == 1 else out


def evaluate_many(interpolants, x, chunk: int = 8192) -> np.ndarray:
    """Values of several interpolants on one node set; shape ``(len(x), k)``.

    The kernel sum is shared between the interpolants, so ``k`` functions
    cost about as much as one.
    """
    s0 = interpolants[0]
    if any(s.points is not s0.points and not np.array_equal(s.points, s0.points) for s in interpolants):
        raise ValueError("interpolants must share their nodes")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    C = np.column_stack([s.c for s in interpolants])
    Lam = np.column_stack([s.lam for s in interpolants])
    out = np.empty((len(x), len(interpolants)))
    for i in range(0, len(x), chunk):
        xi = x[i:i + chunk]
        out[i:i + chunk] = poly_matrix(s0.order, xi) @ Lam
        if len(s0.c):
            if s0.order.is_tps2d:
                out[i:i + chunk] += core.phi2_apply(xi, s0.points, C)
            else:
                from .kernel import kernel_matrix
                out[i:i + chunk] += kernel_matrix(s0.order, xi, s0.points) @ C
    return out


def _errors(values, exact):
    diff = np.abs(values - exact)
    return float(diff.max()), float(np.sqrt(np.mean(diff * diff)))


def measure_error(s, t, domain: Domain, resolution: int = DEFAULT_RESOLUTION):
    """``(Linf, RMS)`` of ``s - t`` over the domain-restricted sample grid.

    ``s`` is an :class:`~tpsh.kernel.Interpolant` or any callable on point
    arrays.
    """
    if resolution < 128:
        raise ValueError("resolution must be >= 128")
    x = Domain.parse(domain).sample_grid(resolution) if isinstance(domain, str) else domain.sample_grid(resolution)
    vals = evaluate_many([s], x)[:, 0] if isinstance(s, Interpolant) else np.asarray(s(x), dtype=float)
    return _errors(vals, get_function(t)(x))


def fit_rate(h_values, e_values) -> float:
    """Least-squares slope of ``log e`` against ``log h``."""
    h = np.asarray(h_values, dtype=float)
    e = np.asarray(e_values, dtype=float)
    if h.shape != e.shape or h.ndim != 1:
        raise ValueError("h and e must be 1-D of equal length")
    if len(h) < 3:
        raise ValueError("need at least 3 levels")
    if np.any(h <= 0) or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("h and e must be positive")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


@dataclass
class ConvergenceRow:
    function: str
    domain: str
    mode: str
    N: int
    h: float
    hmin: float
    err_linf: float
    err_l2: float
    iters: int
    ms: float

    def to_csv(self) -> list[str]:
        return [self.function, self.domain, self.mode, str(self.N), f"{self.h:.17g}",
                f"{self.hmin:.17g}", f"{self.err_linf:.17g}", f"{self.err_l2:.17g}",
                str(self.iters), f"{self.ms:.17g}"]

    @classmethod
    def from_csv(cls, rec) -> "ConvergenceRow":
        return cls(rec[0], rec[1], rec[2], int(rec[3]), float(rec[4]), float(rec[5]),
                   float(rec[6]), float(rec[7]), int(rec[8]), float(rec[9]))

    @property
    def ok(self) -> bool:
        return math.isfinite(self.err_linf)


def read_study_csv(path) -> list[ConvergenceRow]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [ConvergenceRow.from_csv(r) for r in rd if r]


@dataclass
class StudySpec:
    """One refinement study.

    Uniform mode uses grids with ``n = 2^(k+start) + 1`` points per side;
    boundary-concentrated mode uses ``h = 2^-(k+start)`` and
    ``h_min = h^2``. ``start`` defaults to 3 (uniform) and 2 (bdry).
    """

    domain: Domain = Domain.UNIT_SQUARE
    mode: str = "uniform"
    functions: tuple = ("r105", "r276", "expxy", "franke")
    levels: int = 6
    method: str = "hmatrix"
    cfg: SolverConfig = field(default_factory=SolverConfig)
    resolution: int = DEFAULT_RESOLUTION
    start: int | None = None
    delta: float = 1.0

    def __post_init__(self):
        if isinstance(self.domain, str):
            self.domain = Domain.parse(self.domain)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if isinstance(self.functions, str):
            self.functions = (self.functions,)
        for name in self.functions:
            get_function(name)
        if self.start is None:
            self.start = 3 if self.mode == "uniform" else 2

    def node_sets(self):
        for k in range(self.levels):
            j = self.start + k
            if self.mode == "uniform":
                nodes = uniform_nodes(self.domain, 2 ** j + 1, self.resolution)
                yield nodes, nodes.h, nodes.h
            else:
                h = 2.0 ** -j
                nodes = boundary_concentrated_nodes(self.domain, h, h * h, self.delta, self.resolution)
                yield nodes, h, h * h


def _solve_level(spec: StudySpec, nodes: NodeSet, funcs):
    F = np.column_stack([t(nodes.points) for t in funcs])
    if spec.method == "dense":
        out = [interpolate_dense(nodes, F[:, j])[0] for j in range(F.shape[1])]
        return out, 0
    solver = TPSSolver(nodes, spec.cfg)
    out, rep = solver.solve(F)
    return out, rep.iterations


def convergence_study(spec: StudySpec, out=None, log=None) -> list[ConvergenceRow]:
    """Run the study level by level; rows are appended to ``out`` as they finish.

    All functions of a level share one node set, one solver set-up and one
    evaluation pass; ``ms`` is the wall time of the level's solve (set-up
    plus CG) and is the same in each of its rows. A failed level is recorded
    with NaN errors and the study goes on. For uniform nodes ``h`` is the
    sampled fill distance and ``hmin`` equals it; in bdry mode they are the
    generator parameters ``h`` and ``h^2``.
    """
    funcs = [get_function(t) for t in spec.functions]
    rows: list[ConvergenceRow] = []
    fh = writer = None
    if out is not None:
        fh = open(out, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        fh.flush()
    try:
        for nodes, h, hmin in spec.node_sets():
            t0 = time.perf_counter()
            try:
                interps, iters = _solve_level(spec, nodes, funcs)
                ms = 1000.0 * (time.perf_counter() - t0)
                x = spec.domain.sample_grid(spec.resolution)
                vals = evaluate_many(interps, x)
                errs = [_errors(vals[:, j], t(x)) for j, t in enumerate(funcs)]
            except (SolverError, np.linalg.LinAlgError) as exc:
                ms = 1000.0 * (time.perf_counter() - t0)
                rep = getattr(exc, "report", None)
                iters = rep.iterations if rep is not None else -1
                errs = [(math.nan, math.nan)] * len(funcs)
                if log:
                    log(f"level N={len(nodes)} failed: {exc}")
            for t, (einf, e2) in zip(funcs, errs):
                row = ConvergenceRow(t.name, spec.domain.value, spec.mode, len(nodes), h, hmin,
                                     einf, e2, iters, ms)
                rows.append(row)
                if writer is not None:
                    writer.writerow(row.to_csv())
            if fh is not None:
                fh.flush()
            if log:
                log(f"N={len(nodes)} h={h:.4g} iters={iters} ms={ms:.0f} "
                    + " ".join(f"{t.name}={e[0]:.3e}" for t, e in zip(funcs, errs)))
    finally:
        if fh is not None:
            fh.close()
    return rows


def study_rates(rows, against: str = "h", norm: str = "linf") -> dict[str, float]:
    """Fitted slope per function (``against`` is ``"h"`` or ``"N"``)."""
    out = {}
    for name in dict.fromkeys(r.function for r in rows):
        sel = [r for r in rows if r.function == name and r.ok]
        if len(sel) < 3:
            continue
        x = [r.h if against == "h" else r.N for r in sel]
        e = [r.err_linf if norm == "linf" else r.err_l2 for r in sel]
        out[name] = fit_rate(x, e)
    return out


def write_plot_script(csv_path, script_path, title: str = "TPS interpolation", image=None) -> Path:
    """gnuplot script drawing error against N and against h from a study CSV."""
    csv_path = Path(csv_path)
    image = Path(image) if image else csv_path.with_suffix(".png")
    names = []
    for r in read_study_csv(csv_path):
        if r.function not in names:
            names.append(r.function)

    def plot(xcol, ycol):
        parts = [f"'{csv_path.name}' every ::1 using (strcol(1) eq '{n}' ? ${xcol} : NaN):{ycol} "
                 f"with linespoints title '{n}'" for n in names]
        return "plot " + ", \\\n     ".join(parts)

    lines = [
        f"# usage: gnuplot {Path(script_path).name}  (run next to {csv_path.name})",
        "set datafile separator ','",
        "set terminal pngcairo size 1200,900",
        f"set output '{image.name}'",
        "set logscale xy",
        "set format y '10^{%L}'",
        "set grid",
        "set multiplot layout 2,2 title '" + title + "'",
        "set xlabel 'N'", "set ylabel 'L-infinity error'", plot(4, 7),
        "set ylabel 'L2 (RMS) error'", plot(4, 8),
        "set xlabel 'h'", "set ylabel 'L-infinity error'", plot(5, 7),
        "set ylabel 'L2 (RMS) error'", plot(5, 8),
        "unset multiplot",
    ]
    script_path = Path(script_path)
    script_path.write_text("\n".join(lines) + "\n")
    return script_path
