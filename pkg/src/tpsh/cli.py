"""Command-line interface: ``tpsh {nodes,interpolate,study,blockstructure}``.

Exit codes: 0 success, 2 solver non-convergence, 3 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (TEST_FUNCTIONS, StudySpec, convergence_study, evaluate_many, get_function,
                    measure_error, study_rates, write_plot_script)
from .cluster import build_block_tree, build_cluster_tree
from .dense import SingularSystemError, UnisolvencyError, select_pivot_points
from .geometry import (DEFAULT_RESOLUTION, Domain, boundary_concentrated_nodes, read_nodes,
                       uniform_nodes, write_nodes)
from .hmatrix import DEFAULT_EPS, DEFAULT_P, assemble_hmatrix, dump_blocks_csv
from .solve import SolverConfig, SolverError, TPSSolver, interpolate_dense

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INVALID = 3


class InvalidInput(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--p", type=int, default=DEFAULT_P, help="Chebyshev degree per axis")
    g.add_argument("--eta", type=float, default=SolverConfig.eta, help="admissibility parameter")
    g.add_argument("--leaf", type=int, default=SolverConfig.leaf_size, help="cluster leaf size")
    g.add_argument("--eps", type=float, default=DEFAULT_EPS, help="H-matrix recompression tolerance")
    g.add_argument("--epschol", type=float, default=SolverConfig.eps_chol,
                   help="truncation tolerance of the approximate Cholesky factor")
    g.add_argument("--cgtol", type=float, default=SolverConfig.cg_tol, help="relative CG residual")
    g.add_argument("--cgmaxit", type=int, default=SolverConfig.cg_maxit)


def _config(a) -> SolverConfig:
    try:
        return SolverConfig(p=a.p, eta=a.eta, leaf_size=a.leaf, eps_rel=a.eps, eps_chol=a.epschol,
                            cg_tol=a.cgtol, cg_maxit=a.cgmaxit)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tpsh", description="Thin-plate spline interpolation with H-matrices.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("nodes", help="generate a node file")
    p.add_argument("--domain", choices=[d.value for d in Domain], default="square")
    p.add_argument("--mode", choices=["uniform", "bdry"], default="uniform")
    p.add_argument("--n", type=int, help="points per side (uniform)")
    p.add_argument("--h", type=float, help="interior spacing (bdry)")
    p.add_argument("--hmin", type=float, help="spacing at the boundary (bdry, default h^2)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("interpolate", help="interpolate a test function at a node file")
    p.add_argument("--nodes", required=True)
    p.add_argument("--function", choices=sorted(TEST_FUNCTIONS), required=True)
    p.add_argument("--method", choices=["dense", "hmatrix"], default="hmatrix")
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION,
                   help="error sampling grid per axis (0 skips the error)")
    p.add_argument("--values", help="write interpolant values at the nodes to this file")
    _solver_flags(p)

    p = sub.add_parser("study", help="convergence study written as CSV")
    p.add_argument("--domain", choices=[d.value for d in Domain], default="square")
    p.add_argument("--mode", choices=["uniform", "bdry"], default="uniform")
    p.add_argument("--function", nargs="+", default=sorted(TEST_FUNCTIONS),
                   choices=sorted(TEST_FUNCTIONS))
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--start", type=int, help="first level exponent (default 3 uniform, 2 bdry)")
    p.add_argument("--method", choices=["dense", "hmatrix"], default="hmatrix")
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="gnuplot script path (default: next to the CSV)")
    p.add_argument("--quiet", action="store_true")
    _solver_flags(p)

    p = sub.add_parser("blockstructure", help="dump the H-matrix block structure of G22")
    p.add_argument("--nodes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--p", type=int, default=DEFAULT_P)
    p.add_argument("--eta", type=float, default=SolverConfig.eta)
    p.add_argument("--leaf", type=int, default=SolverConfig.leaf_size)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    return ap


def _read_nodes(path):
    if not Path(path).is_file():
        raise InvalidInput(f"no such node file: {path}")
    try:
        return read_nodes(path)
    except (ValueError, OSError) as exc:
        raise InvalidInput(f"cannot read {path}: {exc}") from None


def cmd_nodes(a):
    dom = Domain.parse(a.domain)
    if a.mode == "uniform":
        if a.n is None:
            raise InvalidInput("--n is required for uniform nodes")
        nodes = uniform_nodes(dom, a.n)
    else:
        if a.h is None:
            raise InvalidInput("--h is required for bdry nodes")
        hmin = a.hmin if a.hmin is not None else a.h * a.h
        nodes = boundary_concentrated_nodes(dom, a.h, hmin)
    write_nodes(a.out, nodes)
    print(json.dumps({"N": len(nodes), "h": nodes.h, "q": nodes.q, "out": a.out}))
    return EXIT_OK


def cmd_interpolate(a):
    nodes = _read_nodes(a.nodes)
    t = get_function(a.function)
    f = t(nodes.points)
    if a.method == "dense":
        s, rep = interpolate_dense(nodes, f)
    else:
        s, rep = TPSSolver(nodes, _config(a)).solve(f)
    out = json.loads(rep.to_json())
    out.pop("residuals", None)
    out.update({"function": t.name, "method": a.method, "domain": nodes.domain.value})
    if a.resolution:
        out["err_linf"], out["err_l2"] = measure_error(s, t, nodes.domain, a.resolution)
    if a.values:
        np.savetxt(a.values, evaluate_many([s], nodes.points)[:, 0], fmt="%.17g")
    print(json.dumps(out))
    return EXIT_OK


def cmd_study(a):
    spec = StudySpec(domain=a.domain, mode=a.mode, functions=tuple(a.function), levels=a.levels,
                     method=a.method, cfg=_config(a), resolution=a.resolution, start=a.start)
    log = None if a.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    rows = convergence_study(spec, a.out, log=log)
    plot = Path(a.plot) if a.plot else Path(a.out).with_suffix(".gp")
    write_plot_script(a.out, plot, title=f"{a.domain} / {a.mode}")
    summary = {"rows": len(rows), "csv": a.out, "plot": str(plot)}
    try:
        summary["slope_h_linf"] = study_rates(rows, "h")
        summary["slope_N_linf"] = study_rates(rows, "N")
    except ValueError:
        pass
    print(json.dumps(summary))
    return EXIT_OK if all(r.ok for r in rows) else EXIT_NOT_CONVERGED


def cmd_blockstructure(a):
    nodes = _read_nodes(a.nodes)
    pts = nodes.points
    piv = select_pivot_points(pts)
    rest = np.setdiff1d(np.arange(len(pts)), piv)
    tree = build_cluster_tree(pts[rest], a.leaf)
    blocks = build_block_tree(tree, a.eta)
    h = assemble_hmatrix(pts[rest], blocks, a.p, a.eps)
    dump_blocks_csv(h, a.out)
    print(json.dumps({"N": len(rest), "leaves": len(h.leaves()), "storage_bytes": h.storage_bytes(),
                      "admissible_fraction": blocks.admissible_fraction(), "out": a.out}))
    return EXIT_OK


COMMANDS = {"nodes": cmd_nodes, "interpolate": cmd_interpolate, "study": cmd_study,
            "blockstructure": cmd_blockstructure}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SolverError as exc:
        print(f"tpsh: solver failed: {exc}", file=sys.stderr)
        if exc.report is not None:
            print(exc.report.to_json(), file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (InvalidInput, UnisolvencyError, SingularSystemError, ValueError, OSError) as exc:
        print(f"tpsh: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except np.linalg.LinAlgError as exc:
        print(f"tpsh: solver failure: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
