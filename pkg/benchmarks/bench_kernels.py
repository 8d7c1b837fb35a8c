"""Compiled vs numpy kernel loops.

    python3 benchmarks/bench_kernels.py [--sizes 500 2000 8000] [--repeat 3] [--pipeline N]

Times ``phi2_matrix`` (dense block) and ``phi2_apply`` (matrix-free sum with
four right-hand sides) for both backends, checks that they agree, and with
``--pipeline`` runs one hierarchical solve per backend in a subprocess
(``TPSH_PURE_PYTHON=1`` selects the numpy path there).
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from tpsh import _kernels_py, core


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


PIPELINE = """
import json, time, numpy as np
from tpsh import core
from tpsh.geometry import uniform_nodes, Domain
from tpsh.solve import TPSSolver
from tpsh.bench import evaluate_many, franke
x = uniform_nodes(Domain.UNIT_SQUARE, {n}).points
t0 = time.perf_counter()
s, rep = TPSSolver(x).solve(franke(x))
t1 = time.perf_counter()
evaluate_many([s], Domain.UNIT_SQUARE.sample_grid(256))
t2 = time.perf_counter()
print(json.dumps({{"backend": core.BACKEND, "N": len(x), "solve_s": t1 - t0, "eval_s": t2 - t1,
                  "iters": rep.iterations}}))
"""


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 2000, 8000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--pipeline", type=int, default=0, metavar="N",
                    help="also time a full solve with N points per side")
    a = ap.parse_args(argv)
    if core.BACKEND != "compiled":
        sys.exit("compiled extension not available; build with pip install -e .")
    rng = np.random.default_rng(0)
    print(f"compiled module: {core._impl.__name__}")
    print(f"{'kernel':<12} {'n':>6} {'numpy [s]':>10} {'compiled [s]':>13} {'speed-up':>9} {'max rel diff':>13}")
    for n in a.sizes:
        x = rng.random((n, 2))
        y = rng.random((n, 2))
        c = rng.standard_normal((n, 4))
        for name, args in (("phi2_matrix", (x, y)), ("phi2_apply", (x, y, c))):
            fast = getattr(core._impl, name)
            slow = getattr(_kernels_py, name)
            tf = best_of(lambda: fast(*args), a.repeat)
            ts = best_of(lambda: slow(*args), a.repeat)
            ref, got = slow(*args), fast(*args)
            diff = float(np.abs(got - ref).max() / np.abs(ref).max())
            print(f"{name:<12} {n:>6} {ts:>10.4f} {tf:>13.4f} {ts / tf:>9.1f} {diff:>13.2e}")
    if a.pipeline:
        for pure in ("0", "1"):
            env = dict(os.environ, TPSH_PURE_PYTHON=pure)
            res = subprocess.run([sys.executable, "-c", PIPELINE.format(n=a.pipeline)], env=env,
                                 capture_output=True, text=True, check=True)
            print(json.dumps(json.loads(res.stdout)))


if __name__ == "__main__":
    main()
