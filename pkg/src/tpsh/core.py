"""Backend selection for the hot kernel loops.

The compiled extension is used when it is importable: ``tpsh._kernels_avx2``
on CPUs with AVX2 and FMA, else ``tpsh._kernels``. Otherwise the numpy
versions are used. Setting ``TPSH_PURE_PYTHON=1`` in the environment forces
the numpy path.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("TPSH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"
    else:
        try:
            from numpy._core._multiarray_umath import __cpu_features__ as _cpu
        except ImportError:  # numpy < 2
            from numpy.core._multiarray_umath import __cpu_features__ as _cpu
        if _cpu.get("AVX2") and _cpu.get("FMA3"):
            try:
                from . import _kernels_avx2 as _impl
            except ImportError:
                pass


def _as2d(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def phi2_matrix(x, y):
    """Thin-plate kernel block ``phi_2(|x_i - y_j|)`` for 2-D point arrays."""
    x, y = _as2d(x), _as2d(y)
    if x.shape[0] == 0 or y.shape[0] == 0:
        return np.zeros((x.shape[0], y.shape[0]))
    return _impl.phi2_matrix(x, y)


def phi2_apply(x, y, c):
    """Apply the thin-plate kernel block to ``c`` without storing it.

    ``c`` may be a vector (length ``len(y)``) or a matrix with one column per
    right-hand side; the result has the matching shape.
    """
    x, y = _as2d(x), _as2d(y)
    c = np.asarray(c, dtype=np.float64)
    vec = c.ndim == 1
    c2 = _as2d(c[:, None] if vec else c)
    if x.shape[0] == 0 or y.shape[0] == 0:
        out = np.zeros((x.shape[0], c2.shape[1]))
    else:
        out = _impl.phi2_apply(x, y, c2)
    return out[:, 0] if vec else out
