"""Pure-numpy versions of the compiled kernel loops in ``_kernels.pyx``."""

import numpy as np

_CHUNK = 1 << 20


def _sqdist(x, y):
    dx = x[:, None, 0] - y[None, :, 0]
    dy = x[:, None, 1] - y[None, :, 1]
    return dx * dx + dy * dy


def _phi2_sq(s):
    out = np.zeros_like(s)
    pos = s > 0.0
    out[pos] = 0.5 * s[pos] * np.log(s[pos])
    return out


def phi2_matrix(x, y):
    """Dense kernel block K[i, j] = phi_2(|x_i - y_j|)."""
    return _phi2_sq(_sqdist(x, y))


def phi2_apply(x, y, c):
    """Matrix-free product sum_j phi_2(|x_i - y_j|) c[j, :]."""
    m, n = x.shape[0], y.shape[0]
    out = np.zeros((m, c.shape[1]))
    step = max(1, _CHUNK // max(n, 1))
    for i in range(0, m, step):
        out[i:i + step] = _phi2_sq(_sqdist(x[i:i + step], y)) @ c
    return out
