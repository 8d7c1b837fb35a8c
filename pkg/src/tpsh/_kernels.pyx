# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled thin-plate kernel loops (phi_2(r) = r^2 log r in two dimensions)."""

include "_kernels_impl.pxi"
