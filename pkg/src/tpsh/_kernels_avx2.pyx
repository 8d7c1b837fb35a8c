# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled thin-plate kernel loops, AVX2/FMA build."""

include "_kernels_impl.pxi"
