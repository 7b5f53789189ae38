# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled banded Cholesky kernels.

Storage: ``band[j, d] = A[j + d, j]`` for ``d = 0..b`` (lower band, one
column of the matrix per row of ``band``), C-contiguous float64.
"""

from libc.math cimport sqrt

import numpy as np


def cholesky_banded_inplace(double[:, ::1] band):
    """Overwrite ``band`` with its lower Cholesky factor.

    Returns -1 on success, otherwise the zero-based index of the first
    non-positive pivot (``band`` is then partially overwritten).
    """
    cdef Py_ssize_t n = band.shape[0]
    cdef Py_ssize_t b = band.shape[1] - 1
    cdef Py_ssize_t j, p, q, m
    cdef double piv, ljj, lp
    for j in range(n):
        piv = band[j, 0]
        if not piv > 0.0:
            return j
        ljj = sqrt(piv)
        band[j, 0] = ljj
        m = b if b < n - 1 - j else n - 1 - j
        for p in range(1, m + 1):
            band[j, p] /= ljj
        for p in range(1, m + 1):
            lp = band[j, p]
            if lp != 0.0:
                for q in range(p, m + 1):
                    band[j + p, q - p] -= band[j, q] * lp
    return -1


def forward_solve_inplace(const double[:, ::1] band, double[::1] rhs):
    """Solve ``L z = rhs`` in place."""
    cdef Py_ssize_t n = band.shape[0]
    cdef Py_ssize_t b = band.shape[1] - 1
    cdef Py_ssize_t j, d, m
    cdef double zj
    for j in range(n):
        zj = rhs[j] / band[j, 0]
        rhs[j] = zj
        m = b if b < n - 1 - j else n - 1 - j
        for d in range(1, m + 1):
            rhs[j + d] -= band[j, d] * zj


def backward_solve_inplace(const double[:, ::1] band, double[::1] rhs):
    """Solve ``L' x = rhs`` in place."""
    cdef Py_ssize_t n = band.shape[0]
    cdef Py_ssize_t b = band.shape[1] - 1
    cdef Py_ssize_t j, d, m
    cdef double acc
    for j in range(n - 1, -1, -1):
        acc = rhs[j]
        m = b if b < n - 1 - j else n - 1 - j
        for d in range(1, m + 1):
            acc -= band[j, d] * rhs[j + d]
        rhs[j] = acc / band[j, 0]
