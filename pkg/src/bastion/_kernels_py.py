"""Pure-Python (numpy/LAPACK-block) versions of the banded kernels.

Same storage and return conventions as the compiled module. A matrix of
half-bandwidth ``b`` is block tridiagonal for any block size ``s >= b``, so
the factorization walks over dense ``s x s`` blocks instead of single columns.
"""

import numpy as np
from scipy.linalg import lapack, solve_triangular

_MIN_BLOCK = 32


def _block_size(b):
    return max(b, _MIN_BLOCK, 1)


def _gather(band, r0, r1, c0, c1):
    """Dense block ``A[r0:r1, c0:c1]`` (lower triangle only) from band storage."""
    b = band.shape[1] - 1
    rows = np.arange(r0, r1)[:, None]
    cols = np.arange(c0, c1)[None, :]
    d = rows - cols
    mask = (d >= 0) & (d <= b)
    out = np.zeros((r1 - r0, c1 - c0))
    cc, dd = np.broadcast_to(cols, d.shape)[mask], d[mask]
    out[mask] = band[cc, dd]
    return out


def _scatter(band, block, r0, c0):
    b = band.shape[1] - 1
    rows = np.arange(r0, r0 + block.shape[0])[:, None]
    cols = np.arange(c0, c0 + block.shape[1])[None, :]
    d = rows - cols
    mask = (d >= 0) & (d <= b)
    band[np.broadcast_to(cols, d.shape)[mask], d[mask]] = block[mask]


def cholesky_banded_inplace(band):
    n, w = band.shape
    s = _block_size(w - 1)
    prev = None  # L[i, i-1] block of the current row of blocks
    prev_start = 0
    for i0 in range(0, n, s):
        i1 = min(i0 + s, n)
        a_ii = _gather(band, i0, i1, i0, i1)
        a_ii = np.tril(a_ii) + np.tril(a_ii, -1).T
        if prev is not None:
            a_ii -= prev @ prev.T
        l_ii, info = lapack.dpotrf(a_ii, lower=1, clean=1)
        if info != 0:
            return i0 + int(info) - 1 if info > 0 else i0
        _scatter(band, l_ii, i0, i0)
        if prev is not None:
            _scatter(band, prev, i0, prev_start)
        if i1 < n:
            j1 = min(i1 + s, n)
            a_next = _gather(band, i1, j1, i0, i1)
            # L[i+1, i] = A[i+1, i] L[i, i]^{-T}
            prev = solve_triangular(l_ii, a_next.T, lower=True).T
            prev_start = i0
    return -1


def forward_solve_inplace(band, rhs):
    n, w = band.shape
    s = _block_size(w - 1)
    z_prev = None
    for i0 in range(0, n, s):
        i1 = min(i0 + s, n)
        r = rhs[i0:i1].copy()
        if z_prev is not None:
            r -= _gather(band, i0, i1, i0 - s, i0) @ z_prev
        z = solve_triangular(_gather(band, i0, i1, i0, i1), r, lower=True)
        rhs[i0:i1] = z
        z_prev = z


def backward_solve_inplace(band, rhs):
    n, w = band.shape
    s = _block_size(w - 1)
    starts = list(range(0, n, s))
    x_next = None
    for i0 in reversed(starts):
        i1 = min(i0 + s, n)
        r = rhs[i0:i1].copy()
        if x_next is not None:
            j1 = min(i1 + s, n)
            r -= _gather(band, i1, j1, i0, i1).T @ x_next
        x = solve_triangular(_gather(band, i0, i1, i0, i1), r, lower=True, trans="T")
        rhs[i0:i1] = x
        x_next = x
