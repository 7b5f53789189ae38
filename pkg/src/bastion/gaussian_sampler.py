"""Sampling Gaussians with banded precision matrices in linear time.

A symmetric matrix of half-bandwidth ``b`` is stored as ``bands`` with shape
``(N, b + 1)`` and ``bands[j, d] = Q[j + d, j]``; ``bands.T`` is the LAPACK
lower-band layout. Factorization costs ``O(N b^2)``.

The hot kernels come from a compiled extension when it is available and
from :mod:`bastion._kernels_py` otherwise. Set ``BASTION_BACKEND=python`` to
force the fallback.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NotPositiveDefiniteError
from .operators import PenaltyOperator

log = logging.getLogger(__name__)


def _load_backend():
    forced = os.environ.get("BASTION_BACKEND", "").strip().lower()
    if forced not in ("", "auto", "python", "cython"):
        raise ImportError(f"unknown BASTION_BACKEND={forced!r}")
    if forced != "python":
        try:
            from . import _kernels as mod
            return "cython", mod
        except ImportError:
            if forced == "cython":
                raise
    from . import _kernels_py as mod
    return "python", mod


BACKEND, _kern = _load_backend()

JITTER_SCALE = 1e-8


def get_kernels(name=None):
    """Kernel module for ``name`` ('cython' or 'python'); the active one by default."""
    if name is None or name == BACKEND:
        return _kern
    if name == "python":
        from . import _kernels_py
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


@dataclass
class BandedSymmetric:
    """Symmetric banded matrix in lower-band storage."""

    bands: np.ndarray

    def __post_init__(self):
        self.bands = np.ascontiguousarray(self.bands, dtype=float)
        if self.bands.ndim != 2 or self.bands.shape[1] < 1:
            raise ConfigError("band storage must have shape (N, b + 1)")

    @property
    def dim(self):
        return self.bands.shape[0]

    @property
    def bandwidth(self):
        return self.bands.shape[1] - 1

    @classmethod
    def zeros(cls, n, bandwidth):
        return cls(np.zeros((n, bandwidth + 1)))

    @classmethod
    def from_dense(cls, matrix, bandwidth):
        matrix = np.asarray(matrix, dtype=float)
        n = matrix.shape[0]
        bands = np.zeros((n, bandwidth + 1))
        for d in range(bandwidth + 1):
            bands[: n - d, d] = np.diagonal(matrix, -d)
        return cls(bands)

    def to_dense(self):
        n, b = self.dim, self.bandwidth
        out = np.zeros((n, n))
        for d in range(b + 1):
            if d >= n:
                break
            diag = self.bands[: n - d, d]
            out += np.diag(diag, -d)
            if d:
                out += np.diag(diag, d)
        return out

    def to_lapack(self):
        """``(b + 1, N)`` lower storage as used by ``scipy.linalg.cholesky_banded``."""
        return np.ascontiguousarray(self.bands.T)

    def diagonal(self):
        return self.bands[:, 0].copy()

    def add_diagonal(self, values):
        out = self.bands.copy()
        out[:, 0] += values
        return BandedSymmetric(out)

    def matvec(self, x, dtype=float):
        """``Q x``, accumulated in ``dtype`` (``np.longdouble`` for refinement residuals)."""
        x = np.asarray(x, dtype=dtype)
        n = self.dim
        bands = self.bands.astype(dtype, copy=False)
        y = bands[:, 0] * x
        for d in range(1, min(self.bandwidth, n - 1) + 1):
            col = bands[: n - d, d]
            y[d:] += col * x[: n - d]
            y[: n - d] += col * x[d:]
        return y


@dataclass
class BandedCholesky:
    """Lower Cholesky factor ``L`` (``Q = L L'``) in the same band layout."""

    bands: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self):
        return self.bands.shape[0]

    @property
    def bandwidth(self):
        return self.bands.shape[1] - 1

    def solve_lower(self, rhs):
        """``L^{-1} rhs``."""
        out = np.array(rhs, dtype=float, copy=True)
        _kern.forward_solve_inplace(self.bands, out)
        return out

    def solve_upper(self, rhs):
        """``L'^{-1} rhs``."""
        out = np.array(rhs, dtype=float, copy=True)
        _kern.backward_solve_inplace(self.bands, out)
        return out

    def solve(self, rhs):
        """``Q^{-1} rhs``."""
        out = np.array(rhs, dtype=float, copy=True)
        _kern.forward_solve_inplace(self.bands, out)
        _kern.backward_solve_inplace(self.bands, out)
        return out

    def to_dense(self):
        n = self.dim
        out = np.zeros((n, n))
        for d in range(min(self.bandwidth, n - 1) + 1):
            out += np.diag(self.bands[: n - d, d], -d)
        return out

    def logdet(self):
        return 2.0 * float(np.sum(np.log(self.bands[:, 0])))


def banded_cholesky(Q):
    """Factor a positive definite banded matrix.

    Raises
    ------
    NotPositiveDefiniteError
        If a pivot is not strictly positive.
    """
    work = np.array(Q.bands, dtype=float, copy=True, order="C")
    info = _kern.cholesky_banded_inplace(work)
    if info >= 0:
        raise NotPositiveDefiniteError(info)
    return BandedCholesky(work)


def factor_with_jitter(Q, scale=JITTER_SCALE):
    """Factor ``Q``; on failure add ``scale * max(diag)`` to the diagonal and retry once."""
    try:
        return banded_cholesky(Q)
    except NotPositiveDefiniteError:
        diag = Q.bands[:, 0]
        jitter = scale * float(np.max(np.abs(diag))) if diag.size else scale
        if not np.isfinite(jitter) or jitter <= 0:
            raise
        log.warning("banded factorization failed; retrying with diagonal jitter %.3g", jitter)
        factor = banded_cholesky(Q.add_diagonal(jitter))
        factor.jitter = jitter
        return factor


def sample_gaussian_canonical(Q, b, rng, jitter=True):
    """Draw from ``N(Q^{-1} b, Q^{-1})``.

    Parameters
    ----------
    Q : BandedSymmetric
        Positive definite precision.
    b : array_like
        Canonical mean vector.
    rng : numpy.random.Generator or None
        Source of the standard normal vector. ``None`` returns the mean
        ``Q^{-1} b`` itself, which the sampler uses for deterministic
        conditional-mean sweeps.
    jitter : bool, optional
        Retry once with diagonal jitter if the factorization fails.
    """
    factor = factor_with_jitter(Q) if jitter else banded_cholesky(Q)
    # x = L'^{-1} (L^{-1} b + z) has mean Q^{-1} b and covariance (L L')^{-1}
    work = np.array(b, dtype=float, copy=True)
    if work.shape != (Q.dim,):
        raise ConfigError(f"canonical vector has shape {work.shape}, expected ({Q.dim},)")
    _kern.forward_solve_inplace(factor.bands, work)
    if rng is not None:
        work += rng.standard_normal(Q.dim)
    _kern.backward_solve_inplace(factor.bands, work)
    return work


class GramAssembler:
    """Fast assembly of ``D' diag(w) D`` into band storage for a fixed operator.

    Parameters
    ----------
    op : PenaltyOperator
    drop_first : int, optional
        Number of leading columns removed before assembly (the pinned
        seasonal value uses ``drop_first=1``).
    """

    def __init__(self, op: PenaltyOperator, drop_first=0):
        self.op = op
        self.drop_first = int(drop_first)
        self.dim = op.cols - self.drop_first
        self.bandwidth = max(op.gram_bandwidth, 0)
        keep = op.col_idx >= self.drop_first
        rows, cols, coef = op.row_idx[keep], op.col_idx[keep] - self.drop_first, op.coef[keep]
        # all (a, b) entry pairs sharing a row with col_a >= col_b
        order = np.argsort(rows, kind="stable")
        rows, cols, coef = rows[order], cols[order], coef[order]
        starts = np.searchsorted(rows, np.arange(op.rows))
        ends = np.searchsorted(rows, np.arange(op.rows), side="right")
        pr, pa, pb, pv = [], [], [], []
        for r in range(op.rows):
            sl = slice(starts[r], ends[r])
            c, v = cols[sl], coef[sl]
            for i in range(c.size):
                for j in range(c.size):
                    if c[i] >= c[j]:
                        pr.append(r)
                        pa.append(c[i])
                        pb.append(c[j])
                        pv.append(v[i] * v[j])
        pr = np.asarray(pr, dtype=np.int64)
        pa = np.asarray(pa, dtype=np.int64)
        pb = np.asarray(pb, dtype=np.int64)
        self._pair_rows = pr
        self._pair_vals = np.asarray(pv, dtype=float)
        self._flat = pb * (self.bandwidth + 1) + (pa - pb)
        self._size = self.dim * (self.bandwidth + 1)

    def build(self, weights):
        """Return ``D' diag(weights) D`` as :class:`BandedSymmetric`."""
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (self.op.rows,):
            raise ConfigError(f"expected {self.op.rows} row weights, got {weights.shape}")
        flat = np.bincount(self._flat, weights=self._pair_vals * weights[self._pair_rows],
                           minlength=self._size)
        return BandedSymmetric(flat.reshape(self.dim, self.bandwidth + 1))
