"""Banded penalty operators for trend and seasonal components.

Every operator is stored as a list of ``(row, col, coefficient)`` entries in
row-major order; columns are expressed relative to the row through
:attr:`PenaltyOperator.band`. Dense materialization exists for tests and
for the rank oracles only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, InvalidLengthError, InvalidPeriodError


class OperatorKind(enum.Enum):
    SECOND_DIFFERENCE = "second_difference"
    SEASONAL_DIFFERENCE = "seasonal_difference"
    SEASONAL_RECURRENCE = "seasonal_recurrence"
    GIBBS_TREND = "gibbs_trend"
    GIBBS_SEASONAL = "gibbs_seasonal"


@dataclass(frozen=True, eq=False)
class PenaltyOperator:
    """A sparse banded linear operator ``D`` of shape ``(rows, cols)``.

    Parameters
    ----------
    rows, cols : int
        Operator shape; ``cols`` is the series length.
    row_idx, col_idx : numpy.ndarray of int
        Coordinates of the stored entries, sorted by row.
    coef : numpy.ndarray of float
        Entry values.
    kind : OperatorKind
    period : int or None
        Seasonal period for the seasonal kinds.
    lower, upper : int
        Declared band: every entry satisfies ``-lower <= col - row <= upper``.
    """

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    coef: np.ndarray
    kind: OperatorKind
    period: int | None = None
    lower: int = 0
    upper: int = 0
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("row_idx", "col_idx", "coef"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        offsets = self.col_idx - self.row_idx
        if offsets.size and (offsets.min() < -self.lower or offsets.max() > self.upper):
            raise ConfigError("operator entry lies outside the declared bandwidth")
        if self.row_idx.size and (self.row_idx.max() >= self.rows or self.col_idx.max() >= self.cols
                                  or self.col_idx.min() < 0):
            raise ConfigError("operator entry lies outside the operator shape")

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def band(self):
        """Entries as ``(row, col_offset, coefficient)`` triples."""
        offsets = self.col_idx - self.row_idx
        return [(int(r), int(o), float(c)) for r, o, c in zip(self.row_idx, offsets, self.coef)]

    @property
    def gram_bandwidth(self):
        """Half-bandwidth of ``D'D``: the widest column span of any single row."""
        if not self.row_idx.size:
            return 0
        lo = np.full(self.rows, self.cols, dtype=np.int64)
        hi = np.full(self.rows, -1, dtype=np.int64)
        np.minimum.at(lo, self.row_idx, self.col_idx)
        np.maximum.at(hi, self.row_idx, self.col_idx)
        used = hi >= 0
        return int((hi[used] - lo[used]).max())

    def apply(self, x):
        """Banded product ``D @ x``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.cols:
            raise ConfigError(f"expected vector of length {self.cols}, got {x.shape[-1]}")
        return np.bincount(self.row_idx, weights=self.coef * x[self.col_idx], minlength=self.rows)

    def to_dense(self):
        if self._dense is None:
            dense = np.zeros((self.rows, self.cols))
            np.add.at(dense, (self.row_idx, self.col_idx), self.coef)
            dense.setflags(write=False)
            object.__setattr__(self, "_dense", dense)
        return self._dense

    def take_rows(self, rows):
        """Operator restricted to a subset of its rows (renumbered from zero)."""
        rows = np.asarray(rows, dtype=np.int64)
        mapping = np.full(self.rows, -1, dtype=np.int64)
        mapping[rows] = np.arange(rows.size)
        keep = mapping[self.row_idx] >= 0
        new_rows = mapping[self.row_idx[keep]]
        order = np.argsort(new_rows, kind="stable")
        new_rows = new_rows[order]
        cols = self.col_idx[keep][order]
        offsets = cols - new_rows
        return PenaltyOperator(
            rows=int(rows.size), cols=self.cols, row_idx=new_rows, col_idx=cols,
            coef=self.coef[keep][order].copy(), kind=self.kind, period=self.period,
            lower=int(max(0, -offsets.min())) if offsets.size else 0,
            upper=int(max(0, offsets.max())) if offsets.size else 0,
        )

    def __repr__(self):
        per = f", period={self.period}" if self.period is not None else ""
        return f"PenaltyOperator({self.kind.value}, shape={self.shape}{per})"


def _build(rows, cols, entries, kind, period=None):
    """Assemble an operator from per-row ``[(col, coef), ...]`` lists."""
    r_idx, c_idx, vals = [], [], []
    for r, row in enumerate(entries):
        for c, v in row:
            r_idx.append(r)
            c_idx.append(c)
            vals.append(v)
    r_idx = np.asarray(r_idx, dtype=np.int64)
    c_idx = np.asarray(c_idx, dtype=np.int64)
    offsets = c_idx - r_idx
    return PenaltyOperator(
        rows=rows, cols=cols, row_idx=r_idx, col_idx=c_idx,
        coef=np.asarray(vals, dtype=float), kind=kind, period=period,
        lower=int(max(0, -offsets.min())) if offsets.size else 0,
        upper=int(max(0, offsets.max())) if offsets.size else 0,
    )


def _check_int(value, name):
    if isinstance(value, bool) or int(value) != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return int(value)


def second_difference(n):
    """``(n-2, n)`` operator with rows ``x[t-1] - 2 x[t] + x[t+1]``."""
    n = _check_int(n, "n")
    if n < 3:
        raise InvalidLengthError(f"second difference needs n >= 3, got {n}")
    entries = [[(r, 1.0), (r + 1, -2.0), (r + 2, 1.0)] for r in range(n - 2)]
    return _build(n - 2, n, entries, OperatorKind.SECOND_DIFFERENCE)


def seasonal_difference(n, k):
    """``(n-k, n)`` operator ``(1 - B^k)``: rows ``x[t] - x[t-k]`` for ``t > k``."""
    n, k = _check_int(n, "n"), _check_int(k, "k")
    if not 2 <= k < n:
        raise InvalidPeriodError(f"seasonal difference needs 2 <= k < n, got k={k}, n={n}")
    entries = [[(r, -1.0), (r + k, 1.0)] for r in range(n - k)]
    return _build(n - k, n, entries, OperatorKind.SEASONAL_DIFFERENCE, period=k)


def seasonal_recurrence(n, k, full_windows=True):
    """Operator ``1 + B + ... + B^(k-1)``: each row sums ``k`` consecutive values.

    Parameters
    ----------
    n, k : int
        Series length and period.
    full_windows : bool, optional
        If True (default) every complete window is penalized, giving
        ``n - k + 1`` rows and nullity ``k - 1``. If False the last window is
        dropped (``n - k`` rows, nullity ``k``); this is the convention under
        which the gcd inclusion-exclusion nullity formula is exact.
    """
    n, k = _check_int(n, "n"), _check_int(k, "k")
    upper_k = n if full_windows else n - 1
    if not 2 <= k <= upper_k:
        raise InvalidPeriodError(f"seasonal recurrence needs 2 <= k <= {upper_k}, got k={k}")
    m = n - k + 1 if full_windows else n - k
    entries = [[(r + j, 1.0) for j in range(k)] for r in range(m)]
    return _build(m, n, entries, OperatorKind.SEASONAL_RECURRENCE, period=k)


def gibbs_trend_operator(n):
    """Square, invertible trend operator: identity rows at t=1,2 then second differences."""
    n = _check_int(n, "n")
    if n < 3:
        raise InvalidLengthError(f"trend operator needs n >= 3, got {n}")
    entries = [[(0, 1.0)], [(1, 1.0)]]
    entries += [[(t - 2, 1.0), (t - 1, -2.0), (t, 1.0)] for t in range(2, n)]
    return _build(n, n, entries, OperatorKind.GIBBS_TREND)


def gibbs_seasonal_operator(n, k):
    """Seasonal operator used by the sampler, one row per free value ``t = 2..n``.

    Row ``t = 2`` is the value itself, rows ``t = 3..k`` are second differences
    and rows ``t > k`` are lag-``k`` differences. The first value is pinned to
    zero by the model, so the operator has ``n - 1`` rows and ``n`` columns;
    dropping column 0 gives the square full-rank form acting on the free values.
    """
    n, k = _check_int(n, "n"), _check_int(k, "k")
    if not 3 <= k < n:
        raise InvalidPeriodError(f"seasonal operator needs 3 <= k < n, got k={k}, n={n}")
    entries = [[(1, 1.0)]]
    for t in range(2, n):  # zero-based time index
        if t < k:
            entries.append([(t - 2, 1.0), (t - 1, -2.0), (t, 1.0)])
        else:
            entries.append([(t - k, -1.0), (t, 1.0)])
    return _build(n - 1, n, entries, OperatorKind.GIBBS_SEASONAL, period=k)


def make_operator(kind, n, k=None, **kwargs):
    """Construct an operator from its kind name (used by config parsing)."""
    kind = OperatorKind(kind) if not isinstance(kind, OperatorKind) else kind
    if kind is OperatorKind.SECOND_DIFFERENCE:
        return second_difference(n)
    if kind is OperatorKind.GIBBS_TREND:
        return gibbs_trend_operator(n)
    if k is None:
        raise ConfigError(f"operator '{kind.value}' needs a period")
    if kind is OperatorKind.SEASONAL_DIFFERENCE:
        return seasonal_difference(n, k)
    if kind is OperatorKind.SEASONAL_RECURRENCE:
        return seasonal_recurrence(n, k, **kwargs)
    return gibbs_seasonal_operator(n, k)


def numeric_rank(matrix, rtol=1e-10):
    """Rank with the convention ``s < max(shape) * s_max * rtol`` counts as zero."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= max(matrix.shape) * s[0] * rtol))


def kernel_basis(op, rtol=1e-10):
    """Orthonormal null-space basis of an operator or dense matrix.

    Parameters
    ----------
    op : PenaltyOperator or array_like
    rtol : float, optional
        Relative tolerance; singular values below
        ``max(rows, cols) * s_max * rtol`` are treated as zero.

    Returns
    -------
    numpy.ndarray, shape (cols, nullity)
        Columns form the basis; the array has zero columns when the operator
        is injective.
    """
    dense = op.to_dense() if isinstance(op, PenaltyOperator) else np.atleast_2d(np.asarray(op, float))
    rows, cols = dense.shape
    if rows == 0:
        return np.eye(cols)
    _, s, vt = np.linalg.svd(dense, full_matrices=True)
    if s[0] == 0.0:
        return np.eye(cols)
    rank = int(np.count_nonzero(s >= max(rows, cols) * s[0] * rtol))
    return vt[rank:].T.copy()


def stacked_kernel(ops, rtol=1e-10):
    """Basis of the intersection of kernels, computed from the stacked operator."""
    ops = list(ops)
    if not ops:
        raise ConfigError("at least one operator is required")
    cols = {op.cols for op in ops}
    if len(cols) != 1:
        raise ConfigError(f"operators disagree on the series length: {sorted(cols)}")
    return kernel_basis(np.vstack([op.to_dense() for op in ops]), rtol=rtol)
