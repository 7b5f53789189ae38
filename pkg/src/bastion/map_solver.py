"""Exact penalized least-squares decomposition.

Minimizes

    ||y - T - sum_j S_j||^2 + sum_m lam_T^m ||D_T^m T||^2 + sum_j sum_m lam_j^m ||D_j^m S_j||^2

through its first-order system ``H x = (y, ..., y)``. Without centering
constraints the unknowns are interleaved in time (``x[(P+1) t + j]``) so that
``H`` is banded with half-bandwidth ``(P+1) b + P`` and is factored in
``O(N)``. Centering constraints couple every time point and are handled by
a dense null-space solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigError, NonIdentifiableError, NotPositiveDefiniteError
from .gaussian_sampler import BandedSymmetric, banded_cholesky
from .identifiability import (
    build_block_system,
    check_identifiability,
    constraint_basis,
    expand_lambdas,
)

log = logging.getLogger(__name__)

#: Largest series length for which the dense identifiability check runs
#: before solving; longer series rely on the factorization pivots.
CHECK_MAX_N = 1500

JITTER_REL = 1e-10

#: Iterative refinement steps after the banded solve.
REFINE_STEPS = 2


@dataclass
class MapSolution:
    """Penalized decomposition.

    Attributes
    ----------
    trend : numpy.ndarray
    seasonals : numpy.ndarray, shape (P, N)
    residual : numpy.ndarray
        ``y - trend - seasonals.sum(0)``.
    objective : float
    unique : bool
        False when a minimum-norm solution was returned for a
        non-identifiable configuration.
    jitter : float
        Diagonal jitter added to ``H`` (0 when the plain factorization worked).
    method : str
        ``"banded"``, ``"dense"`` or ``"min_norm"``.
    """

    trend: np.ndarray
    seasonals: np.ndarray
    residual: np.ndarray
    objective: float
    unique: bool = True
    jitter: float = 0.0
    method: str = "banded"
    nullity: int = field(default=0)

    @property
    def components(self):
        return np.vstack([self.trend[None, :], self.seasonals])


def _as_components(components, n_blocks, n):
    if isinstance(components, MapSolution):
        comps = components.components
    elif isinstance(components, tuple) and len(components) == 2 and np.ndim(components[0]) == 1:
        trend, seas = components
        seas = np.zeros((0, n)) if seas is None or len(seas) == 0 else np.atleast_2d(seas)
        comps = np.vstack([np.asarray(trend, float)[None, :], seas])
    else:
        comps = np.atleast_2d(np.asarray(components, dtype=float))
    if comps.shape != (n_blocks, n):
        raise ConfigError(f"components have shape {comps.shape}, expected {(n_blocks, n)}")
    return comps


def objective_value(y, components, p, lambdas):
    """Residual sum of squares plus every quadratic penalty.

    Parameters
    ----------
    y : array_like, shape (N,)
    components : MapSolution, ``(trend, seasonals)`` or array of shape (P+1, N)
    p : ComponentPenalties
    lambdas : scalar or nested sequence
        See :func:`bastion.identifiability.expand_lambdas`.
    """
    y = np.asarray(y, dtype=float)
    lams = expand_lambdas(p, lambdas)
    comps = _as_components(components, p.n_seasonal + 1, p.n)
    resid = y - comps.sum(axis=0)
    total = float(resid @ resid)
    for x, ops, lam in zip(comps, p.components(), lams):
        for op, l_m in zip(ops, lam):
            d = op.apply(x)
            total += l_m * float(d @ d)
    return total


def _sparse_gram(ops, lams):
    g = None
    for op, lam in zip(ops, lams):
        d = sp.csr_matrix((op.coef, (op.row_idx, op.col_idx)), shape=op.shape)
        term = lam * (d.T @ d)
        g = term if g is None else g + term
    return g.tocoo()


def interleaved_system(p, lams):
    """Lower-band storage of ``H`` with unknowns interleaved in time.

    Pinned values (``constraints == "pin_first"``) are removed from the
    system. Returns ``(BandedSymmetric, keep)`` where ``keep`` lists the
    retained interleaved indices.
    """
    n, m = p.n, p.n_seasonal + 1
    rows, cols, vals = [np.arange(n * m)], [np.arange(n * m)], [np.ones(n * m)]
    for j, (ops, lam) in enumerate(zip(p.components(), lams)):
        g = _sparse_gram(ops, lam)
        lower = g.row >= g.col
        rows.append(m * g.row[lower] + j)
        cols.append(m * g.col[lower] + j)
        vals.append(g.data[lower])
    t = np.arange(n)
    for i in range(m):
        for j in range(i + 1, m):
            rows.append(m * t + j)
            cols.append(m * t + i)
            vals.append(np.ones(n))
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    pinned = [j for j, c in enumerate(p.component_constraints()) if c == "pin_first"]
    keep = np.setdiff1d(np.arange(n * m), np.asarray(pinned, dtype=np.int64))
    newpos = np.full(n * m, -1, dtype=np.int64)
    newpos[keep] = np.arange(keep.size)
    ok = (newpos[rows] >= 0) & (newpos[cols] >= 0)
    r, c, v = newpos[rows[ok]], newpos[cols[ok]], vals[ok]
    bw = int((r - c).max()) if r.size else 0
    flat = np.bincount(c * (bw + 1) + (r - c), weights=v, minlength=keep.size * (bw + 1))
    return BandedSymmetric(flat.reshape(keep.size, bw + 1)), keep


def _factor(H):
    try:
        return banded_cholesky(H), 0.0
    except NotPositiveDefiniteError:
        jitter = JITTER_REL * float(H.bands[:, 0].sum()) / H.dim
        log.warning("block system factorization failed; retrying with jitter %.3g", jitter)
        try:
            return banded_cholesky(H.add_diagonal(jitter)), jitter
        except NotPositiveDefiniteError as exc:
            raise NonIdentifiableError(
                f"block system is singular (pivot {exc.index} failed after jitter)") from exc


def refine(H, factor, rhs, x, steps=REFINE_STEPS):
    """Mixed-precision iterative refinement of ``H x = rhs``.

    Large penalty weights make ``H`` ill conditioned: its Cholesky pivots
    along the unpenalized directions come out of cancellations between
    entries of size ``lambda``, so a plain solve loses about
    ``lambda * eps`` relative accuracy. Each step recomputes the residual
    in extended precision and corrects ``x`` with the existing factor,
    which converges whenever ``cond(H) * eps < 1``.
    """
    if np.finfo(np.longdouble).eps >= np.finfo(float).eps:
        return x
    b = np.asarray(rhs, dtype=np.longdouble)
    for _ in range(steps):
        r = b - H.matvec(np.asarray(x, dtype=np.longdouble), dtype=np.longdouble)
        r = np.asarray(r, dtype=float)
        if not np.any(r):
            break
        x = x + factor.solve(r)
    return x


def _solve_banded(y, p, lams):
    n, m = p.n, p.n_seasonal + 1
    H, keep = interleaved_system(p, lams)
    factor, jitter = _factor(H)
    rhs = np.repeat(y, m)[keep]
    Hj = H.add_diagonal(jitter) if jitter else H
    sol = np.zeros(n * m)
    sol[keep] = refine(Hj, factor, rhs, factor.solve(rhs))
    return sol.reshape(n, m).T, jitter


def _solve_dense(y, p, lams, min_norm=False):
    n, m = p.n, p.n_seasonal + 1
    H = build_block_system(p, lams)
    Z = constraint_basis(p)
    rhs = np.tile(y, m)
    Hz, bz = Z.T @ H @ Z, Z.T @ rhs
    if min_norm:
        coef = np.linalg.lstsq(Hz, bz, rcond=1e-10)[0]
    else:
        coef = np.linalg.solve(Hz, bz)
    return (Z @ coef).reshape(m, n), 0.0


def solve_map(y, p, lambdas, allow_nonunique=False, check=None):
    """Penalized decomposition of ``y``.

    Parameters
    ----------
    y : array_like, shape (N,)
    p : ComponentPenalties
    lambdas : scalar or nested sequence
        Positive penalty weights, one per operator (see
        :func:`bastion.identifiability.expand_lambdas`).
    allow_nonunique : bool, optional
        Return the minimum-norm solution when the configuration is not
        identifiable instead of raising.
    check : bool or None, optional
        Run :func:`check_identifiability` first. Defaults to True for
        ``N <= CHECK_MAX_N``.

    Returns
    -------
    MapSolution

    Raises
    ------
    NonIdentifiableError
        If the decomposition is not unique and ``allow_nonunique`` is False.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != p.n:
        raise ConfigError(f"series has shape {y.shape}, operators expect length {p.n}")
    if not np.all(np.isfinite(y)):
        raise ConfigError("series contains non-finite values")
    lams = expand_lambdas(p, lambdas)
    if check is None:
        check = p.n <= CHECK_MAX_N
    nullity = 0
    if check:
        report = check_identifiability(p)
        nullity = report.nullity
        if not report.identifiable and not allow_nonunique:
            raise NonIdentifiableError(
                f"decomposition is not identifiable (nullity {report.nullity})")

    if nullity:
        comps, jitter, method = *_solve_dense(y, p, lams, min_norm=True), "min_norm"
    elif any(c == "center" for c in p.constraints):
        comps, jitter, method = *_solve_dense(y, p, lams), "dense"
    else:
        comps, jitter, method = *_solve_banded(y, p, lams), "banded"

    resid = y - comps.sum(axis=0)
    return MapSolution(
        trend=comps[0].copy(), seasonals=comps[1:].copy(), residual=resid,
        objective=objective_value(y, comps, p, lams), unique=nullity == 0,
        jitter=jitter, method=method, nullity=nullity,
    )


def gradient(y, components, p, lambdas):
    """Half-gradient of the objective, ``H x - (y, ..., y)``, shaped (P+1, N)."""
    y = np.asarray(y, dtype=float)
    lams = expand_lambdas(p, lambdas)
    comps = _as_components(components, p.n_seasonal + 1, p.n)
    resid = comps.sum(axis=0) - y
    out = np.empty_like(comps)
    for j, (x, ops, lam) in enumerate(zip(comps, p.components(), lams)):
        g = resid.copy()
        for op, l_m in zip(ops, lam):
            d = sp.csr_matrix((op.coef, (op.row_idx, op.col_idx)), shape=op.shape)
            g += l_m * (d.T @ (d @ x))
        out[j] = g
    return out


__all__ = ["MapSolution", "solve_map", "objective_value", "gradient",
           "interleaved_system"]
