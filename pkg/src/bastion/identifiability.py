"""Identifiability of penalized trend/seasonal decompositions.

A decomposition ``y = T + S_1 + ... + S_P`` fitted by minimizing

    ||y - T - sum S_j||^2 + sum_m lam_T^m ||D_T^m T||^2 + sum_j sum_m lam_j^m ||D_j^m S_j||^2

is unique exactly when the first-order block matrix ``H`` is nonsingular.
``H`` has diagonal blocks ``I + sum_m lam^m D'D`` and identity off-diagonal
blocks, so ``u' H u = sum lam ||D u_j||^2 + ||sum u_j||^2`` and the kernel of
``H`` is the set of tuples ``u_j in V_j`` (the joint kernel of the penalties
of component ``j``) that sum to zero. Its dimension is therefore
``sum dim V_j - dim(V_0 + ... + V_P)``, which needs no factorization of H.

Two routes are provided: :func:`check_identifiability` evaluates the
subspace dimensions, while :func:`build_block_system` and
:func:`numeric_nullity` form the brute-force oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from itertools import combinations

import numpy as np

from .exceptions import ConfigError, InvalidHyperparameterError, InvalidPeriodError
from .operators import PenaltyOperator, kernel_basis, stacked_kernel

#: Relative tolerance for the rank of ``H`` (singular values below
#: ``H_RTOL * s_max`` count as zero).
H_RTOL = 1e-8

CONSTRAINTS = (None, "center", "pin_first")


@dataclass
class ComponentPenalties:
    """Penalty operators for the trend and each seasonal component.

    Parameters
    ----------
    trend_ops : list of PenaltyOperator
    seasonal_ops : list of list of PenaltyOperator
        One list per seasonal component.
    constraints : list, optional
        One entry per seasonal component: ``None``, ``"center"`` (impose
        ``1'S_j = 0``) or ``"pin_first"`` (impose ``S_j[0] = 0``). A boolean
        ``True`` is read as ``"center"``.
    """

    trend_ops: list
    seasonal_ops: list
    constraints: list = field(default=None)

    def __post_init__(self):
        self.trend_ops = list(self.trend_ops)
        self.seasonal_ops = [list(ops) for ops in self.seasonal_ops]
        if self.constraints is None:
            self.constraints = [None] * len(self.seasonal_ops)
        self.constraints = [_normalize_constraint(c) for c in self.constraints]
        if len(self.constraints) != len(self.seasonal_ops):
            raise ConfigError("one constraint entry is needed per seasonal component")
        if not self.trend_ops or any(not ops for ops in self.seasonal_ops):
            raise ConfigError("every component needs at least one penalty operator")
        sizes = {op.cols for op in self.all_ops()}
        if len(sizes) != 1:
            raise ConfigError(f"operators disagree on the series length: {sorted(sizes)}")
        for op in self.all_ops():
            if not isinstance(op, PenaltyOperator):
                raise ConfigError(f"expected PenaltyOperator, got {type(op).__name__}")

    @property
    def n(self):
        return self.trend_ops[0].cols

    @property
    def n_seasonal(self):
        return len(self.seasonal_ops)

    @property
    def centering(self):
        return [c == "center" for c in self.constraints]

    def components(self):
        """Operator lists in block order: trend first, then each seasonal."""
        return [self.trend_ops] + self.seasonal_ops

    def component_constraints(self):
        return [None] + list(self.constraints)

    def all_ops(self):
        return [op for ops in self.components() for op in ops]


def _normalize_constraint(value):
    if value is True:
        return "center"
    if value is False:
        return None
    if value not in CONSTRAINTS:
        raise ConfigError(f"unknown constraint {value!r}; use one of {CONSTRAINTS}")
    return value


def _constraint_vector(kind, n):
    if kind == "center":
        return np.ones(n)
    if kind == "pin_first":
        vec = np.zeros(n)
        vec[0] = 1.0
        return vec
    return None


def constraint_complement(kind, n):
    """Orthonormal basis of the subspace allowed by a constraint (``n x m``)."""
    vec = _constraint_vector(kind, n)
    if vec is None:
        return np.eye(n)
    return kernel_basis(vec[None, :])


def restrict_basis(basis, kind, rtol=1e-10):
    """Basis of ``span(basis)`` intersected with the constraint subspace."""
    vec = _constraint_vector(kind, basis.shape[0])
    if vec is None or basis.shape[1] == 0:
        return basis
    row = vec @ basis
    # a rank test relative to ``row`` itself would promote round-off to a
    # real constraint; measure it against the constraint vector instead
    if np.linalg.norm(row) <= rtol * max(basis.shape) * np.linalg.norm(vec):
        return basis
    coeff = kernel_basis(row[None, :], rtol=rtol)
    out = basis @ coeff
    # re-orthonormalize to keep the basis well conditioned
    q, _ = np.linalg.qr(out)
    return q[:, : out.shape[1]]


@dataclass
class IdentifiabilityReport:
    """Outcome of the subspace-dimension test.

    Attributes
    ----------
    identifiable : bool
    nullity : int
        Dimension of the set of unidentified directions.
    kernel_dims : list of int
        ``dim V_j`` for the trend and each seasonal component.
    joint_dim : int
        ``dim(V_0 + ... + V_P)``.
    unidentified_basis : numpy.ndarray, shape ((P + 1) * N, nullity)
        Each column stacks ``(u_0, ..., u_P)`` with ``u_j`` in ``V_j`` and
        ``sum u_j = 0``.
    """

    identifiable: bool
    nullity: int
    kernel_dims: list
    joint_dim: int
    unidentified_basis: np.ndarray

    def to_dict(self, include_basis=False):
        out = {
            "identifiable": bool(self.identifiable),
            "nullity": int(self.nullity),
            "kernel_dims": [int(d) for d in self.kernel_dims],
            "joint_dim": int(self.joint_dim),
        }
        if include_basis:
            out["unidentified_basis"] = self.unidentified_basis.T.tolist()
        return out


def component_kernels(p, tol=1e-10):
    """Constrained kernel bases ``V_j`` for every component, trend first."""
    bases = []
    for ops, kind in zip(p.components(), p.component_constraints()):
        bases.append(restrict_basis(stacked_kernel(ops, rtol=tol), kind, rtol=tol))
    return bases


def check_identifiability(p, tol=1e-10):
    """Decide whether the penalized decomposition has a unique minimizer.

    Parameters
    ----------
    p : ComponentPenalties
    tol : float, optional
        Relative rank tolerance used for every kernel computation.

    Returns
    -------
    IdentifiabilityReport
    """
    bases = component_kernels(p, tol=tol)
    dims = [b.shape[1] for b in bases]
    n = p.n
    total = sum(dims)
    if total == 0:
        return IdentifiabilityReport(True, 0, dims, 0, np.zeros(((len(bases)) * n, 0)))
    stacked = np.hstack(bases)
    null = kernel_basis(stacked, rtol=tol)
    nullity = null.shape[1]
    joint = total - nullity
    # map coefficient vectors back to component tuples (u_0, ..., u_P)
    blocks, start = [], 0
    for b, d in zip(bases, dims):
        blocks.append(b @ null[start:start + d])
        start += d
    directions = np.vstack(blocks) if nullity else np.zeros((len(bases) * n, 0))
    if nullity:
        directions /= np.linalg.norm(directions, axis=0, keepdims=True)
    return IdentifiabilityReport(nullity == 0, nullity, dims, joint, directions)


def expand_lambdas(p, lambdas):
    """Per-operator penalty weights as a list of lists aligned with ``p.components()``.

    ``lambdas`` may be one scalar for everything, or a sequence with one
    entry per component, each entry a scalar or a list matching that
    component's operators.
    """
    comps = p.components()
    if np.isscalar(lambdas):
        out = [[float(lambdas)] * len(ops) for ops in comps]
    else:
        lambdas = list(lambdas)
        if len(lambdas) != len(comps):
            raise ConfigError(f"expected {len(comps)} penalty weights, got {len(lambdas)}")
        out = []
        for ops, lam in zip(comps, lambdas):
            lam = [float(lam)] * len(ops) if np.isscalar(lam) else [float(v) for v in lam]
            if len(lam) != len(ops):
                raise ConfigError("penalty weights do not match the operator count")
            out.append(lam)
    for lam in out:
        for v in lam:
            if not (np.isfinite(v) and v > 0):
                raise InvalidHyperparameterError(f"penalty weights must be positive, got {v}")
    return out


def penalty_gram(ops, lams):
    """Dense ``sum_m lam_m D_m' D_m``."""
    n = ops[0].cols
    out = np.zeros((n, n))
    for op, lam in zip(ops, lams):
        d = op.to_dense()
        out += lam * (d.T @ d)
    return out


def build_block_system(p, lambdas):
    """Dense first-order matrix ``H`` of shape ``((P+1) N, (P+1) N)``."""
    lams = expand_lambdas(p, lambdas)
    n, m = p.n, len(lams)
    H = np.kron(np.ones((m, m)), np.eye(n))
    for j, (ops, lam) in enumerate(zip(p.components(), lams)):
        H[j * n:(j + 1) * n, j * n:(j + 1) * n] += penalty_gram(ops, lam)
    return H


def constraint_basis(p):
    """Block-diagonal basis ``Z`` of the constrained parameter space."""
    n = p.n
    blocks = [constraint_complement(kind, n) for kind in p.component_constraints()]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    Z = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        Z[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return Z


def numeric_nullity(H, tol=H_RTOL):
    """Number of singular values of ``H`` below ``tol * s_max``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[0] != H.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {H.shape}")
    if H.size == 0:
        return 0
    s = np.linalg.svd(H, compute_uv=False)
    if s[0] == 0.0:
        return H.shape[0]
    return int(np.count_nonzero(s < tol * s[0]))


def oracle_nullity(p, lambdas=1.0, tol=H_RTOL):
    """Nullity of ``H`` restricted to the constrained space (brute force)."""
    H = build_block_system(p, lambdas)
    if all(c is None for c in p.constraints):
        return numeric_nullity(H, tol)
    Z = constraint_basis(p)
    return numeric_nullity(Z.T @ H @ Z, tol)


def _check_periods(periods):
    periods = [int(k) for k in periods]
    if len(periods) < 2:
        raise InvalidPeriodError("the closed-form nullity needs at least two periods")
    if any(k < 2 for k in periods):
        raise InvalidPeriodError(f"periods must be at least 2, got {periods}")
    return periods


def nullity_formula_recurrence(periods, full_windows=False):
    """Closed-form nullity for seasonal-recurrence penalties and a Δ² trend.

    Inclusion-exclusion over gcds of the periods:
    ``sum gcd(k_i, k_j) - sum gcd(k_i, k_j, k_l) + ...``.

    Parameters
    ----------
    periods : sequence of int
        At least two periods.
    full_windows : bool, optional
        The formula is exact for the recurrence operator that omits its last
        window (``n - k`` rows). Every component of that operator leaves the
        final value free, which adds ``P - 1`` shared directions. With
        ``full_windows=True`` those are removed, giving the nullity for the
        operator with every complete window.

    Notes
    -----
    Exact once ``N`` exceeds the number of distinct roots of unity of the
    periods, i.e. the dimension of the sum of the periodic spaces.
    """
    periods = _check_periods(periods)
    total = 0
    for r in range(2, len(periods) + 1):
        sign = 1 if r % 2 == 0 else -1
        total += sign * sum(reduce(math.gcd, combo) for combo in combinations(periods, r))
    return total - (len(periods) - 1) if full_windows else total


def nullity_formula_differencing(periods):
    """Closed-form nullity for ``(1 - B^k)`` penalties and a Δ² trend.

    One more than :func:`nullity_formula_recurrence`: constants lie in the
    kernel of every seasonal difference and of the trend penalty.
    """
    return 1 + nullity_formula_recurrence(periods)
