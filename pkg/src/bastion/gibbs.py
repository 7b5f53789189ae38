"""Gibbs sampler for the shrinkage decomposition model.

Model
-----
``y_t = T_t + sum_i S_{i,t} + zeta_t + R_t`` with ``R_t ~ N(0, sigma_y^2 nu_t^2)``.

* Trend: ``T_1, T_2 ~ N(0, sigma_y^2 eta_t^2)`` and
  ``Δ²T_t ~ N(0, sigma_y^2 tau_T^2 eta_t^2)`` for ``t >= 3``.
* Seasonal ``i`` with period ``k``: ``S_1 = 0``, ``S_2 ~ N(0, sigma_y^2 eta_2^2)``,
  second differences for ``3 <= t <= k`` and lag-``k`` differences for
  ``t > k``, both with variance ``sigma_y^2 tau_S^2 eta_t^2``.
* Every ``eta ~ C+(0, 1)``; every global ``tau ~ C+(0, A)`` with ``A = 1/N``
  by default. Half-Cauchy scales use the inverse-gamma parameter expansion
  ``x^2 | psi ~ IG(1/2, 1/psi)``, ``psi ~ IG(1/2, 1/A^2)``.
* Outliers use the horseshoe+ prior ``zeta_t ~ N(0, sigma_y^2 eta_t^2)``,
  ``eta_t ~ C+(0, tau xi_t)``, ``tau, xi_t ~ C+(0, 1)``.
* ``h_t = log nu_t^2`` is a stationary AR(1) with mean ``mu ~ N(0, 100)``,
  persistence ``phi ~ Beta(5, 1.5)`` and innovation variance
  ``sigma_nu^2 ~ IG(1/2, 1/2)``. It is sampled through the 10-component
  normal mixture approximation of ``log chi^2_1``.
* ``p(sigma_y^2) ∝ 1/sigma_y^2`` unless a proper ``IG(a0, b0)`` is requested.

Every Gaussian block is drawn jointly from its banded precision in
``O(N)``. Passing ``rng=None`` to a Gaussian block returns its conditional
mean instead of a draw.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache

import numpy as np
from scipy.ndimage import median_filter
from scipy.special import betaln

from .exceptions import (
    ConfigError,
    DataError,
    InvalidHyperparameterError,
    InvalidLengthError,
    InvalidPeriodError,
    OffsetUnderflowError,
    StateCorruptionError,
)
from .gaussian_sampler import BandedSymmetric, GramAssembler, sample_gaussian_canonical
from .identifiability import ComponentPenalties
from .operators import gibbs_seasonal_operator, gibbs_trend_operator

log = logging.getLogger(__name__)

# Ten-component normal mixture approximating log(chi^2_1):
# (weight, mean, variance) per component.
MIXTURE_WEIGHTS = np.array([0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                            0.18842, 0.12047, 0.05591, 0.01575, 0.00115])
MIXTURE_MEANS = np.array([1.92677, 1.34744, 0.73504, 0.02266, -0.85173,
                          -1.97278, -3.46788, -5.55246, -8.68384, -14.65000])
MIXTURE_VARS = np.array([0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                         0.98583, 1.57469, 2.54498, 4.16591, 7.33342])

FREEZABLE = frozenset({
    "trend", "seasonal", "outliers", "sigma_y", "sv",
    "trend_scales", "seasonal_scales", "outlier_scales",
})

INIT_METHODS = ("seasonal_means", "moving_average")


def mixture_moments(weights=MIXTURE_WEIGHTS, means=MIXTURE_MEANS, variances=MIXTURE_VARS):
    """Mean and variance of a univariate normal mixture."""
    mean = float(weights @ means)
    var = float(weights @ (variances + means ** 2)) - mean ** 2
    return mean, var


def inv_gamma(rng, shape, scale, size=None):
    """Draw from ``IG(shape, scale)`` (density ∝ x^(-shape-1) exp(-scale/x)).

    Without ``size`` the draw takes the broadcast shape of ``shape`` and
    ``scale``, one independent variate per element.
    """
    scale = np.asarray(scale, dtype=float)
    if size is None:
        size = np.broadcast_shapes(np.shape(shape), scale.shape) or None
    return scale / rng.standard_gamma(shape, size=size)


@dataclass(frozen=True)
class ModelSpec:
    """Model and sampler configuration.

    Parameters
    ----------
    n : int
        Series length.
    periods : tuple of int
        Seasonal periods, each ``3 <= k < n``. Stored in ascending order,
        which is also the update order.
    include_outliers, include_sv : bool
    n_burn, n_save, thin : int
        ``n_burn + n_save * thin`` sweeps; every ``thin``-th post-burn-in
        state is kept.
    seed : int
    global_scale : float or None
        Scale ``A`` of the ``C+(0, A)`` prior on the trend and seasonal
        global parameters; ``None`` means ``1/n``.
    mu_prior_var : float
        Variance of the normal prior on the volatility level.
    phi_prior : (float, float)
        Beta prior parameters for the persistence.
    phi_prior_shifted : bool
        Put the Beta prior on ``(phi + 1)/2`` instead of on ``phi``.
    phi_step : float
        Random-walk step on ``logit(phi)``.
    sigma_nu_prior : (float, float)
        Inverse-gamma prior on the volatility innovation variance.
    sigma_prior : (float, float) or None
        Proper ``IG(a0, b0)`` prior on ``sigma_y^2``; ``None`` gives the
        improper ``1/sigma_y^2`` prior.
    log_offset : float
        Constant inside ``log(r^2 + c)`` for the volatility block.
    variance_floor : float
        Lower bound on each trend/seasonal row variance divided by
        ``sigma_y^2`` when the Gaussian precisions are built. Horseshoe draws
        can push ``tau^2 eta^2`` below ``1e-16``, which makes the precision
        numerically singular; the floor keeps its condition number near
        ``1 / variance_floor``. The scale updates themselves are unchanged.
        ``0`` disables it.
    freeze : frozenset of str
        Blocks that are held at their initial value (see ``FREEZABLE``).
    init : str
        Starting-value rule, ``"seasonal_means"`` or ``"moving_average"``
        (see :func:`initial_state`).
    """

    n: int
    periods: tuple = ()
    include_outliers: bool = True
    include_sv: bool = True
    n_burn: int = 2000
    n_save: int = 3000
    thin: int = 1
    seed: int = 0
    global_scale: float | None = None
    mu_prior_var: float = 100.0
    phi_prior: tuple = (5.0, 1.5)
    phi_prior_shifted: bool = False
    phi_step: float = 0.3
    sigma_nu_prior: tuple = (0.5, 0.5)
    sigma_prior: tuple | None = None
    log_offset: float = 1e-10
    variance_floor: float = 1e-10
    freeze: frozenset = frozenset()
    init: str = "seasonal_means"

    def __post_init__(self):
        set_ = object.__setattr__
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 4:
            raise InvalidLengthError(f"series length must be an integer >= 4, got {self.n}")
        set_(self, "n", int(self.n))
        periods = tuple(sorted(int(k) for k in self.periods))
        for k in periods:
            if not 3 <= k < self.n:
                raise InvalidPeriodError(f"periods must satisfy 3 <= k < n={self.n}, got {k}")
        set_(self, "periods", periods)
        for name in ("n_burn", "n_save", "thin"):
            value = getattr(self, name)
            if int(value) != value or value < (0 if name == "n_burn" else 1):
                raise ConfigError(f"{name} must be a {'non-negative' if name == 'n_burn' else 'positive'} integer, got {value}")
            set_(self, name, int(value))
        set_(self, "seed", int(self.seed))
        if not (np.isfinite(self.variance_floor) and self.variance_floor >= 0):
            raise InvalidHyperparameterError(
                f"variance_floor must be non-negative, got {self.variance_floor}")
        set_(self, "variance_floor", float(self.variance_floor))
        positive = {"mu_prior_var": self.mu_prior_var, "phi_step": self.phi_step,
                    "log_offset": self.log_offset}
        if self.global_scale is not None:
            positive["global_scale"] = self.global_scale
        for pair in ("phi_prior", "sigma_nu_prior") + (("sigma_prior",) if self.sigma_prior else ()):
            values = tuple(float(v) for v in getattr(self, pair))
            if len(values) != 2:
                raise InvalidHyperparameterError(f"{pair} needs two values")
            set_(self, pair, values)
            positive.update({f"{pair}[{i}]": v for i, v in enumerate(values)})
        for name, value in positive.items():
            if not (np.isfinite(value) and value > 0):
                raise InvalidHyperparameterError(f"{name} must be positive, got {value}")
        freeze = frozenset(self.freeze)
        unknown = freeze - FREEZABLE
        if unknown:
            raise ConfigError(f"unknown blocks to freeze: {sorted(unknown)}")
        set_(self, "freeze", freeze)
        if self.init not in INIT_METHODS:
            raise ConfigError(f"unknown init {self.init!r}; choose one of {INIT_METHODS}")

    @property
    def n_seasonal(self):
        return len(self.periods)

    @property
    def scale_a(self):
        return 1.0 / self.n if self.global_scale is None else float(self.global_scale)

    @property
    def n_sweeps(self):
        return self.n_burn + self.n_save * self.thin

    def sigma_shape(self):
        """Shape of the ``sigma_y^2`` full conditional.

        Counts one Gaussian term per residual, per trend row (N), per free
        seasonal value (N-1 each) and per outlier, plus the prior shape.
        """
        count = self.n + self.n + self.n_seasonal * (self.n - 1)
        if self.include_outliers:
            count += self.n
        a0 = self.sigma_prior[0] if self.sigma_prior else 0.0
        return 0.5 * count + a0

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, frozenset):
                value = sorted(value)
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model settings: {sorted(unknown)}")
        for name in ("periods", "phi_prior", "sigma_nu_prior"):
            if name in data:
                data[name] = tuple(data[name])
        if data.get("sigma_prior") is not None:
            data["sigma_prior"] = tuple(data["sigma_prior"])
        if "freeze" in data:
            data["freeze"] = frozenset(data["freeze"])
        return cls(**data)


# ---------------------------------------------------------------------------
# state


@dataclass
class HorseshoeScales:
    """Global ``tau^2`` and local ``eta^2`` with their auxiliary variables.

    ``n_direct`` leading rows of the penalty are not scaled by ``tau``.
    """

    tau2: float
    psi_tau: float
    eta2: np.ndarray
    psi_eta: np.ndarray
    n_direct: int

    @classmethod
    def unit(cls, rows, n_direct):
        return cls(1.0, 1.0, np.ones(rows), np.ones(rows), n_direct)

    def variances(self):
        """Per-row prior variance divided by ``sigma_y^2``."""
        var = self.eta2 * self.tau2
        var[: self.n_direct] = self.eta2[: self.n_direct]
        return var

    def copy(self):
        return HorseshoeScales(self.tau2, self.psi_tau, self.eta2.copy(), self.psi_eta.copy(),
                               self.n_direct)


@dataclass
class OutlierScales:
    """Horseshoe+ scales for the outlier component."""

    eta2: np.ndarray
    psi_eta: np.ndarray
    tau2: float
    psi_tau: float
    xi2: np.ndarray
    psi_xi: np.ndarray

    @classmethod
    def unit(cls, n):
        return cls(np.ones(n), np.ones(n), 1.0, 1.0, np.ones(n), np.ones(n))

    def copy(self):
        return OutlierScales(self.eta2.copy(), self.psi_eta.copy(), self.tau2, self.psi_tau,
                             self.xi2.copy(), self.psi_xi.copy())


@dataclass
class SVState:
    """Log-volatility path and its AR(1) parameters."""

    h: np.ndarray
    mu: float
    phi: float
    sigma2_nu: float
    indicators: np.ndarray
    accepted: int = 0
    proposed: int = 0

    def copy(self):
        return replace(self, h=self.h.copy(), indicators=self.indicators.copy())


@dataclass
class ComponentState:
    """Current values of every block of the sampler."""

    T: np.ndarray
    S: np.ndarray
    zeta: np.ndarray
    sigma2: float
    trend_scales: HorseshoeScales
    seasonal_scales: list
    outlier_scales: OutlierScales
    sv: SVState

    @property
    def nu2(self):
        return np.exp(self.sv.h)

    def residual(self, y, skip=None):
        """``y - T - sum S - zeta``; ``skip`` omits one block (``"T"``, ``"zeta"`` or a seasonal index)."""
        out = np.asarray(y, dtype=float).copy()
        if skip != "T":
            out -= self.T
        for i, s in enumerate(self.S):
            if skip != i:
                out -= s
        if skip != "zeta":
            out -= self.zeta
        return out

    def copy(self):
        return ComponentState(
            self.T.copy(), self.S.copy(), self.zeta.copy(), self.sigma2,
            self.trend_scales.copy(), [s.copy() for s in self.seasonal_scales],
            self.outlier_scales.copy(), self.sv.copy(),
        )

    def validate(self, block="state", sweep=None):
        """Raise :class:`StateCorruptionError` on non-finite or non-positive values."""
        checks = [
            ("trend", self.T, False), ("seasonal", self.S, False), ("outliers", self.zeta, False),
            ("sv", self.sv.h, False),
            ("sigma_y", np.array([self.sigma2]), True),
            ("trend_scales", np.r_[self.trend_scales.tau2, self.trend_scales.psi_tau,
                                   self.trend_scales.eta2, self.trend_scales.psi_eta], True),
            ("outlier_scales", np.r_[self.outlier_scales.eta2, self.outlier_scales.psi_eta,
                                     self.outlier_scales.tau2, self.outlier_scales.psi_tau,
                                     self.outlier_scales.xi2, self.outlier_scales.psi_xi], True),
            ("sv", np.array([self.sv.sigma2_nu]), True),
        ]
        for sc in self.seasonal_scales:
            checks.append(("seasonal_scales", np.r_[sc.tau2, sc.psi_tau, sc.eta2, sc.psi_eta], True))
        for name, values, positive in checks:
            if not np.all(np.isfinite(values)) or (positive and np.any(values <= 0)):
                raise StateCorruptionError(name if block == "state" else block, sweep)
        if not (0.0 < self.sv.phi < 1.0) or not np.isfinite(self.sv.mu):
            raise StateCorruptionError("sv" if block == "state" else block, sweep)
        if self.S.size and np.any(self.S[:, 0] != 0.0):
            raise StateCorruptionError("seasonal" if block == "state" else block, sweep)


def moving_average(y, window):
    """Centered moving average with shrinking windows at the edges."""
    y = np.asarray(y, dtype=float)
    window = max(int(window), 1)
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(y)])
    idx = np.arange(y.size)
    lo = np.clip(idx - half, 0, y.size)
    hi = np.clip(idx - half + window, 0, y.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def _phase_means_start(y, T, spec):
    """Seasonal starting values from per-phase means of ``y - T``.

    Periods are processed from the largest down; each pattern is shifted so
    that its first value is zero and the shift is moved into the trend.
    """
    T = T.copy()
    S = np.zeros((spec.n_seasonal, y.size))
    resid = y - T
    phase_base = np.arange(y.size)
    for i in sorted(range(spec.n_seasonal), key=lambda j: -spec.periods[j]):
        k = spec.periods[i]
        phase = phase_base % k
        means = np.bincount(phase, weights=resid, minlength=k) / np.bincount(phase, minlength=k)
        pattern = means[phase]
        T += pattern[0]
        S[i] = pattern - pattern[0]
        resid = resid - S[i]
    return T, S


def initial_state(y, spec):
    """Deterministic starting values.

    Outliers start at zero, ``h`` at the smoothed log squared residual,
    ``mu = mean(h)``, ``phi = 0.9`` and ``sigma_nu^2 = 0.1``. Local scales
    start at one.

    With ``spec.init == "moving_average"`` the trend starts at the centered
    moving average of ``y`` over the largest period, the seasonals at zero,
    every global scale at one and ``sigma_y^2`` at the variance of the first
    differences of ``y``.

    With ``spec.init == "seasonal_means"`` (the default) the trend starts at
    the running median of ``y`` over the largest period. The median keeps
    level jumps sharp; a moving average smears them, and the seasonals then
    absorb the leftover residual as local spikes that the sampler rarely
    moves back into the trend. Each seasonal starts at the per-phase means
    of what the trend and the larger periods leave, ``sigma_y^2`` at the variance of the remaining residual, and each global
    ``tau^2`` at the mean squared penalized increment divided by
    ``sigma_y^2`` (at least ``A^2``). Starting the seasonals at zero lets
    the trend soak up the seasonal pattern during the first sweeps, which
    can take thousands of sweeps to undo.
    """
    y = np.asarray(y, dtype=float)
    n, P = spec.n, spec.n_seasonal
    window = max(spec.periods) if spec.periods else 3
    trend_scales = HorseshoeScales.unit(n, 2)
    seasonal_scales = [HorseshoeScales.unit(n - 1, 1) for _ in range(P)]
    if spec.init == "seasonal_means":
        T = median_filter(y, size=window, mode="nearest")
        T, S = _phase_means_start(y, T, spec)
        sigma2 = float(np.var(y - T - S.sum(axis=0)))
    else:
        T = moving_average(y, window)
        S = np.zeros((P, n))
        sigma2 = float(np.var(np.diff(y)))
    if not sigma2 > 0:
        sigma2 = 1.0
    if spec.init == "seasonal_means":
        a2 = spec.scale_a ** 2
        inc = _trend_increments(T)[2:]
        trend_scales.tau2 = max(float(np.mean(inc ** 2)) / sigma2, a2)
        for i, k in enumerate(spec.periods):
            inc = _seasonal_increments(S[i], k)[1:]
            seasonal_scales[i].tau2 = max(float(np.mean(inc ** 2)) / sigma2, a2)
    if spec.include_sv:
        r2 = (y - T - S.sum(axis=0)) ** 2 / sigma2
        h = np.log(moving_average(r2, window) + 1e-6)
        mu = float(h.mean())
    else:
        h = np.zeros(n)
        mu = 0.0
    return ComponentState(
        T=T, S=S, zeta=np.zeros(n), sigma2=sigma2,
        trend_scales=trend_scales,
        seasonal_scales=seasonal_scales,
        outlier_scales=OutlierScales.unit(n),
        sv=SVState(h=h, mu=mu, phi=0.9, sigma2_nu=0.1, indicators=np.zeros(n, dtype=np.int64)),
    )


# ---------------------------------------------------------------------------
# Gaussian state blocks


@lru_cache(maxsize=32)
def _trend_assembler(n):
    return GramAssembler(gibbs_trend_operator(n))


@lru_cache(maxsize=64)
def _seasonal_assembler(n, k):
    return GramAssembler(gibbs_seasonal_operator(n, k), drop_first=1)


def _row_weights(scales, sigma2, floor=0.0):
    rel = scales.variances()
    if np.any(~np.isfinite(rel)) or np.any(rel <= 0) or not sigma2 > 0:
        raise StateCorruptionError("scales")
    return 1.0 / (sigma2 * np.maximum(rel, floor))


def build_trend_precision(state, floor=0.0):
    """Prior precision ``D_T' diag(1/sigma_T^2) D_T`` of the trend (pentadiagonal).

    ``floor`` bounds each row variance divided by ``sigma_y^2`` from below
    (see ``ModelSpec.variance_floor``).
    """
    n = state.T.size
    return _trend_assembler(n).build(_row_weights(state.trend_scales, state.sigma2, floor))


def build_seasonal_precision(state, i, k, floor=0.0):
    """Prior precision of the free values ``S_i[1:]`` (half-bandwidth ``k``)."""
    n = state.T.size
    return _seasonal_assembler(n, k).build(
        _row_weights(state.seasonal_scales[i], state.sigma2, floor))


def _obs_precision(state):
    return 1.0 / (state.sigma2 * state.nu2)


def sample_trend(state, y, rng, floor=0.0):
    """Draw ``T`` from its Gaussian full conditional (in place); returns the new ``T``."""
    obs = _obs_precision(state)
    Q = build_trend_precision(state, floor).add_diagonal(obs)
    state.T = sample_gaussian_canonical(Q, state.residual(y, skip="T") * obs, rng)
    return state.T


def sample_seasonal(state, y, i, rng, period, floor=0.0):
    """Draw seasonal component ``i`` (period ``period``) with its first value pinned at zero."""
    obs = _obs_precision(state)[1:]
    Q = build_seasonal_precision(state, i, period, floor).add_diagonal(obs)
    b = state.residual(y, skip=i)[1:] * obs
    state.S[i, 0] = 0.0
    state.S[i, 1:] = sample_gaussian_canonical(Q, b, rng)
    return state.S[i]


# ---------------------------------------------------------------------------
# shrinkage scales


def sample_horseshoe_block(values, scales, sigma2, rng, global_scale=1.0):
    """Update a horseshoe cascade given the penalized increments ``values``.

    Updates, in order, ``tau^2 | psi_tau, eta, x``, ``psi_tau | tau^2``,
    ``eta_t^2 | psi_t, tau^2, x`` and ``psi_t | eta_t^2``. All are
    inverse-gamma. The first ``scales.n_direct`` rows do not involve ``tau``.

    Parameters
    ----------
    values : numpy.ndarray
        ``D x`` for the component (one entry per penalty row).
    scales : HorseshoeScales
        Modified in place and returned.
    sigma2 : float
    rng : numpy.random.Generator
    global_scale : float
        ``A`` in ``tau ~ C+(0, A)``.
    """
    d = scales.n_direct
    sq = np.asarray(values, dtype=float) ** 2
    m = sq.size - d
    ss = float(np.sum(sq[d:] / scales.eta2[d:])) / (2.0 * sigma2)
    scales.tau2 = float(inv_gamma(rng, 0.5 + 0.5 * m, 1.0 / scales.psi_tau + ss))
    scales.psi_tau = float(inv_gamma(rng, 1.0, 1.0 / global_scale ** 2 + 1.0 / scales.tau2))
    denom = np.full(sq.size, 2.0 * sigma2 * scales.tau2)
    denom[:d] = 2.0 * sigma2
    scales.eta2 = inv_gamma(rng, 1.0, 1.0 / scales.psi_eta + sq / denom, size=sq.size)
    scales.psi_eta = inv_gamma(rng, 1.0, 1.0 + 1.0 / scales.eta2, size=sq.size)
    return scales


def sample_trend_scales(state, spec, rng):
    values = _trend_increments(state.T)
    return sample_horseshoe_block(values, state.trend_scales, state.sigma2, rng, spec.scale_a)


def _trend_increments(T):
    out = np.empty_like(T)
    out[:2] = T[:2]
    out[2:] = T[2:] - 2.0 * T[1:-1] + T[:-2]
    return out


def _seasonal_increments(S, k):
    """Rows of the seasonal operator applied to ``S`` (length ``n - 1``)."""
    n = S.size
    out = np.empty(n - 1)
    out[0] = S[1]
    hi = min(k, n)
    out[1:hi - 1] = S[2:hi] - 2.0 * S[1:hi - 1] + S[: hi - 2]
    out[hi - 1:] = S[hi:] - S[: n - hi]
    return out


def sample_seasonal_scales(state, spec, i, rng):
    values = _seasonal_increments(state.S[i], spec.periods[i])
    return sample_horseshoe_block(values, state.seasonal_scales[i], state.sigma2, rng, spec.scale_a)


def sample_outliers(state, y, rng, update_scales=True):
    """Draw ``zeta`` and, optionally, its horseshoe+ cascade.

    ``zeta_t`` is Gaussian with mean ``eta^2/(nu^2 + eta^2) r_t`` and variance
    ``sigma_y^2 nu^2 eta^2/(nu^2 + eta^2)``, where ``r`` excludes ``zeta``.
    """
    sc = state.outlier_scales
    nu2 = state.nu2
    r = state.residual(y, skip="zeta")
    shrink = sc.eta2 / (nu2 + sc.eta2)
    mean = shrink * r
    if rng is None:
        state.zeta = mean
        return state.zeta
    state.zeta = mean + np.sqrt(state.sigma2 * nu2 * shrink) * rng.standard_normal(r.size)
    if update_scales:
        sample_outlier_scales(state, rng)
    return state.zeta


def sample_outlier_scales(state, rng):
    """The six inverse-gamma updates of the horseshoe+ cascade."""
    sc = state.outlier_scales
    n = state.zeta.size
    sc.eta2 = inv_gamma(rng, 1.0, 1.0 / sc.psi_eta + state.zeta ** 2 / (2.0 * state.sigma2), size=n)
    sc.psi_eta = inv_gamma(rng, 1.0, 1.0 / sc.eta2 + 1.0 / (sc.tau2 * sc.xi2), size=n)
    sc.tau2 = float(inv_gamma(rng, 0.5 * (n + 1), float(np.sum(1.0 / (sc.xi2 * sc.psi_eta))) + 1.0 / sc.psi_tau))
    sc.psi_tau = float(inv_gamma(rng, 1.0, 1.0 + 1.0 / sc.tau2))
    sc.xi2 = inv_gamma(rng, 1.0, 1.0 / sc.psi_xi + 1.0 / (sc.tau2 * sc.psi_eta), size=n)
    sc.psi_xi = inv_gamma(rng, 1.0, 1.0 + 1.0 / sc.xi2, size=n)
    return sc


# ---------------------------------------------------------------------------
# observation variance


def sigma_quadratic_forms(state, y, spec):
    """The quadratic forms entering the ``sigma_y^2`` update, each divided by its scale."""
    forms = {}
    forms["residual"] = float(np.sum(state.residual(y) ** 2 / state.nu2))
    forms["trend"] = float(np.sum(_trend_increments(state.T) ** 2 / state.trend_scales.variances()))
    forms["seasonal"] = float(sum(
        np.sum(_seasonal_increments(state.S[i], k) ** 2 / state.seasonal_scales[i].variances())
        for i, k in enumerate(spec.periods)))
    forms["outliers"] = (float(np.sum(state.zeta ** 2 / state.outlier_scales.eta2))
                         if spec.include_outliers else 0.0)
    return forms


def sample_sigma_y(state, y, rng, spec):
    """Draw ``sigma_y^2`` from ``IG(shape, b0 + sum(forms)/2)``."""
    forms = sigma_quadratic_forms(state, y, spec)
    b0 = spec.sigma_prior[1] if spec.sigma_prior else 0.0
    scale = 0.5 * sum(forms.values()) + b0
    if not scale > 0:
        raise StateCorruptionError("sigma_y", message="sigma_y^2 full conditional has zero scale")
    state.sigma2 = float(inv_gamma(rng, spec.sigma_shape(), scale))
    return state.sigma2


# ---------------------------------------------------------------------------
# stochastic volatility


def ar1_precision(n, phi, sigma2_nu):
    """Tridiagonal precision of a stationary AR(1) path."""
    bands = np.zeros((n, 2))
    bands[:, 0] = 1.0 + phi ** 2
    bands[0, 0] = bands[-1, 0] = 1.0
    bands[: n - 1, 1] = -phi
    return BandedSymmetric(bands / sigma2_nu)


def ar1_loglik(h, mu, phi, sigma2_nu):
    """Log density of a stationary AR(1) path up to the ``2 pi`` constant."""
    e0 = h[0] - mu
    innov = (h[1:] - mu) - phi * (h[:-1] - mu)
    return (0.5 * np.log1p(-phi ** 2) - 0.5 * h.size * np.log(sigma2_nu)
            - 0.5 * ((1.0 - phi ** 2) * e0 ** 2 + float(innov @ innov)) / sigma2_nu)


def phi_log_prior(phi, spec):
    a, b = spec.phi_prior
    x = 0.5 * (phi + 1.0) if spec.phi_prior_shifted else phi
    return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)


def log_squared_residual(state, y, spec):
    """``y*_t = log((r_t / sigma_y)^2 + c)``."""
    r = state.residual(y) / np.sqrt(state.sigma2)
    ystar = np.log(r ** 2 + spec.log_offset)
    if not np.all(np.isfinite(ystar)):
        raise OffsetUnderflowError("log-squared residual is not finite")
    return ystar


def sample_indicators(ystar, h, rng, weights=MIXTURE_WEIGHTS, means=MIXTURE_MEANS,
                      variances=MIXTURE_VARS):
    """Mixture component for each ``t``, drawn from its discrete full conditional."""
    dev = ystar[:, None] - h[:, None] - means[None, :]
    logp = np.log(weights) - 0.5 * np.log(variances) - 0.5 * dev ** 2 / variances
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    cum = np.cumsum(p, axis=1)
    u = rng.random(ystar.size) * cum[:, -1]
    return np.minimum((cum < u[:, None]).sum(axis=1), weights.size - 1)


def sample_log_volatility(ystar, indicators, sv, rng, means=MIXTURE_MEANS, variances=MIXTURE_VARS):
    """Joint draw of the whole path ``h`` from its tridiagonal Gaussian conditional."""
    n = ystar.size
    m, v = means[indicators], variances[indicators]
    Q_ar = ar1_precision(n, sv.phi, sv.sigma2_nu)
    rowsum = np.full(n, (1.0 - sv.phi) ** 2)
    rowsum[0] = rowsum[-1] = 1.0 - sv.phi
    b = sv.mu * rowsum / sv.sigma2_nu + (ystar - m) / v
    return sample_gaussian_canonical(Q_ar.add_diagonal(1.0 / v), b, rng)


def sample_sv(state, y, rng, spec):
    """Update indicators, ``h``, ``mu``, ``phi`` and ``sigma_nu^2`` in that order."""
    sv = state.sv
    n = y.size
    ystar = log_squared_residual(state, y, spec)
    sv.indicators = sample_indicators(ystar, sv.h, rng)
    sv.h = sample_log_volatility(ystar, sv.indicators, sv, rng)

    # mu | h, phi, sigma_nu^2 (conjugate normal)
    phi, s2 = sv.phi, sv.sigma2_nu
    prec = 1.0 / spec.mu_prior_var + ((1.0 - phi ** 2) + (n - 1) * (1.0 - phi) ** 2) / s2
    lin = ((1.0 - phi ** 2) * sv.h[0] + (1.0 - phi) * np.sum(sv.h[1:] - phi * sv.h[:-1])) / s2
    sv.mu = float(lin / prec + rng.standard_normal() / np.sqrt(prec))

    # phi | h, mu, sigma_nu^2: random-walk Metropolis on logit(phi)
    def log_target(p):
        return ar1_loglik(sv.h, sv.mu, p, s2) + phi_log_prior(p, spec) + np.log(p) + np.log1p(-p)

    logit = np.log(phi) - np.log1p(-phi)
    prop_logit = logit + spec.phi_step * rng.standard_normal()
    prop = 1.0 / (1.0 + np.exp(-prop_logit))
    sv.proposed += 1
    if 0.0 < prop < 1.0 and np.log(rng.random()) < log_target(prop) - log_target(phi):
        sv.phi = float(prop)
        sv.accepted += 1

    # sigma_nu^2 | h, mu, phi
    a0, b0 = spec.sigma_nu_prior
    e0 = sv.h[0] - sv.mu
    innov = (sv.h[1:] - sv.mu) - sv.phi * (sv.h[:-1] - sv.mu)
    ss = (1.0 - sv.phi ** 2) * e0 ** 2 + float(innov @ innov)
    sv.sigma2_nu = float(inv_gamma(rng, a0 + 0.5 * n, b0 + 0.5 * ss))
    return sv


# ---------------------------------------------------------------------------
# driver


def sweep(state, y, spec, rng, sweep_index=None):
    """One full Gibbs sweep in the fixed block order."""
    frozen = spec.freeze
    steps = []
    if "trend" not in frozen:
        steps.append(("trend", lambda: sample_trend(state, y, rng, spec.variance_floor)))
    if "seasonal" not in frozen:
        for i, k in enumerate(spec.periods):
            steps.append(("seasonal", lambda i=i, k=k: sample_seasonal(
                state, y, i, rng, k, spec.variance_floor)))
    if spec.include_outliers and "outliers" not in frozen:
        steps.append(("outliers", lambda: sample_outliers(state, y, rng, update_scales=False)))
    if "sigma_y" not in frozen:
        steps.append(("sigma_y", lambda: sample_sigma_y(state, y, rng, spec)))
    if spec.include_sv and "sv" not in frozen:
        steps.append(("sv", lambda: sample_sv(state, y, rng, spec)))
    if "trend_scales" not in frozen:
        steps.append(("trend_scales", lambda: sample_trend_scales(state, spec, rng)))
    if "seasonal_scales" not in frozen:
        for i in range(spec.n_seasonal):
            steps.append(("seasonal_scales",
                          lambda i=i: sample_seasonal_scales(state, spec, i, rng)))
    if spec.include_outliers and "outlier_scales" not in frozen:
        steps.append(("outlier_scales", lambda: sample_outlier_scales(state, rng)))
    for name, step in steps:
        try:
            step()
        except (StateCorruptionError, FloatingPointError) as exc:
            raise StateCorruptionError(name, sweep_index) from exc
        # checking after every block attributes a bad value to the block that produced it
        state.validate(block=name, sweep=sweep_index)
    return state


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained draws; arrays are read-only.

    Attributes
    ----------
    T : (n_save, N)
    S : (n_save, P, N)
    zeta, nu : (n_save, N)
    sigma_y, tau_T, tau_zeta, mu, phi, sigma_nu : (n_save,)
    tau_S : (n_save, P)
    """

    spec: ModelSpec
    T: np.ndarray
    S: np.ndarray
    zeta: np.ndarray
    nu: np.ndarray
    sigma_y: np.ndarray
    tau_T: np.ndarray
    tau_S: np.ndarray
    tau_zeta: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    sigma_nu: np.ndarray
    phi_acceptance: float = float("nan")
    runtime: float = 0.0
    final_state: ComponentState | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                value.setflags(write=False)

    @property
    def n_save(self):
        return self.T.shape[0]

    @property
    def signal(self):
        """Per-draw ``T + sum_i S_i``."""
        return self.T + self.S.sum(axis=1)

    def scalar_chains(self):
        out = {"sigma_y": self.sigma_y, "tau_T": self.tau_T}
        for i, k in enumerate(self.spec.periods):
            out[f"tau_S{k}"] = self.tau_S[:, i]
        if self.spec.include_outliers:
            out["tau_zeta"] = self.tau_zeta
        if self.spec.include_sv:
            out.update(mu=self.mu, phi=self.phi, sigma_nu=self.sigma_nu)
        return out


class _Recorder:
    def __init__(self, spec):
        n, P, m = spec.n, spec.n_seasonal, spec.n_save
        self.T = np.empty((m, n))
        self.S = np.empty((m, P, n))
        self.zeta = np.empty((m, n))
        self.nu = np.empty((m, n))
        self.scalars = {name: np.empty(m) for name in
                        ("sigma_y", "tau_T", "tau_zeta", "mu", "phi", "sigma_nu")}
        self.tau_S = np.empty((m, P))
        self.count = 0

    def record(self, state):
        j = self.count
        self.T[j] = state.T
        self.S[j] = state.S
        self.zeta[j] = state.zeta
        self.nu[j] = np.exp(0.5 * state.sv.h)
        s = self.scalars
        s["sigma_y"][j] = np.sqrt(state.sigma2)
        s["tau_T"][j] = np.sqrt(state.trend_scales.tau2)
        s["tau_zeta"][j] = np.sqrt(state.outlier_scales.tau2)
        s["mu"][j] = state.sv.mu
        s["phi"][j] = state.sv.phi
        s["sigma_nu"][j] = np.sqrt(state.sv.sigma2_nu)
        self.tau_S[j] = [np.sqrt(sc.tau2) for sc in state.seasonal_scales]
        self.count += 1


def _check_series(y, spec):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != spec.n:
        raise ConfigError(f"series has shape {y.shape}, spec expects length {spec.n}")
    if not np.all(np.isfinite(y)):
        raise DataError("series contains non-finite values")
    if np.ptp(y) == 0.0:
        warnings.warn("series is constant; the sigma_y^2 posterior is driven by the "
                      "log offset and penalty terms only", RuntimeWarning, stacklevel=3)
    return y


def run_decomposition(y, spec, state=None, progress=None):
    """Run the sampler and return the retained draws.

    Parameters
    ----------
    y : array_like, shape (n,)
    spec : ModelSpec
    state : ComponentState, optional
        Starting state; :func:`initial_state` by default.
    progress : callable, optional
        Called as ``progress(sweep_index, n_sweeps)`` after every sweep.

    Returns
    -------
    PosteriorDraws
    """
    y = _check_series(y, spec)
    rng = np.random.default_rng(spec.seed)
    state = initial_state(y, spec) if state is None else state.copy()
    if not spec.include_sv:
        state.sv.h = np.zeros(spec.n)
    if not spec.include_outliers:
        state.zeta = np.zeros(spec.n)
    rec = _Recorder(spec)
    start = time.perf_counter()
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        for it in range(spec.n_sweeps):
            sweep(state, y, spec, rng, sweep_index=it)
            state.validate(sweep=it)
            post = it - spec.n_burn
            if post >= 0 and (post + 1) % spec.thin == 0:
                rec.record(state)
            if progress is not None:
                progress(it, spec.n_sweeps)
    runtime = time.perf_counter() - start
    sv = state.sv
    return PosteriorDraws(
        spec=spec, T=rec.T, S=rec.S, zeta=rec.zeta, nu=rec.nu,
        sigma_y=rec.scalars["sigma_y"], tau_T=rec.scalars["tau_T"], tau_S=rec.tau_S,
        tau_zeta=rec.scalars["tau_zeta"], mu=rec.scalars["mu"], phi=rec.scalars["phi"],
        sigma_nu=rec.scalars["sigma_nu"],
        phi_acceptance=sv.accepted / sv.proposed if sv.proposed else float("nan"),
        runtime=runtime, final_state=state,
    )


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class Interval:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def width(self):
        return self.upper - self.lower


@dataclass(frozen=True)
class Summary:
    """Posterior means and equal-tailed pointwise intervals."""

    level: float
    trend: Interval
    seasonals: tuple
    seasonal_total: Interval
    signal: Interval
    outliers: Interval
    nu: Interval
    volatility: Interval
    scalars: dict


def interval(draws, level):
    """Mean and equal-tailed interval over the first axis.

    The bounds are order statistics: the lower bound is the largest draw
    with empirical CDF below ``(1 - level)/2`` and the upper bound is
    its mirror image.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.shape[0] == 0:
        raise ConfigError("no draws to summarize")
    alpha = 0.5 * (1.0 - level)
    lo = np.quantile(draws, alpha, axis=0, method="lower")
    hi = np.quantile(draws, 1.0 - alpha, axis=0, method="higher")
    return Interval(draws.mean(axis=0), lo, hi)


def centered_seasonals(draws):
    """Shift each seasonal draw to mean zero over its complete cycles.

    The sampler pins ``S_i[0] = 0``, which fixes the level of each seasonal
    arbitrarily. For reporting, the mean over the first ``floor(N/k) k``
    points is subtracted from the seasonal and added to the trend, so the
    signal draws are unchanged. Returns ``(T, S)`` arrays.
    """
    T = np.array(draws.T, dtype=float, copy=True)
    S = np.array(draws.S, dtype=float, copy=True)
    n = T.shape[1]
    for i, k in enumerate(draws.spec.periods):
        m = (n // k) * k
        level = S[:, i, :m].mean(axis=1, keepdims=True)
        S[:, i] -= level
        T += level
    return T, S


def summarize(draws, level=0.95, center_seasonals=True):
    """Pointwise posterior summaries of every component.

    Parameters
    ----------
    draws : PosteriorDraws
    level : float
        Interval probability in (0, 1).
    center_seasonals : bool
        Report seasonals centered over complete cycles (see
        :func:`centered_seasonals`); otherwise report the pinned form.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError(f"level must lie in (0, 1), got {level}")
    if draws.n_save == 0:
        raise ConfigError("no draws to summarize")
    if center_seasonals:
        T, S = centered_seasonals(draws)
    else:
        T, S = draws.T, draws.S
    scalars = {}
    for name, chain in draws.scalar_chains().items():
        iv = interval(chain[:, None], level)
        scalars[name] = {"mean": float(iv.mean[0]), "sd": float(np.std(chain)),
                         "lower": float(iv.lower[0]), "upper": float(iv.upper[0])}
    return Summary(
        level=level,
        trend=interval(T, level),
        seasonals=tuple(interval(S[:, i], level) for i in range(S.shape[1])),
        seasonal_total=interval(S.sum(axis=1), level),
        signal=interval(T + S.sum(axis=1), level),
        outliers=interval(draws.zeta, level),
        nu=interval(draws.nu, level),
        volatility=interval(draws.nu * draws.sigma_y[:, None], level),
        scalars=scalars,
    )


# ---------------------------------------------------------------------------
# link to the penalized estimator


def gibbs_penalties(n, periods, tau2_T=1.0, tau2_S=1.0):
    """Penalties whose minimizer is the conditional posterior mode of ``(T, S)``.

    With unit local scales, ``nu = 1`` and no outliers, the joint
    conditional of the trend and seasonals is Gaussian and its mode solves
    the penalized problem with weight 1 on the direct rows and
    ``1/tau^2`` on the difference rows; ``S_i[0]`` is pinned.

    Returns
    -------
    (ComponentPenalties, lambdas)
    """
    periods = sorted(int(k) for k in periods)
    tau2_S = np.broadcast_to(np.asarray(tau2_S, dtype=float), (len(periods),))
    trend = gibbs_trend_operator(n)
    trend_ops = [trend.take_rows([0, 1]), trend.take_rows(np.arange(2, n))]
    lambdas = [[1.0, 1.0 / tau2_T]]
    seasonal_ops = []
    for k, t2 in zip(periods, tau2_S):
        op = gibbs_seasonal_operator(n, k)
        seasonal_ops.append([op.take_rows([0]), op.take_rows(np.arange(1, n - 1))])
        lambdas.append([1.0, 1.0 / t2])
    p = ComponentPenalties(trend_ops, seasonal_ops, ["pin_first"] * len(periods))
    return p, lambdas


def conditional_mean_sweeps(y, spec, state, max_sweeps=100000, tol=1e-12):
    """Iterate conditional means of ``T`` and each ``S_i`` to their fixed point.

    Scales, ``sigma_y`` and ``nu`` stay at their values in ``state``. The
    iteration is block Gauss-Seidel on the joint Gaussian conditional, so
    it converges to that conditional's mean (its mode).

    Returns
    -------
    (ComponentState, int)
        The converged state and the number of sweeps used.
    """
    y = np.asarray(y, dtype=float)
    state = state.copy()
    for it in range(1, max_sweeps + 1):
        before = np.vstack([state.T[None, :], state.S])
        sample_trend(state, y, None)
        for i, k in enumerate(spec.periods):
            sample_seasonal(state, y, i, None, k)
        if spec.include_outliers:
            sample_outliers(state, y, None, update_scales=False)
        after = np.vstack([state.T[None, :], state.S])
        if np.linalg.norm(after - before) <= tol * max(np.linalg.norm(after), 1.0):
            return state, it
    return state, max_sweeps


# ---------------------------------------------------------------------------
# prior simulation and joint-distribution checks


def _half_cauchy_sq(rng, scale, size=None):
    """``x^2`` for ``x ~ C+(0, scale)`` through the inverse-gamma expansion; returns (x^2, psi)."""
    psi = inv_gamma(rng, 0.5, 1.0 / np.asarray(scale) ** 2, size=size)
    return inv_gamma(rng, 0.5, 1.0 / psi, size=size), psi


def sample_prior(spec, rng):
    """Draw every parameter and latent block from the prior.

    Requires a proper ``sigma_prior``. The returned state has
    ``S_i[0] = 0`` and all auxiliary variables drawn jointly with their
    scales.
    """
    if spec.sigma_prior is None:
        raise ConfigError("prior simulation needs a proper sigma_prior")
    n = spec.n
    sigma2 = float(inv_gamma(rng, *spec.sigma_prior))

    def cascade(rows, n_direct):
        tau2, psi_tau = _half_cauchy_sq(rng, spec.scale_a)
        eta2, psi_eta = _half_cauchy_sq(rng, 1.0, size=rows)
        return HorseshoeScales(float(tau2), float(psi_tau), eta2, psi_eta, n_direct)

    ts = cascade(n, 2)
    incr = np.sqrt(sigma2 * ts.variances()) * rng.standard_normal(n)
    T = _undo_trend_increments(incr)
    S = np.zeros((spec.n_seasonal, n))
    seas_scales = []
    for i, k in enumerate(spec.periods):
        sc = cascade(n - 1, 1)
        incr = np.sqrt(sigma2 * sc.variances()) * rng.standard_normal(n - 1)
        S[i] = _undo_seasonal_increments(incr, k)
        seas_scales.append(sc)

    tau2_z, psi_tau_z = _half_cauchy_sq(rng, 1.0)
    xi2, psi_xi = _half_cauchy_sq(rng, 1.0, size=n)
    psi_eta_z = inv_gamma(rng, 0.5, 1.0 / (tau2_z * xi2), size=n)
    eta2_z = inv_gamma(rng, 0.5, 1.0 / psi_eta_z, size=n)
    outl = OutlierScales(eta2_z, psi_eta_z, float(tau2_z), float(psi_tau_z), xi2, psi_xi)
    zeta = (np.sqrt(sigma2 * eta2_z) * rng.standard_normal(n)
            if spec.include_outliers else np.zeros(n))

    if spec.include_sv:
        mu = float(np.sqrt(spec.mu_prior_var) * rng.standard_normal())
        phi = _sample_phi_prior(spec, rng)
        s2nu = float(inv_gamma(rng, *spec.sigma_nu_prior))
        h = np.empty(n)
        h[0] = mu + np.sqrt(s2nu / (1.0 - phi ** 2)) * rng.standard_normal()
        eps = rng.standard_normal(n) * np.sqrt(s2nu)
        for t in range(1, n):
            h[t] = mu + phi * (h[t - 1] - mu) + eps[t]
    else:
        mu, phi, s2nu, h = 0.0, 0.9, 0.1, np.zeros(n)
    sv = SVState(h=h, mu=mu, phi=phi, sigma2_nu=s2nu, indicators=np.zeros(n, dtype=np.int64))
    return ComponentState(T, S, zeta, sigma2, ts, seas_scales, outl, sv)


def _sample_phi_prior(spec, rng):
    a, b = spec.phi_prior
    if not spec.phi_prior_shifted:
        return float(rng.beta(a, b))
    while True:  # Beta on (phi + 1)/2 truncated to phi in (0, 1)
        phi = 2.0 * rng.beta(a, b) - 1.0
        if phi > 0.0:
            return float(phi)


def _undo_trend_increments(incr):
    """Invert ``_trend_increments``: rebuild ``T`` from its first values and second differences."""
    n = incr.size
    T = np.empty(n)
    T[:2] = incr[:2]
    for t in range(2, n):
        T[t] = incr[t] + 2.0 * T[t - 1] - T[t - 2]
    return T


def _undo_seasonal_increments(incr, k):
    n = incr.size + 1
    S = np.zeros(n)
    S[1] = incr[0]
    for t in range(2, n):
        if t < k:
            S[t] = incr[t - 1] + 2.0 * S[t - 1] - S[t - 2]
        else:
            S[t] = incr[t - 1] + S[t - k]
    return S


def simulate_observations(state, spec, rng, noise="gaussian"):
    """Draw ``y`` given every latent block.

    ``noise="mixture"`` draws ``log eps_t^2`` from the normal-mixture
    approximation instead of ``log chi^2_1``, matching the model the
    volatility block actually targets.
    """
    n = spec.n
    scale = np.sqrt(state.sigma2 * state.nu2) if spec.include_sv else np.sqrt(state.sigma2) * np.ones(n)
    if noise == "gaussian":
        eps = rng.standard_normal(n)
    elif noise == "mixture":
        comp = rng.choice(MIXTURE_WEIGHTS.size, size=n, p=MIXTURE_WEIGHTS / MIXTURE_WEIGHTS.sum())
        log_e2 = MIXTURE_MEANS[comp] + np.sqrt(MIXTURE_VARS[comp]) * rng.standard_normal(n)
        eps = np.exp(0.5 * log_e2) * rng.choice([-1.0, 1.0], size=n)
    else:
        raise ConfigError(f"unknown noise model {noise!r}")
    return state.T + state.S.sum(axis=0) + state.zeta + scale * eps


TRACKED = ("tau_T", "sigma_y", "tau_S", "tau_zeta", "phi", "sigma_nu", "mu", "abs_T_end")


def tracked_statistics(state):
    """Scalars compared by the joint-distribution check."""
    return {"tau_T": np.sqrt(state.trend_scales.tau2), "sigma_y": np.sqrt(state.sigma2),
            "tau_S": np.sqrt(state.seasonal_scales[0].tau2) if state.seasonal_scales else 1.0,
            "tau_zeta": np.sqrt(state.outlier_scales.tau2), "phi": state.sv.phi,
            "sigma_nu": np.sqrt(state.sv.sigma2_nu), "mu": state.sv.mu,
            "abs_T_end": abs(state.T[-1]) + 1e-300}


def getting_it_right(spec, n_chains, n_cycles, seed=0, noise="mixture", step=None):
    """Successive-conditional simulation for validating the full conditionals.

    Each of ``n_chains`` independent chains starts from a prior draw of
    ``(theta, y)`` and alternates one Gibbs sweep ``theta | y`` with a fresh
    ``y | theta``. If every conditional is correct the joint prior is
    invariant, so the final ``theta`` of every chain is an exact prior draw.
    Returns ``(coupled, prior)``: dicts of arrays of tracked statistics for
    the chain end points and for the same number of independent prior draws.

    ``step`` replaces :func:`sweep` (used to check that the test detects
    deliberately broken conditionals).
    """
    step = sweep if step is None else step
    rng = np.random.default_rng(seed)
    coupled = {k: [] for k in TRACKED}
    prior = {k: [] for k in coupled}
    for _ in range(n_chains):
        state = sample_prior(spec, rng)
        y = simulate_observations(state, spec, rng, noise)
        for _ in range(n_cycles):
            with np.errstate(over="ignore", under="ignore"):
                step(state, y, spec, rng)
            y = simulate_observations(state, spec, rng, noise)
        for k, v in tracked_statistics(state).items():
            coupled[k].append(v)
        for k, v in tracked_statistics(sample_prior(spec, rng)).items():
            prior[k].append(v)
    return ({k: np.asarray(v) for k, v in coupled.items()},
            {k: np.asarray(v) for k, v in prior.items()})
