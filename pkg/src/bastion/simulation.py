"""Synthetic data generators and the simulation study harness.

Four data generating processes of length 500:

1. piecewise-linear trend + Fourier seasonals (12, 40) + N(0, 2^2) noise;
2. linear trend + centered 10-step block seasonal (period 40) + noise
   with standard deviation ``|m|/10``;
3. cubic trend + Fourier seasonal (50) + stochastic-volatility noise;
4. piecewise-linear trend + Fourier (12) + block seasonal (40) + Poisson
   count of N(0, 15^2) outliers + stochastic-volatility noise.

Each replication is scored on the posterior mean (MSE) and on the
pointwise credible intervals (empirical coverage and mean width) for the
signal, the trend and the sum of the seasonals.
"""

from __future__ import annotations

import csv
import io
import json
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .gibbs import ModelSpec, run_decomposition, summarize

N_DGP = 500
DGP_IDS = (1, 2, 3, 4)
#: Seasonal periods fitted for each generator.
FIT_PERIODS = {1: (12, 40), 2: (40,), 3: (50,), 4: (12, 40)}
#: Model components switched on for each generator when the study matches
#: the fit to the generator's features (volatility for 3 and 4, outliers for 4).
FIT_COMPONENTS = {
    1: {"include_sv": False, "include_outliers": False},
    2: {"include_sv": False, "include_outliers": False},
    3: {"include_sv": True, "include_outliers": False},
    4: {"include_sv": True, "include_outliers": True},
}
COMPONENT_MODES = ("matched", "base")
INTERVAL_CAP = 1e9


@dataclass(frozen=True)
class DgpInstance:
    """One simulated series together with its ground truth."""

    dgp_id: int
    seed: int
    y: np.ndarray
    true_trend: np.ndarray
    true_seasonals: dict
    true_outliers: np.ndarray
    true_noise: np.ndarray
    true_log_var: np.ndarray | None = None

    @property
    def n(self):
        return self.y.size

    @property
    def periods(self):
        return tuple(self.true_seasonals)

    @property
    def seasonal_total(self):
        return np.sum(list(self.true_seasonals.values()), axis=0)

    @property
    def signal(self):
        return self.true_trend + self.seasonal_total


def _rng(dgp_id, seed):
    return np.random.default_rng(np.random.SeedSequence([int(dgp_id), int(seed)]))


def _piecewise_trend(rng, t):
    """Four linear segments with independent slopes and intercepts.

    Segment lengths ``b_1..b_3 ~ U(30, 125)`` are rounded to integers; the
    reference point of segment ``i`` is its right end ``B_i`` (cumulative
    length), with ``B_4 = 500``.
    """
    m = rng.uniform(-20, 20, 4)
    c = rng.uniform(-10, 10, 4)
    lengths = np.rint(rng.uniform(30, 125, 3)).astype(int)
    ends = np.append(np.cumsum(lengths), t[-1])
    seg = np.searchsorted(ends[:3], t, side="right")
    return m[seg] * 0.04 * (t - ends[seg]) + c[seg], ends[:3]


def _fourier(rng, t, k, sd):
    g1, g2 = rng.normal(0.0, sd, 2)
    return g1 * np.sin(2 * np.pi * t / k) + g2 * np.cos(2 * np.pi * t / k)


def _blocks(rng, t, half_width):
    """Period-40 pattern of four centered 10-step levels."""
    v = rng.uniform(-half_width, half_width, 4)
    v = v - v.mean()
    return v[((t - 1) % 40) // 10]


def _sv_path(rng, n, level, phi=0.98, sd=0.2):
    """Stationary AR(1) log-variance path."""
    h = np.empty(n)
    h[0] = level + sd / np.sqrt(1 - phi ** 2) * rng.standard_normal()
    eps = rng.standard_normal(n)
    for i in range(1, n):
        h[i] = level + phi * (h[i - 1] - level) + sd * eps[i]
    return h


def generate_dgp(dgp_id, seed, n=N_DGP):
    """Draw one replication of generator ``dgp_id`` (1 to 4).

    Time runs over ``t = 1..n``. The result is a deterministic function of
    ``(dgp_id, seed)``.
    """
    if dgp_id not in DGP_IDS:
        raise ConfigError(f"unknown generator {dgp_id!r}; choose one of {DGP_IDS}")
    rng = _rng(dgp_id, seed)
    t = np.arange(1, n + 1, dtype=float)
    outliers = np.zeros(n)
    log_var = None
    if dgp_id == 1:
        trend, _ = _piecewise_trend(rng, t)
        seas = {12: _fourier(rng, t, 12, 4.0), 40: _fourier(rng, t, 40, 5.0)}
        noise = rng.normal(0.0, 2.0, n)
    elif dgp_id == 2:
        m = rng.normal(0.0, 30.0)
        trend = m * t / 500.0
        seas = {40: _blocks(rng, t.astype(int), 8.0)}
        noise = rng.normal(0.0, abs(m) / 10.0, n)
    elif dgp_id == 3:
        b0 = rng.uniform(-15, 15)
        b = rng.normal(0.0, 20.0, 3)
        u = t / 500.0
        trend = b0 + b[0] * u + b[1] * u ** 2 + b[2] * u ** 3
        seas = {50: _fourier(rng, t, 50, 5.0)}
        log_var = _sv_path(rng, n, 2.5)
        noise = np.exp(0.5 * log_var) * rng.standard_normal(n)
    else:
        trend, _ = _piecewise_trend(rng, t)
        seas = {12: _fourier(rng, t, 12, 4.0), 40: _blocks(rng, t.astype(int), 20.0)}
        count = int(rng.poisson(5))
        count = min(count, n)
        where = rng.choice(n, size=count, replace=False)
        outliers[where] = rng.normal(0.0, 15.0, count)
        log_var = _sv_path(rng, n, 0.8)
        noise = np.exp(0.5 * log_var) * rng.standard_normal(n)
    y = trend + np.sum(list(seas.values()), axis=0) + outliers + noise
    return DgpInstance(dgp_id, int(seed), y, trend, seas, outliers, noise, log_var)


# ---------------------------------------------------------------------------
# scoring


@dataclass
class StudyRow:
    """Scores of one replication."""

    dgp: int
    rep: int
    seed: int
    mse_signal: float
    mse_trend: float
    mse_seasonal: float
    coverage_signal: float
    coverage_trend: float
    coverage_seasonal: float
    width_signal: float
    width_trend: float
    width_seasonal: float
    runtime: float = 0.0


def _triple(obj):
    if hasattr(obj, "mean") and hasattr(obj, "lower"):
        return np.asarray(obj.mean), np.asarray(obj.lower), np.asarray(obj.upper)
    mean, lower, upper = obj
    return np.asarray(mean, float), np.asarray(lower, float), np.asarray(upper, float)


def _score(estimate, truth):
    mean, lo, hi = _triple(estimate)
    if not (mean.shape == lo.shape == hi.shape == truth.shape):
        raise ConfigError(f"estimate shape {mean.shape} does not match the truth {truth.shape}")
    lo = np.clip(lo, -INTERVAL_CAP, INTERVAL_CAP)
    hi = np.clip(hi, -INTERVAL_CAP, INTERVAL_CAP)
    mse = float(np.mean((mean - truth) ** 2))
    coverage = float(np.mean((truth >= lo) & (truth <= hi)))
    width = float(np.mean(hi - lo))
    return mse, coverage, width


def evaluate(estimates, instance, rep=0, runtime=0.0):
    """Score posterior estimates against the truth of one instance.

    Parameters
    ----------
    estimates : Summary or mapping
        A :class:`bastion.gibbs.Summary`, or a mapping with keys
        ``"signal"``, ``"trend"`` and ``"seasonal"``. Each value is an
        object with ``mean/lower/upper`` or a ``(mean, lower, upper)`` tuple.
    instance : DgpInstance
    """
    if hasattr(estimates, "signal") and hasattr(estimates, "seasonal_total"):
        est = {"signal": estimates.signal, "trend": estimates.trend,
               "seasonal": estimates.seasonal_total}
    else:
        est = estimates
    truths = {"signal": instance.signal, "trend": instance.true_trend,
              "seasonal": instance.seasonal_total}
    scores = {name: _score(est[name], truths[name]) for name in ("signal", "trend", "seasonal")}
    return StudyRow(
        dgp=instance.dgp_id, rep=int(rep), seed=instance.seed,
        mse_signal=scores["signal"][0], mse_trend=scores["trend"][0],
        mse_seasonal=scores["seasonal"][0],
        coverage_signal=scores["signal"][1], coverage_trend=scores["trend"][1],
        coverage_seasonal=scores["seasonal"][1],
        width_signal=scores["signal"][2], width_trend=scores["trend"][2],
        width_seasonal=scores["seasonal"][2], runtime=float(runtime),
    )


# ---------------------------------------------------------------------------
# study driver

METRICS = ("signal", "trend", "seasonal")


@dataclass
class StudyResult:
    """Per-replication rows and per-generator means."""

    rows: list
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.dgp, r.rep))

    def dgps(self):
        return sorted({r.dgp for r in self.rows})

    def aggregate(self, prefix):
        """``{dgp: {metric: mean}}`` for ``prefix`` in ``mse``, ``coverage`` or ``width``."""
        out = {}
        for d in self.dgps():
            rows = [r for r in self.rows if r.dgp == d]
            out[d] = {m: float(np.mean([getattr(r, f"{prefix}_{m}") for r in rows]))
                      for m in METRICS}
        return out

    def table_csv(self, prefix):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dgp", "replications"] + list(METRICS))
        agg = self.aggregate(prefix)
        for d in self.dgps():
            n = sum(1 for r in self.rows if r.dgp == d)
            w.writerow([d, n] + [f"{agg[d][m]:.10g}" for m in METRICS])
        return buf.getvalue()

    def replications_csv(self):
        buf = io.StringIO()
        names = [f for f in StudyRow.__dataclass_fields__ if f != "runtime"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in self.rows:
            w.writerow([getattr(r, f) if isinstance(getattr(r, f), int) else f"{getattr(r, f):.10g}"
                        for f in names])
        return buf.getvalue()

    def write(self, out_dir):
        """Write ``mse.csv``, ``coverage.csv``, ``width.csv``, ``replications.csv``,
        ``manifest.json`` and ``timing.json`` into ``out_dir``.

        Everything except ``timing.json`` is a deterministic function of the
        settings and seeds.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for prefix in ("mse", "coverage", "width"):
            (out / f"{prefix}.csv").write_text(self.table_csv(prefix))
        (out / "replications.csv").write_text(self.replications_csv())
        manifest = dict(self.settings)
        manifest["seeds"] = {str(d): [r.seed for r in self.rows if r.dgp == d] for d in self.dgps()}
        manifest["build"] = build_description()
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        timing = {"total_seconds": sum(r.runtime for r in self.rows),
                  "per_replication": [{"dgp": r.dgp, "rep": r.rep, "seconds": r.runtime}
                                      for r in self.rows]}
        (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
        return out


def build_description():
    """``git describe`` of the source tree, or the package version outside a checkout."""
    from . import __version__

    here = Path(__file__).resolve().parent
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10, check=False)
        if res.returncode == 0 and res.stdout.strip():
            return f"{__version__}+{res.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def fit_spec(dgp_id, base, seed, components="matched"):
    """Model settings for one replication.

    The generator's periods, the series length and ``seed`` are filled in on
    top of ``base``. With ``components="matched"`` the volatility and
    outlier blocks follow :data:`FIT_COMPONENTS`; with ``"base"`` they are
    taken from ``base`` unchanged.
    """
    if components not in COMPONENT_MODES:
        raise ConfigError(f"unknown components mode {components!r}; choose one of {COMPONENT_MODES}")
    extra = FIT_COMPONENTS[dgp_id] if components == "matched" else {}
    return replace(base, n=N_DGP, periods=FIT_PERIODS[dgp_id], seed=int(seed), **extra)


def run_replication(dgp_id, rep, seed, base, level=0.95, components="matched"):
    """Generate, fit and score one replication."""
    inst = generate_dgp(dgp_id, seed)
    spec = fit_spec(dgp_id, base, seed, components)
    start = time.perf_counter()
    draws = run_decomposition(inst.y, spec)
    summary = summarize(draws, level=level)
    return evaluate(summary, inst, rep=rep, runtime=time.perf_counter() - start)


def _task(args):
    return run_replication(*args)


def default_base_spec(**overrides):
    """Sampler settings used by the study; ``n`` and ``periods`` are filled per generator."""
    return ModelSpec(n=N_DGP, periods=(), **overrides)


def run_study(dgp_ids, replications, base=None, seed=0, jobs=1, level=0.95, progress=None,
              components="matched"):
    """Run ``replications`` fits for each generator.

    Parameters
    ----------
    dgp_ids : iterable of int
    replications : int
    base : ModelSpec, optional
        Sampler settings (defaults to :func:`default_base_spec`).
    seed : int
        Replication ``r`` uses seed ``seed + r`` for both data and sampler.
    jobs : int
        Worker processes; 1 runs in the calling process.
    progress : callable, optional
        Called with each finished :class:`StudyRow`.
    components : {"matched", "base"}
        How the volatility and outlier blocks are chosen (see :func:`fit_spec`).
    """
    dgp_ids = [int(d) for d in dgp_ids]
    for d in dgp_ids:
        if d not in DGP_IDS:
            raise ConfigError(f"unknown generator {d!r}; choose one of {DGP_IDS}")
    if int(replications) < 1:
        raise ConfigError("replications must be at least 1")
    base = default_base_spec() if base is None else base
    if components not in COMPONENT_MODES:
        raise ConfigError(f"unknown components mode {components!r}; choose one of {COMPONENT_MODES}")
    tasks = [(d, r, seed + r, base, level, components) for d in dgp_ids for r in range(int(replications))]
    rows = []
    if jobs <= 1:
        for task in tasks:
            row = run_replication(*task)
            rows.append(row)
            if progress:
                progress(row)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row in pool.map(_task, tasks):
                rows.append(row)
                if progress:
                    progress(row)
    settings = {
        "dgp_ids": dgp_ids, "replications": int(replications), "seed_base": int(seed),
        "level": level, "fit_periods": {str(d): list(FIT_PERIODS[d]) for d in dgp_ids},
        "components": components,
        "fit_components": {str(d): {k: getattr(fit_spec(d, base, 0, components), k)
                                    for k in ("include_sv", "include_outliers")}
                           for d in dgp_ids},
        "sampler": {k: v for k, v in base.to_dict().items()
                    if k not in ("n", "periods", "seed", "include_sv", "include_outliers")},
    }
    return StudyResult(rows, settings)


def load_rows(path):
    """Read a ``replications.csv`` back into :class:`StudyRow` objects."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(StudyRow(**{k: (int(v) if k in ("dgp", "rep", "seed") else float(v))
                                    for k, v in rec.items()}))
    return rows


__all__ = ["DgpInstance", "StudyRow", "StudyResult", "generate_dgp", "evaluate", "run_study",
           "run_replication", "fit_spec", "FIT_PERIODS", "FIT_COMPONENTS", "default_base_spec", "load_rows"]
