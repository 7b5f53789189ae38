"""Acceptance suite: one PASS/FAIL line per criterion.

Run on its own with ``pytest tests/test_acceptance.py -v -s`` to see the
lines as they are produced; they are also repeated in the terminal summary
under "acceptance criteria". Criteria 5 and 6 fit 150 replications and take
roughly half an hour on one core.
"""

import json
import time

import numpy as np
import pytest
from scipy import stats

from bastion import gibbs
from bastion.cli import main
from bastion.gaussian_sampler import BandedSymmetric, sample_gaussian_canonical
from bastion.gibbs import (
    HorseshoeScales,
    ModelSpec,
    conditional_mean_sweeps,
    gibbs_penalties,
    initial_state,
    sample_horseshoe_block,
    sample_outlier_scales,
    sample_sigma_y,
    sample_sv,
)
from bastion.identifiability import (
    check_identifiability,
    nullity_formula_differencing,
    nullity_formula_recurrence,
    oracle_nullity,
)
from bastion.map_solver import solve_map
from bastion.simulation import default_base_spec, run_study

from helpers import random_configuration, seasonal_only

KS_P = 0.01


def ig_cdf(x, shape, scale):
    return stats.invgamma.cdf(x, shape, scale=scale)


# ---------------------------------------------------------------------------
# 1. identifiability verdicts against the numeric nullity


def _named_cases():
    from bastion.identifiability import ComponentPenalties
    from bastion.operators import make_operator

    n = 120
    centered = ComponentPenalties(
        [make_operator("second_difference", n)],
        [[make_operator("second_difference", n), make_operator("seasonal_difference", n, k)]
         for k in (12, 40)],
        ["center", "center"],
    )
    return [
        ("recurrence single season", seasonal_only(60, [7], "seasonal_recurrence"), 0),
        ("differencing single season", seasonal_only(60, [7], "seasonal_difference"), 1),
        ("(12,40) recurrence", seasonal_only(n, [12, 40], "seasonal_recurrence",
                                             full_windows=False),
         nullity_formula_recurrence([12, 40])),
        ("(12,40) differencing", seasonal_only(n, [12, 40], "seasonal_difference"),
         nullity_formula_differencing([12, 40])),
        ("mixed differencing, centered", centered, 0),
    ]


def test_criterion_1_identifiability_oracle(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches, kinds_seen, configs = [], set(), 60
    for i in range(configs):
        p, periods, lam, kinds = random_configuration(rng)
        kinds_seen.update(k for ks in kinds for k in ks)
        kinds_seen.update(op.kind.value for op in p.trend_ops)
        rep = check_identifiability(p)
        oracle = oracle_nullity(p, lam)
        if rep.nullity != oracle or rep.identifiable != (oracle == 0):
            mismatches.append((i, periods, rep.nullity, oracle))
    named = []
    for name, p, expected in _named_cases():
        rep, oracle = check_identifiability(p), oracle_nullity(p)
        named.append(rep.nullity == oracle == expected)
    elapsed = time.perf_counter() - start
    ok = not mismatches and all(named) and elapsed < 120 and len(kinds_seen) >= 4
    acceptance(1, "identifiability verdict equals numeric nullity", ok,
               f"{configs} random configurations, {len(mismatches)} mismatches, "
               f"{sum(named)}/{len(named)} named cases, operator kinds {sorted(kinds_seen)}, "
               f"{elapsed:.1f} s")
    assert ok, mismatches


# ---------------------------------------------------------------------------
# 2. conditional-mean fixed point equals the penalized estimator


def test_criterion_2_map_equivalence(acceptance):
    start = time.perf_counter()
    n, k = 40, 5
    rng = np.random.default_rng(7)
    y = 0.1 * np.arange(n) + np.resize(rng.normal(size=k), n) + rng.normal(size=n)
    spec = ModelSpec(n=n, periods=(k,), include_sv=False, include_outliers=False)
    errors = []
    for tau2 in ((1.0, 1.0), (0.01, 0.5), (50.0, 0.002)):
        st = initial_state(y, spec)
        st.trend_scales = HorseshoeScales.unit(n, 2)
        st.seasonal_scales = [HorseshoeScales.unit(n - 1, 1)]
        st.trend_scales.tau2, st.seasonal_scales[0].tau2 = tau2
        st.sigma2 = 2.5
        fixed, _ = conditional_mean_sweeps(y, spec, st, tol=1e-14)
        sol = solve_map(y, *gibbs_penalties(n, (k,), *tau2))
        got = np.vstack([fixed.T[None, :], fixed.S])
        errors.append(np.linalg.norm(got - sol.components) / np.linalg.norm(sol.components))
    elapsed = time.perf_counter() - start
    ok = max(errors) <= 1e-6 and elapsed < 60
    acceptance(2, "Gibbs fixed-point mean equals penalized estimator", ok,
               f"max relative L2 error {max(errors):.2e} over 3 weight settings, {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 3. sampler moment oracles and inverse-gamma conditionals


def _gaussian_moment_check(rng):
    n, m = 8, 200_000
    a = rng.normal(size=(n, n)) * (np.abs(np.subtract.outer(range(n), range(n))) <= 2)
    q = a @ a.T * (np.abs(np.subtract.outer(range(n), range(n))) <= 2) + n * np.eye(n)
    b = rng.normal(size=n)
    qb = BandedSymmetric.from_dense(q, 2)
    draws = np.array([sample_gaussian_canonical(qb, b, rng) for _ in range(m)])
    mean, cov = np.linalg.solve(q, b), np.linalg.inv(q)
    z_mean = np.abs(draws.mean(0) - mean) / np.sqrt(np.diag(cov) / m)
    se_cov = np.sqrt((cov ** 2 + np.outer(np.diag(cov), np.diag(cov))) / m)
    z_cov = np.abs(np.cov(draws, rowvar=False) - cov) / se_cov
    return float(max(z_mean.max(), z_cov.max()))


def _ig_pvalues(rng, m=4000):
    out = {}
    rows, d = 25, 2
    values = rng.normal(size=rows) * 0.5
    base = HorseshoeScales(0.3, 0.8, rng.uniform(0.5, 2.0, rows), rng.uniform(0.5, 2.0, rows), d)
    s2, A = 1.7, 0.05
    draws = []
    for _ in range(m):
        sc = base.copy()
        sample_horseshoe_block(values, sc, s2, rng, global_scale=A)
        draws.append(sc)
    tau2 = np.array([sc.tau2 for sc in draws])
    scale = 1.0 / base.psi_tau + float(np.sum(values[d:] ** 2 / base.eta2[d:])) / (2 * s2)
    out["horseshoe tau^2"] = stats.kstest(tau2, ig_cdf, args=(0.5 + 0.5 * (rows - d), scale)).pvalue
    out["horseshoe psi_tau"] = stats.kstest(
        [ig_cdf(sc.psi_tau, 1.0, 1 / A ** 2 + 1 / sc.tau2) for sc in draws], "uniform").pvalue
    t = d + 3
    out["horseshoe eta^2"] = stats.kstest(
        ig_cdf(np.array([sc.eta2[t] for sc in draws]), 1.0,
               1 / base.psi_eta[t] + values[t] ** 2 / (2 * s2 * tau2)), "uniform").pvalue
    out["horseshoe psi_eta"] = stats.kstest(
        [ig_cdf(sc.psi_eta[t], 1.0, 1 + 1 / sc.eta2[t]) for sc in draws], "uniform").pvalue

    n = 30
    spec = ModelSpec(n=n, periods=())
    state = initial_state(rng.normal(size=n), spec)
    state.zeta = rng.normal(size=n)
    state.sigma2 = 1.3
    ob = state.outlier_scales
    ob.psi_eta, ob.xi2, ob.tau2 = rng.uniform(0.5, 2, n), rng.uniform(0.5, 2, n), 0.6
    rec = []
    for _ in range(m):
        state.outlier_scales = ob.copy()
        rec.append(sample_outlier_scales(state, rng))
    z2 = state.zeta[4] ** 2
    cascade = {
        "outlier eta^2": [ig_cdf(r.eta2[4], 1, 1 / ob.psi_eta[4] + z2 / (2 * state.sigma2))
                          for r in rec],
        "outlier psi_eta": [ig_cdf(r.psi_eta[4], 1, 1 / r.eta2[4] + 1 / (ob.tau2 * ob.xi2[4]))
                            for r in rec],
        "outlier tau^2": [ig_cdf(r.tau2, 0.5 * (n + 1), np.sum(1 / (ob.xi2 * r.psi_eta))
                                 + 1 / ob.psi_tau) for r in rec],
        "outlier psi_tau": [ig_cdf(r.psi_tau, 1, 1 + 1 / r.tau2) for r in rec],
        "outlier xi^2": [ig_cdf(r.xi2[4], 1, 1 / ob.psi_xi[4] + 1 / (r.tau2 * r.psi_eta[4]))
                         for r in rec],
        "outlier psi_xi": [ig_cdf(r.psi_xi[4], 1, 1 + 1 / r.xi2[4]) for r in rec],
    }
    out.update({k: stats.kstest(v, "uniform").pvalue for k, v in cascade.items()})

    spec = ModelSpec(n=40, periods=(5,))
    y = rng.normal(size=40).cumsum()
    state = initial_state(y, spec)
    state.zeta = rng.normal(size=40)
    q = sum(gibbs.sigma_quadratic_forms(state, y, spec).values())
    sig = np.array([sample_sigma_y(state, y, rng, spec) for _ in range(m)])
    out["sigma_y^2"] = stats.kstest(sig, ig_cdf, args=(spec.sigma_shape(), q / 2)).pvalue

    u = []
    state.sv.h = rng.normal(scale=0.3, size=40)
    for _ in range(m // 2):
        s = state.copy()
        sv = sample_sv(s, y, rng, spec)
        innov = (sv.h[1:] - sv.mu) - sv.phi * (sv.h[:-1] - sv.mu)
        ss = (1 - sv.phi ** 2) * (sv.h[0] - sv.mu) ** 2 + innov @ innov
        a0, b0 = spec.sigma_nu_prior
        u.append(ig_cdf(sv.sigma2_nu, a0 + 20, b0 + 0.5 * ss))
    out["sigma_nu^2"] = stats.kstest(u, "uniform").pvalue
    return out


def test_criterion_3_sampler_oracles(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    z = _gaussian_moment_check(rng)
    pvals = _ig_pvalues(rng)
    elapsed = time.perf_counter() - start
    worst = min(pvals, key=pvals.get)
    ok = z < 5 and min(pvals.values()) > KS_P and elapsed < 300
    acceptance(3, "sampler moments and inverse-gamma conditionals", ok,
               f"largest moment deviation {z:.2f} standard errors over 2e5 draws, "
               f"{len(pvals)} KS tests with smallest p = {pvals[worst]:.3f} ({worst}), "
               f"{elapsed:.1f} s")
    assert ok, pvals


# ---------------------------------------------------------------------------
# 4. successive-conditional (Getting It Right) test


def test_criterion_4_getting_it_right(acceptance):
    start = time.perf_counter()
    spec = ModelSpec(n=20, periods=(4,), sigma_prior=(3.0, 2.0), mu_prior_var=1.0,
                     sigma_nu_prior=(5.0, 0.5))
    chains, cycles = 400, 50
    coupled, prior = gibbs.getting_it_right(spec, chains, cycles, seed=2)
    pvals = {k: stats.ks_2samp(coupled[k], prior[k]).pvalue for k in ("tau_T", "sigma_y", "phi")}
    elapsed = time.perf_counter() - start
    ok = min(pvals.values()) > KS_P and elapsed < 900
    acceptance(4, "coupled-chain marginals match the prior", ok,
               f"{chains} chains x {cycles} cycles = {chains * cycles} cycles, KS p: "
               + ", ".join(f"{k} {v:.3f}" for k, v in pvals.items()) + f", {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 5 and 6. scaled simulation study


@pytest.fixture(scope="module")
def studies():
    start = time.perf_counter()
    base = default_base_spec()
    dgp2 = run_study([2], 100, base=base, seed=1000).aggregate
    dgp1 = run_study([1], 50, base=base, seed=2000).aggregate
    elapsed = time.perf_counter() - start
    return {2: {p: dgp2(p)[2] for p in ("mse", "coverage")},
            1: {p: dgp1(p)[1] for p in ("mse", "coverage")}}, elapsed


def test_criterion_5_mse_table(acceptance, studies):
    res, elapsed = studies
    m2, m1 = res[2]["mse"], res[1]["mse"]
    ok = 0.2 <= m2["signal"] <= 0.8 and m2["trend"] < 0.2 and m1["signal"] < 2.0
    ok = ok and elapsed <= 4 * 3600
    acceptance(5, "scaled MSE reproduction", ok,
               f"DGP 2 (100 reps): signal {m2['signal']:.4f} in [0.2, 0.8], trend "
               f"{m2['trend']:.4f} < 0.2; DGP 1 (50 reps): signal {m1['signal']:.4f} < 2.0; "
               f"{elapsed / 60:.1f} min")
    assert ok


def test_criterion_6_coverage_table(acceptance, studies):
    res, _ = studies
    c2, c1 = res[2]["coverage"], res[1]["coverage"]
    ok = all(c["signal"] >= 0.95 and c["trend"] >= 0.90 for c in (c1, c2))
    acceptance(6, "scaled coverage reproduction", ok,
               f"DGP 2: signal {c2['signal']:.4f}, trend {c2['trend']:.4f}; "
               f"DGP 1: signal {c1['signal']:.4f}, trend {c1['trend']:.4f} "
               "(need >= 0.95 and >= 0.90)")
    assert ok


# ---------------------------------------------------------------------------
# 7. linear cost per sweep


def _sweep_seconds(n, sweeps=15, repeats=5):
    rng = np.random.default_rng(n)
    t = np.arange(n)
    y = (0.01 * t + 3 * np.sin(2 * np.pi * t / 12) + 2 * np.sin(2 * np.pi * t / 40)
         + rng.normal(size=n))
    spec = ModelSpec(n=n, periods=(12, 40))
    state = initial_state(y, spec)
    for _ in range(5):
        gibbs.sweep(state, y, spec, rng)
    best = np.inf
    for _ in range(repeats):
        begin = time.perf_counter()
        for _ in range(sweeps):
            gibbs.sweep(state, y, spec, rng)
        best = min(best, (time.perf_counter() - begin) / sweeps)
    return best


def test_criterion_7_linear_scaling(acceptance):
    t1, t2 = _sweep_seconds(1000), _sweep_seconds(2000)
    ratio = t2 / t1
    ok = ratio <= 2.5
    acceptance(7, "per-sweep time grows linearly", ok,
               f"N=1000 {1e3 * t1:.2f} ms, N=2000 {1e3 * t2:.2f} ms, ratio {ratio:.2f} <= 2.5")
    assert ok


# ---------------------------------------------------------------------------
# 8. byte-identical reruns


def test_criterion_8_determinism(acceptance, tmp_path):
    rng = np.random.default_rng(8)
    n = 96
    y = 10 + 0.05 * np.arange(n) + 2 * np.sin(2 * np.pi * np.arange(n) / 12) + rng.normal(size=n)
    series = tmp_path / "y.csv"
    series.write_text("time,value\n" + "".join(f"{i + 1},{float(v)!r}\n" for i, v in enumerate(y)))
    commands = {
        "decompose": (["decompose", "--input", str(series), "--periods", "12", "--burn", "50",
                       "--save", "50", "--seed", "5", "--emit-draws"],
                      ["components.csv", "draws.bin", "plotdata/trend.csv",
                       "plotdata/seasonal12.csv", "plotdata/volatility.csv"]),
        "map": (["map", "--input", str(series), "--periods", "12", "--seasonal-ops",
                 "seasonal_recurrence", "--lambda", "5"],
                ["map_components.csv", "map_summary.json"]),
        "identify": (["identify", "--periods", "12,40", "--seasonal-ops", "seasonal_difference"],
                     ["identify.json"]),
        "study": (["study", "--dgp", "2", "--reps", "2", "--burn", "20", "--save", "20",
                   "--seed", "4"],
                  ["mse.csv", "coverage.csv", "width.csv", "replications.csv"]),
    }
    differing = []
    for name, (argv, files) in commands.items():
        out = tmp_path / name
        # identical configuration includes the output directory: run, snapshot, rerun in place
        assert main(argv + ["--out", str(out)]) == 0
        first = {f: (out / f).read_bytes() for f in files}
        summary = (out / "summary.json").read_text() if name == "decompose" else None
        assert main(argv + ["--out", str(out)]) == 0
        differing += [f"{name}/{f}" for f in files if (out / f).read_bytes() != first[f]]
        if summary is not None:
            docs = [json.loads(text) for text in (summary, (out / "summary.json").read_text())]
            for doc in docs:
                doc.pop("runtime_seconds")
            if docs[0] != docs[1]:
                differing.append("decompose/summary.json (apart from runtime)")
    ok = not differing
    checked = sum(len(f) for _, f in commands.values())
    acceptance(8, "reruns are byte-identical", ok,
               f"{checked} primary files over 4 commands, differing: {differing or 'none'}")
    assert ok
