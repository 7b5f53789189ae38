import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bastion.exceptions import ConfigError, NonIdentifiableError
from bastion.identifiability import ComponentPenalties, build_block_system, constraint_basis
from bastion.map_solver import gradient, objective_value, solve_map
from bastion.operators import make_operator

from helpers import random_configuration, seasonal_only


def trend_only(n):
    return ComponentPenalties([make_operator("second_difference", n)], [])


def two_season(n, constraints=None):
    return ComponentPenalties(
        [make_operator("second_difference", n)],
        [[make_operator("seasonal_recurrence", n, 7)], [make_operator("seasonal_recurrence", n, 12)]],
        constraints,
    )


def test_line_is_fitted_exactly():
    n = 40
    y = 3.0 - 0.25 * np.arange(n)
    for lam in (0.01, 1.0, 1e4):
        sol = solve_map(y, trend_only(n), lam)
        np.testing.assert_allclose(sol.trend, y, atol=1e-9)
        assert np.abs(sol.residual).max() < 1e-9


def test_huge_penalty_gives_least_squares_line(rng):
    n = 60
    t = np.arange(n, dtype=float)
    y = 1.0 + 0.1 * t + np.sin(t / 3.0) + rng.normal(size=n)
    sol = solve_map(y, trend_only(n), 1e12)
    coef = np.polyfit(t, y, 1)
    np.testing.assert_allclose(sol.trend, np.polyval(coef, t), atol=1e-4)


def test_residual_identity_and_objective(rng):
    n = 90
    y = rng.normal(size=n).cumsum()
    p = two_season(n)
    sol = solve_map(y, p, [2.0, 0.5, 3.0])
    np.testing.assert_allclose(sol.residual, y - sol.trend - sol.seasonals.sum(0), atol=1e-13)
    direct = float(sol.residual @ sol.residual)
    for x, ops, lam in zip(sol.components, p.components(), (2.0, 0.5, 3.0)):
        direct += lam * float(np.sum(ops[0].apply(x) ** 2))
    assert abs(sol.objective - direct) <= 1e-10 * max(1.0, direct)


def test_zero_components_objective_is_norm(rng):
    y = rng.normal(size=30)
    p = two_season(30)
    assert objective_value(y, np.zeros((3, 30)), p, 1.0) == pytest.approx(float(y @ y), rel=1e-14)


def test_gradient_vanishes_at_solution(rng):
    n = 120
    y = rng.normal(size=n) + np.sin(np.arange(n) / 4.0) * 5
    p = two_season(n)
    sol = solve_map(y, p, 1.0)
    assert np.abs(gradient(y, sol, p, 1.0)).max() < 1e-8 * np.linalg.norm(y)


def test_random_perturbations_do_not_improve(rng):
    n = 80
    y = rng.normal(size=n).cumsum()
    p = two_season(n)
    sol = solve_map(y, p, 1.0)
    for _ in range(100):
        pert = sol.components + 1e-3 * rng.normal(size=sol.components.shape)
        assert objective_value(y, pert, p, 1.0) >= sol.objective


def test_doubling_a_penalty_weakly_increases_objective(rng):
    n = 70
    y = rng.normal(size=n).cumsum()
    p = two_season(n)
    base = solve_map(y, p, [1.0, 1.0, 1.0]).objective
    for j in range(3):
        lam = [1.0, 1.0, 1.0]
        lam[j] = 2.0
        assert solve_map(y, p, lam).objective >= base - 1e-10 * base


def test_banded_matches_dense_block_solve(rng):
    n = 100
    y = rng.normal(size=n).cumsum()
    p = two_season(n)
    sol = solve_map(y, p, [0.3, 2.0, 5.0])
    assert sol.method == "banded" and sol.unique and sol.jitter == 0.0
    H = build_block_system(p, [0.3, 2.0, 5.0])
    ref = np.linalg.solve(H, np.tile(y, 3)).reshape(3, n)
    np.testing.assert_allclose(sol.components, ref, rtol=1e-8, atol=1e-8)


def test_centered_solution_uses_constrained_space(rng):
    n = 120
    p = ComponentPenalties(
        [make_operator("second_difference", n)],
        [[make_operator("second_difference", n), make_operator("seasonal_difference", n, k)]
         for k in (12, 40)],
        ["center", "center"],
    )
    y = rng.normal(size=n) + 3 * np.sin(2 * np.pi * np.arange(n) / 12)
    sol = solve_map(y, p, 1.0)
    assert sol.method == "dense"
    np.testing.assert_allclose(sol.seasonals.sum(axis=1), 0.0, atol=1e-9)
    # stationarity within the constrained space
    Z = constraint_basis(p)
    g = gradient(y, sol, p, 1.0).ravel()
    assert np.abs(Z.T @ g).max() < 1e-8 * np.linalg.norm(y)


def test_nonidentifiable_raises_without_flag(rng):
    n = 50
    p = seasonal_only(n, [7], "seasonal_difference")
    y = rng.normal(size=n)
    with pytest.raises(NonIdentifiableError):
        solve_map(y, p, 1.0)
    sol = solve_map(y, p, 1.0, allow_nonunique=True)
    assert not sol.unique and sol.nullity == 1 and sol.method == "min_norm"
    # minimum norm: no component along the unidentified (c, -c) direction
    assert abs(sol.trend.sum() - sol.seasonals[0].sum()) < 1e-6 * np.linalg.norm(y) * n
    assert np.abs(gradient(y, sol, p, 1.0)).max() < 1e-8 * np.linalg.norm(y)


def test_shape_errors(rng):
    p = two_season(40)
    with pytest.raises(ConfigError):
        solve_map(np.zeros(41), p, 1.0)
    with pytest.raises(ConfigError):
        solve_map(np.full(40, np.nan), p, 1.0)
    with pytest.raises(ConfigError):
        objective_value(np.zeros(40), np.zeros((2, 40)), p, 1.0)


def test_permuting_seasonals_permutes_solution(rng):
    n = 96
    y = rng.normal(size=n).cumsum()
    a = two_season(n)
    b = ComponentPenalties(a.trend_ops, a.seasonal_ops[::-1])
    sa = solve_map(y, a, [1.0, 2.0, 3.0])
    sb = solve_map(y, b, [1.0, 3.0, 2.0])
    np.testing.assert_allclose(sa.trend, sb.trend, atol=1e-9)
    np.testing.assert_allclose(sa.seasonals, sb.seasonals[::-1], atol=1e-9)


def test_long_series_skips_dense_check(rng):
    n = 3000
    p = two_season(n)
    y = rng.normal(size=n).cumsum()
    sol = solve_map(y, p, 1.0)
    assert sol.method == "banded"
    assert np.abs(gradient(y, sol, p, 1.0)).max() < 1e-7 * np.linalg.norm(y)


@given(st.integers(0, 2**31 - 1))
def test_property_gradient_zero_for_identifiable_configs(seed):
    rng = np.random.default_rng(seed)
    p, _, lam, _ = random_configuration(rng, n_range=(40, 90), period_range=(3, 12))
    y = rng.normal(size=p.n).cumsum()
    sol = solve_map(y, p, lam, allow_nonunique=True)
    np.testing.assert_allclose(sol.residual, y - sol.components.sum(0), atol=1e-12 * np.abs(y).max())
    g = gradient(y, sol, p, lam).ravel()
    if any(c is not None for c in p.constraints):
        g = constraint_basis(p).T @ g
    assert np.abs(g).max() < 1e-6 * max(np.linalg.norm(y), 1.0)
