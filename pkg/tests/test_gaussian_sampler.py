import time

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from bastion import gaussian_sampler as gs
from bastion.exceptions import ConfigError, NotPositiveDefiniteError
from bastion.gaussian_sampler import (
    BandedSymmetric,
    GramAssembler,
    banded_cholesky,
    factor_with_jitter,
    sample_gaussian_canonical,
)
from bastion.operators import gibbs_seasonal_operator, gibbs_trend_operator, make_operator


def _available_backends():
    names = ["python"]
    try:
        gs.get_kernels("cython")
        names.append("cython")
    except ImportError:
        pass
    return names


BACKENDS = _available_backends()


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    monkeypatch.setattr(gs, "_kern", gs.get_kernels(request.param))
    return request.param


def random_banded_spd(n, b, rng, ridge=0.5):
    """Random symmetric matrix of half-bandwidth ``b``, made SPD by diagonal dominance."""
    mask = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) <= b
    q = rng.normal(size=(n, n)) * mask
    q = (q + q.T) / 2
    q += np.diag(np.abs(q).sum(axis=1) + ridge)
    return q


def test_active_backend_is_known():
    assert gs.BACKEND in ("python", "cython")


def test_band_storage_roundtrip(rng):
    q = random_banded_spd(17, 3, rng)
    bs = BandedSymmetric.from_dense(q, 3)
    np.testing.assert_array_equal(bs.to_dense(), q)
    np.testing.assert_allclose(bs.matvec(np.arange(17.0)), q @ np.arange(17.0), atol=1e-12)
    np.testing.assert_array_equal(bs.to_lapack(), bs.bands.T)


def test_band_storage_shape_checked():
    with pytest.raises(ConfigError):
        BandedSymmetric(np.zeros(4))


@pytest.mark.parametrize("n,b", [(1, 0), (5, 1), (40, 2), (100, 7), (130, 40), (64, 63)])
def test_cholesky_matches_scipy(backend, rng, n, b):
    q = random_banded_spd(n, b, rng)
    factor = banded_cholesky(BandedSymmetric.from_dense(q, b))
    ref = scipy.linalg.cholesky_banded(BandedSymmetric.from_dense(q, b).to_lapack(), lower=True)
    np.testing.assert_allclose(factor.bands.T, ref, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(factor.to_dense() @ factor.to_dense().T, q, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(factor.logdet(), np.linalg.slogdet(q)[1], rtol=1e-10)


def test_solves_match_dense(backend, rng):
    q = random_banded_spd(60, 4, rng)
    factor = banded_cholesky(BandedSymmetric.from_dense(q, 4))
    rhs = rng.normal(size=60)
    l_dense = np.linalg.cholesky(q)
    np.testing.assert_allclose(factor.solve(rhs), np.linalg.solve(q, rhs), rtol=1e-9)
    np.testing.assert_allclose(factor.solve_lower(rhs), np.linalg.solve(l_dense, rhs), rtol=1e-9)
    np.testing.assert_allclose(factor.solve_upper(rhs), np.linalg.solve(l_dense.T, rhs), rtol=1e-9)


def test_indefinite_reports_pivot(backend):
    q = np.diag([2.0, 3.0, -1.0, 4.0])
    with pytest.raises(NotPositiveDefiniteError) as err:
        banded_cholesky(BandedSymmetric.from_dense(q, 1))
    assert err.value.index == 2


def test_jitter_rescues_semidefinite(backend, caplog):
    d = make_operator("second_difference", 12).to_dense()
    q = BandedSymmetric.from_dense(d.T @ d, 2)
    with pytest.raises(NotPositiveDefiniteError):
        banded_cholesky(q)
    with caplog.at_level("WARNING", logger="bastion.gaussian_sampler"):
        factor = factor_with_jitter(q)
    assert factor.jitter > 0
    assert "jitter" in caplog.text


def test_jitter_gives_up_on_zero_matrix(backend):
    with pytest.raises(NotPositiveDefiniteError):
        factor_with_jitter(BandedSymmetric.zeros(4, 1))


def test_canonical_mean_without_noise(backend, rng):
    q = random_banded_spd(30, 3, rng)
    b = rng.normal(size=30)
    x = sample_gaussian_canonical(BandedSymmetric.from_dense(q, 3), b, None)
    np.testing.assert_allclose(x, np.linalg.solve(q, b), rtol=1e-10)


def test_canonical_vector_shape_checked(backend):
    with pytest.raises(ConfigError):
        sample_gaussian_canonical(BandedSymmetric.from_dense(np.eye(3), 0), np.zeros(4), None)


def test_sample_moments(backend):
    rng = np.random.default_rng(7)
    n = 8
    q = random_banded_spd(n, 2, rng, ridge=1.0)
    b = rng.normal(size=n)
    qb = BandedSymmetric.from_dense(q, 2)
    m = 60_000
    draws = np.array([sample_gaussian_canonical(qb, b, rng) for _ in range(m)])
    mean = np.linalg.solve(q, b)
    cov = np.linalg.inv(q)
    se = np.sqrt(np.diag(cov) / m)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 5 * se)
    emp = np.cov(draws, rowvar=False)
    # Wishart standard error of each covariance entry
    se_cov = np.sqrt((cov**2 + np.outer(np.diag(cov), np.diag(cov))) / m)
    assert np.all(np.abs(emp - cov) < 5 * se_cov)


def test_backends_agree_bitwise_in_distribution(rng):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    q = BandedSymmetric.from_dense(random_banded_spd(300, 13, rng), 13)
    b = rng.normal(size=300)
    outs = []
    for name in BACKENDS:
        kern = gs.get_kernels(name)
        f = np.array(q.bands, copy=True)
        assert kern.cholesky_banded_inplace(f) == -1
        x = b.copy()
        kern.forward_solve_inplace(f, x)
        kern.backward_solve_inplace(f, x)
        outs.append((f, x))
    np.testing.assert_allclose(outs[0][0], outs[1][0], rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(outs[0][1], outs[1][1], rtol=1e-9)


def test_linear_time_in_length(backend):
    rng = np.random.default_rng(0)

    def cost(n, reps=5):
        bands = np.zeros((n, 13))
        bands[:, 0] = 30.0
        bands[:, 1:] = rng.uniform(-1, 1, size=(n, 12))
        q = BandedSymmetric(bands)
        b = rng.normal(size=n)
        best = np.inf
        for _ in range(reps):
            t0 = time.perf_counter()
            sample_gaussian_canonical(q, b, rng)
            best = min(best, time.perf_counter() - t0)
        return best

    cost(1000)
    ratio = cost(40_000) / cost(10_000)
    # linear would give 4, quadratic 16
    assert ratio < 8.0


# ---------------------------------------------------------------------------
# Gram assembly


@pytest.mark.parametrize("make", [
    lambda: (gibbs_trend_operator(25), 0),
    lambda: (gibbs_seasonal_operator(25, 4), 1),
    lambda: (make_operator("seasonal_recurrence", 25, 5), 0),
    lambda: (make_operator("seasonal_difference", 25, 7), 0),
])
def test_gram_assembly_matches_dense(make, rng):
    op, drop = make()
    w = rng.uniform(0.1, 3.0, size=op.rows)
    d = op.to_dense()[:, drop:]
    got = GramAssembler(op, drop_first=drop).build(w).to_dense()
    np.testing.assert_allclose(got, d.T @ (w[:, None] * d), rtol=1e-12, atol=1e-12)


def test_gram_weights_shape_checked():
    with pytest.raises(ConfigError):
        GramAssembler(gibbs_trend_operator(6)).build(np.ones(5))


@given(st.integers(2, 80), st.integers(0, 12), st.integers(0, 2**31 - 1))
def test_cholesky_property_reconstructs(n, b, seed):
    b = min(b, n - 1)
    q = random_banded_spd(n, b, np.random.default_rng(seed))
    for name in BACKENDS:
        kern = gs.get_kernels(name)
        f = BandedSymmetric.from_dense(q, b).bands.copy()
        assert kern.cholesky_banded_inplace(f) == -1
        l = gs.BandedCholesky(f).to_dense()
        np.testing.assert_allclose(l @ l.T, q, rtol=1e-10, atol=1e-9)
        assert np.all(np.diag(l) > 0)
