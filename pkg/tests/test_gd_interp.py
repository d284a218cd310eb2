import itertools
import math

import numpy as np
import pytest

from preddf import (
    ConfigError,
    FitError,
    FMatrix,
    GDConfig,
    MinNorm,
    df_random,
    df_random_ls_closed,
    expected_init_distance,
    fit,
    gd_limit,
    gd_run,
    init_simple_regression,
    interpolant_df,
    interpolant_excess_bias,
    interpolant_hat_vector,
    max_step,
    predict,
    rng_stream,
)
from preddf.core_model import CovKind, GenConfig, generate_dataset, make_covariance
from preddf.gd_interp import gd_iterate_closed_form, interpolant_system
from preddf.risk import excess_bias_true


def _design(n=6, p=15, seed=0):
    rng = rng_stream(seed)
    return rng.standard_normal((n, p)), rng.standard_normal(n)


def _null_vector(X, seed):
    v = rng_stream(seed).standard_normal(X.shape[1])
    return v - np.linalg.pinv(X) @ (X @ v)


def test_config_validation():
    with pytest.raises(ConfigError):
        GDConfig(alpha=0.0)
    with pytest.raises(ConfigError):
        GDConfig(alpha=-1.0)


def test_min_norm_start_is_fixed_point():
    X, y = _design()
    bhat = np.linalg.pinv(X) @ y
    beta, k, conv = gd_run(X, y, GDConfig(alpha=0.5 * max_step(X), beta0=bhat))
    assert conv and k == 1
    assert np.allclose(beta, bhat, atol=1e-12)


def test_zero_response_null_start_stays():
    X, _ = _design()
    v = _null_vector(X, 1)
    cfg = GDConfig(alpha=0.5 * max_step(X), beta0=v, max_iter=50)
    beta, _, _ = gd_run(X, np.zeros(6), cfg)
    assert np.allclose(beta, v, atol=1e-12)


def test_iterates_match_closed_form():
    X, y = _design(seed=2)
    beta0 = rng_stream(3).standard_normal(15)
    alpha = 0.9 * max_step(X)
    for k in (1, 10, 100):
        beta, _, _ = gd_run(X, y, GDConfig(alpha=alpha, beta0=beta0, max_iter=k, tol=1e-300))
        assert np.allclose(beta, gd_iterate_closed_form(X, y, beta0, alpha, k), atol=1e-8)


def test_convergence_bracket():
    X, y = _design(4, 10, seed=4)
    lam = 2.0 / max_step(X)
    _, _, conv = gd_run(X, y, GDConfig(alpha=1.999 / lam, max_iter=200_000))
    assert conv
    hist: list[float] = []
    gd_run(X, y, GDConfig(alpha=2.001 / lam, max_iter=500, tol=1e-300), history=hist)
    assert hist[-1] > min(hist)
    hist2: list[float] = []
    gd_run(X, y, GDConfig(alpha=2.001 / lam, max_iter=20_000, tol=1e-300), history=hist2)
    assert hist2[-1] > 10 * hist2[0]


def test_run_agrees_with_limit():
    X, y = _design(seed=5)
    beta0 = rng_stream(6).standard_normal(15)
    lam = 2.0 / max_step(X)
    beta, _, conv = gd_run(X, y, GDConfig(alpha=1.0 / lam, beta0=beta0, max_iter=10_000))
    assert np.allclose(beta, gd_limit(X, y, beta0), atol=1e-6)


def test_limit_examples():
    X, y = _design(seed=7)
    bhat = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.allclose(gd_limit(X, y), bhat, atol=1e-12)
    row = X.T @ rng_stream(8).standard_normal(6)
    assert np.allclose(gd_limit(X, y, row), bhat, atol=1e-10)
    beta0 = rng_stream(9).standard_normal(15)
    b = gd_limit(X, y, beta0)
    assert np.linalg.norm(X @ b - y) / np.linalg.norm(y) < 1e-9
    step = b - bhat
    assert np.linalg.norm(X @ step) < 1e-9 * np.linalg.norm(step)


def test_limit_rejects_rank_deficiency():
    X, y = _design(seed=10)
    X[1] = X[0]
    with pytest.raises(FitError):
        gd_limit(X, y)
    with pytest.raises((FitError, ConfigError)):
        gd_limit(X[:, :4], y)


def test_max_step_examples():
    assert max_step(np.eye(3)) == pytest.approx(2.0)
    X, _ = _design(seed=11)
    assert max_step(3.0 * X) == pytest.approx(max_step(X) / 9.0)
    v = np.ones(15)
    G = X.T @ X
    for _ in range(3000):
        v = G @ v
        v /= np.linalg.norm(v)
    assert max_step(X) == pytest.approx(2.0 / (v @ G @ v), rel=1e-8)
    with pytest.raises((ConfigError, FitError)):
        max_step(np.zeros((2, 3)))


def test_simple_regression_start():
    X, y = _design(seed=12)
    beta0, fm = init_simple_regression(X, y, [2, 5], 0.0)
    assert np.all(beta0 == 0)
    assert np.allclose(gd_limit(X, y, beta0), np.linalg.pinv(X) @ y)
    b, fm = init_simple_regression(X, X[:, 4], [4], 1.0)
    expect = np.zeros(15)
    expect[4] = 1.0
    assert np.allclose(b, expect)
    assert fm.provenance == "simple_regression" and fm.subset == (4,)
    rng = rng_stream(13)
    for _ in range(20):
        S = rng.choice(15, size=rng.integers(1, 7), replace=False)
        theta = rng.uniform(0, 1, S.size)
        yy = rng.standard_normal(6)
        b, fm = init_simple_regression(X, yy, S, theta)
        assert np.array_equal(b, fm.F @ yy)
        direct = np.zeros(15)
        direct[S] = theta * (X[:, S].T @ yy) / np.sum(X[:, S] ** 2, axis=0)
        assert np.allclose(b, direct)


def test_simple_regression_validation():
    X, y = _design(seed=14)
    X[:, 3] = 0.0
    with pytest.raises(FitError):
        init_simple_regression(X, y, [3])
    with pytest.raises(ConfigError):
        init_simple_regression(X, y, [1], 1.5)
    with pytest.raises(ConfigError):
        init_simple_regression(X, y, list(range(7)))


def test_hat_vector_paths():
    X, y = _design(seed=15)
    _, fm = init_simple_regression(X, y, [0, 3, 7], 0.6)
    xs = rng_stream(16).standard_normal(15)
    h = interpolant_hat_vector(X, fm, xs)
    assert h @ y == pytest.approx(xs @ gd_limit(X, y, fm.F @ y), abs=1e-9)
    hs = interpolant_system(X, fm)
    assert predict(hs, y, xs) == pytest.approx(h @ y, abs=1e-9)
    assert np.allclose(hs.H, np.eye(6), atol=1e-9)
    minnorm = fit(MinNorm(), X).hat_vector(xs)
    assert np.allclose(interpolant_hat_vector(X, FMatrix.zero(15, 6), xs), minnorm, atol=1e-12)
    row_point = X.T @ rng_stream(17).standard_normal(6)
    assert np.allclose(interpolant_hat_vector(X, fm, row_point), fit(MinNorm(), X).hat_vector(row_point), atol=1e-10)
    with pytest.raises(ConfigError):
        interpolant_hat_vector(X, fm, np.ones(3))


def test_interpolant_df():
    X, y = _design(seed=18)
    base = df_random_ls_closed(X, np.eye(15))
    assert interpolant_df(X, FMatrix.zero(15, 6)) == pytest.approx(base, abs=1e-10)
    _, fm = init_simple_regression(X, y, [1, 2], 1.0)
    assert interpolant_df(X, fm) > base
    Sigma = make_covariance(CovKind.random_correlation(2), 15)
    rep = df_random(interpolant_system(X, fm), Sigma=Sigma, mode="monte_carlo", n_draws=20_000, rng=rng_stream(19))
    assert abs(rep.df_random - interpolant_df(X, fm, Sigma)) < 4 * rep.se


def test_interpolant_df_row_space_f_is_degenerate():
    X, _ = _design(seed=20)
    # F with columns in the row space of X leaves the min-norm solution unchanged
    F = X.T @ rng_stream(21).standard_normal((6, 6))
    assert interpolant_df(X, F) == pytest.approx(df_random_ls_closed(X, np.eye(15)), abs=1e-9)


def test_excess_bias_parts():
    X, y = _design(seed=22)
    beta = rng_stream(23).standard_normal(15)
    total, mn, v2b, v2z = interpolant_excess_bias(X, beta, FMatrix.zero(15, 6))
    assert total == pytest.approx(mn) and v2b == pytest.approx(v2z)
    row_beta = X.T @ rng_stream(24).standard_normal(6)
    assert interpolant_excess_bias(X, row_beta, FMatrix.zero(15, 6)).norm_V2beta == pytest.approx(0.0, abs=1e-20)


def test_excess_bias_matches_truth_oracle():
    cfg = GenConfig(n=10, d=30, kappa=5, seed=4)
    ds = generate_dataset(cfg)
    _, fm = init_simple_regression(ds.X, ds.y, [0, 1, 2], 1.0)
    parts = interpolant_excess_bias(ds.X, cfg.beta(), fm)
    exact, _ = excess_bias_true(interpolant_system(ds.X, fm), ds, mode="exact")
    mc, se = excess_bias_true(interpolant_system(ds.X, fm), ds, n_draws=40_000, rng=rng_stream(5), mode="monte_carlo")
    assert parts.total == pytest.approx(exact, rel=1e-9)
    assert abs(mc - parts.total) < 4 * se


def test_expected_init_distance_examples():
    beta = np.array([3.0, 1.0, 0.5, 0.2])
    assert expected_init_distance(beta, [], 20) == pytest.approx(beta @ beta)
    e1 = np.array([2.0, 0.0, 0.0])
    assert expected_init_distance(e1, [0], 15) == pytest.approx(0.0, abs=1e-12)
    q1 = [expected_init_distance(beta, [j], 20) for j in range(4)]
    assert np.all(np.diff(q1) >= 0)


def test_expected_init_distance_monte_carlo():
    n = 30
    beta = np.array([2.0, -1.0, 0.7, 0.3, 0.0])
    S = [0, 2]
    rng = rng_stream(25)
    dist = []
    for _ in range(20_000):
        X = rng.standard_normal((n, 5))
        X *= math.sqrt(n) / np.linalg.norm(X, axis=0)
        b0, _ = init_simple_regression(X, X @ beta, S, 1.0)
        dist.append(np.sum((b0 - beta) ** 2))
    dist = np.array(dist)
    assert abs(dist.mean() - expected_init_distance(beta, S, n)) < 4 * dist.std(ddof=1) / math.sqrt(dist.size)


def test_best_subset_is_top_coordinates():
    beta = rng_stream(26).standard_normal(8)
    best = min(itertools.combinations(range(8), 3), key=lambda S: expected_init_distance(beta, S, 20))
    assert set(best) == set(np.argsort(-np.abs(beta))[:3].tolist())
