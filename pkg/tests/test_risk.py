import math

import numpy as np
import pytest

from preddf import (
    OLS,
    ConfigError,
    GenConfig,
    LeverageError,
    MinNorm,
    Ridge,
    ThresholdError,
    WeightInterp,
    a_matrix,
    corrected_err_hats,
    delta_hat,
    delta_plus,
    delta_plusplus,
    df_random,
    df_random_ls_closed,
    err_hat,
    err_random_true,
    fit,
    generate_dataset,
    loocv_error,
    risk_report,
    rng_stream,
)
from preddf.risk import (
    delta_hat_per_observation,
    err_fixed_true,
    err_random_expected,
    err_tilde,
    excess_bias_true,
    leverage_moments,
    leverage_moments_exact,
    loocv_min_norm,
    training_error,
    u_type_statistic,
    xi_decomposition_check,
    xi_expectation_closed,
    xi_expectation_gaussian,
)

from conftest import brute_force_loocv, lstsq_coef, ridge_coef


def test_training_error_examples():
    assert training_error(np.array([1.0, -1.0]), np.zeros(2)) == 1.0
    y = rng_stream(1).standard_normal(9)
    assert training_error(y, y) == 0.0
    X = rng_stream(2).standard_normal((9, 3))
    H = fit(OLS(), X).H
    resid = y - X @ lstsq_coef(X, y)
    assert training_error(y, H @ y) == pytest.approx(resid @ resid / 9)


def test_err_fixed_examples():
    mu = np.array([1.0, 2.0, -1.0])
    assert err_fixed_true(fit(MinNorm(), rng_stream(3).standard_normal((3, 5))), mu, 0.5) == pytest.approx(1.0)
    assert err_fixed_true(fit(OLS(()), np.ones((3, 2))), mu, 0.5) == pytest.approx(0.5 + 6 / 3)
    X = rng_stream(4).standard_normal((10, 3))
    assert err_fixed_true(fit(OLS(), X), X @ np.array([1.0, -2.0, 0.5]), 2.0) == pytest.approx(2.0 * 1.3)


def test_null_procedure_random_error():
    ds = generate_dataset(GenConfig(n=10, d=5, seed=1))
    hs = fit(OLS(()), ds.X)
    val, se = err_random_true(hs, ds, mode="exact")
    assert se == 0.0 and val == pytest.approx(11.0)


def test_random_error_paths_agree():
    cfg = GenConfig(n=15, d=6, mean_kind="nonlinear_exp", seed=3)
    for r in range(20):
        ds = generate_dataset(cfg, r)
        hs = fit(OLS((0, 1, 2)), ds.X)
        exact, _ = err_random_true(hs, ds, mode="exact")
        mc, se = err_random_true(hs, ds, n_draws=20_000, rng=rng_stream(r, 1))
        assert abs(mc - exact) < 4 * se
    with pytest.raises(ConfigError):
        err_random_true(hs, ds, n_draws=50)


def test_excess_bias_trivial_cases():
    ds = generate_dataset(GenConfig(n=8, d=20, seed=2))
    hs = fit(MinNorm(), ds.X)
    eb, _ = excess_bias_true(hs, ds)
    assert eb == pytest.approx(ds.mean_fn.mse(hs.operator.T @ ds.mu))
    zero = generate_dataset(GenConfig(n=8, d=4, seed=2, beta_norm2=1e-300))
    assert abs(excess_bias_true(fit(OLS(), zero.X), zero)[0]) < 1e-12


def test_excess_bias_gaussian_subset_mean():
    # omitted variance per coordinate 2.0 on the dropped features
    cfg = GenConfig(n=30, d=8, beta_kind="inverse_index", seed=5)
    S = (0, 1, 2, 3)
    vals, dfs = [], []
    for r in range(400):
        ds = generate_dataset(cfg, r)
        hs = fit(OLS(S), ds.X)
        vals.append(excess_bias_true(hs, ds)[0])
        dfs.append(df_random_ls_closed(ds.X[:, S], np.eye(4)))
    beta = cfg.beta()
    sigma_S2 = float(beta[4:] @ beta[4:])
    target = np.array(dfs) * 2 * sigma_S2 / 30
    diff = np.array(vals) - target
    assert abs(diff.mean()) < 3 * diff.std(ddof=1) / math.sqrt(diff.size)


def test_risk_decomposition_in_expectation():
    ds0 = generate_dataset(GenConfig(n=25, d=12, kappa=2, seed=6))
    hs = fit(OLS(tuple(range(6))), ds0.X)
    df_r = df_random(hs, Sigma=ds0.Sigma).df_random
    rng = rng_stream(7)
    gaps = []
    eb = excess_bias_true(hs, ds0)[0]
    for _ in range(2000):
        y = ds0.mu + rng.standard_normal(25)
        err_r, _ = err_random_true(hs, ds0, y, mode="exact")
        gaps.append(err_r - training_error(y, hs.H @ y) - eb - 2 * df_r / 25)
    gaps = np.array(gaps)
    assert abs(gaps.mean()) < 3 * gaps.std(ddof=1) / math.sqrt(gaps.size)
    expected, _ = err_random_expected(hs, ds0)
    at_mean, _ = err_random_true(hs, ds0, ds0.mu, mode="exact")
    e_h = df_random(hs, Sigma=ds0.Sigma).e_h_norm2
    assert expected == pytest.approx(at_mean + e_h, rel=1e-10)


def test_err_tilde_and_u_type():
    rng = rng_stream(8)
    X = rng.standard_normal((30, 5))
    y = X @ np.ones(5) + rng.standard_normal(30)
    errt = training_error(y, fit(OLS(), X).H @ y)
    assert err_tilde(X, y, 7.0) == pytest.approx(errt + 2 * (30 * errt / 25) * 7.0 / 30)
    from preddf import df_approx

    dfe = df_approx(30, 5, "gaussian_exact_expectation")
    assert u_type_statistic(X, y) == pytest.approx(err_tilde(X, y, dfe), rel=1e-12)
    with pytest.raises(ThresholdError):
        err_tilde(X[:5], y[:5], 1.0)
    with pytest.warns(RuntimeWarning):
        assert err_tilde(X[:, :1], np.zeros(30), 1.0) == 0.0


def test_err_tilde_unbiased_full_model():
    cfg = GenConfig(n=50, d=10, seed=9)
    gaps = []
    for r in range(2000):
        ds = generate_dataset(cfg, r)
        hs = fit(OLS(), ds.X)
        df_r = df_random_ls_closed(ds.X, np.eye(10))
        truth, _ = err_random_true(hs, ds, mode="exact")
        gaps.append(err_tilde(ds.X, ds.y, df_r) - truth)
    gaps = np.array(gaps)
    assert abs(gaps.mean()) < 3 * gaps.std(ddof=1) / math.sqrt(gaps.size)


@pytest.mark.parametrize("p", [3, 7, 11])
def test_loocv_matches_refits(p):
    rng = rng_stream(10 + p)
    X = rng.standard_normal((15, p))
    y = rng.standard_normal(15)
    assert loocv_error(fit(OLS(), X), y) == pytest.approx(brute_force_loocv(X, y, lstsq_coef), abs=1e-8)


def test_loocv_ridge_and_null():
    rng = rng_stream(14)
    X = rng.standard_normal((12, 20))
    y = rng.standard_normal(12)
    assert loocv_error(fit(Ridge(0.8), X), y) == pytest.approx(brute_force_loocv(X, y, ridge_coef(0.8)), abs=1e-8)
    assert loocv_error(fit(OLS(()), X), y) == pytest.approx(np.mean(y**2))


def test_loocv_rejects_interpolation():
    X = rng_stream(15).standard_normal((5, 9))
    with pytest.raises(LeverageError):
        loocv_error(fit(MinNorm(), X), np.ones(5))


def test_min_norm_loocv_refits():
    rng = rng_stream(16)
    X = rng.standard_normal((10, 25))
    y = rng.standard_normal(10)
    assert loocv_min_norm(X, y) == pytest.approx(brute_force_loocv(X, y, lstsq_coef), rel=1e-9)


def test_a_matrix_null_and_trace():
    X = rng_stream(17).standard_normal((12, 4))
    assert np.array_equal(a_matrix(fit(OLS(()), X)).A, np.zeros((12, 12)))
    hs = fit(OLS(), X)
    am = a_matrix(hs)
    h = np.diag(hs.H)
    assert am.regime == "under"
    assert am.trace == pytest.approx(np.sum(1 / (1 - h)) + 4 - 12, abs=1e-10)


def test_over_regime_a_matrix():
    X = rng_stream(18).standard_normal((5, 8))
    am = a_matrix(fit(MinNorm(), X))
    assert am.regime == "over"
    assert np.linalg.eigvalsh(am.A).min() > -1e-9
    ridge = a_matrix(fit(Ridge(1e-8), X), regime="under")
    rel = np.linalg.norm(ridge.A - am.A) / np.linalg.norm(am.A)
    assert rel < 1e-4


def test_delta_paths_agree():
    rng = rng_stream(19)
    X = rng.standard_normal((20, 6))
    hs = fit(OLS(), X)
    am = a_matrix(hs)
    y = rng.standard_normal(20)
    assert delta_hat(am, y, 0.9) == pytest.approx(delta_hat_per_observation(hs, y, 0.9), abs=1e-10)
    assert delta_hat(am, np.zeros(20), 0.9) == pytest.approx(-0.9 * am.trace / 20)


def test_delta_hat_mean_over_noise():
    rng = rng_stream(20)
    X = rng.standard_normal((20, 6))
    mu = np.sin(np.arange(20.0))
    am = a_matrix(fit(OLS(), X))
    vals = np.array([delta_hat(am, mu + rng.standard_normal(20), 1.0) for _ in range(5000)])
    target = mu @ am.A @ mu / 20
    assert abs(vals.mean() - target) < 3 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_corrections():
    assert delta_plus(-0.3) == 0.0
    assert delta_plus(0.4) == 0.4
    assert delta_plusplus(0.4, 9.0, 1.0, 1.0, 10) == 0.4
    assert delta_plusplus(-0.3, 2.0, 5.0, 1.0, 10) == pytest.approx(4 / 70)
    assert delta_plusplus(-0.3, 0.0, 0.0, 1.0, 10) == 0.0
    with pytest.raises(ConfigError):
        delta_plusplus(-0.3, -1.0, 5.0, 1.0, 10)


def test_err_hat_forms_and_xi():
    rng = rng_stream(21)
    X = rng.standard_normal((25, 8))
    y = rng.standard_normal(25)
    hs = fit(OLS(), X)
    am = a_matrix(hs)
    df_r = df_random(hs, Sigma=np.eye(8)).df_random
    val, xi = err_hat(am, hs, y, 1.3, df_r)
    h = np.diag(hs.H)
    assert xi == pytest.approx(2 * df_r + 25 - 8 - np.sum(1 / (1 - h)), abs=1e-9)
    assert val == pytest.approx(loocv_error(hs, y) + 1.3 * xi / 25, abs=1e-10)
    zero_xi = 0.5 * am.trace
    val0, xi0 = err_hat(am, hs, y, 1.3, zero_xi)
    assert xi0 == 0.0 and val0 == pytest.approx(loocv_error(hs, y), abs=1e-12)


def test_err_hat_over_regime_equals_min_norm_loocv_plus_xi():
    rng = rng_stream(22)
    X = rng.standard_normal((10, 30))
    y = rng.standard_normal(10)
    hs = fit(MinNorm(), X)
    am = a_matrix(hs)
    df_r = df_random(hs, Sigma=np.eye(30)).df_random
    val, xi = err_hat(am, hs, y, 1.0, df_r)
    assert val == pytest.approx(loocv_min_norm(X, y) + xi / 10, rel=1e-10)


def test_equal_leverage_xi_near_zero():
    n, p = 40, 10
    t = 2 * np.pi * np.arange(n) / n
    k = np.arange(1, p // 2 + 1)
    Q = np.column_stack([np.cos(np.outer(t, k)), np.sin(np.outer(t, k))])
    hs = fit(OLS(), Q)
    assert np.allclose(np.diag(hs.H), p / n)
    from preddf import df_approx

    xi = 2 * df_approx(n, p, "asymptotic_equicorrelated") + n - p - n / (1 - p / n)
    assert abs(xi) < 1e-9


def test_corrected_err_hats_nonnegative_parts():
    rng = rng_stream(23)
    X = rng.standard_normal((20, 5))
    hs = fit(OLS(), X)
    am = a_matrix(hs)
    for _ in range(50):
        y = 0.1 * rng.standard_normal(20)
        out = corrected_err_hats(am, hs, y, 1.0, 6.0)
        errt = training_error(y, hs.H @ y)
        assert out["delta_plus"] >= 0 and out["delta_plusplus"] >= 0
        assert out["err_hat_plus"] >= errt and out["err_hat_plusplus"] >= errt


def test_xi_variance_reading():
    rng = rng_stream(24)
    X = rng.standard_normal((18, 6))
    hs = fit(OLS(), X)
    rep = df_random(hs, Sigma=np.eye(6))
    lhs, rhs = xi_decomposition_check(hs, a_matrix(hs), rep.e_h_norm2, 0.8)
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_xi_closed_values():
    assert xi_expectation_closed(100, 50, "under") == pytest.approx(4653 / 2352)
    assert xi_expectation_closed(100, 200, "over") == pytest.approx(100 * 199 / (99 * 100))
    assert xi_expectation_closed(1000, 2000, "over") == pytest.approx(1999 / 999)
    with pytest.raises(ConfigError):
        xi_expectation_closed(20, 19, "under")
    with pytest.raises(ConfigError):
        xi_expectation_closed(20, 21, "over")


def test_xi_over_regime_monte_carlo():
    n, p = 20, 40
    vals = []
    rng = rng_stream(25)
    for _ in range(2000):
        X = rng.standard_normal((n, p))
        hs = fit(MinNorm(), X)
        df_r = df_random_ls_closed(X, np.eye(p))
        vals.append(2 * df_r - a_matrix(hs).trace)
    vals = np.array(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - xi_expectation_closed(n, p, "over")) < 3 * se


def test_xi_gaussian_exact_under_regime():
    n, p = 40, 20
    vals = []
    rng = rng_stream(26)
    for _ in range(3000):
        X = rng.standard_normal((n, p))
        hs = fit(OLS(), X)
        vals.append(2 * df_random_ls_closed(X, np.eye(p)) - a_matrix(hs).trace)
    vals = np.array(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - xi_expectation_gaussian(n, p)) < 3 * se


def test_leverage_moment_values():
    mean, var = leverage_moments(20, 10)
    assert mean == pytest.approx(2.01875)
    assert var == pytest.approx((19 / 20) ** 2 * 2 * 9 * 17 / (6 * 64))
    assert leverage_moments_exact(20, 10) == pytest.approx((2.25, 0.9375))
    small_mean, _ = leverage_moments_exact(2000, 6)
    assert small_mean == pytest.approx(1.0, abs=5e-3)


def test_leverage_exact_monte_carlo():
    n, p = 20, 10
    rng = rng_stream(27)
    inv = []
    for _ in range(4000):
        X = rng.standard_normal((n, p))
        inv.append(1 / (1 - fit(OLS(), X).H[0, 0]))
    inv = np.array(inv)
    mean, var = leverage_moments_exact(n, p)
    assert abs(inv.mean() - mean) < 3 * inv.std(ddof=1) / math.sqrt(inv.size)


def test_risk_report_fields():
    ds = generate_dataset(GenConfig(n=20, d=8, seed=11))
    hs = fit(OLS((0, 1, 2)), ds.X)
    rep = risk_report(hs, ds.y, 1.0, Sigma=ds.Sigma, truth=ds)
    for key in ("loocv", "err_hat", "err_hat_plus", "err_hat_plusplus", "cp_tilde"):
        assert key in rep.estimators
    assert rep.err_fixed is not None and rep.excess_bias_true is not None
    rep2 = risk_report(fit(MinNorm(), ds.X[:, :3].repeat(10, axis=1)[:, :30] + rng_stream(1).standard_normal((20, 30))), ds.y, 1.0, Sigma=np.eye(30))
    assert rep2.err_train == pytest.approx(0.0, abs=1e-20)
    assert "loocv" in rep2.estimators
    with pytest.raises(ConfigError):
        risk_report(hs, ds.y, 1.0)
