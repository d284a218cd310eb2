import math

import numpy as np
import pytest
from scipy import integrate
from scipy.interpolate import CubicSpline

from preddf import (
    OLS,
    ConfigError,
    FitError,
    LocalConstant,
    MinNorm,
    Ridge,
    Spline,
    WeightInterp,
    fit,
    predict,
    rng_stream,
)
from preddf.procedures import (
    kernel_R,
    local_constant_hat_vector,
    spline_factors,
    spline_hat_vector,
    weight_hat_vector,
)
from preddf.errors import ConditioningError


def test_ols_identity_design():
    hs = fit(OLS(), np.eye(2))
    assert np.allclose(hs.H, np.eye(2))
    assert np.allclose(hs.hat_vector(np.array([0.3, -1.2])), [0.3, -1.2])


def test_ridge_huge_penalty():
    X = rng_stream(1).standard_normal((10, 4))
    assert np.linalg.norm(fit(Ridge(1e12), X).H) < 1e-6


def test_ridge_rejects_nonpositive_penalty():
    with pytest.raises((FitError, ConfigError)):
        fit(Ridge(0.0), np.eye(3))


def test_min_norm_interpolates_against_lstsq():
    rng = rng_stream(2)
    X = rng.standard_normal((5, 8))
    hs = fit(MinNorm(), X)
    assert np.allclose(hs.H, np.eye(5), atol=1e-9)
    y = rng.standard_normal(5)
    xs = rng.standard_normal(8)
    assert predict(hs, y, xs) == pytest.approx(xs @ np.linalg.lstsq(X, y, rcond=None)[0], abs=1e-10)
    assert np.allclose(X @ hs.operator.T @ y, y)


def test_regime_guards():
    X = rng_stream(3).standard_normal((5, 8))
    with pytest.raises(FitError):
        fit(OLS(), X)
    with pytest.raises(FitError):
        fit(MinNorm(), X[:, :4])
    collinear = np.column_stack([X[:, 0], X[:, 0], X[:, 1]])
    with pytest.raises(FitError):
        fit(OLS(), collinear)


@pytest.mark.parametrize("spec", [OLS((0, 2, 3)), MinNorm(tuple(range(9))), Ridge(0.7)])
def test_training_rows_reproduce_hat_matrix(spec):
    X = rng_stream(4).standard_normal((6, 10))
    hs = fit(spec, X)
    assert np.allclose(hs.hat_vectors(X), hs.H, atol=1e-9)


def test_ols_single_column_without_intercept():
    rng = rng_stream(5)
    x, y = rng.standard_normal(7), rng.standard_normal(7)
    hs = fit(OLS(), x[:, None])
    assert predict(hs, y, np.array([1.7])) == pytest.approx(1.7 * (x @ y) / (x @ x))


def test_ridge_limits():
    rng = rng_stream(6)
    X = rng.standard_normal((12, 5))
    assert np.linalg.norm(fit(Ridge(1e-10), X).H - fit(OLS(), X).H) < 1e-5
    W = rng.standard_normal((5, 12))
    xs = rng.standard_normal((4, 12))
    diff = fit(Ridge(1e-10), W).hat_vectors(xs) - fit(MinNorm(), W).hat_vectors(xs)
    assert np.abs(diff).max() < 1e-5


def test_weight_cosine_midpoint():
    h = weight_hat_vector("cosine", np.array([0.0, 0.4, 0.8, 1.0]), 0.6)
    assert np.allclose(h, [0.0, math.cos(math.pi / 4), 1 - math.cos(math.pi / 4), 0.0])


def test_weight_linear_quarter():
    h = weight_hat_vector("linear", np.array([0.1, 0.5, 0.9]), 0.2)
    assert np.allclose(h, [0.75, 0.25, 0.0])


def test_weight_boundaries_and_nodes():
    x = np.array([0.2, 0.4, 0.7])
    for K in ("constant", "linear", "quadratic", "cosine"):
        assert np.array_equal(weight_hat_vector(K, x, 0.1), [1.0, 0.0, 0.0])
        assert np.array_equal(weight_hat_vector(K, x, 0.9), [0.0, 0.0, 1.0])
        assert np.allclose(fit(WeightInterp(K), x).H, np.eye(3))


def test_weight_constant_is_nearest_neighbor():
    x = np.array([0.25, 0.5, 0.75])
    y = np.array([1.0, 2.0, 3.0])
    hs = fit(WeightInterp("constant"), x)
    assert predict(hs, y, 0.375 - 1e-9) == 1.0
    assert predict(hs, y, 0.375) == 2.0


def test_local_constant_examples():
    x = np.linspace(0.0, 1.0, 6)
    L = 0.2
    h = local_constant_hat_vector(x, L / 2, x[2])
    assert np.array_equal(h, np.eye(6)[2])
    h = local_constant_hat_vector(x, L / 2 + 1e-9, 0.5)
    assert np.allclose(h, [0, 0, 0.5, 0.5, 0, 0])
    assert h @ h == pytest.approx(0.5)
    assert np.allclose(local_constant_hat_vector(x, 2.0, 0.55), np.full(6, 1 / 6))


def test_local_constant_rejects_empty_window():
    with pytest.raises(FitError):
        fit(LocalConstant(0.05), np.linspace(0, 1, 6))


def test_kernel_R_values():
    assert kernel_R(0.3, 0.7, 1) == pytest.approx(0.3)
    assert kernel_R(0.5, 0.5, 2) == pytest.approx(1 / 24)
    u, v = 0.35, 0.8
    assert kernel_R(u, v, 2) == pytest.approx(u**2 * (3 * v - u) / 6)
    for s in (1, 2, 5):
        assert kernel_R(0.6, 0.0, s) == 0.0


def test_kernel_R_against_quadrature():
    rng = rng_stream(7)
    for s in (1, 2, 3, 4):
        for u, v in rng.uniform(0, 1, size=(12, 2)):
            ref, _ = integrate.quad(
                lambda z: max(u - z, 0) ** (s - 1) * max(v - z, 0) ** (s - 1), 0, min(u, v),
                epsabs=1e-14, epsrel=1e-13,
            )
            assert kernel_R(u, v, s) == pytest.approx(ref / math.factorial(s - 1) ** 2, abs=1e-9)


def test_linear_spline_equals_linear_weights():
    x = np.sort(rng_stream(8).uniform(0.05, 0.95, 7))
    xs = np.linspace(x[0], x[-1], 41)
    assert np.allclose(spline_hat_vector(1, x, xs), weight_hat_vector("linear", x, xs), atol=1e-10)


def test_cubic_spline_matches_natural_spline():
    x = np.linspace(0.1, 0.9, 5)
    xs = np.linspace(0.1, 0.9, 33)
    rows = spline_hat_vector(2, x, xs)
    assert np.allclose(rows.sum(axis=1), 1.0)
    rng = rng_stream(9)
    for _ in range(20):
        y = rng.standard_normal(5)
        ref = CubicSpline(x, y, bc_type="natural")(xs)
        assert np.allclose(rows @ y, ref, atol=1e-9)


def test_spline_interpolates_and_rows_sum_to_one():
    x = (np.arange(21) + 0.5) / 21
    for s in (1, 2, 3):
        hs = fit(Spline(s), x)
        assert np.array_equal(hs.H, np.eye(21))
        assert np.allclose(hs.hat_vectors(x), np.eye(21), atol=1e-8)
        assert np.allclose(hs.hat_vectors(np.linspace(0, 1, 17)).sum(axis=1), 1.0, atol=1e-8)


def test_spline_too_few_points():
    with pytest.raises(ConfigError):
        spline_factors(np.array([0.2, 0.5]), 3)


def test_spline_conditioning_guard():
    x = np.array([0.1, 0.1 + 1e-13, 0.5, 0.9])
    with pytest.raises((ConditioningError, ConfigError)):
        spline_factors(x, 2)


def test_predict_validates_shapes():
    hs = fit(OLS(), np.eye(3))
    with pytest.raises(ConfigError):
        predict(hs, np.ones(2), np.ones(3))
    with pytest.raises(ConfigError):
        hs.hat_vector(np.ones(4))
