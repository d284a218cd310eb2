"""True risks, decompositions and out-of-sample error estimators.

Notation: ``ErrT`` is the training error, ``ErrF`` the Fixed-X prediction
error, ``ErrR`` the Random-X prediction error. The Random-X error decomposes
as ``ErrR = ErrT + excess bias + (2/n) sigma^2 df_R`` in expectation over the
noise. The excess bias is estimated from the quadratic form ``y^T A y``, where
``A`` comes from the leave-one-out expansion.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .core_model import Dataset, MeanModel, rng_stream
from .dof import DofReport, df_random, trace_hth
from .errors import ConfigError, FitError, LeverageError, ThresholdError
from .procedures import HatSystem, MinNorm, OLS, min_norm_operator, ols_operator

LEVERAGE_GUARD = 1e-10


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AMatrix:
    """Quadratic-form matrix of the excess-bias estimator.

    ``regime="under"``: ``A = (I - H)^T D (I - H)`` with
    ``D = diag(1/(1 - h_ii)^2 - 1)``. ``regime="over"``:
    ``A = G diag(1/G_ii^2) G`` with ``G = (X X^T)^{-1}``, the ridge limit of
    the former as the penalty goes to zero.
    """

    A: NDArray[np.float64]
    trace: float
    regime: Literal["under", "over"]


@dataclass(frozen=True)
class RiskReport:
    """Risk quantities for one fitted procedure and response."""

    err_train: float
    df_fixed: float
    df_random: float
    xi: float | None
    estimators: dict[str, float] = field(default_factory=dict)
    err_fixed: float | None = None
    err_random_true: float | None = None
    err_random_se: float | None = None
    excess_bias_true: float | None = None

    def as_dict(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {
            "err_train": self.err_train,
            "df_fixed": self.df_fixed,
            "df_random": self.df_random,
            "xi": self.xi,
            "err_fixed": self.err_fixed,
            "err_random_true": self.err_random_true,
            "err_random_se": self.err_random_se,
            "excess_bias_true": self.excess_bias_true,
        }
        out.update(self.estimators)
        return out


# ---------------------------------------------------------------------------
# True risks (simulation only)
# ---------------------------------------------------------------------------


def training_error(y: NDArray[np.float64], yhat: NDArray[np.float64]) -> float:
    """Mean squared residual ``||y - yhat||^2 / n``."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ConfigError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    return float(np.mean((y - yhat) ** 2))


def err_fixed_true(hs: HatSystem, mu: NDArray[np.float64], sigma_eps2: float) -> float:
    """Fixed-X error ``sigma^2 + ||H mu - mu||^2/n + sigma^2 tr(H^T H)/n``."""
    mu = np.asarray(mu, dtype=float)
    n = hs.n
    bias = hs.H @ mu - mu
    return sigma_eps2 + float(bias @ bias) / n + sigma_eps2 * trace_hth(hs) / n


def _truth(ds: Dataset):
    if ds.mean_fn is None:
        raise ConfigError("true risks need the mean function oracle (simulation data)")
    return ds.mean_fn


def prediction_bias2(
    hs: HatSystem,
    ds: Dataset,
    v: NDArray[np.float64],
    n_draws: int = 10_000,
    rng: np.random.Generator | None = None,
    mode: Literal["auto", "exact", "monte_carlo"] = "auto",
) -> tuple[float, float]:
    """``E (mu(x*) - h(x*)^T v)^2`` over fresh ``x*``, with its standard error.

    The exact path applies when the hat vector is linear in ``x*`` and the
    truth is a :class:`MeanModel`: the prediction is then ``x*^T (M^T v)``
    and the expectation has a closed form. Otherwise Monte Carlo.
    """
    mean_fn = _truth(ds)
    v = np.asarray(v, dtype=float)
    exact_ok = hs.operator is not None and isinstance(mean_fn, MeanModel)
    if mode == "exact" or (mode == "auto" and exact_ok):
        if not exact_ok:
            raise ConfigError("exact path needs a linear-in-x* procedure and a MeanModel truth")
        return mean_fn.mse(hs.operator.T @ v), 0.0
    if n_draws < 100:
        raise ConfigError(f"need at least 100 Monte Carlo draws, got {n_draws}")
    rng = rng_stream(0) if rng is None else rng
    xs = ds.sampler()(n_draws, rng)
    resid = mean_fn(xs) - hs.hat_vectors(xs) @ v
    sq = resid**2
    return float(np.mean(sq)), float(np.std(sq, ddof=1) / math.sqrt(n_draws))


def err_random_true(
    hs: HatSystem,
    ds: Dataset,
    y: NDArray[np.float64] | None = None,
    n_draws: int = 10_000,
    rng: np.random.Generator | None = None,
    mode: Literal["auto", "exact", "monte_carlo"] = "monte_carlo",
) -> tuple[float, float]:
    """Random-X error ``E[(y* - mu_hat*)^2 | X, y]`` and its standard error.

    The Monte Carlo path draws fresh pairs ``(x*, y*)``. With ``mode="exact"``
    (or ``"auto"`` when available) the error is
    ``sigma^2 + E(mu* - h*^T y)^2`` from :func:`prediction_bias2`.
    """
    mean_fn = _truth(ds)
    y = ds.y if y is None else np.asarray(y, dtype=float)
    if mode != "monte_carlo":
        bias2, se = prediction_bias2(hs, ds, y, n_draws, rng, mode)
        return ds.sigma_eps2 + bias2, se
    if n_draws < 100:
        raise ConfigError(f"need at least 100 Monte Carlo draws, got {n_draws}")
    rng = rng_stream(0) if rng is None else rng
    xs = ds.sampler()(n_draws, rng)
    ystar = mean_fn(xs) + math.sqrt(ds.sigma_eps2) * rng.standard_normal(n_draws)
    sq = (ystar - hs.hat_vectors(xs) @ y) ** 2
    return float(np.mean(sq)), float(np.std(sq, ddof=1) / math.sqrt(n_draws))


def err_random_expected(
    hs: HatSystem,
    ds: Dataset,
    n_draws: int = 10_000,
    rng: np.random.Generator | None = None,
    mode: Literal["auto", "exact", "monte_carlo"] = "auto",
) -> tuple[float, float]:
    """Noise-averaged Random-X error ``sigma^2 + E(mu* - h*^T mu)^2 + sigma^2 E||h*||^2``."""
    if ds.mu is None:
        raise ConfigError("need the true means mu")
    bias2, se = prediction_bias2(hs, ds, ds.mu, n_draws, rng, mode)
    if hs.operator is not None and mode != "monte_carlo":
        rep = df_random(hs, Sigma=ds.Sigma, mode="analytic")
        e_h = rep.e_h_norm2
    else:
        rep = df_random(hs, sampler=ds.sampler(), n_draws=max(n_draws, 1000), rng=rng)
        e_h = rep.e_h_norm2
    return ds.sigma_eps2 * (1.0 + e_h) + bias2, se


def excess_bias_true(
    hs: HatSystem,
    ds: Dataset,
    n_draws: int = 10_000,
    rng: np.random.Generator | None = None,
    mode: Literal["auto", "exact", "monte_carlo"] = "auto",
) -> tuple[float, float]:
    """Excess bias ``E(mu* - h*^T mu)^2 - ||mu - H mu||^2/n`` and the s.e. of its first term."""
    if ds.mu is None:
        raise ConfigError("need the true means mu")
    bias2, se = prediction_bias2(hs, ds, ds.mu, n_draws, rng, mode)
    resid = ds.mu - hs.H @ ds.mu
    return bias2 - float(resid @ resid) / hs.n, se


# ---------------------------------------------------------------------------
# C_p-type estimator
# ---------------------------------------------------------------------------


def _ols_fit(X_S: NDArray[np.float64], y: NDArray[np.float64]) -> tuple[float, int, int]:
    X_S = np.atleast_2d(np.asarray(X_S, dtype=float))
    n, p = X_S.shape
    if p >= n:
        raise ThresholdError(f"the C_p-type estimator needs p < n, got p = {p}, n = {n}")
    H, _ = ols_operator(X_S)
    y = np.asarray(y, dtype=float)
    return training_error(y, H @ y), n, p


def err_tilde(X_S: NDArray[np.float64], y: NDArray[np.float64], df_R: float) -> float:
    """``ErrT + (2/n) sigma_hat^2 df_R`` with ``sigma_hat^2 = n ErrT/(n - p)``."""
    errt, n, p = _ols_fit(X_S, y)
    if errt == 0.0:
        warnings.warn("training error is zero; the C_p-type estimator is degenerate", RuntimeWarning)
        return 0.0
    sigma_hat2 = n * errt / (n - p)
    return errt + 2.0 * sigma_hat2 * df_R / n


def u_type_statistic(X_S: NDArray[np.float64], y: NDArray[np.float64]) -> float:
    """C_p-type estimator with the Gaussian-design mean of df_R substituted.

    Written out, ``ErrT * (1 + p/(n-p) + n p/((n-p)(n-p-1)))``; labelled
    U-type after the classical statistic of the same flavor.
    """
    errt, n, p = _ols_fit(X_S, y)
    if p >= n - 1:
        raise ThresholdError(f"needs p < n - 1, got p = {p}, n = {n}")
    return errt * (1.0 + p / (n - p) + n * p / ((n - p) * (n - p - 1)))


# ---------------------------------------------------------------------------
# Leave-one-out
# ---------------------------------------------------------------------------


def _leverages(hs: HatSystem) -> NDArray[np.float64]:
    h = np.diag(hs.H).copy()
    if np.any(h > 1.0 - LEVERAGE_GUARD):
        i = int(np.argmax(h))
        raise LeverageError(f"leverage h_ii = {h[i]:.15g} at i = {i} is numerically 1 (interpolation)")
    return h


def loocv_error(hs: HatSystem, y: NDArray[np.float64]) -> float:
    """Closed-form leave-one-out error ``(1/n) sum ((y_i - h_i^T y)/(1 - h_ii))^2``."""
    y = np.asarray(y, dtype=float)
    h = _leverages(hs)
    r = (y - hs.H @ y) / (1.0 - h)
    return float(np.mean(r**2))


def loocv_min_norm(X_S: NDArray[np.float64], y: NDArray[np.float64]) -> float:
    """Leave-one-out error of min-norm least squares (``p > n``).

    Dropping row ``i`` and refitting the minimum-norm solution gives the
    residual ``[G y]_i / G_ii`` with ``G = (X X^T)^{-1}``, the vanishing-penalty
    limit of the ridge identity.
    """
    G = _gram_inverse(X_S)
    r = (G @ np.asarray(y, dtype=float)) / np.diag(G)
    return float(np.mean(r**2))


def _gram_inverse(X_S: NDArray[np.float64]) -> NDArray[np.float64]:
    _, M = min_norm_operator(np.asarray(X_S, dtype=float))
    G = M @ M.T
    return 0.5 * (G + G.T)


def _subset_columns(hs: HatSystem) -> NDArray[np.float64]:
    spec = hs.spec
    if spec.subset is None:
        return hs.X
    return hs.X[:, list(spec.subset)]


def a_matrix(
    hs: HatSystem | None = None,
    X_S: NDArray[np.float64] | None = None,
    regime: Literal["auto", "under", "over"] = "auto",
) -> AMatrix:
    """Build the :class:`AMatrix` for a fitted procedure or a min-norm design.

    ``regime="auto"`` uses ``over`` for :class:`MinNorm` fits (or when only
    ``X_S`` with more columns than rows is given) and ``under`` otherwise.
    """
    if regime == "auto":
        if hs is not None and isinstance(hs.spec, MinNorm):
            regime = "over"
        elif hs is None and X_S is not None:
            X_S = np.atleast_2d(X_S)
            regime = "over" if X_S.shape[1] > X_S.shape[0] else "under"
        else:
            regime = "under"
    if regime == "over":
        if X_S is None:
            if hs is None or not isinstance(hs.spec, MinNorm):
                raise ConfigError("the over-regime A matrix needs a min-norm fit or X_S")
            X_S = _subset_columns(hs)
        G = _gram_inverse(X_S)
        g = np.diag(G)
        A = (G / g**2) @ G
        A = 0.5 * (A + A.T)
        return AMatrix(A, float(np.trace(A)), "over")
    if regime != "under":
        raise ConfigError(f"unknown regime {regime!r}")
    if hs is None:
        if X_S is None:
            raise ConfigError("need a HatSystem or X_S")
        from .procedures import fit

        hs = fit(OLS(), np.atleast_2d(X_S))
    h = _leverages(hs)
    D = 1.0 / (1.0 - h) ** 2 - 1.0
    R = np.eye(hs.n) - hs.H
    A = R.T @ (D[:, None] * R)
    A = 0.5 * (A + A.T)
    return AMatrix(A, float(np.trace(A)), "under")


# ---------------------------------------------------------------------------
# Excess-bias estimation
# ---------------------------------------------------------------------------


def delta_hat(am: AMatrix, y: NDArray[np.float64], sigma_eps2: float) -> float:
    """``(1/n) y^T A y - (1/n) sigma^2 tr(A)``. May be negative."""
    y = np.asarray(y, dtype=float)
    n = y.size
    return float(y @ am.A @ y) / n - sigma_eps2 * am.trace / n


def delta_hat_per_observation(hs: HatSystem, y: NDArray[np.float64], sigma_eps2: float) -> float:
    """Under-regime excess-bias estimate written observation by observation.

    ``(1/n) sum_i [(y_i - mu_hat_i)^2 - (1 - h_ii) sigma^2] (1/(1 - h_ii)^2 - 1)``.
    Agrees with :func:`delta_hat` for symmetric idempotent ``H`` (least squares).
    """
    y = np.asarray(y, dtype=float)
    h = _leverages(hs)
    r = y - hs.H @ y
    w = 1.0 / (1.0 - h) ** 2 - 1.0
    return float(np.mean((r**2 - (1.0 - h) * sigma_eps2) * w))


def delta_plus(delta: float) -> float:
    """Positive-part correction ``max(delta, 0)``."""
    return max(float(delta), 0.0)


def delta_plusplus(delta: float, yAy: float, trA: float, sigma_eps2: float, n: int) -> float:
    """Smooth nonnegative correction.

    ``delta`` itself when nonnegative, otherwise
    ``(y^T A y)^2 / (n (y^T A y + sigma^2 tr(A)))``; zero when both quadratic
    terms vanish.
    """
    if yAy < 0 or trA < 0:
        raise ConfigError("y^T A y and tr(A) must be nonnegative")
    if delta >= 0:
        return float(delta)
    denom = n * (yAy + sigma_eps2 * trA)
    if denom == 0:
        return 0.0
    return float(yAy**2 / denom)


def err_hat(
    am: AMatrix,
    hs: HatSystem,
    y: NDArray[np.float64],
    sigma_eps2: float,
    df_R: float,
    check_tol: float = 1e-10,
) -> tuple[float, float]:
    """Estimated Random-X error and ``xi = 2 df_R - tr(A)``.

    The value ``ErrT + delta_hat + (2/n) sigma^2 df_R`` is also computed as
    ``LOOCV + (sigma^2/n) xi``; the two forms must agree to ``check_tol``
    relative to the value, otherwise ``ArithmeticError`` is raised.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    errt = training_error(y, hs.H @ y)
    value = errt + delta_hat(am, y, sigma_eps2) + 2.0 * sigma_eps2 * df_R / n
    xi = 2.0 * df_R - am.trace
    if am.regime == "under":
        loo = loocv_error(hs, y)
    else:
        loo = float(y @ am.A @ y) / n
    other = loo + sigma_eps2 * xi / n
    if abs(value - other) > check_tol * max(1.0, abs(value)):
        raise ArithmeticError(f"err_hat forms disagree: {value!r} vs {other!r}")
    return value, xi


def corrected_err_hats(
    am: AMatrix, hs: HatSystem, y: NDArray[np.float64], sigma_eps2: float, df_R: float
) -> dict[str, float]:
    """``err_hat`` with the raw, positive-part and smooth excess-bias estimates."""
    y = np.asarray(y, dtype=float)
    n = y.size
    errt = training_error(y, hs.H @ y)
    yAy = max(float(y @ am.A @ y), 0.0)
    d = delta_hat(am, y, sigma_eps2)
    base = errt + 2.0 * sigma_eps2 * df_R / n
    return {
        "delta_hat": d,
        "delta_plus": delta_plus(d),
        "delta_plusplus": delta_plusplus(d, yAy, max(am.trace, 0.0), sigma_eps2, n),
        "err_hat": base + d,
        "err_hat_plus": base + delta_plus(d),
        "err_hat_plusplus": base + delta_plusplus(d, yAy, max(am.trace, 0.0), sigma_eps2, n),
    }


def xi_decomposition_check(
    hs: HatSystem, am: AMatrix, e_h_norm2: float, sigma_eps2: float
) -> tuple[float, float]:
    """Check the variance reading of ``xi``.

    Returns ``(sigma^2/n) xi`` and the difference between the mean variance
    of an out-of-sample residual, ``sigma^2 (1 + E||h*||^2)``, and the mean
    variance of the leave-one-out residuals,
    ``(sigma^2/n) sum_i ||row_i(I - H)||^2 / (1 - h_ii)^2``.
    """
    n = hs.n
    df_r = float(np.trace(hs.H)) + 0.5 * n * (e_h_norm2 - trace_hth(hs) / n)
    lhs = sigma_eps2 * (2.0 * df_r - am.trace) / n
    h = _leverages(hs)
    rows = np.eye(n) - hs.H
    loo_var = sigma_eps2 * np.sum(rows**2, axis=1) / (1.0 - h) ** 2
    rhs = sigma_eps2 * (1.0 + e_h_norm2) - float(np.mean(loo_var))
    return lhs, rhs


# ---------------------------------------------------------------------------
# Reference moments over Gaussian designs
# ---------------------------------------------------------------------------


def xi_expectation_closed(n: int, p: int, regime: Literal["under", "over"]) -> float:
    """Published pre-limit formulas for ``E xi``.

    ``under``: ``(2n^2 - 3np - 5n + 3p + 3)/((n-p-2)(n-p-1))`` for
    ``5 < p < n - 2``. ``over``: ``n(p-1)/((p-n-1)(p-n))`` for ``p > n + 1``.

    Notes
    -----
    The under-regime expression inherits the leverage moments of
    :func:`leverage_moments`, which differ from the exact moments of either a
    centered or an intercept Gaussian design; see
    :func:`xi_expectation_gaussian` for the exact centered-design value.
    """
    if regime == "under":
        if not 5 < p < n - 2:
            raise ConfigError(f"under-regime formula needs 5 < p < n - 2, got n = {n}, p = {p}")
        return (2 * n * n - 3 * n * p - 5 * n + 3 * p + 3) / ((n - p - 2) * (n - p - 1))
    if regime == "over":
        if not p > n + 1:
            raise ConfigError(f"over-regime formula needs p > n + 1, got n = {n}, p = {p}")
        return n * (p - 1) / ((p - n - 1) * (p - n))
    raise ConfigError(f"unknown regime {regime!r}")


def xi_expectation_gaussian(n: int, p: int) -> float:
    """Exact ``E xi`` for least squares on ``N(0, I_p)`` rows without an intercept.

    Leverages are ``Beta(p/2, (n-p)/2)``, so ``E 1/(1 - h_ii) = (n-2)/(n-p-2)``
    and ``E xi = n p/(n-p-1) + n - n(n-2)/(n-p-2)`` for ``p < n - 2``. Above the
    threshold the over-regime expression of :func:`xi_expectation_closed` is exact.
    """
    if p < n - 2:
        return n * p / (n - p - 1) + n - n * (n - 2) / (n - p - 2)
    if p > n + 1:
        return xi_expectation_closed(n, p, "over")
    raise ThresholdError(f"needs p < n - 2 or p > n + 1, got n = {n}, p = {p}")


def leverage_moments(n: int, p: int) -> tuple[float, float]:
    """Published moments of ``1/(1 - h_ii)`` over Gaussian designs.

    ``mean = ((n-1)/n)(n-3)/(n-p-2)`` and
    ``var = ((n-1)/n)^2 2(p-1)(n-3)/((n-p-4)(n-p-2)^2)``.

    Notes
    -----
    These carry the factor ``(n-1)/n`` where the leverage law of a design
    with an intercept column gives ``n/(n-1)``; the exact values are in
    :func:`leverage_moments_exact`.
    """
    if not 5 < p < n - 2:
        raise ConfigError(f"mean needs 5 < p < n - 2, got n = {n}, p = {p}")
    if not p < n - 4:
        raise ConfigError(f"variance needs p < n - 4, got n = {n}, p = {p}")
    c = (n - 1) / n
    mean = c * (n - 3) / (n - p - 2)
    var = c * c * 2 * (p - 1) * (n - 3) / ((n - p - 4) * (n - p - 2) ** 2)
    return mean, var


def leverage_moments_exact(n: int, p: int, intercept: bool = False) -> tuple[float, float]:
    """Exact mean and variance of ``1/(1 - h_ii)`` for Gaussian designs.

    Without an intercept, ``h_ii ~ Beta(p/2, (n-p)/2)`` for ``N(0, I_p)`` rows.
    With an intercept column plus ``p - 1`` Gaussian features,
    ``h_ii = 1/n + ((n-1)/n) z`` with ``z ~ Beta((p-1)/2, (n-p)/2)``.
    Uses ``E (1-B)^{-k}`` for ``B ~ Beta(a, b)``.
    """
    if not p < n - 4:
        raise ConfigError(f"needs p < n - 4, got n = {n}, p = {p}")
    if intercept:
        scale = n / (n - 1)
        a, b = (p - 1) / 2.0, (n - p) / 2.0
    else:
        scale = 1.0
        a, b = p / 2.0, (n - p) / 2.0
    m1 = (a + b - 1) / (b - 1)
    m2 = (a + b - 1) * (a + b - 2) / ((b - 1) * (b - 2))
    return scale * m1, scale * scale * (m2 - m1 * m1)


# ---------------------------------------------------------------------------
# Assembled report
# ---------------------------------------------------------------------------


def risk_report(
    hs: HatSystem,
    y: NDArray[np.float64],
    sigma_eps2: float,
    Sigma: NDArray[np.float64] | None = None,
    dof: DofReport | None = None,
    truth: Dataset | None = None,
    n_draws: int = 10_000,
    rng: np.random.Generator | None = None,
) -> RiskReport:
    """Training error, degrees of freedom and every applicable estimator.

    ``truth`` (simulated data) adds the true Fixed-X and Random-X errors and
    the true excess bias.
    """
    y = np.asarray(y, dtype=float)
    n = hs.n
    if dof is None:
        if Sigma is None:
            raise ConfigError("need Sigma or a precomputed DofReport")
        dof = df_random(hs, Sigma=Sigma, rng=rng, n_draws=n_draws)
    errt = training_error(y, hs.H @ y)
    estimators: dict[str, float] = {}
    xi = None
    try:
        am = a_matrix(hs)
    except (LeverageError, ConfigError, FitError):
        am = None
    if am is not None:
        estimators.update(corrected_err_hats(am, hs, y, sigma_eps2, dof.df_random))
        _, xi = err_hat(am, hs, y, sigma_eps2, dof.df_random)
        estimators["loocv"] = loocv_error(hs, y) if am.regime == "under" else float(y @ am.A @ y) / n
    if isinstance(hs.spec, OLS):
        idx = list(range(hs.X.shape[1])) if hs.spec.subset is None else list(hs.spec.subset)
        if 0 < len(idx) < n:
            estimators["cp_tilde"] = err_tilde(hs.X[:, idx], y, dof.df_random)
    kwargs: dict = {}
    if truth is not None and truth.mu is not None:
        kwargs["err_fixed"] = err_fixed_true(hs, truth.mu, sigma_eps2)
        val, se = err_random_true(hs, truth, y, n_draws, rng, mode="auto")
        kwargs["err_random_true"], kwargs["err_random_se"] = val, se
        kwargs["excess_bias_true"] = excess_bias_true(hs, truth, n_draws, rng)[0]
    return RiskReport(errt, dof.df_fixed, dof.df_random, xi, estimators, **kwargs)
