"""Fixed-X and Random-X model degrees of freedom.

For a linear procedure with hat matrix ``H`` and hat vector ``h(x*)`` the
Fixed-X degrees of freedom are ``tr(H)``. The Random-X (predictive) degrees of
freedom add half the gap between the out-of-sample and in-sample variance
factors::

    df_R = tr(H) + (n/2) * (E||h(x*)||^2 - tr(H^T H)/n)

For interpolators ``H = I`` and this reduces to ``n/2 + (n/2) E||h(x*)||^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from numpy.typing import NDArray
from scipy import integrate
from scipy.linalg import solve

from .core_model import GaussianSampler, as_index_array, rng_stream
from .errors import CollinearityError, ConfigError, ThresholdError
from .procedures import (
    GDInterp,
    HatSystem,
    MinNorm,
    OLS,
    Ridge,
    fit,
    min_norm_operator,
    ols_operator,
    predict,
    resolve_kernel,
)

Sampler = Callable[[int, np.random.Generator], NDArray[np.float64]]

DEFAULT_DRAWS = 10_000


@dataclass(frozen=True)
class DofReport:
    """Degrees-of-freedom summary for one fitted procedure.

    ``se`` is the Monte Carlo standard error of ``df_random`` (``None`` for
    exact methods). ``flagged`` is set when ``se`` exceeds a caller tolerance.
    """

    df_fixed: float
    df_random: float
    e_h_norm2: float
    trace_HtH_over_n: float
    method: str
    n_draws: int | None = None
    se: float | None = None
    flagged: bool = False

    def as_dict(self) -> dict[str, float | str | int | bool | None]:
        return {
            "df_fixed": self.df_fixed,
            "df_random": self.df_random,
            "e_h_norm2": self.e_h_norm2,
            "trace_HtH_over_n": self.trace_HtH_over_n,
            "method": self.method,
            "n_draws": self.n_draws,
            "se": self.se,
            "flagged": self.flagged,
        }


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def gaussian_sampler(Sigma: NDArray[np.float64]) -> Sampler:
    """Sampler for ``x* ~ N(0, Sigma)``."""
    return GaussianSampler(Sigma)


def uniform_sampler(a: float = 0.0, b: float = 1.0) -> Sampler:
    """Sampler for scalar ``x* ~ Uniform(a, b)``."""

    def draw(m: int, rng: np.random.Generator) -> NDArray[np.float64]:
        return rng.uniform(a, b, size=m)

    return draw


def empirical_sampler(X: NDArray[np.float64]) -> Sampler:
    """Sampler drawing training rows uniformly with replacement."""
    X = np.asarray(X, dtype=float)

    def draw(m: int, rng: np.random.Generator) -> NDArray[np.float64]:
        return X[rng.integers(0, X.shape[0], size=m)]

    return draw


# ---------------------------------------------------------------------------
# Core quantities
# ---------------------------------------------------------------------------


def df_fixed(hs: HatSystem) -> float:
    """Fixed-X degrees of freedom ``tr(H)``."""
    return float(np.trace(hs.H))


def trace_hth(hs: HatSystem) -> float:
    """``tr(H^T H)``, the squared Frobenius norm of ``H``."""
    return float(np.sum(hs.H**2))


def _report(hs: HatSystem, e_h: float, method: str, **extra) -> DofReport:
    n = hs.n
    dff = df_fixed(hs)
    thn = trace_hth(hs) / n
    return DofReport(dff, dff + 0.5 * n * (e_h - thn), e_h, thn, method, **extra)


def expected_hat_norm2(hs: HatSystem, Sigma: NDArray[np.float64]) -> float:
    """Exact ``E||h(x*)||^2 = tr(M Sigma M^T)`` for hat vectors ``h = M x*`` and ``x*`` with second moment ``Sigma``."""
    if hs.operator is None:
        raise ConfigError("the analytic path needs a procedure whose hat vector is linear in x*")
    M = hs.operator
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.shape != (M.shape[1], M.shape[1]):
        raise ConfigError(f"Sigma must be {M.shape[1]}x{M.shape[1]}, got {Sigma.shape}")
    return float(np.sum((M @ Sigma) * M))


def mc_hat_norm2(
    hs: HatSystem,
    sampler: Sampler,
    n_draws: int = DEFAULT_DRAWS,
    rng: np.random.Generator | None = None,
    chunk: int = 5000,
) -> tuple[float, float]:
    """Monte Carlo ``E||h(x*)||^2`` and its standard error.

    Draws are taken in fixed-size chunks from one stream and reduced with
    exact summation, so the result depends only on the stream.
    """
    if n_draws < 2:
        raise ConfigError("need at least two Monte Carlo draws")
    rng = rng_stream(0) if rng is None else rng
    sums, sq_sums = [], []
    remaining = n_draws
    while remaining > 0:
        m = min(chunk, remaining)
        v = hs.hat_norms2(sampler(m, rng))
        sums.append(math.fsum(v))
        sq_sums.append(math.fsum(v * v))
        remaining -= m
    mean = math.fsum(sums) / n_draws
    var = max(math.fsum(sq_sums) / n_draws - mean * mean, 0.0) * n_draws / (n_draws - 1)
    return mean, math.sqrt(var / n_draws)


def df_random(
    hs: HatSystem,
    Sigma: NDArray[np.float64] | None = None,
    sampler: Sampler | None = None,
    mode: Literal["auto", "analytic", "monte_carlo"] = "auto",
    n_draws: int = DEFAULT_DRAWS,
    rng: np.random.Generator | None = None,
    se_tol: float | None = None,
) -> DofReport:
    """Random-X degrees of freedom of a fitted procedure.

    Parameters
    ----------
    hs : HatSystem
    Sigma : ndarray, optional
        Second-moment matrix of ``x*``. Enables the exact path for procedures
        whose hat vector is linear in ``x*`` (least squares, ridge, gradient
        descent limits).
    sampler : callable, optional
        ``sampler(m, rng)`` returns ``m`` test points; used by the Monte Carlo
        path. Defaults to ``N(0, Sigma)`` when only ``Sigma`` is given.
    mode : {"auto", "analytic", "monte_carlo"}
        ``auto`` picks the exact path whenever it is available.
    n_draws : int
        Monte Carlo sample size.
    rng : numpy.random.Generator, optional
    se_tol : float, optional
        Flag (not raise) when the Monte Carlo standard error of ``df_random``
        exceeds this value.
    """
    analytic_ok = hs.operator is not None and Sigma is not None
    if mode == "analytic" or (mode == "auto" and analytic_ok):
        if Sigma is None:
            raise ConfigError("analytic df_random needs Sigma")
        e_h = expected_hat_norm2(hs, Sigma)
        if isinstance(hs.spec, (OLS, MinNorm)):
            method = "exact_ls"
        elif isinstance(hs.spec, Ridge):
            method = "exact_ridge"
        else:
            method = "exact_linear"
        return _report(hs, e_h, method)
    if mode not in ("auto", "monte_carlo"):
        raise ConfigError(f"unknown mode {mode!r}")
    if sampler is None:
        if Sigma is None:
            raise ConfigError("df_random needs Sigma or an x* sampler")
        sampler = gaussian_sampler(Sigma)
    if n_draws < 1000:
        raise ConfigError(f"Monte Carlo df_random needs at least 1000 draws, got {n_draws}")
    e_h, se_h = mc_hat_norm2(hs, sampler, n_draws, rng)
    se = 0.5 * hs.n * se_h
    flagged = se_tol is not None and se > se_tol
    return _report(hs, e_h, "monte_carlo", n_draws=n_draws, se=se, flagged=flagged)


def df_random_empirical(hs: HatSystem) -> DofReport:
    """df_R with ``x*`` drawn from the training rows; equals ``df_fixed`` when ``h(x_i)`` is row ``i`` of ``H``."""
    rows = hs.hat_vectors(hs.X if hs.X.shape[1] > 1 else hs.X[:, 0])
    return _report(hs, float(np.sum(rows**2)) / hs.n, "exact_empirical")


# ---------------------------------------------------------------------------
# Closed forms for least squares and ridge
# ---------------------------------------------------------------------------


def df_random_ls_closed(X_S: NDArray[np.float64], Sigma_S: NDArray[np.float64]) -> float:
    """Closed-form df_R of least squares on the columns ``X_S``.

    ``p/2 + (n/2) tr[(X_S^T X_S)^{-1} Sigma_S]`` when ``p <= n`` and
    ``n/2 + (n/2) tr[X_S^T (X_S X_S^T)^{-2} X_S Sigma_S]`` when ``p > n``.

    Raises
    ------
    FitError
        ``X_S`` lacks full column rank (``p <= n``) or full row rank (``p > n``).
    """
    X_S = np.atleast_2d(np.asarray(X_S, dtype=float))
    n, p = X_S.shape
    Sigma_S = np.asarray(Sigma_S, dtype=float).reshape(p, p)
    if p == 0:
        return 0.0
    if p <= n:
        _, M = ols_operator(X_S)
        return 0.5 * p + 0.5 * n * float(np.sum((M @ Sigma_S) * M))
    _, M = min_norm_operator(X_S)
    return 0.5 * n + 0.5 * n * float(np.sum((M @ Sigma_S) * M))


def subset_dof(
    X: NDArray[np.float64],
    subset: NDArray | list[int] | None,
    Sigma: NDArray[np.float64],
) -> DofReport:
    """Exact :class:`DofReport` of least squares on a column subset.

    The subset size must differ from ``n``. At ``p = n`` the OLS and min-norm
    regimes meet and the expected df_R over Gaussian designs is infinite, so
    this entry point raises :class:`ThresholdError`; call
    :func:`df_random_ls_closed` directly for a specific square design.
    """
    X = np.asarray(X, dtype=float)
    idx = as_index_array(subset, X.shape[1])
    n = X.shape[0]
    if idx.size == n:
        raise ThresholdError(
            f"subset size p = {idx.size} equals n = {n}: interpolation threshold, "
            "df_R is unbounded in expectation there"
        )
    spec = OLS(tuple(idx)) if idx.size < n else MinNorm(tuple(idx))
    return df_random(fit(spec, X), Sigma=np.asarray(Sigma, dtype=float), mode="analytic")


def df_random_ridge(X: NDArray[np.float64], Sigma: NDArray[np.float64], lam: float) -> float:
    """Spectral closed form of ridge df_R.

    With ``X^T X = U diag(w) U^T`` and ``v_jj = (U^T Sigma U)_jj``::

        df_R = sum_j (w_j^2 + (2 lam + n v_jj) w_j) / (2 (w_j + lam)^2)

    Zero eigenvalues contribute nothing, so only the thin SVD of ``X`` is used.
    """
    if not lam > 0:
        raise ConfigError(f"ridge needs lambda > 0, got {lam}")
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    _, s, Vt = np.linalg.svd(X, full_matrices=False)
    w = s**2
    v = np.einsum("ji,ik,jk->j", Vt, np.asarray(Sigma, dtype=float), Vt)
    return float(np.sum((w**2 + (2.0 * lam + n * v) * w) / (2.0 * (w + lam) ** 2)))


def df_fixed_ridge(X: NDArray[np.float64], lam: float) -> float:
    """``sum_j psi_j^2 / (psi_j^2 + lam)`` over the singular values of ``X``."""
    s = np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)
    return float(np.sum(s**2 / (s**2 + lam)))


def df_increment(
    X_S1: NDArray[np.float64],
    x_new: NDArray[np.float64],
    Sigma_S1: NDArray[np.float64],
    Sigma_cross: NDArray[np.float64],
    sigma_new2: float,
    tol: float = 1e-12,
) -> float:
    """Increase in least-squares df_R when one column is added to ``X_S1``.

    Parameters
    ----------
    X_S1 : ndarray (n, p1)
        Current design, full column rank, ``p1 < n``.
    x_new : ndarray (n,)
        The added column.
    Sigma_S1 : ndarray (p1, p1)
        Covariance of the current features.
    Sigma_cross : ndarray (p1,)
        Covariances between the current features and the new one.
    sigma_new2 : float
        Variance of the new feature.

    Returns
    -------
    float
        ``1/2 + (n/2)(zeta^T C zeta + 1)/(zeta^T (I - H) zeta)`` where
        ``zeta`` is the new column with its best linear prediction from the
        current features removed and scaled by the conditional standard
        deviation, ``H`` is the current hat matrix and
        ``C = X (X^T X)^{-1} Sigma_S1 (X^T X)^{-1} X^T``.

    Raises
    ------
    CollinearityError
        The new column is (numerically) in the span of ``X_S1``, or its
        conditional variance given the current features is not positive.
    """
    X_S1 = np.asarray(X_S1, dtype=float).reshape(len(x_new), -1)
    x_new = np.asarray(x_new, dtype=float)
    n, p1 = X_S1.shape
    if p1 + 1 > n:
        raise ThresholdError(f"the enlarged subset has {p1 + 1} > n = {n} columns")
    if p1 == 0:
        cond_var = float(sigma_new2)
        residual = x_new
        H = np.zeros((n, n))
        C = np.zeros((n, n))
    else:
        Sigma_S1 = np.asarray(Sigma_S1, dtype=float).reshape(p1, p1)
        Sigma_cross = np.asarray(Sigma_cross, dtype=float).ravel()
        coef = solve(Sigma_S1, Sigma_cross, assume_a="pos")
        cond_var = float(sigma_new2 - Sigma_cross @ coef)
        residual = x_new - X_S1 @ coef
        H, M = ols_operator(X_S1)
        C = M @ Sigma_S1 @ M.T
    if not cond_var > 0:
        raise CollinearityError("the new feature has zero variance given the current ones")
    zeta = residual / math.sqrt(cond_var)
    denom = float(zeta @ zeta - zeta @ H @ zeta)
    if denom <= tol * max(1.0, float(zeta @ zeta)):
        raise CollinearityError("the new column lies in the span of the current design")
    return 0.5 + 0.5 * n * (float(zeta @ C @ zeta) + 1.0) / denom


def linear_combination_df(
    X: NDArray[np.float64], U: NDArray[np.float64], Sigma: NDArray[np.float64]
) -> float:
    """df_R of least squares on the derived features ``Z = X U`` with covariance ``U^T Sigma U``."""
    U = np.asarray(U, dtype=float)
    return df_random_ls_closed(np.asarray(X) @ U, U.T @ np.asarray(Sigma) @ U)


def principal_component_df(X: NDArray[np.float64], Sigma: NDArray[np.float64], k: int) -> float:
    """df_R of regression on the first ``k`` principal components of ``X``."""
    _, _, Vt = np.linalg.svd(np.asarray(X, dtype=float), full_matrices=False)
    return linear_combination_df(X, Vt[:k].T, Sigma)


# ---------------------------------------------------------------------------
# Approximations and limits
# ---------------------------------------------------------------------------


def df_approx(
    n: int, p: int, family: Literal["gaussian_exact_expectation", "asymptotic_equicorrelated"]
) -> float:
    """Reference values for least-squares df_R as a function of ``(n, p)``.

    ``gaussian_exact_expectation`` is the mean over Gaussian designs with
    isotropic features: ``(p/2)(1 + n/(n-p-1))`` when ``p < n - 1`` and
    ``n(p-1)/(2(p-n-1))`` when ``p > n + 1``. ``asymptotic_equicorrelated``
    is ``(min(p,n)/2)(1 + n/|n-p|)``, valid for every equicorrelation level
    but only asymptotically accurate.
    """
    if p == n:
        raise ThresholdError(f"p = n = {n}: df_R approximation is infinite at the threshold")
    if family == "asymptotic_equicorrelated":
        return 0.5 * min(p, n) * (1.0 + n / abs(n - p))
    if family == "gaussian_exact_expectation":
        if p < n - 1:
            return 0.5 * p * (1.0 + n / (n - p - 1))
        if p > n + 1:
            return n * (p - 1) / (2.0 * (p - n - 1))
        raise ThresholdError(f"Gaussian expectation needs p < n-1 or p > n+1, got n = {n}, p = {p}")
    raise ConfigError(f"unknown family {family!r}")


def df_increment_expectation(n: int, p: int) -> float:
    """Mean df_R increment from ``p`` to ``p + 1`` isotropic Gaussian features."""
    if not p < n - 2:
        raise ThresholdError(f"needs p < n - 2, got n = {n}, p = {p}")
    return 0.5 + n * (n - 1) / (2.0 * (n - p - 1) * (n - p - 2))


def weight_scheme_constant(K) -> float:
    """``C_K = int_0^1 [K(z)^2 + (1 - K(z))^2] dz`` by adaptive quadrature."""
    Kf = resolve_kernel(K)
    grid = np.asarray(Kf(np.linspace(0.0, 1.0, 1001)), dtype=float)
    if grid.min() < -1e-12 or grid.max() > 1 + 1e-12:
        raise ConfigError("weight function must take values in [0, 1]")

    def integrand(z: float) -> float:
        k = float(Kf(np.asarray(z)))
        return k * k + (1.0 - k) ** 2

    value, _ = integrate.quad(integrand, 0.0, 1.0, points=[0.5], epsabs=1e-13, epsrel=1e-12)
    return value


def df_weight_limit(K) -> float:
    """Large-``n`` limit of ``df_R / n`` for a weighted interpolator: ``(C_K + 1)/2``."""
    return 0.5 * (weight_scheme_constant(K) + 1.0)


def df_local_constant_closed(x_points: NDArray, omega: float, a: float, b: float) -> float:
    """Closed-form df_R of the local constant smoother for ``x* ~ Uniform(a, b)``.

    ``n + n(x_n - x_1)/(4(b - a)) - n(n - 1) omega/(2(b - a))``, valid for
    bandwidths between half the largest and the smallest spacing.
    """
    x = np.sort(np.asarray(x_points, dtype=float).ravel())
    n = x.size
    gaps = np.diff(x)
    lo, hi = 0.5 * gaps.max(), gaps.min()
    if not lo - 1e-12 <= omega <= hi + 1e-12:
        raise ConfigError(
            f"omega = {omega} is outside the interpolation band [{lo}, {hi}]; use the Monte Carlo path"
        )
    width = b - a
    return n + n * (x[-1] - x[0]) / (4.0 * width) - n * (n - 1) * omega / (2.0 * width)


# ---------------------------------------------------------------------------
# Representation identities
# ---------------------------------------------------------------------------


def df_gap_representation_check(
    hs: HatSystem,
    xstar: NDArray | None = None,
    Sigma: NDArray | None = None,
    sampler: Sampler | None = None,
    sigma_eps2: float = 1.0,
    n_draws: int = 2000,
    rng: np.random.Generator | None = None,
) -> tuple[float, float, float]:
    """Compute ``df_R - df_F`` three independent ways on a common set of test points.

    Returns
    -------
    lhs : float
        Direct: ``(n/2)(mean ||h(x*)||^2 - tr(H^T H)/n)``.
    rhs_cov : float
        From squared covariances ``Cov(y_i, mu_hat*)`` and ``Cov(y_i, mu_hat_j)``
        scaled by ``sigma_eps2^2``.
    rhs_gdf : float
        From squared sensitivities of the expected predictions to each mean
        ``mu_i``, obtained by predicting from unit response vectors.
    """
    if xstar is None:
        if sampler is None:
            if Sigma is None:
                raise ConfigError("need test points, Sigma or a sampler")
            sampler = gaussian_sampler(Sigma)
        xstar = sampler(n_draws, rng_stream(0) if rng is None else rng)
    xstar = np.asarray(xstar, dtype=float)
    n = hs.n
    s2 = sigma_eps2 if sigma_eps2 > 0 else 1.0

    lhs = 0.5 * n * (float(np.mean(hs.hat_norms2(xstar))) - trace_hth(hs) / n)

    cov_star = s2 * hs.hat_vectors(xstar)  # Cov(y_i, mu_hat*) per draw
    cov_in = s2 * hs.H  # Cov(y_i, mu_hat_j) at entry (j, i)
    rhs_cov = 0.5 * n * float(
        np.sum(np.mean(cov_star**2, axis=0) / s2**2 - np.sum(cov_in**2, axis=0) / (n * s2**2))
    )

    train = hs.X if hs.X.shape[1] > 1 else hs.X[:, 0]
    total = 0.0
    for i in range(n):
        unit = np.zeros(n)
        unit[i] = 1.0
        sens_star = np.asarray(predict(hs, unit, xstar))
        sens_in = np.asarray(predict(hs, unit, train))
        total += float(np.mean(sens_star**2)) - float(np.sum(sens_in**2)) / n
    rhs_gdf = 0.5 * n * total
    return lhs, rhs_cov, rhs_gdf
