"""Gradient-descent least squares with more features than observations.

Started from ``beta0`` with a step ``alpha`` below ``2 / lambda_max(X^T X)``,
gradient descent converges to ``beta_hat + V2 V2^T beta0``, where ``beta_hat``
is the minimum-norm solution and ``V2`` spans the null space of ``X``. When
``beta0 = F y`` for a matrix ``F`` that depends only on ``X``, the limit is a
linear procedure whose degrees of freedom and excess bias have closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, FitError
from .procedures import GDInterp, HatSystem, fit, min_norm_operator


@dataclass(frozen=True)
class FMatrix:
    """Initialization map ``beta0 = F @ y`` with ``F`` of shape ``(p, n)``.

    ``provenance`` is ``"zero"`` or ``"simple_regression"``; for the latter
    ``subset`` (0-based) and ``theta`` record the scheme.
    """

    F: NDArray[np.float64] = field(compare=False)
    provenance: Literal["zero", "simple_regression"] = "zero"
    subset: tuple[int, ...] = ()
    theta: tuple[float, ...] = ()

    @classmethod
    def zero(cls, p: int, n: int) -> "FMatrix":
        return cls(np.zeros((p, n)))

    def spec(self) -> GDInterp:
        return GDInterp(self.F, self.provenance)


@dataclass(frozen=True)
class GDConfig:
    """Step size, stopping rule and starting point for :func:`gd_run`.

    ``beta0`` is a coefficient vector, an :class:`FMatrix` (then
    ``beta0 = F @ y``) or ``None`` for the zero vector.
    """

    alpha: float
    max_iter: int = 10_000
    tol: float = 1e-12
    beta0: NDArray[np.float64] | FMatrix | None = None

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ConfigError(f"step size alpha must be positive, got {self.alpha}")
        if self.max_iter < 0:
            raise ConfigError("max_iter must be nonnegative")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")

    def start(self, y: NDArray[np.float64], p: int) -> NDArray[np.float64]:
        if self.beta0 is None:
            return np.zeros(p)
        if isinstance(self.beta0, FMatrix):
            return self.beta0.F @ y
        b = np.asarray(self.beta0, dtype=float)
        if b.shape != (p,):
            raise ConfigError(f"beta0 must have length {p}")
        return b.copy()


def _svd(X: NDArray[np.float64]) -> tuple[NDArray, NDArray, NDArray]:
    U, s, Vt = np.linalg.svd(np.asarray(X, dtype=float), full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise FitError("X is the zero matrix")
    return U, s, Vt


def _row_space(X: NDArray[np.float64]) -> tuple[NDArray, NDArray, NDArray]:
    n, p = X.shape
    U, s, Vt = _svd(X)
    tol = max(n, p) * np.finfo(float).eps * s[0]
    if s.size < n or s[-1] <= tol:
        raise FitError(f"X (n={n}, p={p}) is not of full row rank")
    return U, s, Vt


def max_step(X: NDArray[np.float64]) -> float:
    """Largest admissible step ``2 / lambda_max(X^T X)``."""
    _, s, _ = _svd(X)
    return 2.0 / s[0] ** 2


def gd_run(
    X: NDArray[np.float64],
    y: NDArray[np.float64],
    cfg: GDConfig,
    history: list[float] | None = None,
) -> tuple[NDArray[np.float64], int, bool]:
    """Iterate ``beta <- beta + alpha X^T (y - X beta)``.

    Stops when ``||beta_k - beta_{k-1}|| <= tol`` (converged) or after
    ``max_iter`` steps. Iterates that overflow stop the run as not converged.
    When ``history`` is a list, the residual norm ``||y - X beta_k||`` is
    appended after every step.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = cfg.start(y, X.shape[1])
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, cfg.max_iter + 1):
            resid = y - X @ beta
            step = cfg.alpha * (X.T @ resid)
            beta = beta + step
            if history is not None:
                history.append(float(np.linalg.norm(y - X @ beta)))
            size = float(np.linalg.norm(step))
            if not np.isfinite(size):
                return beta, k, False
            if size <= cfg.tol:
                return beta, k, True
    return beta, cfg.max_iter, False


def gd_iterate_closed_form(
    X: NDArray[np.float64], y: NDArray[np.float64], beta0: NDArray[np.float64], alpha: float, k: int
) -> NDArray[np.float64]:
    """``E^k beta0 + (I - E^k) beta_hat`` with ``E = I - alpha X^T X``.

    Evaluated through the SVD, so ``beta_hat`` is the minimum-norm solution.
    """
    X = np.asarray(X, dtype=float)
    U, s, Vt = _svd(X)
    keep = s > max(X.shape) * np.finfo(float).eps * s[0]
    U, s, Vt = U[:, keep], s[keep], Vt[keep]
    beta_hat = Vt.T @ ((U.T @ y) / s)
    shrink = (1.0 - alpha * s**2) ** k
    diff = np.asarray(beta0, dtype=float) - beta_hat
    return beta_hat + diff - Vt.T @ ((1.0 - shrink) * (Vt @ diff))


def gd_limit(X: NDArray[np.float64], y: NDArray[np.float64], beta0: NDArray[np.float64] | None = None) -> NDArray[np.float64]:
    """Limit ``beta_hat + (I - V1 V1^T) beta0`` of gradient descent for a full-row-rank ``X``."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if p <= n:
        raise ConfigError(f"gd_limit needs p > n, got p = {p}, n = {n}")
    U, s, Vt = _row_space(X)
    beta_hat = Vt.T @ ((U.T @ np.asarray(y, dtype=float)) / s)
    if beta0 is None:
        return beta_hat
    b0 = np.asarray(beta0, dtype=float)
    if b0.shape != (p,):
        raise ConfigError(f"beta0 must have length {p}")
    return beta_hat + b0 - Vt.T @ (Vt @ b0)


def init_simple_regression(
    X: NDArray[np.float64],
    y: NDArray[np.float64],
    S: Sequence[int],
    theta: float | Sequence[float] = 1.0,
) -> tuple[NDArray[np.float64], FMatrix]:
    """Shrunken per-column simple-regression start.

    ``beta0_j = theta_j x_j^T y / x_j^T x_j`` for ``j`` in ``S`` (0-based) and
    zero elsewhere, returned together with ``F = P X^T`` where
    ``P = diag(theta_j / ||x_j||^2)`` on ``S``.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    S_arr = np.asarray(list(S), dtype=np.intp)
    if np.unique(S_arr).size != S_arr.size or (S_arr.size and (S_arr.min() < 0 or S_arr.max() >= p)):
        raise ConfigError(f"S must list distinct indices in 0..{p - 1}")
    if S_arr.size > n:
        raise ConfigError(f"|S| = {S_arr.size} exceeds n = {n}")
    th = np.broadcast_to(np.asarray(theta, dtype=float), S_arr.shape).copy()
    if np.any((th < 0) | (th > 1)):
        raise ConfigError("theta must lie in [0, 1]")
    norms2 = np.einsum("ij,ij->j", X[:, S_arr], X[:, S_arr])
    if np.any(norms2 == 0):
        raise FitError("a column in S has zero norm")
    F = np.zeros((p, n))
    F[S_arr] = (th / norms2)[:, None] * X[:, S_arr].T
    fm = FMatrix(F, "simple_regression", tuple(S_arr.tolist()), tuple(th.tolist()))
    return F @ np.asarray(y, dtype=float), fm


def _F_array(F: FMatrix | NDArray[np.float64], X: NDArray[np.float64]) -> NDArray[np.float64]:
    arr = F.F if isinstance(F, FMatrix) else np.asarray(F, dtype=float)
    if arr.shape != (X.shape[1], X.shape[0]):
        raise ConfigError(f"F must have shape {(X.shape[1], X.shape[0])}, got {arr.shape}")
    return arr


def interpolant_operator(X: NDArray[np.float64], F: FMatrix | NDArray[np.float64]) -> NDArray[np.float64]:
    """``M = (X X^T)^{-1} X + F^T V2 V2^T`` so that ``h(x*) = M @ x*``."""
    X = np.asarray(X, dtype=float)
    Fa = _F_array(F, X)
    _, _, Vt = _row_space(X)
    _, M = min_norm_operator(X)
    FV = Fa.T - (Fa.T @ Vt.T) @ Vt
    return M + FV


def interpolant_hat_vector(
    X: NDArray[np.float64], F: FMatrix | NDArray[np.float64], xstar: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Hat vector of the gradient-descent limit at ``x*`` (or rows of a matrix of points)."""
    X = np.asarray(X, dtype=float)
    xs = np.asarray(xstar, dtype=float)
    if xs.shape[-1] != X.shape[1]:
        raise ConfigError(f"x* must have {X.shape[1]} entries")
    M = interpolant_operator(X, F)
    return xs @ M.T


def interpolant_system(X: NDArray[np.float64], F: FMatrix | NDArray[np.float64]) -> HatSystem:
    """:class:`HatSystem` of the gradient-descent limit, for the generic df and risk paths."""
    X = np.asarray(X, dtype=float)
    Fa = _F_array(F, X)
    prov = F.provenance if isinstance(F, FMatrix) else "explicit"
    return fit(GDInterp(Fa, prov), X)


def interpolant_df(
    X: NDArray[np.float64], F: FMatrix | NDArray[np.float64], Sigma: NDArray[np.float64] | None = None
) -> float:
    """``n/2 + (n/2) tr(M^T M Sigma)`` for the limit operator ``M`` (``Sigma`` defaults to ``I``)."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    M = interpolant_operator(X, F)
    if Sigma is None:
        quad = float(np.sum(M * M))
    else:
        Sig = np.asarray(Sigma, dtype=float)
        if Sig.shape != (p, p):
            raise ConfigError(f"Sigma must be {p} x {p}")
        quad = float(np.sum((M @ Sig) * M))
    return 0.5 * n + 0.5 * n * quad


@dataclass(frozen=True)
class ExcessBiasParts:
    """Excess bias of the gradient-descent limit under a linear truth with ``Sigma = I``.

    ``total = minnorm_part - norm_V2beta + norm_V2z`` where the last two are
    the squared norms ``||V2 V2^T beta||^2`` and ``||V2 V2^T z||^2`` with
    ``z = beta - F X beta``.
    """

    total: float
    minnorm_part: float
    norm_V2beta: float
    norm_V2z: float

    def __iter__(self):
        return iter((self.total, self.minnorm_part, self.norm_V2beta, self.norm_V2z))


def interpolant_excess_bias(
    X: NDArray[np.float64], beta_true: NDArray[np.float64], F: FMatrix | NDArray[np.float64]
) -> ExcessBiasParts:
    """Decompose the excess bias of the gradient-descent limit.

    Both interpolants fit ``mu = X beta`` exactly in sample, so each excess
    bias equals its population squared bias. For the minimum-norm solution
    that is ``||V2 V2^T beta||^2``; the initialization replaces it by
    ``||V2 V2^T z||^2``.
    """
    X = np.asarray(X, dtype=float)
    Fa = _F_array(F, X)
    beta = np.asarray(beta_true, dtype=float)
    if beta.shape != (X.shape[1],):
        raise ConfigError(f"beta_true must have length {X.shape[1]}")
    _, _, Vt = _row_space(X)

    def null_part(v: NDArray) -> NDArray:
        return v - Vt.T @ (Vt @ v)

    z = beta - Fa @ (X @ beta)
    minnorm = float(np.sum(null_part(beta) ** 2))
    v2beta = minnorm
    v2z = float(np.sum(null_part(z) ** 2))
    return ExcessBiasParts(minnorm - v2beta + v2z, minnorm, v2beta, v2z)


def expected_init_distance(beta: NDArray[np.float64], S: Sequence[int], n: int) -> float:
    """Expected squared distance of the noiseless simple-regression start ``F X beta`` from ``beta``.

    ``((n+1)/n) ||beta||^2 ((n+q)/(n+1) - sum_{j in S} beta_j^2 / ||beta||^2)``
    with ``q = |S|``. Derived for standard Gaussian features with columns
    scaled to ``||x_j|| = sqrt(n)``, so on raw data it is an approximation.
    """
    beta = np.asarray(beta, dtype=float)
    S_arr = np.asarray(list(S), dtype=np.intp)
    if np.unique(S_arr).size != S_arr.size:
        raise ConfigError("S must not repeat indices")
    if n < 1:
        raise ConfigError("n must be positive")
    total = float(beta @ beta)
    q = S_arr.size
    captured = float(np.sum(beta[S_arr] ** 2))
    return total * (n + q) / n - (n + 1) / n * captured


__all__ = [
    "ExcessBiasParts",
    "FMatrix",
    "GDConfig",
    "expected_init_distance",
    "gd_iterate_closed_form",
    "gd_limit",
    "gd_run",
    "init_simple_regression",
    "interpolant_df",
    "interpolant_excess_bias",
    "interpolant_hat_vector",
    "interpolant_operator",
    "interpolant_system",
    "max_step",
]
