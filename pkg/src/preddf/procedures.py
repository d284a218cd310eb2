"""Hat matrices and hat vectors for linear regression procedures.

Every procedure here predicts a linear function of the response,
``mu_hat(x*) = h(x*) @ y``. Fitting returns a :class:`HatSystem` holding the
in-sample hat matrix ``H`` and a deterministic map from test points to hat
vectors ``h(x*)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence, Union

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import qr, solve_triangular

from .core_model import as_index_array
from .errors import ConditioningError, ConfigError, FitError

KernelName = Literal["constant", "linear", "quadratic", "cosine"]

# dense hat-vector blocks are built in chunks of at most this many entries
_CHUNK_ENTRIES = 2_000_000


# ---------------------------------------------------------------------------
# Procedure specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OLS:
    """Least squares on the columns ``subset`` (all columns when ``None``); needs ``|S| <= n``."""

    subset: tuple[int, ...] | None = None


@dataclass(frozen=True)
class MinNorm:
    """Minimum-norm least squares on ``subset``; needs ``|S| > n`` and full row rank."""

    subset: tuple[int, ...] | None = None


@dataclass(frozen=True)
class Ridge:
    """Ridge regression with hat matrix ``X (X^T X + lam I)^{-1} X^T``."""

    lam: float
    subset: tuple[int, ...] | None = None


@dataclass(frozen=True)
class WeightInterp:
    """One-dimensional interpolator mixing the two bracketing responses with weight ``K(z)``."""

    kernel: KernelName | Callable[[NDArray], NDArray] = "linear"
    a: float = 0.0
    b: float = 1.0


@dataclass(frozen=True)
class LocalConstant:
    """One-dimensional local average over the closed window ``|x* - x_i| <= omega``."""

    omega: float
    a: float = 0.0
    b: float = 1.0


@dataclass(frozen=True)
class Spline:
    """Interpolating polynomial spline of degree ``2s - 1`` on ``[0, 1]``."""

    s: int


@dataclass(frozen=True)
class GDInterp:
    """Limit of gradient descent started at ``beta0 = F @ y`` (``F`` is ``p x n``)."""

    F: NDArray[np.float64] = field(compare=False)
    provenance: str = "zero"


ProcedureSpec = Union[OLS, MinNorm, Ridge, WeightInterp, LocalConstant, Spline, GDInterp]

ONE_DIMENSIONAL = (WeightInterp, LocalConstant, Spline)


def _subset_tuple(subset: Sequence[int] | None) -> tuple[int, ...] | None:
    return None if subset is None else tuple(int(i) for i in subset)


def ols(subset: Sequence[int] | None = None) -> OLS:
    return OLS(_subset_tuple(subset))


def min_norm(subset: Sequence[int] | None = None) -> MinNorm:
    return MinNorm(_subset_tuple(subset))


def subset_ls(subset: Sequence[int], n: int) -> OLS | MinNorm:
    """Least squares on ``subset``: OLS when ``|S| <= n``, min-norm otherwise."""
    return ols(subset) if len(subset) <= n else min_norm(subset)


# ---------------------------------------------------------------------------
# HatSystem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HatSystem:
    """Hat matrix and hat-vector map of a fitted linear procedure.

    Attributes
    ----------
    H : ndarray (n, n)
        In-sample hat matrix, ``mu_hat = H @ y``.
    spec : ProcedureSpec
    X : ndarray
        Training design, ``(n, d)``; one-dimensional procedures store ``(n, 1)``.
    operator : ndarray (n, d) or None
        For procedures whose hat vector is linear in the test point,
        ``h(x*) = operator @ x*``. ``None`` for the one-dimensional smoothers.
    interpolating : bool
        Whether ``H`` is the identity by construction.
    """

    H: NDArray[np.float64]
    spec: ProcedureSpec
    X: NDArray[np.float64]
    operator: NDArray[np.float64] | None
    interpolating: bool
    _rows: Callable[[NDArray[np.float64]], NDArray[np.float64]] = field(repr=False)
    _norms2: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = field(
        default=None, repr=False
    )

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def _as_points(self, xstar: NDArray | float) -> tuple[NDArray[np.float64], bool]:
        arr = np.asarray(xstar, dtype=float)
        d = self.X.shape[1]
        if d == 1 and arr.ndim <= 1:
            single = arr.ndim == 0
            return arr.reshape(-1, 1), single
        if arr.ndim == 1:
            if arr.shape[0] != d:
                raise ConfigError(f"test point has length {arr.shape[0]}, expected {d}")
            return arr[None, :], True
        if arr.ndim != 2 or arr.shape[1] != d:
            raise ConfigError(f"test points must have {d} columns, got shape {arr.shape}")
        return arr, False

    def hat_vector(self, xstar: NDArray | float) -> NDArray[np.float64]:
        """Hat vector ``h(x*)`` of length ``n`` for one test point."""
        pts, single = self._as_points(xstar)
        if not single:
            raise ConfigError("hat_vector takes one test point; use hat_vectors for a batch")
        return self._rows(pts)[0]

    def hat_vectors(self, xstar: NDArray) -> NDArray[np.float64]:
        """Hat vectors as rows, shape ``(m, n)``, for a batch of test points."""
        pts, _ = self._as_points(xstar)
        return self._rows(pts)

    def hat_norms2(self, xstar: NDArray) -> NDArray[np.float64]:
        """``||h(x*)||^2`` for a batch of test points, without storing all rows at once."""
        pts, _ = self._as_points(xstar)
        if self._norms2 is not None:
            return self._norms2(pts)
        if self.operator is not None:
            rows = pts @ self.operator.T
            return np.einsum("ij,ij->i", rows, rows)
        step = max(1, _CHUNK_ENTRIES // max(self.n, 1))
        out = np.empty(pts.shape[0])
        for start in range(0, pts.shape[0], step):
            rows = self._rows(pts[start : start + step])
            out[start : start + step] = np.einsum("ij,ij->i", rows, rows)
        return out


def predict(hs: HatSystem, y: NDArray[np.float64], xstar: NDArray | float) -> NDArray[np.float64] | float:
    """Prediction ``h(x*) @ y``; a float for one test point, an array for a batch."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != hs.n:
        raise ConfigError(f"y must have length {hs.n}, got shape {y.shape}")
    pts, single = hs._as_points(xstar)
    values = hs._rows(pts) @ y
    return float(values[0]) if single else values


# ---------------------------------------------------------------------------
# Least squares variants
# ---------------------------------------------------------------------------


def _rank_tol(R: NDArray[np.float64], shape: tuple[int, int]) -> float:
    # |R_00| from pivoted QR estimates the largest singular value
    return max(shape) * np.finfo(float).eps * abs(R[0, 0])


def _embed(M_S: NDArray[np.float64], idx: NDArray[np.intp], d: int) -> NDArray[np.float64]:
    M = np.zeros((M_S.shape[0], d))
    M[:, idx] = M_S
    return M


def _linear_system(
    spec: ProcedureSpec, X: NDArray, H: NDArray, M: NDArray, interpolating: bool
) -> HatSystem:
    return HatSystem(H, spec, X, M, interpolating, lambda pts: pts @ M.T)


def ols_operator(X_S: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return ``(H, M)`` for least squares on a full-column-rank ``X_S`` (``n x p``, ``p <= n``).

    ``M = X_S (X_S^T X_S)^{-1}`` so that ``h(x*) = M @ x*``. Uses QR with
    column pivoting; ``R`` diagonals below ``max(n,p) * eps * |R_00|`` count as
    rank deficiency.
    """
    n, p = X_S.shape
    if p == 0:
        return np.zeros((n, n)), np.zeros((n, 0))
    if p > n:
        raise FitError(f"ols needs |S| <= n, got |S| = {p} > n = {n}")
    Q, R, piv = qr(X_S, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.min() <= _rank_tol(R, X_S.shape):
        raise FitError(f"ols: X_S (n={n}, p={p}) is not of full column rank")
    M_perm = Q @ solve_triangular(R, np.eye(p), trans="T")
    M = np.empty_like(M_perm)
    M[:, piv] = M_perm
    return Q @ Q.T, M


def min_norm_operator(X_S: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return ``(H, M)`` for minimum-norm least squares on a full-row-rank ``X_S``.

    ``M = (X_S X_S^T)^{-1} X_S`` so that ``h(x*) = M @ x*``; ``H = M X_S^T``
    equals the identity up to rounding.
    """
    n, p = X_S.shape
    if p < n:
        raise FitError(f"min_norm needs |S| >= n, got |S| = {p} < n = {n}")
    Q, R, piv = qr(X_S.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.min() <= _rank_tol(R, X_S.shape):
        raise FitError(f"min_norm: X_S (n={n}, p={p}) is not of full row rank")
    M = np.empty((n, p))
    M[piv, :] = solve_triangular(R, Q.T)
    return M @ X_S.T, M


def _fit_ols(spec: OLS, X: NDArray[np.float64]) -> HatSystem:
    idx = as_index_array(spec.subset, X.shape[1])
    H, M_S = ols_operator(X[:, idx])
    return _linear_system(spec, X, H, _embed(M_S, idx, X.shape[1]), idx.size == X.shape[0])


def _fit_min_norm(spec: MinNorm, X: NDArray[np.float64]) -> HatSystem:
    idx = as_index_array(spec.subset, X.shape[1])
    if idx.size <= X.shape[0]:
        raise FitError(f"min_norm needs |S| > n, got |S| = {idx.size}, n = {X.shape[0]}")
    H, M_S = min_norm_operator(X[:, idx])
    return _linear_system(spec, X, H, _embed(M_S, idx, X.shape[1]), True)


def _fit_ridge(spec: Ridge, X: NDArray[np.float64]) -> HatSystem:
    if not spec.lam > 0:
        raise FitError(f"ridge needs lambda > 0, got {spec.lam}")
    idx = as_index_array(spec.subset, X.shape[1])
    U, s, Vt = np.linalg.svd(X[:, idx], full_matrices=False)
    H = (U * (s**2 / (s**2 + spec.lam))) @ U.T
    M_S = (U * (s / (s**2 + spec.lam))) @ Vt
    return _linear_system(spec, X, H, _embed(M_S, idx, X.shape[1]), False)


def null_space_projector(X: NDArray[np.float64]) -> NDArray[np.float64]:
    """``I - V1 V1^T``, the projector onto the null space of a full-row-rank ``X``."""
    _, s, Vt = np.linalg.svd(X, full_matrices=False)
    tol = max(X.shape) * np.finfo(float).eps * s[0]
    V1 = Vt[s > tol].T
    return np.eye(X.shape[1]) - V1 @ V1.T


def _fit_gd(spec: GDInterp, X: NDArray[np.float64]) -> HatSystem:
    n, p = X.shape
    F = np.asarray(spec.F, dtype=float)
    if F.shape != (p, n):
        raise ConfigError(f"F must have shape ({p}, {n}), got {F.shape}")
    if p <= n:
        raise FitError(f"gd_interp needs p > n, got p = {p}, n = {n}")
    H, M = min_norm_operator(X)
    M = M + F.T @ null_space_projector(X)
    return _linear_system(spec, X, M @ X.T, M, True)


# ---------------------------------------------------------------------------
# One-dimensional interpolators and smoothers
# ---------------------------------------------------------------------------

KERNELS: dict[str, Callable[[NDArray], NDArray]] = {
    "constant": lambda z: (z < 0.5).astype(float),
    "linear": lambda z: 1.0 - z,
    "quadratic": lambda z: 1.0 - z**2,
    "cosine": lambda z: np.cos(np.pi * z / 2.0),
}


def resolve_kernel(K: KernelName | Callable[[NDArray], NDArray]) -> Callable[[NDArray], NDArray]:
    if callable(K):
        return K
    try:
        return KERNELS[K]
    except KeyError:
        raise ConfigError(f"unknown weight kernel {K!r}; choose from {sorted(KERNELS)}") from None


def _check_points(x: NDArray, a: float, b: float) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise ConfigError("need at least two x-points")
    if np.any(np.diff(x) <= 0):
        raise ConfigError("x-points must be sorted and distinct")
    if x[0] < a or x[-1] > b:
        raise ConfigError(f"x-points must lie in [{a}, {b}]")
    return x


def _check_targets(xs: NDArray, a: float, b: float) -> NDArray[np.float64]:
    xs = np.asarray(xs, dtype=float).ravel()
    if xs.size and (xs.min() < a or xs.max() > b):
        raise ConfigError(f"test points must lie in [{a}, {b}]")
    return xs


def _weight_pairs(x: NDArray, K: Callable, xs: NDArray) -> tuple[NDArray, NDArray]:
    """Left index and weight on it; the right neighbor gets ``1 - weight``."""
    n = x.size
    cell = np.searchsorted(x, xs, side="right") - 1
    left = np.clip(cell, 0, n - 2)
    z = (xs - x[left]) / (x[left + 1] - x[left])
    w = np.asarray(K(z), dtype=float)
    w = np.where(cell < 0, 1.0, w)
    w = np.where(cell >= n - 1, 0.0, w)
    return left, w


def weight_hat_vector(
    K: KernelName | Callable[[NDArray], NDArray],
    x_points: NDArray,
    xstar: NDArray | float,
    a: float = 0.0,
    b: float = 1.0,
) -> NDArray[np.float64]:
    """Hat vector(s) of the weighted one-dimensional interpolator.

    ``e_1`` left of ``x_1``; ``K(z) e_i + (1 - K(z)) e_{i+1}`` on
    ``[x_i, x_{i+1})`` with ``z = (x* - x_i)/(x_{i+1} - x_i)``; ``e_n`` from
    ``x_n`` on. A scalar ``xstar`` gives a vector, an array gives rows.
    """
    x = _check_points(x_points, a, b)
    single = np.ndim(xstar) == 0
    xs = _check_targets(xstar, a, b)
    left, w = _weight_pairs(x, resolve_kernel(K), xs)
    rows = np.zeros((xs.size, x.size))
    r = np.arange(xs.size)
    rows[r, left] = w
    rows[r, left + 1] = 1.0 - w
    return rows[0] if single else rows


def _fit_weight(spec: WeightInterp, x: NDArray) -> HatSystem:
    x = _check_points(x, spec.a, spec.b)
    K = resolve_kernel(spec.kernel)
    vals = np.asarray(K(np.array([0.0, 1.0 - 1e-12])), dtype=float)
    if abs(vals[0] - 1.0) > 1e-9:
        raise ConfigError("weight kernel must satisfy K(0) = 1")

    def rows(pts: NDArray) -> NDArray:
        return weight_hat_vector(K, x, pts[:, 0], spec.a, spec.b)

    def norms2(pts: NDArray) -> NDArray:
        _, w = _weight_pairs(x, K, _check_targets(pts[:, 0], spec.a, spec.b))
        return w**2 + (1.0 - w) ** 2

    H = rows(x[:, None])
    return HatSystem(H, spec, x[:, None], None, True, rows, norms2)


def local_constant_hat_vector(
    x_points: NDArray,
    omega: float,
    xstar: NDArray | float,
    a: float = 0.0,
    b: float = 1.0,
) -> NDArray[np.float64]:
    """Hat vector(s) of the local constant smoother with bandwidth ``omega``.

    ``e_1`` on ``[a, x_1)`` and ``e_n`` on ``[x_n, b]``. In between, uniform
    weights over the training points with ``|x* - x_i| <= omega``.
    """
    x = _check_points(x_points, a, b)
    if not omega > 0:
        raise ConfigError(f"bandwidth must be positive, got {omega}")
    single = np.ndim(xstar) == 0
    xs = _check_targets(xstar, a, b)
    rows = np.zeros((xs.size, x.size))
    step = max(1, _CHUNK_ENTRIES // x.size)
    for start in range(0, xs.size, step):
        block = xs[start : start + step]
        inside = (np.abs(block[:, None] - x[None, :]) <= omega).astype(float)
        inside[block < x[0]] = np.eye(x.size)[0]
        inside[block >= x[-1]] = np.eye(x.size)[-1]
        counts = inside.sum(axis=1)
        if np.any(counts == 0):
            bad = float(block[np.argmax(counts == 0)])
            raise FitError(f"local_constant: empty neighborhood at x* = {bad} with omega = {omega}")
        rows[start : start + step] = inside / counts[:, None]
    return rows[0] if single else rows


def _fit_local_constant(spec: LocalConstant, x: NDArray) -> HatSystem:
    x = _check_points(x, spec.a, spec.b)
    gaps = np.diff(x)
    if spec.omega < 0.5 * gaps.max():
        raise FitError(
            f"local_constant: omega = {spec.omega} is below half the largest spacing "
            f"{0.5 * gaps.max()}, so some test points have no neighbor"
        )

    def rows(pts: NDArray) -> NDArray:
        return local_constant_hat_vector(x, spec.omega, pts[:, 0], spec.a, spec.b)

    H = rows(x[:, None])
    interpolating = bool(spec.omega < gaps.min())
    return HatSystem(H, spec, x[:, None], None, interpolating, rows)


def kernel_R(u: NDArray | float, v: NDArray | float, s: int) -> NDArray[np.float64] | float:
    """Reproducing kernel ``R(u, v) = int_0^1 (u-z)_+^{s-1} (v-z)_+^{s-1} dz / ((s-1)!)^2``.

    Substituting ``t = min(u, v) - z`` turns the integrand into
    ``t^{s-1} (t + |u - v|)^{s-1}``, whose binomial expansion integrates
    exactly. All terms are nonnegative, so the sum has no cancellation.
    """
    if s < 1:
        raise ConfigError(f"s must be at least 1, got {s}")
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    lo = np.minimum(u_arr, v_arr)
    gap = np.abs(u_arr - v_arr)
    if np.any(lo < 0) or np.any(np.maximum(u_arr, v_arr) > 1):
        raise ConfigError("kernel arguments must lie in [0, 1]")
    total = np.zeros(np.broadcast(u_arr, v_arr).shape)
    for k in range(s):
        total = total + math.comb(s - 1, k) * gap ** (s - 1 - k) * lo ** (s + k) / (s + k)
    total = total / math.factorial(s - 1) ** 2
    return float(total) if total.ndim == 0 else total


def polynomial_basis(x: NDArray, s: int) -> NDArray[np.float64]:
    """Columns ``x^t / t!`` for ``t = 0..s-1``."""
    x = np.asarray(x, dtype=float).ravel()
    return np.stack([x**t / math.factorial(t) for t in range(s)], axis=-1)


@dataclass(frozen=True)
class SplineFactors:
    """Coefficient maps with ``c = U y`` (kernel part) and ``d = V y`` (polynomial part)."""

    x: NDArray[np.float64]
    s: int
    U: NDArray[np.float64]
    V: NDArray[np.float64]
    condition: float

    def rows(self, xs: NDArray) -> NDArray[np.float64]:
        xs = np.asarray(xs, dtype=float).ravel()
        rho = kernel_R(xs[:, None], self.x[None, :], self.s)
        return polynomial_basis(xs, self.s) @ self.V + rho @ self.U


def spline_factors(x_points: NDArray, s: int) -> SplineFactors:
    """QR-based coefficient maps of the interpolating spline of degree ``2s - 1``.

    With ``T = (R(x_i, x_j))`` and ``S = (x_i^t / t!)`` and the full QR
    decomposition ``S = [Q1 Q2] [R; 0]``:
    ``U = Q2 (Q2^T T Q2)^{-1} Q2^T`` and ``V = R^{-1} Q1^T (I - T U)``.
    """
    x = _check_points(x_points, 0.0, 1.0)
    n = x.size
    if s < 1:
        raise ConfigError(f"s must be at least 1, got {s}")
    if n <= s:
        raise ConfigError(f"spline of order s = {s} needs more than {s} points, got {n}")
    T = kernel_R(x[:, None], x[None, :], s)
    S = polynomial_basis(x, s)
    Q, R = np.linalg.qr(S, mode="complete")
    Q1, Q2, R1 = Q[:, :s], Q[:, s:], R[:s]
    inner = Q2.T @ T @ Q2
    cond = float(np.linalg.cond(inner))
    if not np.isfinite(cond) or cond > 1.0 / (n * np.finfo(float).eps):
        raise ConditioningError(f"spline s = {s}: Q2^T T Q2 is singular (condition {cond:.3g})")
    U = Q2 @ np.linalg.solve(inner, Q2.T)
    U = 0.5 * (U + U.T)
    V = solve_triangular(R1, Q1.T @ (np.eye(n) - T @ U))
    return SplineFactors(x, s, U, V, cond)


def spline_hat_vector(s: int, x_points: NDArray, xstar: NDArray | float) -> NDArray[np.float64]:
    """Hat vector(s) ``V^T phi(x*) + U^T rho(x*)`` of the interpolating spline."""
    single = np.ndim(xstar) == 0
    xs = _check_targets(xstar, 0.0, 1.0)
    rows = spline_factors(x_points, s).rows(xs)
    return rows[0] if single else rows


def _fit_spline(spec: Spline, x: NDArray) -> HatSystem:
    factors = spline_factors(x, spec.s)

    def rows(pts: NDArray) -> NDArray:
        return factors.rows(_check_targets(pts[:, 0], 0.0, 1.0))

    # the spline interpolates by construction; evaluating rows at the nodes only adds rounding
    return HatSystem(np.eye(factors.x.size), spec, factors.x[:, None], None, True, rows)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def fit(spec: ProcedureSpec, X: NDArray) -> HatSystem:
    """Fit a procedure and return its :class:`HatSystem`.

    Parameters
    ----------
    spec : ProcedureSpec
        One of :class:`OLS`, :class:`MinNorm`, :class:`Ridge`,
        :class:`WeightInterp`, :class:`LocalConstant`, :class:`Spline` or
        :class:`GDInterp`.
    X : array_like
        Design matrix ``(n, d)``, or the sorted x-points ``(n,)`` for the
        one-dimensional procedures.

    Raises
    ------
    FitError
        Rank deficiency, a non-positive ridge penalty, or an empty smoother
        window.
    """
    X = np.asarray(X, dtype=float)
    if isinstance(spec, ONE_DIMENSIONAL):
        if X.ndim == 2 and X.shape[1] != 1:
            raise ConfigError("one-dimensional procedures take a vector of x-points")
        x = X.ravel()
        if isinstance(spec, WeightInterp):
            return _fit_weight(spec, x)
        if isinstance(spec, LocalConstant):
            return _fit_local_constant(spec, x)
        return _fit_spline(spec, x)
    if X.ndim != 2:
        raise ConfigError(f"design must be a matrix, got shape {X.shape}")
    if isinstance(spec, OLS):
        return _fit_ols(spec, X)
    if isinstance(spec, MinNorm):
        return _fit_min_norm(spec, X)
    if isinstance(spec, Ridge):
        return _fit_ridge(spec, X)
    if isinstance(spec, GDInterp):
        return _fit_gd(spec, X)
    raise ConfigError(f"unknown procedure spec {spec!r}")
