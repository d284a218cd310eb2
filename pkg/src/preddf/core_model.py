"""Data model, random generation and coefficient/covariance constructors.

Rows of the design are i.i.d. Gaussian with mean zero and covariance ``Sigma``,
errors are i.i.d. Gaussian with variance ``sigma_eps2`` and independent of the
rows, and the response mean is either linear or a centered exponential
transform of the covariates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError

MeanKind = Literal["linear", "nonlinear_exp"]
BetaKind = Literal["poly_decay", "inverse_index"]

_SYM_RTOL = 1e-12
_PSD_TOL = 1e-10


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


def rng_stream(master_seed: int, *keys: int) -> np.random.Generator:
    """Return an independent counter-based generator keyed by ``(master_seed, *keys)``.

    Streams for different key tuples are statistically independent, so a Monte
    Carlo replicate ``r`` can own ``rng_stream(seed, r)`` regardless of the
    order or the process in which replicates run.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))


# ---------------------------------------------------------------------------
# Covariance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovKind:
    """Description of a feature covariance matrix.

    Use the class-method constructors rather than the raw fields.
    """

    variant: Literal["identity", "equicorrelated", "explicit", "random_correlation"] = "identity"
    rho: float = 0.0
    matrix: NDArray[np.float64] | None = field(default=None, compare=False)
    seed: int = 0

    @classmethod
    def identity(cls) -> "CovKind":
        return cls("identity")

    @classmethod
    def equicorrelated(cls, rho: float) -> "CovKind":
        if not 0.0 <= rho < 1.0:
            raise ConfigError(f"equicorrelation rho must lie in [0, 1), got {rho}")
        return cls("equicorrelated", rho=float(rho))

    @classmethod
    def explicit(cls, matrix: NDArray[np.float64]) -> "CovKind":
        return cls("explicit", matrix=np.array(matrix, dtype=float))

    @classmethod
    def random_correlation(cls, seed: int) -> "CovKind":
        return cls("random_correlation", seed=int(seed))


def onion_correlation(d: int, rng: np.random.Generator, eta: float = 1.0) -> NDArray[np.float64]:
    """Draw a random correlation matrix with the onion method.

    With ``eta = 1`` the draw is uniform over the set of ``d x d`` correlation
    matrices. Every intermediate matrix is positive definite by construction.
    """
    if d < 1:
        raise ConfigError("dimension must be at least 1")
    if d == 1:
        return np.ones((1, 1))
    beta = eta + (d - 2) / 2.0
    r12 = 2.0 * rng.beta(beta, beta) - 1.0
    corr = np.array([[1.0, r12], [r12, 1.0]])
    for k in range(2, d):
        beta -= 0.5
        radius2 = rng.beta(k / 2.0, beta)
        direction = rng.standard_normal(k)
        direction /= np.linalg.norm(direction)
        w = math.sqrt(radius2) * direction
        chol = np.linalg.cholesky(corr)
        z = chol @ w
        grown = np.empty((k + 1, k + 1))
        grown[:k, :k] = corr
        grown[:k, k] = z
        grown[k, :k] = z
        grown[k, k] = 1.0
        corr = grown
    return corr


def validate_covariance(Sigma: NDArray[np.float64]) -> NDArray[np.float64]:
    """Check that ``Sigma`` is square, symmetric and positive semidefinite."""
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1]:
        raise ConfigError(f"covariance must be square, got shape {Sigma.shape}")
    scale = max(1.0, float(np.max(np.abs(Sigma)))) if Sigma.size else 1.0
    if np.max(np.abs(Sigma - Sigma.T), initial=0.0) > _SYM_RTOL * scale:
        raise ConfigError("covariance matrix is not symmetric")
    if Sigma.size and np.linalg.eigvalsh(Sigma).min() < -_PSD_TOL * scale:
        raise ConfigError("covariance matrix is not positive semidefinite")
    return Sigma


def make_covariance(kind: CovKind, d: int) -> NDArray[np.float64]:
    """Build the ``d x d`` covariance matrix described by ``kind``.

    Examples
    --------
    >>> make_covariance(CovKind.equicorrelated(0.5), 2)
    array([[1. , 0.5],
           [0.5, 1. ]])
    """
    if d < 1:
        raise ConfigError("dimension must be at least 1")
    if kind.variant == "identity":
        return np.eye(d)
    if kind.variant == "equicorrelated":
        if not 0.0 <= kind.rho < 1.0:
            raise ConfigError(f"equicorrelation rho must lie in [0, 1), got {kind.rho}")
        return (1.0 - kind.rho) * np.eye(d) + kind.rho * np.ones((d, d))
    if kind.variant == "explicit":
        if kind.matrix is None:
            raise ConfigError("explicit covariance requires a matrix")
        Sigma = validate_covariance(kind.matrix)
        if Sigma.shape[0] != d:
            raise ConfigError(f"explicit covariance has size {Sigma.shape[0]}, expected {d}")
        return Sigma.copy()
    if kind.variant == "random_correlation":
        return onion_correlation(d, rng_stream(kind.seed, 0xC0))
    raise ConfigError(f"unknown covariance variant {kind.variant!r}")


class GaussianSampler:
    """Draw mean-zero Gaussian rows with a fixed covariance.

    The factor is a Cholesky factor when possible. A numerically semidefinite
    matrix falls back to an eigendecomposition with small negative eigenvalues
    clamped to zero.
    """

    def __init__(self, Sigma: NDArray[np.float64]):
        Sigma = validate_covariance(Sigma)
        self.Sigma = Sigma
        self.d = Sigma.shape[0]
        try:
            self.factor = np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(Sigma)
            scale = max(1.0, float(np.abs(vals).max()))
            if vals.min() < -_PSD_TOL * scale:
                raise ConfigError("covariance matrix is not positive semidefinite") from None
            self.factor = vecs * np.sqrt(np.clip(vals, 0.0, None))

    def __call__(self, m: int, rng: np.random.Generator) -> NDArray[np.float64]:
        return rng.standard_normal((m, self.d)) @ self.factor.T


# ---------------------------------------------------------------------------
# Coefficients and mean functions
# ---------------------------------------------------------------------------


def coefficient_vector(
    d: int, beta_kind: BetaKind = "poly_decay", beta_norm2: float = 10.0, kappa: float = 1.0
) -> NDArray[np.float64]:
    """Coefficient vector with a prescribed squared norm.

    Parameters
    ----------
    d : int
        Number of coefficients.
    beta_kind : {"poly_decay", "inverse_index"}
        ``poly_decay`` gives ``beta_j`` proportional to ``(1 - j/d)**kappa`` and
        ``inverse_index`` gives ``beta_j`` proportional to ``1/j``, for
        ``j = 1..d``.
    beta_norm2 : float
        Target value of ``||beta||^2``.
    kappa : float
        Decay exponent for ``poly_decay``. Must be at least 1.

    Returns
    -------
    ndarray of shape (d,)
        Nonincreasing, nonnegative coefficients.
    """
    if d < 1:
        raise ConfigError("d must be at least 1")
    if not beta_norm2 > 0:
        raise ConfigError(f"beta_norm2 must be positive, got {beta_norm2}")
    j = np.arange(1, d + 1, dtype=float)
    if beta_kind == "poly_decay":
        if kappa < 1:
            raise ConfigError(f"kappa must be >= 1, got {kappa}")
        shape = (1.0 - j / d) ** kappa
        if d == 1:
            # (1 - j/d) vanishes identically; keep the single coefficient
            shape = np.ones(1)
    elif beta_kind == "inverse_index":
        shape = 1.0 / j
    else:
        raise ConfigError(f"unknown beta_kind {beta_kind!r}")
    return shape * math.sqrt(beta_norm2 / float(shape @ shape))


@dataclass(frozen=True)
class MeanModel:
    """Oracle for the true regression function ``x -> mu(x; beta)``.

    ``linear`` is ``x @ beta``. ``nonlinear_exp`` is
    ``sum_j beta_j * (exp(x_j / 2) - exp(Sigma_jj / 8))``, which has mean zero
    under ``x ~ N(0, Sigma)``; with unit variances the centering constant is
    ``exp(1/8)``.
    """

    kind: MeanKind
    beta: NDArray[np.float64]
    Sigma: NDArray[np.float64]

    def __call__(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        X = np.atleast_2d(X)
        if self.kind == "linear":
            return X @ self.beta
        centers = np.exp(np.diag(self.Sigma) / 8.0)
        return (np.exp(X / 2.0) - centers) @ self.beta

    def second_moment(self) -> float:
        """``E mu(x*)^2`` in closed form."""
        if self.kind == "linear":
            return float(self.beta @ self.Sigma @ self.beta)
        return float(self.beta @ self._exp_cov() @ self.beta)

    def mse(self, b: NDArray[np.float64]) -> float:
        """Closed-form ``E (mu(x*) - x*^T b)^2`` for ``x* ~ N(0, Sigma)``.

        For the exponential mean this uses the lognormal moments
        ``Cov(e^{x_j/2}, e^{x_k/2}) = e^{(S_jj+S_kk)/8}(e^{S_jk/4} - 1)`` and
        Stein's identity ``E[(e^{x_j/2}) x] = (1/2) e^{S_jj/8} Sigma[:, j]``.
        """
        b = np.asarray(b, dtype=float)
        Sb = self.Sigma @ b
        if self.kind == "linear":
            diff = self.beta - b
            return float(diff @ self.Sigma @ diff)
        half_centers = 0.5 * np.exp(np.diag(self.Sigma) / 8.0)
        cross = float((self.beta * half_centers) @ Sb)
        return self.second_moment() - 2.0 * cross + float(b @ Sb)

    def _exp_cov(self) -> NDArray[np.float64]:
        s = np.diag(self.Sigma)
        return np.exp((s[:, None] + s[None, :]) / 8.0) * np.expm1(self.Sigma / 4.0)


# ---------------------------------------------------------------------------
# Configuration and datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenConfig:
    """Recipe for a simulated dataset."""

    n: int = 50
    d: int = 120
    mean_kind: MeanKind = "linear"
    beta_kind: BetaKind = "poly_decay"
    kappa: float = 1.0
    beta_norm2: float = 10.0
    cov_kind: CovKind = field(default_factory=CovKind.identity)
    sigma_eps2: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ConfigError(f"n must be at least 2, got {self.n}")
        if self.d < 1:
            raise ConfigError(f"d must be at least 1, got {self.d}")
        if self.mean_kind not in ("linear", "nonlinear_exp"):
            raise ConfigError(f"unknown mean_kind {self.mean_kind!r}")
        if self.beta_kind == "poly_decay" and self.kappa < 1:
            raise ConfigError(f"kappa must be >= 1, got {self.kappa}")
        if self.sigma_eps2 < 0:
            raise ConfigError("sigma_eps2 must be nonnegative")

    def beta(self) -> NDArray[np.float64]:
        return coefficient_vector(self.d, self.beta_kind, self.beta_norm2, self.kappa)

    def covariance(self) -> NDArray[np.float64]:
        return make_covariance(self.cov_kind, self.d)


def _frozen(a: NDArray | None) -> NDArray | None:
    if a is None:
        return None
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Design, response and (in simulation) the generating truth.

    Attributes
    ----------
    X : ndarray (n, d)
    y : ndarray (n,)
    mu : ndarray (n,) or None
        True conditional means, known only for simulated data.
    sigma_eps2 : float
        Error variance.
    Sigma : ndarray (d, d)
        Feature covariance used for Random-X quantities.
    mean_fn : callable or None
        Oracle ``x -> mu(x)``; a :class:`MeanModel` for generated data.
    """

    X: NDArray[np.float64]
    y: NDArray[np.float64]
    mu: NDArray[np.float64] | None
    sigma_eps2: float
    Sigma: NDArray[np.float64]
    mean_fn: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None

    def __post_init__(self) -> None:
        X = _frozen(np.atleast_2d(self.X))
        y = _frozen(np.ravel(self.y))
        if X.shape[0] != y.shape[0]:
            raise ConfigError(f"X has {X.shape[0]} rows but y has length {y.shape[0]}")
        Sigma = _frozen(validate_covariance(self.Sigma))
        if Sigma.shape[0] != X.shape[1]:
            raise ConfigError("Sigma size does not match the number of columns of X")
        mu = _frozen(self.mu)
        if mu is not None and mu.shape != y.shape:
            raise ConfigError("mu and y must have the same length")
        if not self.sigma_eps2 >= 0:
            raise ConfigError("sigma_eps2 must be nonnegative")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma_eps2", float(self.sigma_eps2))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def sampler(self) -> GaussianSampler:
        """Sampler for fresh covariate rows ``x* ~ N(0, Sigma)``."""
        return GaussianSampler(self.Sigma)

    def with_response(self, y: NDArray[np.float64]) -> "Dataset":
        return Dataset(self.X, y, self.mu, self.sigma_eps2, self.Sigma, self.mean_fn)


def generate_dataset(cfg: GenConfig, replicate: int | None = None) -> Dataset:
    """Draw a dataset from ``cfg``.

    Parameters
    ----------
    cfg : GenConfig
    replicate : int, optional
        Replicate index. When given, the draw uses the stream keyed by
        ``(cfg.seed, replicate)``; otherwise the stream keyed by ``cfg.seed``.
    """
    Sigma = cfg.covariance()
    beta = cfg.beta()
    rng = rng_stream(cfg.seed) if replicate is None else rng_stream(cfg.seed, replicate)
    X = GaussianSampler(Sigma)(cfg.n, rng)
    mean_fn = MeanModel(cfg.mean_kind, beta, Sigma)
    mu = mean_fn(X)
    y = mu + math.sqrt(cfg.sigma_eps2) * rng.standard_normal(cfg.n)
    return Dataset(X, y, mu, cfg.sigma_eps2, Sigma, mean_fn)


# ---------------------------------------------------------------------------
# CSV import/export
# ---------------------------------------------------------------------------


def write_dataset_csv(ds: Dataset, path: str | Path) -> None:
    """Write ``x1..xd, y`` with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(ds.d)] + ["y"])
        for row, yi in zip(ds.X, ds.y):
            writer.writerow([f"{v:.17g}" for v in row] + [f"{yi:.17g}"])


def read_design_csv(path: str | Path) -> tuple[NDArray[np.float64], NDArray[np.float64] | None, list[str]]:
    """Read a numeric CSV with a header row.

    Returns the ``x`` columns, the ``y`` column when present, and the header.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric cell ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ConfigError(f"{path}: ragged rows")
    if "y" in header:
        k = header.index("y")
        y = data[:, k]
        X = np.delete(data, k, axis=1)
        return X, y, header
    return data, None, header


def read_dataset_csv(
    path: str | Path, sigma_eps2: float = 1.0, Sigma: NDArray[np.float64] | None = None
) -> Dataset:
    """Load a dataset written by :func:`write_dataset_csv`.

    The truth is unknown for imported data, so ``mu`` and ``mean_fn`` are
    ``None``. ``Sigma`` defaults to the identity.
    """
    X, y, _ = read_design_csv(path)
    if y is None:
        raise ConfigError(f"{path}: no 'y' column")
    if Sigma is None:
        Sigma = np.eye(X.shape[1])
    return Dataset(X, y, None, sigma_eps2, Sigma)


def parse_index_range(text: str, n: int | None = None, d: int | None = None) -> list[int]:
    """Parse 1-based column selections such as ``"1..10"`` or ``"1,3,5..7"``.

    The symbols ``n`` and ``d`` may stand for the sample size and the number
    of columns, as in ``"1..n"``. Returns 0-based indices.
    """
    def value(token: str) -> int:
        token = token.strip()
        if token == "n" and n is not None:
            return n
        if token == "d" and d is not None:
            return d
        try:
            return int(token)
        except ValueError:
            raise ConfigError(f"cannot parse column index {token!r}") from None

    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(value(lo) - 1, value(hi)))
        else:
            out.append(value(part) - 1)
    if any(i < 0 for i in out):
        raise ConfigError(f"column indices are 1-based: {text!r}")
    if len(set(out)) != len(out):
        raise ConfigError(f"repeated column index in {text!r}")
    return out


def as_index_array(subset: Sequence[int] | NDArray | None, d: int) -> NDArray[np.intp]:
    """Normalize a subset specification to a 0-based index array."""
    if subset is None:
        return np.arange(d)
    idx = np.asarray(subset, dtype=np.intp).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= d):
        raise ConfigError(f"subset indices must lie in [0, {d})")
    if np.unique(idx).size != idx.size:
        raise ConfigError("subset contains repeated indices")
    return idx
