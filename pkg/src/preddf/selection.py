"""Variable orderings, criterion sweeps over subset size and model selection.

Also holds the analytic optimal-size curves for a stylized sparse model and a
generic real-data pipeline (stratified splits, transforms, imputation,
centering).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from .core_model import Dataset, MeanModel, rng_stream
from .dof import df_approx
from .errors import ConfigError, FitError
from .procedures import min_norm_operator, ols_operator
from .risk import delta_plus, delta_plusplus

ALL_CRITERIA: tuple[str, ...] = (
    "err_train",
    "cp",
    "aic",
    "bic",
    "loocv",
    "kfold_cv",
    "err_tilde",
    "u_type",
    "delta_hat",
    "delta_plus",
    "delta_plusplus",
    "err_hat",
    "err_hat_plus",
    "err_hat_plusplus",
    "xi",
    "df_fixed",
    "df_random",
    "err_test",
    "excess_bias",
)

DEFAULT_CRITERIA: tuple[str, ...] = tuple(c for c in ALL_CRITERIA if c != "kfold_cv")

Strategy = Literal["prescient", "forward_rss", "random", "given"]


# ---------------------------------------------------------------------------
# Orderings
# ---------------------------------------------------------------------------


def order_variables(
    X: NDArray[np.float64],
    y: NDArray[np.float64] | None = None,
    strategy: Strategy = "forward_rss",
    beta: NDArray[np.float64] | None = None,
    seed: int | None = None,
    perm: Sequence[int] | None = None,
) -> NDArray[np.intp]:
    """Return a 0-based permutation of the columns of ``X``.

    Parameters
    ----------
    strategy : {"prescient", "forward_rss", "random", "given"}
        ``prescient`` sorts by decreasing ``|beta_j|`` (ties by index).
        ``forward_rss`` adds, one at a time, the column that most reduces the
        training residual sum of squares, for the first ``min(n - 1, d)``
        steps; remaining columns follow in index order. ``random`` is a
        seeded uniform permutation. ``given`` validates ``perm``.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if strategy == "prescient":
        if beta is None:
            raise ConfigError("prescient ordering needs the true coefficients beta")
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (d,):
            raise ConfigError(f"beta must have length {d}")
        return np.argsort(-np.abs(beta), kind="stable")
    if strategy == "random":
        if seed is None:
            raise ConfigError("random ordering needs a seed")
        return rng_stream(seed, 0x0D).permutation(d)
    if strategy == "given":
        if perm is None:
            raise ConfigError("given ordering needs perm")
        out = np.asarray(perm, dtype=np.intp)
        if sorted(out.tolist()) != list(range(d)):
            raise ConfigError(f"perm is not a permutation of 0..{d - 1}")
        return out
    if strategy == "forward_rss":
        if y is None:
            raise ConfigError("forward_rss ordering needs y")
        return _forward_rss(X, np.asarray(y, dtype=float))
    raise ConfigError(f"unknown ordering strategy {strategy!r}")


def _forward_rss(X: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.intp]:
    n, d = X.shape
    steps = min(n - 1, d)
    work = X.copy()
    resid = y.copy()
    chosen: list[int] = []
    remaining = np.ones(d, dtype=bool)
    scale = np.linalg.norm(X, axis=0)
    for _ in range(steps):
        norms2 = np.einsum("ij,ij->j", work, work)
        usable = remaining & (norms2 > (1e-10 * np.maximum(scale, 1e-300)) ** 2)
        if not usable.any():
            break
        gain = np.where(usable, (work.T @ resid) ** 2 / np.where(usable, norms2, 1.0), -np.inf)
        j = int(np.argmax(gain))
        q = work[:, j] / math.sqrt(norms2[j])
        chosen.append(j)
        remaining[j] = False
        resid = resid - q * (q @ resid)
        work = work - np.outer(q, q @ work)
    rest = [j for j in range(d) if remaining[j]]
    return np.asarray(chosen + rest, dtype=np.intp)


# ---------------------------------------------------------------------------
# Sweep table
# ---------------------------------------------------------------------------


@dataclass
class SweepTable:
    """Criteria by subset size. Undefined cells hold ``nan``.

    ``errors`` maps a subset size to the message of a fit failure there.
    """

    p_values: NDArray[np.intp]
    columns: dict[str, NDArray[np.float64]]
    n: int
    errors: dict[int, str] = field(default_factory=dict)

    def column(self, name: str) -> NDArray[np.float64]:
        try:
            return self.columns[name]
        except KeyError:
            raise ConfigError(f"criterion {name!r} is not in the sweep table") from None

    def defined(self, name: str) -> NDArray[np.bool_]:
        return np.isfinite(self.column(name))

    def value(self, name: str, p: int) -> float:
        idx = np.flatnonzero(self.p_values == p)
        if idx.size == 0:
            raise ConfigError(f"p = {p} is not in the sweep")
        return float(self.column(name)[idx[0]])

    def long_rows(self) -> Iterable[tuple[int, str, float, bool]]:
        for k, p in enumerate(self.p_values):
            for name, col in self.columns.items():
                v = float(col[k])
                yield int(p), name, v, bool(np.isfinite(v))

    def to_csv(self, path_or_buf: str | Path | io.TextIOBase | None = None) -> str:
        """Long-format CSV with columns ``p, criterion, value, defined``."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["p", "criterion", "value", "defined"])
        for p, name, v, ok in self.long_rows():
            writer.writerow([p, name, f"{v:.17g}" if ok else "", int(ok)])
        text = buf.getvalue()
        if isinstance(path_or_buf, (str, Path)):
            Path(path_or_buf).write_text(text)
        elif path_or_buf is not None:
            path_or_buf.write(text)
        return text


def _nan_row(criteria: Sequence[str]) -> dict[str, float]:
    return {c: math.nan for c in criteria}


def criterion_sweep(
    ds: Dataset,
    order: Sequence[int],
    criteria: Sequence[str] = DEFAULT_CRITERIA,
    sigma_eps2: float | None = None,
    Sigma: NDArray[np.float64] | None = None,
    cv_k: int = 5,
    cv_seed: int = 0,
    p_values: Sequence[int] | None = None,
    test: Dataset | None = None,
) -> SweepTable:
    """Evaluate selection criteria along a nested sequence of subsets.

    For each ``p`` the first ``p`` columns of ``order`` are fit by least
    squares (``p <= n``) or minimum-norm least squares (``p > n``).

    Parameters
    ----------
    ds : Dataset
    order : sequence of int
        0-based column ordering.
    criteria : sequence of str
        Names from :data:`ALL_CRITERIA`.
    sigma_eps2, Sigma : optional
        Known error variance and feature covariance; default to the dataset's.
    cv_k, cv_seed : int
        Fold count and seed for ``kfold_cv``.
    p_values : sequence of int, optional
        Subset sizes to evaluate; default ``0..d``.
    test : Dataset, optional
        Held-out data for ``err_test`` when the truth is unknown.

    Notes
    -----
    ``cp`` is ``ErrT + 2 sigma^2 df_F / n`` (``df_F = min(p, n)``). ``aic`` and
    ``bic`` are ``n log ErrT + 2p`` and ``n log ErrT + p log n`` and are
    defined for ``p < n`` only. ``err_test`` is the exact Random-X error for
    simulated data and the held-out mean squared error otherwise.
    ``excess_bias`` is the true excess bias (simulation only). At ``p = n``
    only ``err_train``, ``cp``, ``df_fixed``, ``df_random``, ``err_test`` and
    ``excess_bias`` are filled.
    """
    unknown = set(criteria) - set(ALL_CRITERIA)
    if unknown:
        raise ConfigError(f"unknown criteria {sorted(unknown)}; choose from {list(ALL_CRITERIA)}")
    order = np.asarray(order, dtype=np.intp)
    n, d = ds.X.shape
    if np.unique(order).size != order.size or (order.size and (order.min() < 0 or order.max() >= d)):
        raise ConfigError(f"order must list distinct column indices in 0..{d - 1}")
    s2 = ds.sigma_eps2 if sigma_eps2 is None else float(sigma_eps2)
    Sig = ds.Sigma if Sigma is None else np.asarray(Sigma, dtype=float)
    if p_values is None:
        p_values = range(order.size + 1)
    p_arr = np.asarray(sorted(set(int(p) for p in p_values)), dtype=np.intp)
    if p_arr.size and (p_arr[0] < 0 or p_arr[-1] > order.size):
        raise ConfigError(f"p values must lie in [0, {order.size}]")
    want = list(criteria)
    truth = ds.mean_fn if isinstance(ds.mean_fn, MeanModel) else None
    y = np.asarray(ds.y, dtype=float)
    cols = {c: np.full(p_arr.size, math.nan) for c in want}
    errors: dict[int, str] = {}
    for k, p in enumerate(p_arr):
        try:
            row = _sweep_row(ds, y, order[:p], want, s2, Sig, truth, test, cv_k, cv_seed)
        except FitError as exc:
            errors[int(p)] = str(exc)
            row = _nan_row(want)
        for c in want:
            cols[c][k] = row.get(c, math.nan)
    return SweepTable(p_arr, cols, n, errors)


def _sweep_row(
    ds: Dataset,
    y: NDArray[np.float64],
    S: NDArray[np.intp],
    want: list[str],
    s2: float,
    Sigma: NDArray[np.float64],
    truth: MeanModel | None,
    test: Dataset | None,
    cv_k: int,
    cv_seed: int,
) -> dict[str, float]:
    n = ds.n
    p = int(S.size)
    X_S = ds.X[:, S]
    Sigma_S = Sigma[np.ix_(S, S)]
    if p == 0:
        H = np.zeros((n, n))
        M = np.zeros((n, 0))
    elif p <= n:
        H, M = ols_operator(X_S)
    else:
        H, M = min_norm_operator(X_S)
    fitted = H @ y
    errt = float(np.mean((y - fitted) ** 2)) if p < n else 0.0
    df_f = float(min(p, n))
    e_h = float(np.sum((M @ Sigma_S) * M)) if p else 0.0
    df_r = 0.5 * df_f + 0.5 * n * e_h if p else 0.0
    row: dict[str, float] = {
        "err_train": errt,
        "df_fixed": df_f,
        "df_random": df_r,
        "cp": errt + 2.0 * s2 * df_f / n,
    }
    beta_S = M.T @ y
    if truth is not None and ({"err_test", "excess_bias"} & set(want)):
        b = np.zeros(ds.d)
        b[S] = beta_S
        row["err_test"] = s2 + truth.mse(b)
        if "excess_bias" in want and ds.mu is not None:
            bmu = np.zeros(ds.d)
            bmu[S] = M.T @ ds.mu
            resid = ds.mu - H @ ds.mu
            row["excess_bias"] = truth.mse(bmu) - float(resid @ resid) / n
    elif test is not None and "err_test" in want:
        pred = test.X[:, S] @ beta_S
        row["err_test"] = float(np.mean((test.y - pred) ** 2))
    if "kfold_cv" in want:
        row["kfold_cv"] = kfold_cv(ds, S, p, cv_k, cv_seed)
    if p == n:
        return row

    if p < n:
        h = np.diag(H)
        if np.any(h > 1.0 - 1e-10):
            return row
        resid = y - fitted
        loo = resid / (1.0 - h)
        loocv = float(np.mean(loo**2))
        D = 1.0 / (1.0 - h) ** 2 - 1.0
        yAy = float(np.sum(D * resid**2))
        trA = float(np.sum(1.0 / (1.0 - h))) + p - n
        if errt > 0:
            row["aic"] = n * math.log(errt) + 2 * p
            row["bic"] = n * math.log(errt) + p * math.log(n)
            sigma_hat2 = n * errt / (n - p)
            row["err_tilde"] = errt + 2.0 * sigma_hat2 * df_r / n
            if p < n - 1:
                row["u_type"] = errt + 2.0 * sigma_hat2 * df_approx(n, p, "gaussian_exact_expectation") / n
    else:
        G = M @ M.T
        g = np.diag(G)
        Gy = G @ y
        loocv = float(np.mean((Gy / g) ** 2))
        yAy = n * loocv
        trA = float(np.sum(G**2 / g[:, None] ** 2))
    delta = yAy / n - s2 * trA / n
    base = errt + 2.0 * s2 * df_r / n
    d_plus = delta_plus(delta)
    d_pp = delta_plusplus(delta, max(yAy, 0.0), max(trA, 0.0), s2, n)
    row.update(
        loocv=loocv,
        xi=2.0 * df_r - trA,
        delta_hat=delta,
        delta_plus=d_plus,
        delta_plusplus=d_pp,
        err_hat=base + delta,
        err_hat_plus=base + d_plus,
        err_hat_plusplus=base + d_pp,
    )
    return row


def select(table: SweepTable, criterion: str) -> int:
    """Subset size minimizing ``criterion`` over defined rows; ties go to the smaller ``p``."""
    col = table.column(criterion)
    ok = np.isfinite(col)
    if not ok.any():
        raise ConfigError(f"criterion {criterion!r} is undefined for every p")
    best = np.min(col[ok])
    candidates = table.p_values[ok & (col == best)]
    return int(candidates.min())


# ---------------------------------------------------------------------------
# K-fold cross-validation
# ---------------------------------------------------------------------------


def fold_assignment(n: int, k: int, seed: int) -> list[NDArray[np.intp]]:
    """Split a seeded permutation of ``0..n-1`` into ``k`` folds of sizes differing by at most one."""
    if not 2 <= k <= n:
        raise ConfigError(f"need 2 <= k <= n, got k = {k}, n = {n}")
    perm = rng_stream(seed, 0xF0).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def kfold_cv(ds: Dataset, order: Sequence[int], p: int, k: int = 5, seed: int = 0) -> float:
    """K-fold cross-validated squared error of least squares on ``order[:p]``.

    Each fold refits on the remaining rows: OLS when those rows are at least
    ``p`` in number, minimum-norm otherwise. Folds whose fit is rank deficient
    are skipped; the error is pooled over the held-out rows of valid folds.
    """
    S = np.asarray(order, dtype=np.intp)[:p]
    X = ds.X[:, S]
    y = np.asarray(ds.y, dtype=float)
    total = 0.0
    count = 0
    for held in fold_assignment(ds.n, k, seed):
        keep = np.ones(ds.n, dtype=bool)
        keep[held] = False
        Xtr, ytr = X[keep], y[keep]
        try:
            if p == 0:
                pred = np.zeros(held.size)
            else:
                _, M = ols_operator(Xtr) if p <= Xtr.shape[0] else min_norm_operator(Xtr)
                pred = X[held] @ (M.T @ ytr)
        except FitError:
            continue
        total += float(np.sum((y[held] - pred) ** 2))
        count += held.size
    if count == 0:
        raise FitError(f"every fold failed to fit at p = {p}")
    return total / count


# ---------------------------------------------------------------------------
# Analytic optimal model size
# ---------------------------------------------------------------------------


def stylized_errors(gamma: float | NDArray, alpha: float, eta: float, n: int) -> dict[str, NDArray]:
    """Training error, ErrF and expected ErrR for the stylized sparse model with ``d = n``, ``sigma^2 = 1``.

    The true coefficients decay so that fitting a fraction ``gamma`` of the
    features leaves squared bias ``alpha (1 - gamma)^(eta + 1)``.
    """
    g = np.asarray(gamma, dtype=float)
    tail = alpha * (1.0 - g) ** eta
    gap = 1.0 - g - 1.0 / n
    errt = 1.0 - g + tail * (1.0 - g)
    errf = 1.0 + g + tail * (1.0 - g)
    errr = 1.0 + tail * (1.0 - g) + g * tail + g * tail / gap + g / gap
    return {"err_train": errt, "err_fixed": errf, "err_random": errr}


def _golden(f, lo: float, hi: float, tol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def analytic_optimal_size(alpha: float, eta: float, n: int, tol: float = 1e-8) -> tuple[float, float]:
    """Minimizers of ErrF and expected ErrR over the model fraction ``gamma``.

    ``gamma_F = max(0, 1 - c^(-1/eta))`` with ``c = alpha (eta + 1)``.
    ``gamma_R`` minimizes the expected Random-X error on
    ``[0, 1 - 1/n - 1e-6]``: a grid scan locates the best bracket and golden
    section search refines it to ``tol``. A minimum at the left end is
    reported as exactly 0.
    """
    if not alpha > 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    if not eta >= 1:
        raise ConfigError(f"eta must be >= 1, got {eta}")
    if n < 3:
        raise ConfigError(f"n must be at least 3, got {n}")
    c = alpha * (eta + 1.0)
    gamma_f = max(0.0, 1.0 - c ** (-1.0 / eta))

    hi = 1.0 - 1.0 / n - 1e-6

    def errr(g: float) -> float:
        return float(stylized_errors(g, alpha, eta, n)["err_random"])

    grid = np.linspace(0.0, hi, 2001)
    values = stylized_errors(grid, alpha, eta, n)["err_random"]
    k = int(np.argmin(values))
    lo_b, hi_b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    gamma_r = _golden(errr, lo_b, hi_b, tol)
    if errr(0.0) <= errr(gamma_r):
        gamma_r = 0.0
    return gamma_f, gamma_r


# ---------------------------------------------------------------------------
# Real-data pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for :func:`ingest_csv`.

    Attributes
    ----------
    target : str
        Response column.
    train_size, test_size : int
        Rows in the training and test splits; the rest form the auxiliary
        split used for centering and for estimating ``Sigma`` and ``sigma^2``.
    features : sequence of str, optional
        Feature columns; default every numeric column other than the target,
        the strata column and the group column.
    strata_column : str, optional
        Categorical column for proportional stratified sampling.
    transforms : mapping of column to {"none", "log", "logit"}
    imputation : {"none", "group_median"}
    group_column : str, optional
        Grouping for ``group_median`` imputation.
    seed : int
    """

    target: str
    train_size: int
    test_size: int
    features: tuple[str, ...] | None = None
    strata_column: str | None = None
    transforms: dict[str, str] = field(default_factory=dict)
    imputation: Literal["none", "group_median"] = "none"
    group_column: str | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.train_size < 1 or self.test_size < 0:
            raise ConfigError("train_size must be positive and test_size nonnegative")
        for col, kind in self.transforms.items():
            if kind not in ("none", "log", "logit"):
                raise ConfigError(f"unknown transform {kind!r} for column {col!r}")
        if self.imputation not in ("none", "group_median"):
            raise ConfigError(f"unknown imputation {self.imputation!r}")
        if self.imputation == "group_median" and not self.group_column:
            raise ConfigError("group_median imputation needs group_column")


def apply_transform(values: NDArray[np.float64], kind: str) -> NDArray[np.float64]:
    """Apply ``log`` or ``logit`` elementwise; missing values pass through."""
    v = np.asarray(values, dtype=float)
    if kind == "none":
        return v
    ok = ~np.isnan(v)
    if kind == "log":
        if np.any(v[ok] <= 0):
            raise ConfigError("log transform needs positive values")
        return np.log(v)
    if kind == "logit":
        if np.any((v[ok] <= 0) | (v[ok] >= 1)):
            raise ConfigError("logit transform needs values in (0, 1)")
        return np.log(v) - np.log1p(-v)
    raise ConfigError(f"unknown transform {kind!r}")


def largest_remainder(total: int, weights: Sequence[int]) -> list[int]:
    """Apportion ``total`` proportionally to ``weights`` with largest-remainder rounding."""
    w = np.asarray(weights, dtype=float)
    if total < 0 or w.sum() <= 0:
        raise ConfigError("cannot apportion")
    quotas = total * w / w.sum()
    base = np.floor(quotas).astype(int)
    short = total - int(base.sum())
    order = np.argsort(-(quotas - base), kind="stable")
    base[order[:short]] += 1
    return base.tolist()


def stratified_split(
    strata: Sequence, train_size: int, test_size: int, seed: int
) -> tuple[NDArray[np.intp], NDArray[np.intp], NDArray[np.intp]]:
    """Disjoint row indices for train, test and auxiliary splits.

    Each stratum contributes to the train and test splits in proportion to
    its size, rounded by largest remainder.
    """
    labels = pd.Series(list(strata))
    if labels.isna().any():
        raise ConfigError("strata column has missing values")
    groups = sorted(labels.unique().tolist(), key=str)
    sizes = [int((labels == g).sum()) for g in groups]
    n = len(labels)
    if train_size + test_size > n:
        raise ConfigError(f"train_size + test_size = {train_size + test_size} exceeds {n} rows")
    n_train = largest_remainder(train_size, sizes)
    n_test = largest_remainder(test_size, sizes)
    rng = rng_stream(seed, 0x5B)
    train, test, aux = [], [], []
    for g, size, a, b in zip(groups, sizes, n_train, n_test):
        if size == 0:
            raise ConfigError(f"stratum {g!r} is empty")
        if a + b > size:
            raise ConfigError(f"stratum {g!r} has {size} rows but needs {a + b}")
        rows = np.flatnonzero((labels == g).to_numpy())
        rows = rows[rng.permutation(size)]
        train.append(rows[:a])
        test.append(rows[a : a + b])
        aux.append(rows[a + b :])
    return tuple(np.sort(np.concatenate(part)).astype(np.intp) for part in (train, test, aux))


def ingest_frame(frame: pd.DataFrame, cfg: PipelineConfig) -> tuple[Dataset, Dataset, Dataset, list[str]]:
    """Run the pipeline on an in-memory table. See :func:`ingest_csv`."""
    df = frame.copy()
    if cfg.target not in df.columns:
        raise ConfigError(f"target column {cfg.target!r} not found")
    skip = {cfg.target, cfg.strata_column, cfg.group_column}
    if cfg.features is None:
        features = [c for c in df.columns if c not in skip and pd.api.types.is_numeric_dtype(df[c])]
    else:
        features = list(cfg.features)
        missing = [c for c in features if c not in df.columns]
        if missing:
            raise ConfigError(f"feature columns not found: {missing}")
    numeric = features + [cfg.target]
    for c in numeric:
        df[c] = pd.to_numeric(df[c], errors="coerce")
    for col, kind in cfg.transforms.items():
        if col not in df.columns:
            raise ConfigError(f"transform column {col!r} not found")
        df[col] = apply_transform(df[col].to_numpy(dtype=float), kind)
    if cfg.imputation == "group_median":
        if cfg.group_column not in df.columns:
            raise ConfigError(f"group column {cfg.group_column!r} not found")
        medians = df.groupby(cfg.group_column)[numeric].transform("median")
        df[numeric] = df[numeric].fillna(medians)
    if df[numeric].isna().any().any():
        bad = [c for c in numeric if df[c].isna().any()]
        raise ConfigError(f"missing or unparseable cells remain in {bad}")
    strata = df[cfg.strata_column] if cfg.strata_column else pd.Series(["all"] * len(df))
    i_train, i_test, i_aux = stratified_split(strata, cfg.train_size, cfg.test_size, cfg.seed)
    if i_aux.size <= len(features):
        raise ConfigError(
            f"auxiliary split has {i_aux.size} rows; need more than {len(features)} to fit the full model"
        )
    X = df[features].to_numpy(dtype=float)
    y = df[cfg.target].to_numpy(dtype=float)
    x_center = X[i_aux].mean(axis=0)
    y_center = y[i_aux].mean()
    X = X - x_center
    y = y - y_center
    Sigma = np.atleast_2d(np.cov(X[i_aux], rowvar=False, ddof=1))
    Sigma = 0.5 * (Sigma + Sigma.T)
    coef, *_ = np.linalg.lstsq(X[i_aux], y[i_aux], rcond=None)
    rss = float(np.sum((y[i_aux] - X[i_aux] @ coef) ** 2))
    sigma2 = rss / (i_aux.size - len(features))

    def make(rows: NDArray[np.intp]) -> Dataset:
        return Dataset(X[rows], y[rows], None, sigma2, Sigma)

    return make(i_train), make(i_test), make(i_aux), features


def ingest_csv(path: str | Path, cfg: PipelineConfig) -> tuple[Dataset, Dataset, Dataset]:
    """Load a CSV and return centered ``(train, test, aux)`` datasets.

    Steps: column transforms, group-median imputation, stratified splitting,
    centering by auxiliary-split means, ``Sigma`` from the auxiliary sample
    covariance and ``sigma^2`` from the full-model residual variance on the
    auxiliary split.
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    train, test, aux, _ = ingest_frame(frame, cfg)
    return train, test, aux


def sweep_p_range(d: int, around: int | None = None, width: int | None = None) -> list[int]:
    """Subset sizes ``0..d``, or a window of half-width ``width`` around ``around``."""
    if around is None or width is None:
        return list(range(d + 1))
    return [p for p in range(max(0, around - width), min(d, around + width) + 1)]


__all__ = [
    "ALL_CRITERIA",
    "DEFAULT_CRITERIA",
    "PipelineConfig",
    "SweepTable",
    "analytic_optimal_size",
    "apply_transform",
    "criterion_sweep",
    "fold_assignment",
    "ingest_csv",
    "ingest_frame",
    "kfold_cv",
    "largest_remainder",
    "order_variables",
    "select",
    "stratified_split",
    "stylized_errors",
    "sweep_p_range",
]
