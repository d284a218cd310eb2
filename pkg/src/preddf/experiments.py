"""Deterministic Monte Carlo scenarios with long and summary CSV output.

Replicate ``r`` of a scenario draws from streams keyed by
``(master_seed, r, ...)``, so its records do not depend on which process ran
it or in what order. Summaries use compensated summation over replicates in
index order, making ``summary.csv`` byte-identical across worker counts.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import shutil
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .core_model import CovKind, GenConfig, generate_dataset, rng_stream
from .dof import (
    df_approx,
    df_fixed_ridge,
    df_local_constant_closed,
    df_random,
    df_random_ls_closed,
    df_random_ridge,
    uniform_sampler,
)
from .errors import ConfigError, PredDFError
from .gd_interp import (
    expected_init_distance,
    gd_limit,
    init_simple_regression,
    interpolant_df,
    interpolant_excess_bias,
)
from .procedures import LocalConstant, Spline, WeightInterp, fit
from .selection import analytic_optimal_size, criterion_sweep, order_variables

Record = tuple[Any, str, float]  # (sweep_value, metric, value)

LONG_COLUMNS = ("scenario", "replicate", "sweep_value", "metric", "value")
SUMMARY_COLUMNS = ("scenario", "sweep_value", "metric", "mean", "sd", "se", "n_reps")
FAILED = "failed"


# ---------------------------------------------------------------------------
# Scenario definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """A named, seeded replicate study.

    Attributes
    ----------
    name : str
    runner : str
        Key into :data:`RUNNERS`; the runner maps ``(params, replicate, seed)``
        to records ``(sweep_value, metric, value)``.
    anchor : str
        The published result the scenario reproduces.
    sweep : str
        What ``sweep_value`` indexes.
    replicates : int
        Desk-scale replicate count.
    full_replicates : int
        Replicate count of the original study.
    params : dict
        Generator and sweep settings passed to the runner.
    outputs : tuple of str
        Metric names the runner emits (informational).
    master_seed : int
    """

    name: str
    runner: str
    anchor: str
    sweep: str
    replicates: int
    full_replicates: int
    params: dict[str, Any] = field(default_factory=dict)
    outputs: tuple[str, ...] = ()
    master_seed: int = 0

    def with_overrides(
        self,
        replicates: int | None = None,
        seed: int | None = None,
        full_scale: bool = False,
        **params: Any,
    ) -> "Scenario":
        unknown = set(params) - set(self.params)
        if unknown:
            raise ConfigError(f"unknown parameters for {self.name}: {sorted(unknown)}")
        reps = self.full_replicates if full_scale else self.replicates
        if replicates is not None:
            reps = int(replicates)
        if reps < 1:
            raise ConfigError("replicates must be positive")
        return replace(
            self,
            replicates=reps,
            master_seed=self.master_seed if seed is None else int(seed),
            params={**self.params, **params},
        )

    def echo(self) -> dict[str, Any]:
        d = asdict(self)
        d["outputs"] = list(self.outputs)
        return d

    def fingerprint(self) -> str:
        payload = {k: v for k, v in self.echo().items() if k != "replicates"}
        text = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------


def _gen_config(params: dict[str, Any], seed: int, d_key: str = "d") -> GenConfig:
    rho = params.get("rho")
    cov = CovKind.identity() if not rho else CovKind.equicorrelated(float(rho))
    return GenConfig(
        n=int(params["n"]),
        d=int(params[d_key]),
        mean_kind=params.get("mean_kind", "linear"),
        beta_kind=params.get("beta_kind", "poly_decay"),
        kappa=float(params.get("kappa", 1.0)),
        beta_norm2=float(params.get("beta_norm2", 10.0)),
        cov_kind=cov,
        sigma_eps2=float(params.get("sigma_eps2", 1.0)),
        seed=seed,
    )


def run_subset_sweep(params: dict[str, Any], r: int, seed: int) -> list[Record]:
    """Criteria along a prescient subset sequence for one simulated dataset."""
    cfg = _gen_config(params, seed)
    ds = generate_dataset(cfg, replicate=r)
    order = order_variables(ds.X, ds.y, "prescient", beta=cfg.beta())
    p_values = params.get("p_values") or range(int(params.get("p_min", 0)), cfg.d + 1)
    table = criterion_sweep(
        ds,
        order,
        criteria=tuple(params["criteria"]),
        p_values=p_values,
        cv_k=int(params.get("cv_k", 5)),
        cv_seed=int(rng_stream(seed, r, 2).integers(2**31)),
    )
    return [(p, c, v) for p, c, v, ok in table.long_rows() if ok]


def run_df_limit(params: dict[str, Any], r: int, seed: int) -> list[Record]:
    """df_R of least squares along a random variable ordering with equicorrelated features."""
    cfg = _gen_config(params, seed)
    ds = generate_dataset(cfg, replicate=r)
    order = rng_stream(seed, r, 1).permutation(cfg.d)
    n = cfg.n
    out: list[Record] = []
    for p in range(1, cfg.d + 1):
        S = order[:p]
        value = df_random_ls_closed(ds.X[:, S], ds.Sigma[np.ix_(S, S)])
        out.append((p, "df_random", value))
        out.append((p, "df_fixed", float(min(p, n))))
        if p != n:
            out.append((p, "df_approx", df_approx(n, p, "asymptotic_equicorrelated")))
    return out


def run_ridge_df(params: dict[str, Any], r: int, seed: int) -> list[Record]:
    """Ridge df_R and df_F over a penalty grid for each design width."""
    n = int(params["n"])
    lams = np.logspace(params["log10_lambda_min"], params["log10_lambda_max"], int(params["n_lambda"]))
    out: list[Record] = []
    for k, p in enumerate(params["p_list"]):
        X = rng_stream(seed, r, k).standard_normal((n, int(p)))
        Sigma = np.eye(int(p))
        for lam in lams:
            lam = float(lam)
            out.append((lam, f"df_random@p{p}", df_random_ridge(X, Sigma, lam)))
            out.append((lam, f"df_fixed@p{p}", df_fixed_ridge(X, lam)))
    return out


def run_cp_vs_errr(params: dict[str, Any], r: int, seed: int) -> list[Record]:
    """Optimal model fractions of the fixed-X and random-X criteria on an (alpha, eta) grid."""
    n = int(params["n"])
    alphas = np.linspace(params["alpha_min"], params["alpha_max"], int(params["n_alpha"]))
    out: list[Record] = []
    for eta in params["eta_list"]:
        for alpha in alphas:
            gf, gr = analytic_optimal_size(float(alpha), float(eta), n)
            out.append((float(alpha), f"gamma_F@eta{eta:g}", gf))
            out.append((float(alpha), f"gamma_R@eta{eta:g}", gr))
    return out


def run_weight_limit(params: dict[str, Any], r: int, seed: int) -> list[Record]:
    """Monte Carlo df_R/n of the four weighted interpolators on one uniform design."""
    n = int(params["n"])
    x = np.sort(rng_stream(seed, r, 0).uniform(0.0, 1.0, n))
    sampler = uniform_sampler(0.0, 1.0)
    out: list[Record] = []
    for k, kernel in enumerate(params["kernels"]):
        hs = fit(WeightInterp(kernel, 0.0, 1.0), x)
        rep = df_random(hs, sampler=sampler, n_draws=int(params["n_draws"]), rng=rng_stream(seed, r, 1, k))
        out.append((kernel, "df_ratio", rep.df_random / n))
    return out


def run_spline_ratio(params: dict[str, Any], r: int, seed: int) -> list[Record]:
    """Monte Carlo df_R/n of interpolating splines of odd degree on an equispaced design."""
    n = int(params["n"])
    x = np.linspace(0.0, 1.0, n)
    sampler = uniform_sampler(0.0, 1.0)
    out: list[Record] = []
    for degree in params["degrees"]:
        s = (int(degree) + 1) // 2
        try:
            hs = fit(Spline(s), x)
            rep = df_random(hs, sampler=sampler, n_draws=int(params["n_draws"]), rng=rng_stream(seed, r, 1, s))
        except PredDFError:
            out.append((int(degree), FAILED, 1.0))
            continue
        out.append((int(degree), "df_ratio", rep.df_random / n))
    return out


def run_local_constant(params: dict[str, Any], r: int, seed: int) -> list[Record]:
    """df_R and df_F of the local constant smoother across bandwidths on an equispaced design."""
    n = int(params["n"])
    x = np.linspace(0.0, 1.0, n)
    gaps = np.diff(x)
    L = 1.0 / (n - 1)
    # rounding in linspace can push the largest spacing just above L
    lo = max(params["omega_min"] * L, 0.5 * gaps.max())
    omegas = np.linspace(lo, params["omega_max"] * L, int(params["n_omega"]))
    sampler = uniform_sampler(0.0, 1.0)
    out: list[Record] = []
    for k, omega in enumerate(omegas):
        omega = float(omega)
        hs = fit(LocalConstant(omega, 0.0, 1.0), x)
        rep = df_random(hs, sampler=sampler, n_draws=int(params["n_draws"]), rng=rng_stream(seed, r, 1, k))
        out.append((omega, "df_random", rep.df_random))
        out.append((omega, "df_fixed", rep.df_fixed))
        if 0.5 * gaps.max() <= omega <= gaps.min():
            out.append((omega, "df_closed", df_local_constant_closed(x, omega, 0.0, 1.0)))
    return out


def _gd_metrics(X, y, beta, F, sigma_eps2) -> dict[str, float]:
    parts = interpolant_excess_bias(X, beta, F)
    b = gd_limit(X, y, F @ y)
    return {
        "df_random": interpolant_df(X, F),
        "excess_bias": parts.total,
        "err_test": sigma_eps2 + float(np.sum((beta - b) ** 2)),
    }


def run_gd_single_theta(params: dict[str, Any], r: int, seed: int) -> list[Record]:
    """Gradient-descent limits started from one shrunken simple-regression coefficient."""
    cfg = _gen_config(params, seed, d_key="p")
    ds = generate_dataset(cfg, replicate=r)
    beta = cfg.beta()
    thetas = np.linspace(0.0, 1.0, int(params["n_theta"]))
    out: list[Record] = []
    for j in params["variables"]:
        for theta in thetas:
            _, fm = init_simple_regression(ds.X, ds.y, [int(j) - 1], float(theta))
            for name, v in _gd_metrics(ds.X, ds.y, beta, fm.F, cfg.sigma_eps2).items():
                out.append((float(theta), f"{name}@x{j}", v))
    return out


def run_gd_q_sweep(params: dict[str, Any], r: int, seed: int) -> list[Record]:
    """Gradient-descent limits as the initialization subset grows along two orderings."""
    cfg = _gen_config(params, seed, d_key="p")
    ds = generate_dataset(cfg, replicate=r)
    beta = cfg.beta()
    orders = {
        "prescient": np.argsort(-np.abs(beta), kind="stable"),
        # one fixed random sequence shared by all replicates
        "random": rng_stream(seed, 0xA5).permutation(cfg.d),
    }
    out: list[Record] = []
    for label, order in orders.items():
        for q in range(int(params["q_max"]) + 1):
            _, fm = init_simple_regression(ds.X, ds.y, order[:q], 1.0)
            for name, v in _gd_metrics(ds.X, ds.y, beta, fm.F, cfg.sigma_eps2).items():
                out.append((q, f"{name}@{label}", v))
    return out


def run_sq_norm_by_q(params: dict[str, Any], r: int, seed: int) -> list[Record]:
    """Distances between the truth and the noise-free start along the prescient sequence."""
    cfg = _gen_config(params, seed, d_key="p")
    ds = generate_dataset(cfg, replicate=r)
    beta = cfg.beta()
    order = np.argsort(-np.abs(beta), kind="stable")
    out: list[Record] = []
    for q in range(int(params["q_max"]) + 1):
        S = order[:q]
        _, fm = init_simple_regression(ds.X, ds.y, S, 1.0)
        z = beta - fm.F @ (ds.X @ beta)
        parts = interpolant_excess_bias(ds.X, beta, fm.F)
        out.append((q, "expected_init_distance", expected_init_distance(beta, S, cfg.n)))
        out.append((q, "init_distance", float(z @ z)))
        out.append((q, "null_init_distance", parts.norm_V2z))
    return out


RUNNERS: dict[str, Callable[[dict[str, Any], int, int], list[Record]]] = {
    "subset_sweep": run_subset_sweep,
    "df_limit": run_df_limit,
    "ridge_df": run_ridge_df,
    "cp_vs_errr": run_cp_vs_errr,
    "weight_limit": run_weight_limit,
    "spline_ratio": run_spline_ratio,
    "local_constant": run_local_constant,
    "gd_single_theta": run_gd_single_theta,
    "gd_q_sweep": run_gd_q_sweep,
    "sq_norm_by_q": run_sq_norm_by_q,
}


_SUBSET_50 = dict(n=50, d=120, mean_kind="linear", beta_kind="poly_decay", kappa=5.0, beta_norm2=10.0)
_GD = dict(n=20, p=60, mean_kind="linear", beta_kind="poly_decay", kappa=5.0, beta_norm2=10.0)

REGISTRY: dict[str, Scenario] = {
    s.name: s
    for s in [
        Scenario(
            "double_descent_fig1",
            "subset_sweep",
            "double descent of test error in subset size; df_R against df_F (introductory figure)",
            "p",
            200,
            200,
            dict(n=20, d=100, beta_kind="inverse_index", beta_norm2=10.0, p_min=1,
                 criteria=["err_test", "err_train", "df_random", "df_fixed"]),
            ("err_test", "err_train", "df_random", "df_fixed"),
        ),
        Scenario(
            "double_descent_fold",
            "subset_sweep",
            "test error plotted against df_R folds the double descent into two U-shapes",
            "p",
            100,
            100,
            dict(n=20, d=100, beta_kind="inverse_index", beta_norm2=10.0, p_min=1,
                 criteria=["err_test", "df_random"]),
            ("err_test", "df_random"),
        ),
        Scenario(
            "ridge_df",
            "ridge_df",
            "ridge df_R and df_F against the penalty, n = 20 with p = 10 and p = 80",
            "lambda",
            50,
            50,
            dict(n=20, p_list=[10, 80], log10_lambda_min=-3.0, log10_lambda_max=3.0, n_lambda=25),
            ("df_random@p10", "df_fixed@p10", "df_random@p80", "df_fixed@p80"),
        ),
        Scenario(
            "df_limit_equicorrelated",
            "df_limit",
            "least-squares df_R along random orderings against the equicorrelated approximation",
            "p",
            100,
            100,
            dict(n=20, d=100, rho=0.5),
            ("df_random", "df_fixed", "df_approx"),
        ),
        Scenario(
            "cp_vs_errr",
            "cp_vs_errr",
            "optimal model fraction of C_p versus the df_R-based criterion in a stylized sparse model",
            "alpha",
            1,
            1,
            dict(n=100, eta_list=[1.5, 2.0, 3.0, 5.0], alpha_min=0.05, alpha_max=5.0, n_alpha=100),
            ("gamma_F@eta*", "gamma_R@eta*"),
        ),
        Scenario(
            "delta_comparison",
            "subset_sweep",
            "excess-bias estimates (raw, positive part, smooth) against the true excess bias",
            "p",
            500,
            500,
            dict(_SUBSET_50, criteria=["delta_hat", "delta_plus", "delta_plusplus", "excess_bias"]),
            ("delta_hat", "delta_plus", "delta_plusplus", "excess_bias"),
        ),
        Scenario(
            "estimator_comparison",
            "subset_sweep",
            "Random-X error estimators, relative MSE and selection histograms (kappa = 5)",
            "p",
            500,
            500,
            dict(_SUBSET_50, criteria=["err_test", "loocv", "err_hat", "err_hat_plus", "err_hat_plusplus", "delta_hat"]),
            ("err_test", "loocv", "err_hat", "err_hat_plus", "err_hat_plusplus", "delta_hat"),
        ),
        Scenario(
            "selection_kfold",
            "subset_sweep",
            "selection histograms including 5-fold cross-validation",
            "p",
            200,
            500,
            dict(_SUBSET_50, criteria=["err_test", "loocv", "err_hat_plus", "kfold_cv"], cv_k=5),
            ("err_test", "loocv", "err_hat_plus", "kfold_cv"),
        ),
        Scenario(
            "gd_single_theta",
            "gd_single_theta",
            "gradient-descent interpolant started from a single shrunken coefficient, swept over theta",
            "theta",
            200,
            500,
            dict(_GD, variables=[1, 5, 20, 60], n_theta=11),
            ("df_random@x*", "excess_bias@x*", "err_test@x*"),
        ),
        Scenario(
            "gd_q_sweep",
            "gd_q_sweep",
            "gradient-descent interpolants as the initialization subset grows (prescient and random)",
            "q",
            200,
            500,
            dict(_GD, q_max=20),
            ("df_random@*", "excess_bias@*", "err_test@*"),
        ),
        Scenario(
            "sq_norm_by_q",
            "sq_norm_by_q",
            "expected and realized distance of the start from the truth along the prescient sequence",
            "q",
            200,
            500,
            dict(_GD, q_max=20),
            ("expected_init_distance", "init_distance", "null_init_distance"),
        ),
        Scenario(
            "weight_table1",
            "weight_limit",
            "large-n df_R/n of the four weighted interpolation schemes (table of limits)",
            "kernel",
            50,
            50,
            dict(n=2000, kernels=["constant", "linear", "quadratic", "cosine"], n_draws=2000),
            ("df_ratio",),
        ),
        Scenario(
            "spline_table2",
            "spline_ratio",
            "df_R/n of interpolating splines of odd degree on 21 equispaced points (table of ratios)",
            "degree",
            1,
            1,
            dict(n=21, degrees=[1, 3, 5, 7, 9, 11], n_draws=10_000),
            ("df_ratio",),
        ),
        Scenario(
            "local_constant_bandwidth",
            "local_constant",
            "df_R and df_F of the local constant smoother against the bandwidth, n = 11",
            "omega",
            1,
            1,
            dict(n=11, omega_min=0.5, omega_max=12.0, n_omega=116, n_draws=10_000),
            ("df_random", "df_fixed", "df_closed"),
        ),
    ]
}


def get_scenario(name: str) -> Scenario:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; valid names: {', '.join(sorted(REGISTRY))}") from None


def scenario_from_dict(spec: dict[str, Any]) -> Scenario:
    """Build a scenario from a config mapping, starting from a registered one if ``base`` is given."""
    spec = dict(spec)
    base = spec.pop("base", None)
    if base is not None:
        sc = get_scenario(base)
        fields = {k: spec.pop(k) for k in list(spec) if k in ("name", "anchor", "sweep", "replicates", "master_seed")}
        params = spec.pop("params", {})
        if spec:
            raise ConfigError(f"unknown scenario keys {sorted(spec)}")
        sc = replace(sc, **fields)
        return replace(sc, params={**sc.params, **params})
    required = {"name", "runner", "replicates"}
    missing = required - set(spec)
    if missing:
        raise ConfigError(f"inline scenario is missing {sorted(missing)}")
    if spec["runner"] not in RUNNERS:
        raise ConfigError(f"unknown runner {spec['runner']!r}; valid: {sorted(RUNNERS)}")
    replicates = int(spec["replicates"])
    return Scenario(
        name=str(spec["name"]),
        runner=str(spec["runner"]),
        anchor=str(spec.get("anchor", "")),
        sweep=str(spec.get("sweep", "")),
        replicates=replicates,
        full_replicates=int(spec.get("full_replicates", replicates)),
        params=dict(spec.get("params", {})),
        outputs=tuple(spec.get("outputs", ())),
        master_seed=int(spec.get("master_seed", 0)),
    )


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    """Long records ``(scenario, replicate, sweep_value, metric, value)`` and their summary."""

    scenario: Scenario
    long: list[tuple[str, int, Any, str, float]]
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def summary(self) -> list[tuple[str, Any, str, float, float, float, int]]:
        return summarize(self.long)

    def values(self, metric: str) -> dict[Any, dict[int, float]]:
        """``{sweep_value: {replicate: value}}`` for one metric."""
        out: dict[Any, dict[int, float]] = {}
        for _, r, sv, m, v in self.long:
            if m == metric:
                out.setdefault(sv, {})[r] = v
        return out

    def mean(self, metric: str, sweep_value: Any) -> float:
        for _, sv, m, mean, *_ in self.summary:
            if m == metric and sv == sweep_value:
                return mean
        raise KeyError((metric, sweep_value))

    def summary_row(self, metric: str, sweep_value: Any) -> dict[str, Any]:
        for row in self.summary:
            if row[2] == metric and row[1] == sweep_value:
                return dict(zip(SUMMARY_COLUMNS, row))
        raise KeyError((metric, sweep_value))


def summarize(long: Iterable[tuple[str, int, Any, str, float]]) -> list[tuple[str, Any, str, float, float, float, int]]:
    """Mean, sd, s.e. and count per ``(sweep_value, metric)`` over finite values.

    Groups appear in order of first occurrence; values are reduced in the
    given (replicate) order with compensated summation.
    """
    groups: dict[tuple[str, Any, str], list[float]] = {}
    for sc, _, sv, m, v in long:
        if m == FAILED:
            continue
        groups.setdefault((sc, sv, m), [])
        if math.isfinite(v):
            groups[(sc, sv, m)].append(float(v))
    rows = []
    for (sc, sv, m), vals in groups.items():
        k = len(vals)
        if k == 0:
            rows.append((sc, sv, m, math.nan, math.nan, math.nan, 0))
            continue
        mean = math.fsum(vals) / k
        if k > 1:
            sd = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (k - 1))
            se = sd / math.sqrt(k)
        else:
            sd = se = math.nan
        rows.append((sc, sv, m, mean, sd, se, k))
    return rows


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if v == int(v) and abs(v) < 1e15:
            return repr(v)
        return f"{v:.17g}"
    return str(v)


def _parse_value(text: str) -> Any:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def _read_replicate(path: Path) -> list[Record]:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(_parse_value(sv), m, float(v)) for sv, m, v in reader]


def version_string() -> str:
    """``<version>`` plus ``+g<commit>`` when run from a git checkout."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        out = ""
    return f"{__version__}+g{out}" if out else __version__


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def run_replicate(scenario: Scenario, r: int) -> tuple[list[Record], str | None]:
    """Run one replicate; numerical failures come back as a message instead of raising."""
    runner = RUNNERS[scenario.runner]
    try:
        with np.errstate(all="ignore"):
            return runner(scenario.params, r, scenario.master_seed), None
    except (PredDFError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return [], f"{type(exc).__name__}: {exc}"


def _run_one(args: tuple[Scenario, int]) -> tuple[int, list[Record], str | None]:
    scenario, r = args
    recs, err = run_replicate(scenario, r)
    return r, recs, err


def run_scenario(
    scenario: Scenario | str,
    out_dir: str | Path | None = None,
    workers: int = 1,
    resume: bool = True,
    overrides: dict[str, Any] | None = None,
) -> ExperimentResult:
    """Run every replicate of ``scenario`` and optionally write its output tree.

    With ``out_dir`` the layout is ``<out_dir>/<name>/long.csv``,
    ``summary.csv``, ``meta`` (JSON) and ``replicates/`` (one CSV per
    replicate, reused on the next run when ``resume`` is set and the scenario
    fingerprint is unchanged). ``overrides`` is only echoed into ``meta``;
    apply changes beforehand with :meth:`Scenario.with_overrides`.
    """
    sc = get_scenario(scenario) if isinstance(scenario, str) else scenario
    if sc.runner not in RUNNERS:
        raise ConfigError(f"unknown runner {sc.runner!r}")
    if workers < 1:
        raise ConfigError("workers must be positive")
    root = rep_dir = None
    cached: dict[int, list[Record]] = {}
    if out_dir is not None:
        root = Path(out_dir) / sc.name
        rep_dir = root / "replicates"
        stamp = root / "fingerprint"
        if rep_dir.exists() and (not resume or not stamp.exists() or stamp.read_text() != sc.fingerprint()):
            shutil.rmtree(rep_dir)
        rep_dir.mkdir(parents=True, exist_ok=True)
        stamp.write_text(sc.fingerprint())
        for r in range(sc.replicates):
            path = rep_dir / f"rep_{r:05d}.csv"
            if path.exists():
                cached[r] = _read_replicate(path)
    todo = [r for r in range(sc.replicates) if r not in cached]
    results: dict[int, list[Record]] = dict(cached)
    failures: dict[int, str] = {}

    def store(r: int, recs: list[Record], err: str | None) -> None:
        if err is not None:
            failures[r] = err
            recs = [("", FAILED, 1.0)]
        results[r] = recs
        if rep_dir is not None and err is None:
            _write_rows(rep_dir / f"rep_{r:05d}.csv", ("sweep_value", "metric", "value"), recs)

    if workers == 1 or len(todo) <= 1:
        for r in todo:
            store(*_run_one((sc, r)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for r, recs, err in pool.map(_run_one, [(sc, r) for r in todo], chunksize=max(1, len(todo) // (4 * workers))):
                store(r, recs, err)

    long = [(sc.name, r, sv, m, float(v)) for r in range(sc.replicates) for sv, m, v in results[r]]
    result = ExperimentResult(sc, long, failures)
    if root is not None:
        _write_rows(root / "long.csv", LONG_COLUMNS, long)
        _write_rows(root / "summary.csv", SUMMARY_COLUMNS, result.summary)
        meta = {
            "scenario": sc.echo(),
            "master_seed": sc.master_seed,
            "replicates": sc.replicates,
            "version": version_string(),
            "overrides": overrides or {},
            "failures": {str(k): v for k, v in sorted(failures.items())},
        }
        (root / "meta").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return result


def load_result(path: str | Path) -> ExperimentResult:
    """Read back ``long.csv`` and ``meta`` written by :func:`run_scenario`."""
    root = Path(path)
    meta = json.loads((root / "meta").read_text())
    echo = meta["scenario"]
    echo["outputs"] = tuple(echo.get("outputs", ()))
    sc = Scenario(**echo)
    with (root / "long.csv").open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        long = [(s, int(r), _parse_value(sv), m, float(v)) for s, r, sv, m, v in reader]
    failures = {int(k): v for k, v in meta.get("failures", {}).items()}
    return ExperimentResult(sc, long, failures)


# ---------------------------------------------------------------------------
# Post-processing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelativeMSE:
    """Per-``p`` ratio of summed squared errors; ``flagged`` lists ``p`` with a zero denominator."""

    p_values: np.ndarray
    ratio: np.ndarray
    flagged: tuple[int, ...]


def relative_mse(
    result: ExperimentResult,
    estimator: str = "err_hat_plus",
    reference: str = "loocv",
    truth: str = "err_test",
    result_reference: ExperimentResult | None = None,
) -> RelativeMSE:
    """``sum_m (est_m - true_m)^2 / sum_m (ref_m - true_m)^2`` at each ``p != n``.

    Only replicates where all three quantities are defined enter both sums.
    ``result_reference`` supplies the reference estimator when it was run
    separately on matched replicates.
    """
    ref_res = result if result_reference is None else result_reference
    est = result.values(estimator)
    ref = ref_res.values(reference)
    tru = result.values(truth)
    n = int(result.scenario.params.get("n", -1))
    ps = sorted(p for p in est if p in ref and p in tru and p != n)
    ratios, flagged = [], []
    for p in ps:
        reps = sorted(set(est[p]) & set(ref[p]) & set(tru[p]))
        num = math.fsum((est[p][m] - tru[p][m]) ** 2 for m in reps)
        den = math.fsum((ref[p][m] - tru[p][m]) ** 2 for m in reps)
        if den == 0:
            flagged.append(int(p))
            ratios.append(math.nan)
        else:
            ratios.append(num / den)
    return RelativeMSE(np.asarray(ps), np.asarray(ratios), tuple(flagged))


@dataclass(frozen=True)
class SelectionHistogram:
    """Counts of ``p_hat - p_star`` per criterion and the mass with ``|offset| <= 2``."""

    counts: dict[str, dict[int, int]]
    near_mass: dict[str, float]
    n_reps: int


def _argmin_per_replicate(result: ExperimentResult, metric: str) -> dict[int, int]:
    best: dict[int, tuple[float, int]] = {}
    for _, r, p, m, v in result.long:
        if m != metric or not math.isfinite(v):
            continue
        cur = best.get(r)
        if cur is None or v < cur[0] or (v == cur[0] and p < cur[1]):
            best[r] = (v, int(p))
    return {r: p for r, (_, p) in best.items()}


def selection_histogram(
    result: ExperimentResult, criteria: Sequence[str], truth: str = "err_test"
) -> SelectionHistogram:
    """Histogram of selected minus oracle subset size over replicates."""
    p_star = _argmin_per_replicate(result, truth)
    if not p_star:
        raise ConfigError(f"result has no {truth!r} values")
    counts: dict[str, dict[int, int]] = {}
    near: dict[str, float] = {}
    for c in criteria:
        p_hat = _argmin_per_replicate(result, c)
        hist: dict[int, int] = {}
        for r, ps in p_star.items():
            if r in p_hat:
                off = p_hat[r] - ps
                hist[off] = hist.get(off, 0) + 1
        counts[c] = dict(sorted(hist.items()))
        total = sum(hist.values())
        near[c] = sum(v for k, v in hist.items() if abs(k) <= 2) / total if total else math.nan
    return SelectionHistogram(counts, near, len(p_star))


__all__ = [
    "ExperimentResult",
    "REGISTRY",
    "RUNNERS",
    "RelativeMSE",
    "Scenario",
    "SelectionHistogram",
    "get_scenario",
    "load_result",
    "relative_mse",
    "run_replicate",
    "run_scenario",
    "scenario_from_dict",
    "selection_histogram",
    "summarize",
    "version_string",
]
