"""Command-line interface: ``preddf {dof,risk,sweep,gd,experiment,ingest}``.

Settings resolve as built-in defaults, then the ``--config`` YAML file, then
flags. The file is a mapping with an optional ``generator`` section (dataset
recipe) and one section per command whose keys are the long flag names with
underscores. Exit codes: 0 success, 2 input or configuration error, 3
numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .core_model import (
    CovKind,
    Dataset,
    GenConfig,
    generate_dataset,
    make_covariance,
    parse_index_range,
    read_design_csv,
    rng_stream,
    write_dataset_csv,
)
from .dof import df_random, subset_dof, uniform_sampler
from .errors import ConditioningError, ConfigError, FitError
from .experiments import REGISTRY, get_scenario, run_scenario, scenario_from_dict
from .gd_interp import (
    GDConfig,
    gd_limit,
    gd_run,
    init_simple_regression,
    interpolant_df,
    interpolant_excess_bias,
    max_step,
)
from .procedures import OLS, GDInterp, LocalConstant, MinNorm, Ridge, Spline, WeightInterp, fit
from .risk import risk_report
from .selection import ALL_CRITERIA, PipelineConfig, criterion_sweep, ingest_csv, order_variables, select

OUT_ENV = "PREDDF_OUT"

GENERATOR_DEFAULTS: dict[str, Any] = {
    "n": 50,
    "d": 120,
    "mean_kind": "linear",
    "beta_kind": "poly_decay",
    "kappa": 1.0,
    "beta_norm2": 10.0,
    "rho": 0.0,
    "sigma_eps2": 1.0,
    "seed": 0,
    "replicate": None,
}

DATA_DEFAULTS: dict[str, Any] = {"input": None, "sigma": None, "format": "text"}

COMMAND_DEFAULTS: dict[str, dict[str, Any]] = {
    "dof": {
        "proc": "ols",
        "subset": None,
        "lam": None,
        "kernel": "linear",
        "omega": None,
        "a": 0.0,
        "b": 1.0,
        "s": 2,
        "init_subset": None,
        "theta": 1.0,
        "draws": 10_000,
        "mc_seed": 0,
    },
    "risk": {"proc": "ols", "subset": None, "lam": None, "draws": 10_000, "mc_seed": 0},
    "sweep": {
        "order": "prescient",
        "perm": None,
        "criteria": None,
        "select": None,
        "output": None,
        "test": None,
        "cv_k": 5,
        "cv_seed": 0,
        "order_seed": 0,
    },
    "gd": {
        "init": "zero",
        "init_subset": None,
        "theta": 1.0,
        "alpha": None,
        "iters": 0,
        "coef_out": None,
    },
    "experiment": {
        "name": None,
        "file": None,
        "reps": None,
        "seed": None,
        "workers": 1,
        "out": None,
        "full_scale": False,
        "param": None,
        "no_resume": False,
    },
    "ingest": {
        "path": None,
        "target": None,
        "train_size": None,
        "test_size": 0,
        "features": None,
        "strata": None,
        "transform": None,
        "impute": "none",
        "group": None,
        "seed": 0,
        "out": None,
        "criteria": None,
        "select": None,
    },
}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def resolve(defaults: dict[str, Any], section: dict[str, Any] | None, args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults < file section < flags that were given."""
    section = section or {}
    unknown = set(section) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    out = dict(defaults)
    out.update(section)
    for key in defaults:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            out[key] = v
    return out


def output_root(flag: str | None) -> Path:
    return Path(flag or os.environ.get(OUT_ENV) or "out")


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


def _parse_sigma(text: str | None, d: int, fallback: np.ndarray | None) -> np.ndarray:
    if text is None:
        return np.eye(d) if fallback is None else fallback
    if text == "identity":
        return np.eye(d)
    if text.startswith("equicorrelated:"):
        try:
            rho = float(text.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad equicorrelation level in {text!r}") from None
        return make_covariance(CovKind.equicorrelated(rho), d)
    try:
        M = np.loadtxt(text, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read Sigma from {text}: {exc}") from None
    if M.shape != (d, d):
        raise ConfigError(f"Sigma in {text} has shape {M.shape}, expected {(d, d)}")
    return M


def build_dataset(data: dict[str, Any], gen: dict[str, Any]) -> tuple[Dataset, GenConfig | None]:
    """Load ``--input`` or draw from the generator settings."""
    if data["input"] is not None:
        X, y, _ = read_design_csv(data["input"])
        if y is None:
            y = np.zeros(X.shape[0])
        Sigma = _parse_sigma(data["sigma"], X.shape[1], None)
        return Dataset(X, y, None, float(gen["sigma_eps2"]), Sigma), None
    rho = float(gen["rho"])
    cfg = GenConfig(
        n=int(gen["n"]),
        d=int(gen["d"]),
        mean_kind=gen["mean_kind"],
        beta_kind=gen["beta_kind"],
        kappa=float(gen["kappa"]),
        beta_norm2=float(gen["beta_norm2"]),
        cov_kind=CovKind.equicorrelated(rho) if rho else CovKind.identity(),
        sigma_eps2=float(gen["sigma_eps2"]),
        seed=int(gen["seed"]),
    )
    rep = gen["replicate"]
    ds = generate_dataset(cfg, replicate=None if rep is None else int(rep))
    if data["sigma"] is not None:
        ds = Dataset(ds.X, ds.y, ds.mu, ds.sigma_eps2, _parse_sigma(data["sigma"], ds.d, None), ds.mean_fn)
    return ds, cfg


def _subset(text: str | None, ds: Dataset) -> list[int] | None:
    if text is None:
        return None
    return parse_index_range(str(text), n=ds.n, d=ds.d)


def _emit(payload: dict[str, Any], fmt: str, stream=None) -> None:
    stream = stream or sys.stdout
    if fmt == "json":
        stream.write(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    else:
        for k, v in payload.items():
            if isinstance(v, dict):
                for k2, v2 in v.items():
                    stream.write(f"{k}.{k2}={_text(v2)}\n")
            else:
                stream.write(f"{k}={_text(v)}\n")


def _text(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _json_default(v: Any) -> Any:
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _fit_procedure(opts: dict[str, Any], ds: Dataset) -> Any:
    proc = opts["proc"]
    S = _subset(opts.get("subset"), ds)
    subset = None if S is None else tuple(S)
    if proc == "ols":
        return fit(OLS(subset), ds.X)
    if proc == "min_norm":
        return fit(MinNorm(subset), ds.X)
    if proc == "ridge":
        if opts.get("lam") is None:
            raise ConfigError("ridge needs --lambda")
        return fit(Ridge(float(opts["lam"]), subset), ds.X)
    raise ConfigError(f"unknown procedure {proc!r}")


def cmd_dof(opts: dict[str, Any], data: dict[str, Any], gen: dict[str, Any]) -> dict[str, Any]:
    ds, _ = build_dataset(data, gen)
    proc = opts["proc"]
    if proc in ("ols", "min_norm"):
        S = _subset(opts["subset"], ds)
        return subset_dof(ds.X, S, ds.Sigma).as_dict()
    if proc == "ridge":
        hs = _fit_procedure(opts, ds)
        return df_random(hs, Sigma=ds.Sigma, mode="analytic").as_dict()
    if proc == "gd":
        F = _init_matrix(opts, ds)
        provenance = "zero" if opts["init_subset"] is None else "simple_regression"
        hs = fit(GDInterp(F, provenance), ds.X)
        return df_random(hs, Sigma=ds.Sigma, mode="analytic").as_dict()
    a, b = float(opts["a"]), float(opts["b"])
    if proc == "spline":
        a, b = 0.0, 1.0
    if data["input"] is not None:
        x = np.sort(ds.X[:, 0])
    else:
        # generated one-dimensional designs are equispaced on [a, b]
        x = np.linspace(a, b, int(gen["n"]))
    if proc == "weight":
        spec = WeightInterp(opts["kernel"], a, b)
    elif proc == "local_constant":
        if opts["omega"] is None:
            raise ConfigError("local_constant needs --omega")
        spec = LocalConstant(float(opts["omega"]), a, b)
    elif proc == "spline":
        spec = Spline(int(opts["s"]))
    else:
        raise ConfigError(f"unknown procedure {proc!r}")
    hs = fit(spec, x)
    rep = df_random(
        hs, sampler=uniform_sampler(a, b), mode="monte_carlo", n_draws=int(opts["draws"]), rng=rng_stream(int(opts["mc_seed"]))
    )
    return rep.as_dict()


def _init_matrix(opts: dict[str, Any], ds: Dataset) -> np.ndarray:
    S = _subset(opts.get("init_subset"), ds)
    if S is None:
        return np.zeros((ds.d, ds.n))
    _, fm = init_simple_regression(ds.X, ds.y, S, float(opts["theta"]))
    return fm.F


def cmd_risk(opts: dict[str, Any], data: dict[str, Any], gen: dict[str, Any]) -> dict[str, Any]:
    if data["input"] is not None and read_design_csv(data["input"])[1] is None:
        raise ConfigError(f"{data['input']}: risk needs a 'y' column")
    ds, cfg = build_dataset(data, gen)
    hs = _fit_procedure(opts, ds)
    report = risk_report(
        hs,
        ds.y,
        ds.sigma_eps2,
        Sigma=ds.Sigma,
        truth=ds if cfg is not None else None,
        n_draws=int(opts["draws"]),
        rng=rng_stream(int(opts["mc_seed"])),
    )
    return report.as_dict()


def cmd_sweep(opts: dict[str, Any], data: dict[str, Any], gen: dict[str, Any]) -> tuple[str, int | None]:
    ds, cfg = build_dataset(data, gen)
    strategy = opts["order"]
    perm = None
    if opts["perm"] is not None:
        perm = parse_index_range(str(opts["perm"]), n=ds.n, d=ds.d)
    beta = cfg.beta() if cfg is not None else None
    if strategy == "prescient" and beta is None:
        raise ConfigError("prescient ordering needs generated data (true coefficients)")
    order = order_variables(ds.X, ds.y, strategy, beta=beta, seed=int(opts["order_seed"]), perm=perm)
    criteria = _criteria(opts["criteria"])
    test = None
    if opts["test"] is not None:
        Xt, yt, _ = read_design_csv(opts["test"])
        if yt is None:
            raise ConfigError(f"{opts['test']}: no 'y' column")
        test = Dataset(Xt, yt, None, ds.sigma_eps2, ds.Sigma)
    table = criterion_sweep(ds, order, criteria=criteria, cv_k=int(opts["cv_k"]), cv_seed=int(opts["cv_seed"]), test=test)
    text = table.to_csv()
    p_hat = select(table, opts["select"]) if opts["select"] else None
    return text, p_hat


def _criteria(text: str | Sequence[str] | None) -> tuple[str, ...]:
    if text is None:
        return tuple(c for c in ALL_CRITERIA if c != "kfold_cv")
    items = text.split(",") if isinstance(text, str) else list(text)
    out = tuple(c.strip() for c in items if c.strip())
    bad = [c for c in out if c not in ALL_CRITERIA]
    if bad:
        raise ConfigError(f"unknown criteria {bad}; choose from {list(ALL_CRITERIA)}")
    return out


def cmd_gd(opts: dict[str, Any], data: dict[str, Any], gen: dict[str, Any]) -> tuple[dict[str, Any], np.ndarray]:
    ds, cfg = build_dataset(data, gen)
    if opts["init"] not in ("zero", "simple_regression"):
        raise ConfigError(f"unknown init {opts['init']!r}")
    if opts["init"] == "simple_regression" and opts["init_subset"] is None:
        raise ConfigError("simple_regression init needs --init-subset")
    F = _init_matrix(opts, ds) if opts["init"] == "simple_regression" else np.zeros((ds.d, ds.n))
    beta0 = F @ ds.y
    beta_inf = gd_limit(ds.X, ds.y, beta0)
    out: dict[str, Any] = {
        "max_step": max_step(ds.X),
        "df_random": interpolant_df(ds.X, F, ds.Sigma),
        "df_random_minnorm": interpolant_df(ds.X, np.zeros_like(F), ds.Sigma),
        "interpolation_residual": float(np.linalg.norm(ds.X @ beta_inf - ds.y) / max(np.linalg.norm(ds.y), 1e-300)),
    }
    if cfg is not None and cfg.mean_kind == "linear" and np.allclose(ds.Sigma, np.eye(ds.d)):
        parts = interpolant_excess_bias(ds.X, cfg.beta(), F)
        out["excess_bias"] = parts.total
        out["excess_bias_minnorm"] = parts.minnorm_part
        out["norm_V2beta"] = parts.norm_V2beta
        out["norm_V2z"] = parts.norm_V2z
    if int(opts["iters"]) > 0:
        alpha = float(opts["alpha"]) if opts["alpha"] is not None else 0.5 * max_step(ds.X)
        beta_k, k, converged = gd_run(ds.X, ds.y, GDConfig(alpha=alpha, max_iter=int(opts["iters"]), beta0=beta0))
        out["iterations"] = k
        out["converged"] = converged
        out["distance_to_limit"] = float(np.linalg.norm(beta_k - beta_inf))
    return out, beta_inf


def _parse_params(items: Sequence[str] | None) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def cmd_experiment(opts: dict[str, Any], scenario_cfg: dict[str, Any] | None) -> tuple[Any, Path]:
    if opts["file"] is not None:
        spec = load_config(opts["file"])
        sc = scenario_from_dict(spec.get("scenario", spec))
    elif scenario_cfg:
        sc = scenario_from_dict(scenario_cfg)
    elif opts["name"] is not None:
        sc = get_scenario(opts["name"])
    else:
        raise ConfigError(f"name a scenario or use --list; valid names: {', '.join(sorted(REGISTRY))}")
    params = _parse_params(opts["param"]) if not isinstance(opts["param"], dict) else opts["param"]
    overrides = {k: opts[k] for k in ("reps", "seed", "full_scale") if opts[k] not in (None, False)}
    overrides.update({f"param.{k}": v for k, v in params.items()})
    sc = sc.with_overrides(replicates=opts["reps"], seed=opts["seed"], full_scale=bool(opts["full_scale"]), **params)
    root = output_root(opts["out"])
    result = run_scenario(sc, root, workers=int(opts["workers"]), resume=not opts["no_resume"], overrides=overrides)
    return result, root / sc.name


def cmd_ingest(opts: dict[str, Any]) -> dict[str, Any]:
    for key in ("path", "target", "train_size"):
        if opts[key] is None:
            raise ConfigError(f"ingest needs {key.replace('_', '-')}")
    transforms = opts["transform"] or {}
    if not isinstance(transforms, dict):
        parsed = {}
        for item in transforms:
            if "=" not in item:
                raise ConfigError(f"--transform expects column=kind, got {item!r}")
            col, kind = item.split("=", 1)
            parsed[col.strip()] = kind.strip()
        transforms = parsed
    features = opts["features"]
    if isinstance(features, str):
        features = tuple(f.strip() for f in features.split(",") if f.strip())
    cfg = PipelineConfig(
        target=opts["target"],
        train_size=int(opts["train_size"]),
        test_size=int(opts["test_size"]),
        features=None if features is None else tuple(features),
        strata_column=opts["strata"],
        transforms=transforms,
        imputation=opts["impute"],
        group_column=opts["group"],
        seed=int(opts["seed"]),
    )
    train, test, aux = ingest_csv(opts["path"], cfg)
    out: dict[str, Any] = {
        "n_train": train.n,
        "n_test": test.n,
        "n_aux": aux.n,
        "d": train.d,
        "sigma_eps2_hat": train.sigma_eps2,
    }
    if opts["out"] is not None:
        root = Path(opts["out"])
        root.mkdir(parents=True, exist_ok=True)
        write_dataset_csv(train, root / "train.csv")
        if test.n:
            write_dataset_csv(test, root / "test.csv")
        write_dataset_csv(aux, root / "aux.csv")
        np.savetxt(root / "sigma.csv", train.Sigma, delimiter=",", fmt="%.17g")
        meta = {"pipeline": {k: v for k, v in opts.items()}, "summary": out, "version": __version__}
        (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    if opts["criteria"] or opts["select"]:
        order = order_variables(train.X, train.y, "forward_rss")
        table = criterion_sweep(
            train, order, criteria=_criteria(opts["criteria"]), test=test if test.n else None
        )
        if opts["out"] is not None:
            table.to_csv(Path(opts["out"]) / "sweep.csv")
        if opts["select"]:
            out["p_hat"] = select(table, opts["select"])
            out["order"] = ",".join(str(j + 1) for j in order[: out["p_hat"]])
    return out


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--input", help="CSV with columns x1..xd and optionally y")
    g.add_argument("--sigma", help="'identity', 'equicorrelated:RHO' or a CSV matrix file")
    g.add_argument("--n", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--mean-kind", dest="mean_kind", choices=["linear", "nonlinear_exp"])
    g.add_argument("--beta-kind", dest="beta_kind", choices=["poly_decay", "inverse_index"])
    g.add_argument("--kappa", type=float)
    g.add_argument("--beta-norm2", dest="beta_norm2", type=float)
    g.add_argument("--rho", type=float, help="equicorrelation of generated features")
    g.add_argument("--sigma-eps2", dest="sigma_eps2", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--replicate", type=int)
    p.add_argument("--format", choices=["text", "json"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="preddf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="YAML file with defaults (flags take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dof", help="degrees of freedom of one procedure")
    _add_data_flags(p)
    p.add_argument("--proc", choices=["ols", "min_norm", "ridge", "gd", "weight", "local_constant", "spline"])
    p.add_argument("--subset", help="1-based columns, e.g. 1..10 or 1..n")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--kernel", choices=["constant", "linear", "quadratic", "cosine"])
    p.add_argument("--omega", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--s", type=int, help="spline order; degree is 2s - 1")
    p.add_argument("--init-subset", dest="init_subset")
    p.add_argument("--theta", type=float)
    p.add_argument("--draws", type=int)
    p.add_argument("--mc-seed", dest="mc_seed", type=int)

    p = sub.add_parser("risk", help="training error, df and Random-X error estimates")
    _add_data_flags(p)
    p.add_argument("--proc", choices=["ols", "min_norm", "ridge"])
    p.add_argument("--subset")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--draws", type=int)
    p.add_argument("--mc-seed", dest="mc_seed", type=int)

    p = sub.add_parser("sweep", help="criteria along nested subsets")
    _add_data_flags(p)
    p.add_argument("--order", choices=["prescient", "forward_rss", "random", "given"])
    p.add_argument("--perm", help="1-based ordering for --order given")
    p.add_argument("--order-seed", dest="order_seed", type=int)
    p.add_argument("--criteria", help=f"comma list from {','.join(ALL_CRITERIA)}")
    p.add_argument("--select", choices=list(ALL_CRITERIA))
    p.add_argument("--output", help="write the CSV here instead of stdout")
    p.add_argument("--test", help="held-out CSV for err_test")
    p.add_argument("--cv-k", dest="cv_k", type=int)
    p.add_argument("--cv-seed", dest="cv_seed", type=int)

    p = sub.add_parser("gd", help="gradient-descent interpolant analysis")
    _add_data_flags(p)
    p.add_argument("--init", choices=["zero", "simple_regression"])
    p.add_argument("--init-subset", dest="init_subset")
    p.add_argument("--theta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--coef-out", dest="coef_out")

    p = sub.add_parser("experiment", help="run a registered or inline scenario")
    p.add_argument("name", nargs="?")
    p.add_argument("--file", help="YAML scenario definition")
    p.add_argument("--list", action="store_true", help="list registered scenarios")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./out)")
    p.add_argument("--full-scale", dest="full_scale", action="store_true")
    p.add_argument("--no-resume", dest="no_resume", action="store_true")
    p.add_argument("--param", action="append", help="override a scenario parameter, key=value")

    p = sub.add_parser("ingest", help="split, transform and center a CSV")
    p.add_argument("path", nargs="?")
    p.add_argument("--target")
    p.add_argument("--train-size", dest="train_size", type=int)
    p.add_argument("--test-size", dest="test_size", type=int)
    p.add_argument("--features", help="comma list; default all numeric columns")
    p.add_argument("--strata")
    p.add_argument("--transform", action="append", help="column=log|logit")
    p.add_argument("--impute", choices=["none", "group_median"])
    p.add_argument("--group")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--criteria")
    p.add_argument("--select", choices=list(ALL_CRITERIA))
    p.add_argument("--format", choices=["text", "json"])
    return parser


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    config = load_config(args.config)
    known = {"generator", "scenario", *COMMAND_DEFAULTS}
    unknown = set(config) - known
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    cmd = args.command
    opts = resolve(COMMAND_DEFAULTS[cmd], config.get(cmd), args)

    if cmd == "experiment":
        if args.list:
            for name in sorted(REGISTRY):
                stdout.write(f"{name}\t{REGISTRY[name].anchor}\n")
            return 0
        _, path = cmd_experiment(opts, config.get("scenario"))
        stdout.write(f"{path / 'summary.csv'}\n")
        return 0
    if cmd == "ingest":
        fmt = getattr(args, "format", None) or "text"
        _emit(cmd_ingest(opts), fmt, stdout)
        return 0

    gen_section = config.get("generator") or {}
    data = resolve(DATA_DEFAULTS, {k: v for k, v in gen_section.items() if k in DATA_DEFAULTS}, args)
    gen = resolve(GENERATOR_DEFAULTS, {k: v for k, v in gen_section.items() if k not in DATA_DEFAULTS}, args)
    if cmd == "dof":
        _emit(cmd_dof(opts, data, gen), data["format"], stdout)
    elif cmd == "risk":
        _emit(cmd_risk(opts, data, gen), data["format"], stdout)
    elif cmd == "sweep":
        text, p_hat = cmd_sweep(opts, data, gen)
        if opts["output"]:
            Path(opts["output"]).write_text(text)
        else:
            stdout.write(text)
        if p_hat is not None:
            # keep stdout a clean CSV when the table goes there
            target = stdout if opts["output"] else sys.stderr
            target.write(f"p_hat={p_hat}\n")
    elif cmd == "gd":
        out, beta_inf = cmd_gd(opts, data, gen)
        if opts["coef_out"]:
            np.savetxt(opts["coef_out"], beta_inf, fmt="%.17g")
        _emit(out, data["format"], stdout)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(argv)
    except (ConfigError, FitError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (ConditioningError, ArithmeticError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
