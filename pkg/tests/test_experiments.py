import json
import math

import numpy as np
import pytest

from preddf.errors import ConfigError
from preddf.experiments import (
    FAILED,
    REGISTRY,
    RUNNERS,
    ExperimentResult,
    get_scenario,
    load_result,
    relative_mse,
    run_scenario,
    scenario_from_dict,
    selection_histogram,
    summarize,
)


def small_sweep(**params):
    base = dict(n=12, d=20, kappa=5.0, beta_kind="poly_decay", criteria=["err_test", "loocv", "err_hat_plus"])
    base.update(params)
    return scenario_from_dict({"name": "small_sweep", "runner": "subset_sweep", "replicates": 6, "params": base})


def test_registry_scenarios_name_an_anchor_and_a_runner():
    expected = {
        "double_descent_fig1", "double_descent_fold", "ridge_df", "df_limit_equicorrelated", "cp_vs_errr",
        "delta_comparison", "estimator_comparison", "selection_kfold", "gd_single_theta", "gd_q_sweep",
        "sq_norm_by_q", "weight_table1", "spline_table2", "local_constant_bandwidth",
    }
    assert expected <= set(REGISTRY)
    for sc in REGISTRY.values():
        assert sc.anchor
        assert sc.runner in RUNNERS
        assert 1 <= sc.replicates <= sc.full_replicates


def test_unknown_scenario_lists_valid_names():
    with pytest.raises(ConfigError, match="double_descent_fig1"):
        get_scenario("no_such_scenario")


def test_overrides_change_seed_reps_and_params():
    sc = get_scenario("gd_q_sweep")
    o = sc.with_overrides(replicates=3, seed=9, q_max=4)
    assert (o.replicates, o.master_seed, o.params["q_max"]) == (3, 9, 4)
    assert sc.with_overrides(full_scale=True).replicates == sc.full_replicates
    assert o.fingerprint() != sc.fingerprint()
    with pytest.raises(ConfigError):
        sc.with_overrides(bogus=1)
    with pytest.raises(ConfigError):
        sc.with_overrides(replicates=0)


def test_worker_count_does_not_change_output(tmp_path):
    sc = small_sweep()
    run_scenario(sc, tmp_path / "a", workers=1)
    run_scenario(sc, tmp_path / "b", workers=2)
    for name in ("long.csv", "summary.csv"):
        assert (tmp_path / "a" / sc.name / name).read_bytes() == (tmp_path / "b" / sc.name / name).read_bytes()


def test_seed_changes_output():
    a = run_scenario(small_sweep())
    b = run_scenario(small_sweep().with_overrides(seed=1))
    assert a.long != b.long


def test_resume_reuses_replicates_and_fingerprint_invalidates(tmp_path):
    sc = small_sweep()
    run_scenario(sc, tmp_path)
    rep = tmp_path / sc.name / "replicates" / "rep_00000.csv"
    # a tampered cache file is picked up on resume, proving it was reused
    rows = rep.read_text().splitlines()
    sv, metric, _ = rows[1].split(",")
    rep.write_text("\n".join([rows[0], f"{sv},{metric},123.5", *rows[2:]]) + "\n")
    resumed = run_scenario(sc, tmp_path)
    assert resumed.values(metric)[int(sv)][0] == 123.5
    fresh = run_scenario(sc, tmp_path, resume=False)
    assert fresh.values(metric)[int(sv)][0] != 123.5
    changed = sc.with_overrides(seed=3)
    rep.write_text("\n".join([rows[0], f"{sv},{metric},123.5", *rows[2:]]) + "\n")
    other = run_scenario(changed, tmp_path)
    assert other.values(metric)[int(sv)][0] != 123.5


def test_meta_records_version_seed_and_overrides(tmp_path):
    sc = small_sweep().with_overrides(replicates=2, seed=4)
    run_scenario(sc, tmp_path, overrides={"reps": 2, "seed": 4})
    meta = json.loads((tmp_path / sc.name / "meta").read_text())
    assert meta["master_seed"] == 4
    assert meta["replicates"] == 2
    assert meta["overrides"] == {"reps": 2, "seed": 4}
    assert meta["version"]
    assert meta["scenario"]["params"]["n"] == 12


def test_load_result_round_trips(tmp_path):
    sc = small_sweep()
    res = run_scenario(sc, tmp_path)
    back = load_result(tmp_path / sc.name)
    assert back.scenario == res.scenario
    assert back.long == res.long


def test_summary_is_derived_from_long_records():
    res = run_scenario(small_sweep())
    for _, sv, m, mean, sd, se, k in res.summary:
        vals = list(res.values(m)[sv].values())
        assert k == len(vals)
        assert mean == pytest.approx(np.mean(vals), rel=1e-12)
        if k > 1:
            assert sd == pytest.approx(np.std(vals, ddof=1), rel=1e-10)
            assert se == pytest.approx(sd / math.sqrt(k), rel=1e-12)


def test_summarize_skips_failures_and_nonfinite():
    long = [("s", 0, 1, "m", 2.0), ("s", 1, 1, "m", math.nan), ("s", 2, "", FAILED, 1.0), ("s", 3, 1, "m", 4.0)]
    (row,) = summarize(long)
    assert row[3] == 3.0 and row[6] == 2


def test_relative_mse_of_an_estimator_against_itself_is_one():
    res = run_scenario(small_sweep())
    rm = relative_mse(res, estimator="loocv", reference="loocv")
    assert 12 not in rm.p_values
    assert np.allclose(rm.ratio, 1.0)


def test_relative_mse_flags_zero_denominator():
    res = run_scenario(small_sweep())
    rm = relative_mse(res, estimator="loocv", reference="err_test")
    assert set(rm.flagged) == set(int(p) for p in rm.p_values)
    assert np.all(np.isnan(rm.ratio))


def test_selection_histogram_counts_every_replicate():
    res = run_scenario(small_sweep())
    h = selection_histogram(res, ["err_test", "loocv", "err_hat_plus"])
    assert h.n_reps == 6
    assert h.counts["err_test"] == {0: 6}
    assert h.near_mass["err_test"] == 1.0
    for c in ("loocv", "err_hat_plus"):
        assert sum(h.counts[c].values()) == 6


def test_failed_replicates_are_recorded(tmp_path):
    sc = get_scenario("gd_single_theta").with_overrides(replicates=2, variables=[100], n_theta=2)
    res = run_scenario(sc, tmp_path)
    assert set(res.failures) == {0, 1}
    assert all(rec[3] == FAILED for rec in res.long)
    assert res.summary == []
    meta = json.loads((tmp_path / sc.name / "meta").read_text())
    assert set(meta["failures"]) == {"0", "1"}


def test_scenario_from_dict_base_and_inline():
    sc = scenario_from_dict({"base": "gd_q_sweep", "replicates": 3, "params": {"q_max": 2}})
    assert sc.runner == "gd_q_sweep" and sc.replicates == 3 and sc.params["q_max"] == 2
    assert sc.params["p"] == 60
    with pytest.raises(ConfigError):
        scenario_from_dict({"base": "gd_q_sweep", "runner": "ridge_df"})
    with pytest.raises(ConfigError):
        scenario_from_dict({"name": "x", "runner": "nope", "replicates": 1})
    with pytest.raises(ConfigError):
        scenario_from_dict({"name": "x", "runner": "ridge_df"})


def test_small_runners_emit_declared_metrics():
    res = run_scenario(get_scenario("sq_norm_by_q").with_overrides(replicates=2, q_max=3))
    assert {m for *_, m, _ in res.long} == set(get_scenario("sq_norm_by_q").outputs)
    ridge = run_scenario(get_scenario("ridge_df").with_overrides(replicates=1, n_lambda=3))
    assert {m for *_, m, _ in ridge.long} == set(get_scenario("ridge_df").outputs)


def test_result_accessors():
    res = ExperimentResult(get_scenario("ridge_df"), [("ridge_df", 0, 1.0, "a", 2.0), ("ridge_df", 1, 1.0, "a", 4.0)])
    assert res.mean("a", 1.0) == 3.0
    assert res.summary_row("a", 1.0)["n_reps"] == 2
    with pytest.raises(KeyError):
        res.mean("b", 1.0)
