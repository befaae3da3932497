import json

import numpy as np
import pytest

import pcopt
from pcopt import IterationRecord, RunConfig, RunTrace, SampleSet
from pcopt import optimizer as opt
from pcopt.errors import ConfigError, InvalidInputError


def tiny_config(**overrides):
    base = dict(
        objective="rosenbrock",
        samples_per_iteration=8,
        iterations=3,
        beta_policy="fixed",
        model_policy="single-gaussian",
        diagnostic_sample_count=10,
        seed=3,
    )
    base.update(overrides)
    return RunConfig(**base)


def synthetic_trace(betas, seed=0):
    cfg = RunConfig(
        objective="rosenbrock",
        samples_per_iteration=1,
        iterations=len(betas),
        beta_policy="fixed",
        model_policy="single-gaussian",
        diagnostic_sample_count=10,
        seed=seed,
    )
    data = SampleSet(np.zeros((1, 2)), np.zeros(1), np.ones(1))
    records = tuple(
        IterationRecord(
            iteration=t + 1,
            beta=b,
            component_count=1,
            model_text="",
            fit_sample_count=1,
            cumulative_evaluations=t + 2,
            expected_objective=0.0,
            best_objective=0.0,
            samples=data,
        )
        for t, b in enumerate(betas)
    )
    return RunTrace(
        config=cfg,
        initial_samples=data,
        records=records,
        final_model_text="",
        wall_time_seconds=0.0,
    )


def test_run_config_validation():
    with pytest.raises(ConfigError):
        tiny_config(beta_policy="warp")
    with pytest.raises(ConfigError):
        tiny_config(model_policy="magic")
    with pytest.raises(ConfigError):
        tiny_config(model_policy="stacking", bagging_resamples=3)
    with pytest.raises(ConfigError):
        tiny_config(seed=-1)
    with pytest.raises(ConfigError):
        tiny_config(seed=1.5)
    with pytest.raises(ConfigError):
        tiny_config(iterations=0)
    with pytest.raises(ConfigError):
        tiny_config(samples_per_iteration=0)
    with pytest.raises(ConfigError):
        tiny_config(initial_beta=0.0)
    with pytest.raises(ConfigError):
        tiny_config(beta_policy="geometric", k_beta=1.0)
    with pytest.raises(ConfigError):
        tiny_config(model_policy="fixed-M", component_count=0)
    with pytest.raises(ConfigError):
        tiny_config(fold_count=1)
    with pytest.raises(ConfigError):
        tiny_config(diagnostic_sample_count=0)
    with pytest.raises(ConfigError):
        tiny_config(bounds=((1.0, -1.0), (0.0, 1.0)))
    with pytest.raises(ConfigError):
        tiny_config(bounds=((0.0, 1.0),))  # rosenbrock needs 2 pairs


def test_config_dict_round_trip():
    cfg = tiny_config(beta_policy="geometric", k_beta=1.3, bagging_resamples=2)
    d = pcopt.config_to_dict(cfg)
    assert pcopt.config_from_dict(d) == cfg
    assert pcopt.config_from_dict(json.loads(json.dumps(d))) == cfg


def test_config_from_dict_rejects_unknown_keys():
    d = pcopt.config_to_dict(tiny_config())
    d["mystery"] = 1
    with pytest.raises(ConfigError):
        pcopt.config_from_dict(d)
    d2 = pcopt.config_to_dict(tiny_config())
    d2["em"]["mystery"] = 1
    with pytest.raises(ConfigError):
        pcopt.config_from_dict(d2)
    with pytest.raises(ConfigError):
        pcopt.config_from_dict({"samples_per_iteration": 4, "iterations": 2})
    with pytest.raises(ConfigError):
        pcopt.config_from_dict([1, 2, 3])


def test_geometric_beta_update():
    assert pcopt.geometric_beta_update(1.0, 2.0) == 2.0
    assert pcopt.geometric_beta_update(0.5, 3.0) == 1.5
    beta = 0.1
    for _ in range(10):
        beta = pcopt.geometric_beta_update(beta, 1.5)
    assert beta == pytest.approx(0.1 * 1.5**10, rel=1e-12)
    with pytest.raises(InvalidInputError):
        pcopt.geometric_beta_update(0.0, 2.0)
    with pytest.raises(InvalidInputError):
        pcopt.geometric_beta_update(1.0, 0.0)
    with pytest.raises(InvalidInputError):
        pcopt.geometric_beta_update(float("nan"), 2.0)


def test_optimize_record_accounting():
    cfg = tiny_config()
    trace = pcopt.optimize(cfg)
    assert not trace.failed
    assert len(trace.records) == 3
    assert trace.initial_samples.size == 8
    # initial proposal is uniform over the default [-5, 5]^2 box
    assert np.allclose(trace.initial_samples.proposal_densities, 0.01, rtol=0, atol=0)
    for t, rec in enumerate(trace.records, start=1):
        assert rec.iteration == t
        assert rec.samples.size == 8
        # evaluation budget counts only optimization batches
        assert rec.cumulative_evaluations == 8 * (t + 1)
        # the fit sees everything accumulated before this iteration's draw
        assert rec.fit_sample_count == 8 * t
        assert rec.beta == cfg.initial_beta


def test_optimize_recorded_densities_match_recorded_model():
    trace = pcopt.optimize(tiny_config(iterations=2))
    for rec in trace.records:
        model = pcopt.model_from_text(rec.model_text)
        recomputed = pcopt.density(model, rec.samples.points)
        assert np.allclose(recomputed, rec.samples.proposal_densities, rtol=0, atol=1e-12)


def test_optimize_best_objective_is_running_minimum():
    trace = pcopt.optimize(tiny_config(iterations=4, seed=9))
    seen = list(trace.initial_samples.objective_values)
    for rec in trace.records:
        seen.extend(rec.samples.objective_values)
        assert rec.best_objective == min(seen)
    bests = [rec.best_objective for rec in trace.records]
    assert all(b2 <= b1 for b1, b2 in zip(bests, bests[1:]))


def test_optimize_geometric_and_fixed_beta_schedules():
    geo = pcopt.optimize(
        tiny_config(beta_policy="geometric", k_beta=1.5, initial_beta=0.2, iterations=4)
    )
    betas = [rec.beta for rec in geo.records]
    assert betas == pytest.approx([0.2 * 1.5**t for t in range(4)], rel=1e-12)
    assert all(b2 > b1 for b1, b2 in zip(betas, betas[1:]))

    fixed = pcopt.optimize(tiny_config(iterations=4))
    assert {rec.beta for rec in fixed.records} == {0.1}


def test_optimize_fresh_samples_only():
    trace = pcopt.optimize(tiny_config(fresh_samples_only=True, iterations=3))
    assert [rec.fit_sample_count for rec in trace.records] == [8, 8, 8]


def test_optimize_cv_policies_populate_reports():
    cfg = tiny_config(
        samples_per_iteration=12,
        beta_policy="cross-validate",
        model_policy="cv-model-select",
        max_components=2,
        fold_count=3,
        seed=11,
    )
    trace = pcopt.optimize(cfg)
    for rec in trace.records:
        assert rec.beta_cv is not None
        assert rec.model_cv is not None
        assert rec.beta == rec.beta_cv.chosen
        assert rec.component_count == rec.model_cv.chosen
        assert 1 <= rec.component_count <= 2

    plain = pcopt.optimize(tiny_config())
    assert all(rec.beta_cv is None and rec.model_cv is None for rec in plain.records)


def test_optimize_deterministic_under_seed():
    cfg = tiny_config(seed=21)
    a = pcopt.optimize(cfg)
    b = pcopt.optimize(cfg)
    assert pcopt.trace_to_json(a) == pcopt.trace_to_json(b)


def test_optimize_failure_produces_partial_trace():
    name = "optimizer-test-nan"
    if name not in pcopt.list_objectives():
        pcopt.register_objective(
            pcopt.ObjectiveSpec(name, 2),
            lambda x: np.full(len(x), np.nan),
        )
    trace = pcopt.optimize(tiny_config(objective=name))
    assert trace.failed
    assert trace.records == ()
    assert "non-finite" in trace.failure
    text = pcopt.trace_to_json(trace)
    back = pcopt.trace_from_json(text)
    assert back.failed and back.failure == trace.failure


def test_trial_seed_derivation():
    assert opt.trial_seed(7, 0) == opt.trial_seed(7, 0)
    seeds = {opt.trial_seed(7, i) for i in range(50)}
    assert len(seeds) == 50
    assert opt.trial_seed(7, 0) != opt.trial_seed(8, 0)


def test_run_ensemble_report_shape():
    cfg = tiny_config(seed=5)
    report = pcopt.run_ensemble(cfg, trials=3)
    assert report.trials == 3
    assert report.failed_trials == 0
    assert len(report.traces) == 3
    assert list(report.iterations) == [1, 2, 3]
    assert len(report.mean_expected_objective) == 3
    assert len(report.median_expected_objective) == 3
    assert len(report.median_best_objective) == 3
    assert len(report.ci95_halfwidth) == 3
    assert np.all(np.asarray(report.ci95_halfwidth) >= 0)
    with pytest.raises(InvalidInputError):
        pcopt.run_ensemble(cfg, trials=1)


def test_compare_ensembles_pairs_seeds():
    cfg_a = tiny_config(seed=5)
    cfg_b = tiny_config(seed=77)  # differs only in seed; pairing overrides it
    rep_a, rep_b = pcopt.compare_ensembles(cfg_a, cfg_b, trials=2)
    for ta, tb in zip(rep_a.traces, rep_b.traces):
        assert pcopt.trace_to_json(ta) == pcopt.trace_to_json(tb)
    with pytest.raises(ConfigError):
        pcopt.compare_ensembles(cfg_a, tiny_config(iterations=5), trials=2)


def test_fit_geometric_schedule_exact_recovery():
    traces = [
        synthetic_trace([2.0 * 3.0**t for t in range(1, 7)], seed=s) for s in range(2)
    ]
    fit = pcopt.fit_geometric_schedule(traces)
    assert fit.beta0_nonlinear == pytest.approx(2.0, rel=1e-9)
    assert fit.ratio_nonlinear == pytest.approx(3.0, rel=1e-9)
    assert fit.beta0_log == pytest.approx(2.0, rel=1e-9)
    assert fit.ratio_log == pytest.approx(3.0, rel=1e-9)


def test_fit_geometric_schedule_constant_betas():
    fit = pcopt.fit_geometric_schedule([synthetic_trace([0.7] * 5)])
    assert fit.ratio_log == pytest.approx(1.0, rel=1e-9)
    assert fit.ratio_nonlinear == pytest.approx(1.0, rel=1e-9)
    assert fit.beta0_log == pytest.approx(0.7, rel=1e-9)


def test_fit_geometric_schedule_log_fit_matches_least_squares():
    rng = np.random.default_rng(42)
    betas = [0.3 * 1.4**t * np.exp(rng.normal(0.0, 0.05)) for t in range(1, 9)]
    fit = pcopt.fit_geometric_schedule([synthetic_trace(betas)])
    ts = np.arange(1, 9, dtype=float)
    design = np.column_stack([np.ones_like(ts), ts])
    coef, *_ = np.linalg.lstsq(design, np.log(betas), rcond=None)
    assert fit.beta0_log == pytest.approx(np.exp(coef[0]), rel=1e-10)
    assert fit.ratio_log == pytest.approx(np.exp(coef[1]), rel=1e-10)


def test_fit_geometric_schedule_rejects_bad_traces():
    with pytest.raises(InvalidInputError):
        pcopt.fit_geometric_schedule([synthetic_trace([1.0])])
    with pytest.raises(InvalidInputError):
        pcopt.fit_geometric_schedule([synthetic_trace([1.0, -2.0])])
    with pytest.raises(InvalidInputError):
        pcopt.fit_geometric_schedule([])


def test_trace_json_round_trip():
    trace = pcopt.optimize(tiny_config(iterations=2))
    text = pcopt.trace_to_json(trace)
    assert "wall_time" not in text
    back = pcopt.trace_from_json(text)
    assert back.wall_time_seconds == 0.0
    assert pcopt.trace_to_json(back) == text
    assert back.config == trace.config
    assert len(back.records) == len(trace.records)
    for ra, rb in zip(back.records, trace.records):
        assert ra.beta == rb.beta
        assert ra.expected_objective == rb.expected_objective
        assert np.array_equal(ra.samples.points, rb.samples.points)

    broken = json.loads(text)
    broken["format"] = "bogus/9"
    with pytest.raises(InvalidInputError):
        pcopt.trace_from_json(json.dumps(broken))


def test_iterations_csv_exact_values():
    trace = pcopt.optimize(tiny_config(iterations=2))
    lines = opt.iterations_csv(trace).splitlines()
    assert lines[0] == "iter,beta,M,evals,expected_G,best_G"
    assert len(lines) == 3
    for rec, line in zip(trace.records, lines[1:]):
        cells = line.split(",")
        assert int(cells[0]) == rec.iteration
        assert float(cells[1]) == rec.beta  # repr round trip is exact
        assert int(cells[2]) == rec.component_count
        assert int(cells[3]) == rec.cumulative_evaluations
        assert float(cells[4]) == rec.expected_objective
        assert float(cells[5]) == rec.best_objective


def test_aggregate_and_compare_csv():
    cfg = tiny_config(seed=5)
    report = pcopt.run_ensemble(cfg, trials=2)
    agg = opt.aggregate_csv(report).splitlines()
    assert agg[0] == "iter,mean_expected_G,ci95_halfwidth"
    assert len(agg) == 4

    rep_a, rep_b = pcopt.compare_ensembles(cfg, cfg, trials=2)
    cmp_lines = opt.compare_csv(rep_a, rep_b).splitlines()
    assert cmp_lines[0] == (
        "iter,mean_expected_G_a,ci95_halfwidth_a,"
        "mean_expected_G_b,ci95_halfwidth_b,delta_mean_expected_G"
    )
    for line in cmp_lines[1:]:
        assert line.split(",")[-1] == "0.0"


def test_write_run_outputs(tmp_path):
    trace = pcopt.optimize(tiny_config(iterations=2))
    trace_path, csv_path = opt.write_run_outputs(trace, tmp_path)
    assert trace_path.exists() and csv_path.exists()
    back = pcopt.trace_from_json(trace_path.read_text())
    assert back.config == trace.config
    assert csv_path.read_text().splitlines()[0] == "iter,beta,M,evals,expected_G,best_G"
