"""The iterative optimizer and its run apparatus.

One run: draw a uniform batch over the search box, then repeatedly
reweight the accumulated samples with Boltzmann factors, refit the
sampling distribution, and draw the next batch from it. The inverse
temperature follows one of three policies (cross-validated, geometric,
fixed); the model is a single Gaussian, a fixed-size mixture, a
cross-validated mixture size, or a stacked combination, optionally
wrapped in bagging.

Traces are fully reproducible: identical config and seed give byte-
identical serialized traces. Wall time is therefore kept out of the
serialized form and only carried on the in-memory RunTrace.
"""

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from . import models
from .errors import ConfigError, InvalidInputError, PcoptError
from .estimation import (
    SampleSet,
    boltzmann_weights,
    concat_samples,
    expected_objective_estimate,
)
from .fitting import EmConfig, fit_gaussian_closed_form, fit_mixture_em
from .meta import (
    BetaGrid,
    CvResult,
    bagging_fit,
    cross_validate_beta,
    cross_validate_model,
    make_folds,
    stacking_combine,
)
from .objectives import EvaluationLedger, evaluate_batch, get_objective_spec

TRACE_FORMAT = "pcopt-trace/1"
BETA_POLICIES = ("cross-validate", "geometric", "fixed")
MODEL_POLICIES = ("single-gaussian", "fixed-M", "cv-model-select", "stacking")


@dataclass(frozen=True)
class GridSpec:
    """Relative beta grid: count points spanning [k1*beta, k2*beta]."""

    k1: float = 0.5
    k2: float = 3.0
    count: int = 5

    def __post_init__(self):
        if not (0 < self.k1 < self.k2):
            raise ConfigError("beta grid needs 0 < k1 < k2")
        if self.count < 1:
            raise ConfigError("beta grid count must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one optimization run."""

    objective: str
    samples_per_iteration: int
    iterations: int
    bounds: tuple | None = None
    initial_beta: float = 0.1
    beta_policy: str = "cross-validate"
    k_beta: float = 1.5
    beta_grid: GridSpec = field(default_factory=GridSpec)
    model_policy: str = "cv-model-select"
    component_count: int = 1
    max_components: int = 4
    bagging_resamples: int = 0
    fold_count: int = 5
    em: EmConfig = field(default_factory=EmConfig)
    diagnostic_sample_count: int = 1000
    fresh_samples_only: bool = False
    noise_stddev: float | None = None
    seed: int = 0

    def __post_init__(self):
        spec = get_objective_spec(self.objective)
        if self.bounds is None:
            bounds = ((-5.0, 5.0),) * spec.dimension
        else:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if len(bounds) != spec.dimension:
                raise ConfigError(
                    f"objective {self.objective!r} needs {spec.dimension} bound pairs, "
                    f"got {len(bounds)}"
                )
        for lo, hi in bounds:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigError("every bound must be finite with low < high")
        object.__setattr__(self, "bounds", bounds)
        if self.beta_policy not in BETA_POLICIES:
            raise ConfigError(f"beta_policy must be one of {BETA_POLICIES}")
        if self.model_policy not in MODEL_POLICIES:
            raise ConfigError(f"model_policy must be one of {MODEL_POLICIES}")
        if self.samples_per_iteration < 1 or self.iterations < 1:
            raise ConfigError("samples_per_iteration and iterations must be >= 1")
        if not (math.isfinite(self.initial_beta) and self.initial_beta > 0):
            raise ConfigError("initial_beta must be positive and finite")
        if self.beta_policy == "geometric" and not (
            math.isfinite(self.k_beta) and self.k_beta > 1
        ):
            raise ConfigError("geometric beta policy needs k_beta > 1")
        if self.component_count < 1 or self.max_components < 1:
            raise ConfigError("component counts must be >= 1")
        if self.model_policy == "stacking" and self.max_components < 2:
            raise ConfigError("stacking needs max_components >= 2")
        if self.bagging_resamples < 0:
            raise ConfigError("bagging_resamples must be >= 0")
        if self.model_policy == "stacking" and self.bagging_resamples > 0:
            raise ConfigError("bagging cannot wrap the stacking policy")
        if self.fold_count < 2:
            raise ConfigError("fold_count must be >= 2")
        if self.diagnostic_sample_count < 1:
            raise ConfigError("diagnostic_sample_count must be >= 1")
        if self.noise_stddev is not None and self.noise_stddev < 0:
            raise ConfigError("noise_stddev override must be >= 0")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")


_EM_KEYS = ("max_iterations", "nll_tolerance", "restarts", "covariance_floor")
_GRID_KEYS = ("k1", "k2", "count")
_TOP_KEYS = (
    "objective",
    "bounds",
    "samples_per_iteration",
    "iterations",
    "initial_beta",
    "beta_policy",
    "k_beta",
    "beta_grid",
    "model_policy",
    "component_count",
    "max_components",
    "bagging_resamples",
    "fold_count",
    "em",
    "diagnostic_sample_count",
    "fresh_samples_only",
    "noise_stddev",
    "seed",
)


def _reject_unknown(mapping, allowed, where):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def config_from_dict(raw):
    """Build a RunConfig from nested key-value data; unknown keys are errors."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a key-value mapping")
    _reject_unknown(raw, _TOP_KEYS, "config")
    for required in ("objective", "samples_per_iteration", "iterations"):
        if required not in raw:
            raise ConfigError(f"config is missing required key {required!r}")
    kwargs = dict(raw)
    if "em" in kwargs:
        em_raw = kwargs.pop("em")
        if not isinstance(em_raw, dict):
            raise ConfigError("em must be a key-value mapping")
        _reject_unknown(em_raw, _EM_KEYS, "em")
        kwargs["em"] = EmConfig(component_count=1, **em_raw)
    if "beta_grid" in kwargs:
        grid_raw = kwargs.pop("beta_grid")
        if not isinstance(grid_raw, dict):
            raise ConfigError("beta_grid must be a key-value mapping")
        _reject_unknown(grid_raw, _GRID_KEYS, "beta_grid")
        kwargs["beta_grid"] = GridSpec(**grid_raw)
    if kwargs.get("bounds") is not None:
        kwargs["bounds"] = tuple(tuple(pair) for pair in kwargs["bounds"])
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from None


def config_to_dict(cfg):
    """Echo a RunConfig as plain nested key-value data (round-trips)."""
    return {
        "objective": cfg.objective,
        "bounds": [list(pair) for pair in cfg.bounds],
        "samples_per_iteration": cfg.samples_per_iteration,
        "iterations": cfg.iterations,
        "initial_beta": cfg.initial_beta,
        "beta_policy": cfg.beta_policy,
        "k_beta": cfg.k_beta,
        "beta_grid": {"k1": cfg.beta_grid.k1, "k2": cfg.beta_grid.k2, "count": cfg.beta_grid.count},
        "model_policy": cfg.model_policy,
        "component_count": cfg.component_count,
        "max_components": cfg.max_components,
        "bagging_resamples": cfg.bagging_resamples,
        "fold_count": cfg.fold_count,
        "em": {
            "max_iterations": cfg.em.max_iterations,
            "nll_tolerance": cfg.em.nll_tolerance,
            "restarts": cfg.em.restarts,
            "covariance_floor": cfg.em.covariance_floor,
        },
        "diagnostic_sample_count": cfg.diagnostic_sample_count,
        "fresh_samples_only": cfg.fresh_samples_only,
        "noise_stddev": cfg.noise_stddev,
        "seed": cfg.seed,
    }


@dataclass(frozen=True, eq=False)
class IterationRecord:
    """Everything observable about one optimizer iteration."""

    iteration: int
    beta: float
    component_count: int
    model_text: str
    fit_sample_count: int
    cumulative_evaluations: int
    expected_objective: float
    best_objective: float
    samples: SampleSet
    beta_cv: CvResult | None = None
    model_cv: CvResult | None = None


@dataclass(frozen=True, eq=False)
class RunTrace:
    """Config echo, per-iteration records, final model, and timing."""

    config: RunConfig
    initial_samples: SampleSet
    records: tuple
    final_model_text: str | None
    wall_time_seconds: float
    failed: bool = False
    failure: str | None = None


def geometric_beta_update(beta, k_beta):
    """One step of the fixed multiplicative annealing schedule."""
    if not (math.isfinite(beta) and beta > 0):
        raise InvalidInputError("beta must be positive and finite")
    if not (math.isfinite(k_beta) and k_beta > 1):
        raise InvalidInputError("geometric update needs k_beta > 1")
    return float(beta * k_beta)


def _cv_component_count(config, last_m):
    """Mixture size used inside the beta cross-validation fits."""
    if config.model_policy == "fixed-M":
        return config.component_count
    if config.model_policy == "cv-model-select":
        return last_m
    return 1


def optimize(config):
    """Run the full optimization loop described by config.

    Returns a RunTrace; a run that hits an internal failure returns the
    partial trace with failed=True rather than raising.
    """
    t_start = time.perf_counter()
    spec = get_objective_spec(config.objective)
    if config.noise_stddev is not None:
        spec = replace(spec, noise_stddev=config.noise_stddev)
    rng = np.random.default_rng(config.seed)
    opt_ledger = EvaluationLedger()
    diag_ledger = EvaluationLedger()

    records = []
    failed = False
    failure = None
    initial_samples = None
    try:
        opt_ledger.start_iteration()
        init = models.uniform_initial_proposal(config.bounds, config.samples_per_iteration, rng)
        g0 = evaluate_batch(spec, init.points, rng, opt_ledger)
        data = SampleSet(init.points, g0, init.proposal_densities)
        initial_samples = data
        best_g = float(g0.min())
        beta = float(config.initial_beta)
        last_m = 1

        for t in range(1, config.iterations + 1):
            beta_cv = None
            model_cv = None
            if config.beta_policy == "cross-validate":
                folds = make_folds(data, config.fold_count, rng)
                grid = BetaGrid(
                    center=beta,
                    k1=config.beta_grid.k1,
                    k2=config.beta_grid.k2,
                    count=config.beta_grid.count,
                )
                cv_cfg = replace(config.em, component_count=_cv_component_count(config, last_m))
                beta_cv = cross_validate_beta(data, grid, folds, cv_cfg, rng)
                beta = float(beta_cv.chosen)

            w = boltzmann_weights(data, beta)
            if config.model_policy == "cv-model-select":
                folds = make_folds(data, config.fold_count, rng)
                model_cv = cross_validate_model(
                    data, w, range(1, config.max_components + 1), folds, config.em, rng
                )
                last_m = int(model_cv.chosen)

            if config.bagging_resamples > 0:
                chosen_m = {"single-gaussian": 1, "fixed-M": config.component_count}.get(
                    config.model_policy, last_m
                )
                fit_cfg = replace(config.em, component_count=chosen_m)
                model = bagging_fit(data, beta, config.bagging_resamples, fit_cfg, rng).flatten()
            elif config.model_policy == "single-gaussian":
                gauss = fit_gaussian_closed_form(data, w, config.em.covariance_floor)
                model = models.single_gaussian_mixture(gauss)
            elif config.model_policy == "stacking":
                members = []
                for m_count in range(1, config.max_components + 1):
                    fit_cfg = replace(config.em, component_count=m_count)
                    members.append(fit_mixture_em(data, w, fit_cfg, rng).model)
                folds = make_folds(data, config.fold_count, rng)
                model = stacking_combine(members, data, folds).flatten()
            else:
                chosen_m = (
                    config.component_count if config.model_policy == "fixed-M" else last_m
                )
                fit_cfg = replace(config.em, component_count=chosen_m)
                model = fit_mixture_em(data, w, fit_cfg, rng).model

            fit_count = data.size
            drawn = models.draw_samples(model, config.samples_per_iteration, rng)
            opt_ledger.start_iteration()
            g_new = evaluate_batch(spec, drawn.points, rng, opt_ledger)
            best_g = min(best_g, float(g_new.min()))
            batch = SampleSet(drawn.points, g_new, drawn.proposal_densities)
            data = batch if config.fresh_samples_only else concat_samples(data, batch)

            # Diagnostics go through their own ledger and never join the
            # fitting data. Drawing from the model itself makes the
            # self-normalized estimate collapse to a plain sample mean.
            diag_ledger.start_iteration()
            diag = models.draw_samples(model, config.diagnostic_sample_count, rng)
            diag_g = evaluate_batch(spec, diag.points, rng, diag_ledger)
            diag_set = SampleSet(diag.points, diag_g, diag.proposal_densities)
            expected = expected_objective_estimate(model, diag_set)

            records.append(
                IterationRecord(
                    iteration=t,
                    beta=beta,
                    component_count=model.component_count,
                    model_text=models.model_to_text(model),
                    fit_sample_count=fit_count,
                    cumulative_evaluations=opt_ledger.total_evaluations,
                    expected_objective=float(expected),
                    best_objective=best_g,
                    samples=batch,
                    beta_cv=beta_cv,
                    model_cv=model_cv,
                )
            )
            if config.beta_policy == "geometric":
                beta = geometric_beta_update(beta, config.k_beta)
    except PcoptError as exc:
        failed = True
        failure = f"{type(exc).__name__}: {exc}"

    return RunTrace(
        config=config,
        initial_samples=initial_samples,
        records=tuple(records),
        final_model_text=records[-1].model_text if records else None,
        wall_time_seconds=time.perf_counter() - t_start,
        failed=failed,
        failure=failure,
    )


@dataclass(frozen=True, eq=False)
class AggregateReport:
    """Per-iteration statistics over the successful trials of an ensemble."""

    iterations: np.ndarray
    mean_expected_objective: np.ndarray
    ci95_halfwidth: np.ndarray
    median_expected_objective: np.ndarray
    median_best_objective: np.ndarray
    trials: int
    failed_trials: int
    traces: tuple


def trial_seed(master_seed, index):
    """Stable per-trial seed derivation (shared across paired ensembles)."""
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1, np.uint64)[0])


def run_ensemble(config, trials):
    """Repeat a run over derived per-trial seeds and aggregate.

    Failed trials are excluded from the statistics and counted. The CI
    half-width is 1.96 * sd / sqrt(successful trials).
    """
    if trials < 2:
        raise InvalidInputError("an ensemble needs at least two trials")
    traces = []
    for i in range(trials):
        traces.append(optimize(replace(config, seed=trial_seed(config.seed, i))))
    ok = [tr for tr in traces if not tr.failed]
    if not ok:
        raise PcoptError(f"every trial failed; first failure: {traces[0].failure}")
    expected = np.array([[r.expected_objective for r in tr.records] for tr in ok])
    best = np.array([[r.best_objective for r in tr.records] for tr in ok])
    n_ok = len(ok)
    sd = expected.std(axis=0, ddof=1) if n_ok > 1 else np.zeros(expected.shape[1])
    return AggregateReport(
        iterations=np.arange(1, config.iterations + 1),
        mean_expected_objective=expected.mean(axis=0),
        ci95_halfwidth=1.96 * sd / math.sqrt(n_ok),
        median_expected_objective=np.median(expected, axis=0),
        median_best_objective=np.median(best, axis=0),
        trials=trials,
        failed_trials=trials - n_ok,
        traces=tuple(traces),
    )


def compare_ensembles(config_a, config_b, trials):
    """Paired ensembles: same trial seeds, equal budgets enforced."""
    if (
        config_a.iterations != config_b.iterations
        or config_a.samples_per_iteration != config_b.samples_per_iteration
    ):
        raise ConfigError(
            "compared configs must match in iterations and samples_per_iteration"
        )
    config_b = replace(config_b, seed=config_a.seed)
    return run_ensemble(config_a, trials), run_ensemble(config_b, trials)


@dataclass(frozen=True)
class GeometricScheduleFit:
    """Geometric-schedule parameters recovered two ways from traces."""

    beta0_nonlinear: float
    ratio_nonlinear: float
    beta0_log: float
    ratio_log: float


def fit_geometric_schedule(traces):
    """Fit beta_t = beta0 * ratio**t to the beta trajectories of traces.

    Returns both the direct nonlinear least-squares fit and the ordinary
    least-squares fit to log beta. All beta values must be positive
    (the log fit is always produced).
    """
    traces = list(traces)
    if not traces:
        raise InvalidInputError("schedule fit needs at least one trace")
    ts = []
    bs = []
    for tr in traces:
        if len(tr.records) < 2:
            raise InvalidInputError("each trace needs at least two iterations to fit")
        ts.extend(r.iteration for r in tr.records)
        bs.extend(r.beta for r in tr.records)
    t = np.asarray(ts, dtype=float)
    b = np.asarray(bs, dtype=float)
    if np.any(b <= 0) or not np.all(np.isfinite(b)):
        raise InvalidInputError("log-mode fit requires positive finite beta values")

    design = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(design, np.log(b), rcond=None)
    beta0_log, ratio_log = math.exp(coef[0]), math.exp(coef[1])

    def residuals(p):
        return p[0] * np.power(p[1], t) - b

    sol = least_squares(
        residuals,
        x0=np.array([beta0_log, ratio_log]),
        bounds=([1e-300, 1e-300], [np.inf, np.inf]),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    return GeometricScheduleFit(
        beta0_nonlinear=float(sol.x[0]),
        ratio_nonlinear=float(sol.x[1]),
        beta0_log=float(beta0_log),
        ratio_log=float(ratio_log),
    )


def _sample_rows(sample_set):
    rows = []
    for i in range(sample_set.size):
        row = [float(v) for v in sample_set.points[i]]
        row.append(float(sample_set.objective_values[i]))
        row.append(float(sample_set.proposal_densities[i]))
        rows.append(row)
    return rows


def _rows_to_samples(rows):
    arr = np.asarray(rows, dtype=float)
    return SampleSet(arr[:, :-2], arr[:, -2], arr[:, -1])


def _cv_to_dict(cv):
    if cv is None:
        return None
    return {
        "chosen": cv.chosen,
        "candidates": list(cv.candidates),
        "mean_scores": [float(v) for v in cv.mean_scores],
        "fold_scores": [[float(v) for v in row] for row in cv.fold_scores],
    }


def _cv_from_dict(doc):
    if doc is None:
        return None
    return CvResult(
        chosen=doc["chosen"],
        candidates=tuple(doc["candidates"]),
        fold_scores=np.asarray(doc["fold_scores"], dtype=float),
        mean_scores=np.asarray(doc["mean_scores"], dtype=float),
    )


def trace_to_json(trace):
    """Deterministic serialization; wall time is deliberately excluded."""
    doc = {
        "format": TRACE_FORMAT,
        "config": config_to_dict(trace.config),
        "failed": trace.failed,
        "failure": trace.failure,
        "initial_samples": _sample_rows(trace.initial_samples)
        if trace.initial_samples is not None
        else None,
        "iterations": [
            {
                "iteration": r.iteration,
                "beta": r.beta,
                "component_count": r.component_count,
                "model": r.model_text,
                "fit_sample_count": r.fit_sample_count,
                "cumulative_evaluations": r.cumulative_evaluations,
                "expected_objective": r.expected_objective,
                "best_objective": r.best_objective,
                "samples": _sample_rows(r.samples),
                "beta_cv": _cv_to_dict(r.beta_cv),
                "model_cv": _cv_to_dict(r.model_cv),
            }
            for r in trace.records
        ],
        "final_model": trace.final_model_text,
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def trace_from_json(text):
    """Rebuild a RunTrace from trace_to_json output (wall time reads as 0)."""
    doc = json.loads(text)
    if doc.get("format") != TRACE_FORMAT:
        raise InvalidInputError(f"unsupported trace format {doc.get('format')!r}")
    config = config_from_dict(doc["config"])
    records = []
    for r in doc["iterations"]:
        records.append(
            IterationRecord(
                iteration=r["iteration"],
                beta=r["beta"],
                component_count=r["component_count"],
                model_text=r["model"],
                fit_sample_count=r["fit_sample_count"],
                cumulative_evaluations=r["cumulative_evaluations"],
                expected_objective=r["expected_objective"],
                best_objective=r["best_objective"],
                samples=_rows_to_samples(r["samples"]),
                beta_cv=_cv_from_dict(r["beta_cv"]),
                model_cv=_cv_from_dict(r["model_cv"]),
            )
        )
    return RunTrace(
        config=config,
        initial_samples=_rows_to_samples(doc["initial_samples"])
        if doc["initial_samples"] is not None
        else None,
        records=tuple(records),
        final_model_text=doc["final_model"],
        wall_time_seconds=0.0,
        failed=doc["failed"],
        failure=doc["failure"],
    )


def iterations_csv(trace):
    """Columnar per-iteration summary for plotting."""
    lines = ["iter,beta,M,evals,expected_G,best_G"]
    for r in trace.records:
        lines.append(
            f"{r.iteration},{r.beta!r},{r.component_count},"
            f"{r.cumulative_evaluations},{r.expected_objective!r},{r.best_objective!r}"
        )
    return "\n".join(lines) + "\n"


def aggregate_csv(report):
    """Columnar per-iteration ensemble summary."""
    lines = ["iter,mean_expected_G,ci95_halfwidth"]
    for i in range(len(report.iterations)):
        lines.append(
            f"{int(report.iterations[i])},"
            f"{float(report.mean_expected_objective[i])!r},"
            f"{float(report.ci95_halfwidth[i])!r}"
        )
    return "\n".join(lines) + "\n"


def compare_csv(report_a, report_b):
    """Side-by-side ensemble summaries plus their per-iteration deltas."""
    lines = [
        "iter,mean_expected_G_a,ci95_halfwidth_a,mean_expected_G_b,"
        "ci95_halfwidth_b,delta_mean_expected_G"
    ]
    for i in range(len(report_a.iterations)):
        ma = float(report_a.mean_expected_objective[i])
        mb = float(report_b.mean_expected_objective[i])
        lines.append(
            f"{int(report_a.iterations[i])},{ma!r},"
            f"{float(report_a.ci95_halfwidth[i])!r},{mb!r},"
            f"{float(report_b.ci95_halfwidth[i])!r},{ma - mb!r}"
        )
    return "\n".join(lines) + "\n"


def write_run_outputs(trace, out_dir):
    """Write trace.json and iterations.csv; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.json"
    csv_path = out / "iterations.csv"
    trace_path.write_text(trace_to_json(trace))
    csv_path.write_text(iterations_csv(trace))
    return trace_path, csv_path
