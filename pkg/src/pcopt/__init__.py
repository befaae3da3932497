"""Sampling-based black-box optimization over fitted mixture models."""

from ._kernels import BACKEND, NUMBA_AVAILABLE, select_backend
from .errors import (
    ConfigError,
    CvFailureError,
    DegenerateOverlapError,
    DegenerateWeightsError,
    DimensionMismatchError,
    EmptySampleError,
    EvaluationFailureError,
    FitFailureError,
    InfeasibleFoldsError,
    InsufficientSampleError,
    InvalidDomainError,
    InvalidInputError,
    ModelDegeneracyError,
    PcoptError,
    StackingFailureError,
    UndefinedDensityError,
    UnknownObjectiveError,
)
from .estimation import (
    SampleSet,
    WeightVector,
    bias_variance_decompose,
    boltzmann_weights,
    concat_samples,
    expected_objective_estimate,
    importance_estimate,
    optimal_importance_density,
    plugin_argmin,
    samples_from_text,
    samples_to_text,
)
from .fitting import (
    EmConfig,
    FitReport,
    em_responsibilities,
    fit_gaussian_closed_form,
    fit_mixture_em,
    weighted_nll,
)
from .meta import (
    BetaGrid,
    CvResult,
    EnsembleModel,
    FoldPlan,
    bagging_fit,
    cross_validate_beta,
    cross_validate_model,
    make_folds,
    stacking_combine,
)
from .models import (
    DrawnSamples,
    GaussianParams,
    MixtureModel,
    density,
    draw_samples,
    log_density,
    model_from_text,
    model_to_text,
    single_gaussian_mixture,
    uniform_initial_proposal,
)
from .objectives import (
    EvaluationLedger,
    ObjectiveSpec,
    evaluate,
    evaluate_batch,
    get_objective_spec,
    list_objectives,
    register_objective,
    rosenbrock,
    woods,
)
from .optimizer import (
    AggregateReport,
    GeometricScheduleFit,
    GridSpec,
    IterationRecord,
    RunConfig,
    RunTrace,
    compare_ensembles,
    config_from_dict,
    config_to_dict,
    fit_geometric_schedule,
    geometric_beta_update,
    optimize,
    run_ensemble,
    trace_from_json,
    trace_to_json,
)

__version__ = "0.1.0"
