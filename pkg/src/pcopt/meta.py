"""Hyperparameter selection and variance-reduction overlays: k-fold
cross-validation for the inverse temperature and the component count,
bootstrap bagging of fits, and stacking of fitted models."""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import models
from .errors import (
    CvFailureError,
    DegenerateOverlapError,
    DegenerateWeightsError,
    DimensionMismatchError,
    FitFailureError,
    InfeasibleFoldsError,
    InvalidInputError,
    ModelDegeneracyError,
    StackingFailureError,
)
from .estimation import boltzmann_weights, expected_objective_estimate
from .fitting import fit_mixture_em

_FIT_ERRORS = (FitFailureError, DegenerateWeightsError, ModelDegeneracyError)
_SCORE_ERRORS = _FIT_ERRORS + (DegenerateOverlapError,)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Partition of m samples into folds whose sizes differ by at most one."""

    fold_count: int
    assignments: np.ndarray

    def __post_init__(self):
        if self.fold_count < 2:
            raise InvalidInputError("fold_count must be >= 2")
        a = np.array(self.assignments, dtype=int)
        a.setflags(write=False)
        if a.ndim != 1 or a.size < self.fold_count:
            raise InfeasibleFoldsError("need at least one sample per fold")
        sizes = np.bincount(a, minlength=self.fold_count)
        if a.min() < 0 or a.max() >= self.fold_count:
            raise InvalidInputError("fold assignment out of range")
        if sizes.min() < 1 or sizes.max() - sizes.min() > 1:
            raise InvalidInputError("fold sizes must differ by at most one")
        object.__setattr__(self, "assignments", a)

    @property
    def size(self):
        return self.assignments.size

    def held_out(self, fold):
        if not 0 <= fold < self.fold_count:
            raise InvalidInputError(f"fold index {fold} out of range")
        return np.where(self.assignments == fold)[0]

    def held_in(self, fold):
        if not 0 <= fold < self.fold_count:
            raise InvalidInputError(f"fold index {fold} out of range")
        return np.where(self.assignments != fold)[0]


def make_folds(data, fold_count, rng):
    """Random equitable fold assignment for a SampleSet."""
    m = data.size
    if fold_count > m:
        raise InfeasibleFoldsError(f"cannot split {m} samples into {fold_count} folds")
    assignments = np.empty(m, dtype=int)
    assignments[rng.permutation(m)] = np.arange(m) % fold_count
    return FoldPlan(fold_count, assignments)


@dataclass(frozen=True)
class BetaGrid:
    """count equally spaced candidates in [k1 * center, k2 * center]."""

    center: float
    k1: float = 0.5
    k2: float = 3.0
    count: int = 5

    def __post_init__(self):
        if not (math.isfinite(self.center) and self.center > 0):
            raise InvalidInputError("grid center must be positive and finite")
        if not (0 < self.k1 < self.k2):
            raise InvalidInputError("need 0 < k1 < k2")
        if self.count < 1:
            raise InvalidInputError("count must be >= 1")

    def candidates(self):
        return np.linspace(self.k1 * self.center, self.k2 * self.center, self.count)


@dataclass(frozen=True, eq=False)
class CvResult:
    """Winner plus the full held-out score table (folds x candidates)."""

    chosen: float
    candidates: tuple
    fold_scores: np.ndarray
    mean_scores: np.ndarray


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """Convex combination of fitted mixtures; itself a mixture density."""

    members: tuple
    member_weights: np.ndarray

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise InvalidInputError("ensemble needs at least one member")
        if not all(isinstance(mem, models.MixtureModel) for mem in members):
            raise InvalidInputError("ensemble members must be MixtureModel")
        dim = members[0].dimension
        if any(mem.dimension != dim for mem in members):
            raise DimensionMismatchError("ensemble members have mixed dimensions")
        w = np.array(self.member_weights, dtype=float)
        if w.shape != (len(members),):
            raise DimensionMismatchError("one weight per member required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidInputError("member weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInputError("member weights must sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "member_weights", w)

    @property
    def dimension(self):
        return self.members[0].dimension

    def flatten(self):
        """Equivalent single MixtureModel (weighted union of components)."""
        comps = []
        weights = []
        for mem, mw in zip(self.members, self.member_weights):
            for comp, phi in zip(mem.components, mem.mixing_weights):
                comps.append(comp)
                weights.append(mw * phi)
        w = np.array(weights)
        return models.MixtureModel(tuple(comps), w / w.sum())


def _held_out_fit_scores(data, folds, fit_one):
    """Score one candidate: fit per fold, evaluate on the held-out part."""
    scores = np.full(folds.fold_count, math.inf)
    for fold in range(folds.fold_count):
        held_in = folds.held_in(fold)
        held_out = folds.held_out(fold)
        try:
            model = fit_one(held_in)
            scores[fold] = expected_objective_estimate(model, data.subset(held_out))
        except _SCORE_ERRORS:
            scores[fold] = math.inf
    return scores


def _finish_cv(candidates, fold_scores, what):
    mean_scores = fold_scores.mean(axis=0)
    if not np.any(np.isfinite(mean_scores)):
        raise CvFailureError(f"every {what} candidate scored infinite")
    chosen = candidates[int(np.argmin(mean_scores))]
    return CvResult(
        chosen=chosen,
        candidates=tuple(candidates),
        fold_scores=fold_scores,
        mean_scores=mean_scores,
    )


def cross_validate_beta(data, grid, folds, config, rng=None):
    """Pick the inverse temperature by k-fold held-out score.

    Each candidate is scored by fitting on the held-in part with
    Boltzmann weights at that candidate and evaluating the self-
    normalized expected objective on the held-out part; the candidate
    with the lowest fold-average wins, ties toward the smaller value.
    The caller refits on all data at the winner.
    """
    if folds.size != data.size:
        raise DimensionMismatchError("fold plan does not match sample count")
    candidates = grid.candidates()
    fold_scores = np.empty((folds.fold_count, candidates.size))
    for ci, beta in enumerate(candidates):
        w = boltzmann_weights(data, float(beta))

        def fit_one(held_in, w=w):
            child = rng.spawn(1)[0] if rng is not None else None
            report = fit_mixture_em(data.subset(held_in), w.subset(held_in), config, child)
            return report.model

        fold_scores[:, ci] = _held_out_fit_scores(data, folds, fit_one)
    return _finish_cv([float(b) for b in candidates], fold_scores, "beta")


def cross_validate_model(data, weights, candidate_counts, folds, config, rng=None):
    """Pick the mixture size by k-fold held-out score at fixed weights.

    Ties break toward the smaller component count.
    """
    if folds.size != data.size or weights.size != data.size:
        raise DimensionMismatchError("fold plan, weights, and data must share length")
    candidates = sorted({int(c) for c in candidate_counts})
    if not candidates or candidates[0] < 1:
        raise InvalidInputError("candidate component counts must be >= 1")
    fold_scores = np.empty((folds.fold_count, len(candidates)))
    for ci, M in enumerate(candidates):
        cfg = replace(config, component_count=M)

        def fit_one(held_in, cfg=cfg):
            child = rng.spawn(1)[0] if rng is not None else None
            report = fit_mixture_em(data.subset(held_in), weights.subset(held_in), cfg, child)
            return report.model

        fold_scores[:, ci] = _held_out_fit_scores(data, folds, fit_one)
    return _finish_cv(candidates, fold_scores, "component-count")


def bagging_fit(data, beta, resamples, config, rng):
    """Fit on bootstrap resamples and average the resulting densities.

    Each resample has the original size, drawn with replacement, and
    carries its proposal densities along. Members that fail to fit are
    dropped and the uniform weights renormalized over the survivors.
    """
    if resamples < 1:
        raise InvalidInputError("resamples must be >= 1")
    members = []
    for _ in range(resamples):
        idx = rng.integers(0, data.size, size=data.size)
        boot = data.subset(idx)
        child = rng.spawn(1)[0]
        try:
            w = boltzmann_weights(boot, beta)
            members.append(fit_mixture_em(boot, w, config, child).model)
        except _FIT_ERRORS:
            continue
    if not members:
        raise FitFailureError(f"all {resamples} bagging members failed to fit")
    weights = np.full(len(members), 1.0 / len(members))
    return EnsembleModel(tuple(members), weights)


def stacking_combine(members, data, folds):
    """Weight already-fitted models by softmin of held-out scores.

    Scores are fold-averages of the self-normalized expected objective.
    The softmin temperature is the mean standard error of those fold
    averages, so a score gap that dwarfs the fold noise concentrates
    essentially all weight on the better member; zero noise degenerates
    to an argmin with ties split uniformly.
    """
    members = tuple(members)
    if len(members) < 2:
        raise InvalidInputError("stacking needs at least two members")
    if folds.size != data.size:
        raise DimensionMismatchError("fold plan does not match sample count")
    k = folds.fold_count
    per_fold = np.full((len(members), k), math.inf)
    for j, member in enumerate(members):
        for fold in range(k):
            held_out = folds.held_out(fold)
            try:
                per_fold[j, fold] = expected_objective_estimate(member, data.subset(held_out))
            except DegenerateOverlapError:
                per_fold[j, fold] = math.inf
    scores = per_fold.mean(axis=1)
    finite = np.isfinite(scores)
    if not finite.any():
        raise StackingFailureError("no member could be scored on any fold")

    tau = float(np.mean([np.std(per_fold[j]) / math.sqrt(k) for j in np.where(finite)[0]]))
    weights = np.zeros(len(members))
    if tau > 0 and math.isfinite(tau):
        smin = scores[finite].min()
        gaps = np.where(finite, scores - smin, math.inf)
        weights = np.where(finite, np.exp(-gaps / tau), 0.0)
    else:
        smin = scores[finite].min()
        weights[finite & (scores == smin)] = 1.0
    return EnsembleModel(members, weights / weights.sum())
