"""Weighted maximum-likelihood fitting of the sampling distribution.

The objective throughout is the weighted negative log likelihood
-sum_i s_i log q(x_i), minimized in closed form for a single Gaussian
and by weighted EM for mixtures. EM never increases the objective except
immediately after a degeneracy repair (covariance floor or component
reseed), which is counted in the returned report.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from . import models
from .errors import (
    DegenerateWeightsError,
    DimensionMismatchError,
    FitFailureError,
    InvalidInputError,
    ModelDegeneracyError,
)

# Relative size of the automatic covariance floor: 1e-6 * trace(cov)/n of
# the weighted data covariance, with an absolute fallback for data that
# carries no spread at all.
AUTO_FLOOR_FRACTION = 1e-6
AUTO_FLOOR_MIN = 1e-12


@dataclass(frozen=True)
class EmConfig:
    """Knobs for fit_mixture_em.

    covariance_floor=None derives the floor from the weighted data
    covariance at fit time; an explicit value must be positive.
    nll_tolerance acts on the weight-normalized objective (weights
    rescaled to sum to 1), so it is insensitive to the overall weight
    scale.
    """

    component_count: int = 1
    max_iterations: int = 100
    nll_tolerance: float = 1e-8
    restarts: int = 4
    covariance_floor: float | None = None

    def __post_init__(self):
        if self.component_count < 1:
            raise InvalidInputError("component_count must be >= 1")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if not (self.nll_tolerance > 0):
            raise InvalidInputError("nll_tolerance must be > 0")
        if self.restarts < 1:
            raise InvalidInputError("restarts must be >= 1")
        if self.covariance_floor is not None and not (self.covariance_floor > 0):
            raise InvalidInputError("covariance_floor must be positive when given")


@dataclass(frozen=True, eq=False)
class FitReport:
    """Result of a mixture fit.

    nll_trajectories holds the per-restart objective values after each
    M-step (index 0 is the initialization). Objective values here use
    weights normalized to unit total mass, which keeps them finite at
    extreme weight scales; multiply by the raw total weight for the
    weighted_nll value on the caller's scale. Monotonicity and restart
    ranking are unaffected by the scale.
    """

    model: models.MixtureModel
    final_weighted_nll: float
    iterations_used: int
    restart_index: int
    degeneracies_repaired: int
    nll_trajectories: tuple


def _check_lengths(data, weights):
    if weights.size != data.size:
        raise DimensionMismatchError(
            f"weight vector length {weights.size} does not match sample count {data.size}"
        )


def _prepare_weights(data, weights):
    """Weights normalized to unit total mass via a stable max shift."""
    _check_lengths(data, weights)
    s = weights.shifted_weights()
    total = float(s.sum())
    if not math.isfinite(total) or total <= 0:
        raise DegenerateWeightsError("total sample weight is zero or non-finite")
    return np.ascontiguousarray(s / total)


def _resolve_floor(cov, explicit):
    if explicit is not None:
        if not (explicit > 0):
            raise InvalidInputError("covariance_floor must be positive")
        return float(explicit)
    auto = AUTO_FLOOR_FRACTION * float(np.trace(cov)) / cov.shape[0]
    return max(auto, AUTO_FLOOR_MIN)


def _apply_floor(cov, floor):
    """Add floor*I when the smallest eigenvalue is below the floor."""
    if not np.all(np.isfinite(cov)):
        raise FitFailureError("weighted covariance is non-finite")
    evmin = float(np.linalg.eigvalsh(cov)[0])
    if evmin < floor:
        return cov + floor * np.eye(cov.shape[0]), True
    return cov, False


def weighted_nll(model, data, weights):
    """-sum_i s_i log q(x_i) with raw weights s_i = exp(log_weights[i]).

    Zero-weight samples contribute nothing even where q vanishes; a
    positively weighted sample with q = 0 makes the objective +inf (an
    infinite-objective signal, not an exception).
    """
    _check_lengths(data, weights)
    log_q = models.log_density(model, data.points)
    with np.errstate(over="ignore", invalid="ignore"):
        s = np.exp(weights.log_weights)
        terms = np.where(s > 0, -s * log_q, 0.0)
    terms = np.where(np.isnan(terms), math.inf, terms)
    return float(terms.sum())


def fit_gaussian_closed_form(data, weights, covariance_floor=None):
    """Exact minimizer of the weighted NLL over a single Gaussian.

    Weighted mean and weighted population covariance, then the floor:
    add floor*I when the smallest eigenvalue falls below the floor.
    """
    s_norm = _prepare_weights(data, weights)
    try:
        mu, cov = kernels.weighted_mean_cov(data.points, s_norm)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
            raise FitFailureError("weighted moments are non-finite")
        floor = _resolve_floor(cov, covariance_floor)
        cov, _ = _apply_floor(cov, floor)
        return models.GaussianParams(mu, cov)
    except np.linalg.LinAlgError as exc:
        raise FitFailureError(f"linear algebra failure in closed-form fit: {exc}") from exc


def fit_mixture_em(data, weights, config, rng=None):
    """Weighted EM over Gaussian mixtures with restarts.

    Initialization per restart: component means drawn from the data with
    probability proportional to weight, covariances set to the floored
    global weighted covariance, uniform mixing weights. Components whose
    responsibility mass drops below 1e-12 of the total weight are
    reseeded at the highest-weight datum. The best restart by final
    objective wins; if every restart diverges the fit fails.
    """
    s_norm = _prepare_weights(data, weights)
    points = data.points
    M = config.component_count
    if M > 1 and rng is None:
        raise InvalidInputError("fit_mixture_em needs an rng when component_count > 1")
    try:
        mu_g, cov_g = kernels.weighted_mean_cov(points, s_norm)
        if not (np.all(np.isfinite(mu_g)) and np.all(np.isfinite(cov_g))):
            raise FitFailureError("weighted moments are non-finite")
        floor = _resolve_floor(cov_g, config.covariance_floor)
        cov0, _ = _apply_floor(cov_g, floor)
        covs0 = np.ascontiguousarray(np.repeat(cov0[None], M, axis=0))
        phis0 = np.full(M, 1.0 / M)
        reseed_idx = int(np.argmax(s_norm))
        positive = int(np.count_nonzero(s_norm > 0))

        runs = []
        n_restarts = 1 if M == 1 else config.restarts
        for _ in range(n_restarts):
            if M == 1:
                means0 = np.ascontiguousarray(mu_g[None])
            else:
                idx = rng.choice(data.size, size=M, replace=positive < M, p=s_norm)
                means0 = np.ascontiguousarray(points[idx])
            runs.append(
                kernels.em_run(
                    points,
                    s_norm,
                    means0,
                    covs0,
                    phis0,
                    int(config.max_iterations),
                    float(config.nll_tolerance),
                    float(floor),
                    reseed_idx,
                )
            )
    except np.linalg.LinAlgError as exc:
        raise FitFailureError(f"linear algebra failure during EM: {exc}") from exc

    finals = [run[3][-1] for run in runs]
    best = min(range(len(runs)), key=lambda r: finals[r] if math.isfinite(finals[r]) else math.inf)
    if not math.isfinite(finals[best]):
        raise FitFailureError(f"all {len(runs)} EM restarts diverged")

    means, covs, phis, traj, n_msteps, repairs = runs[best]
    phis = phis / phis.sum()
    try:
        comps = tuple(models.GaussianParams(means[j], covs[j]) for j in range(M))
        model = models.MixtureModel(comps, phis)
    except ModelDegeneracyError as exc:
        raise FitFailureError(f"EM produced a degenerate component: {exc}") from exc

    return FitReport(
        model=model,
        final_weighted_nll=float(finals[best]),
        iterations_used=int(n_msteps),
        restart_index=int(best),
        degeneracies_repaired=int(repairs),
        nll_trajectories=tuple(np.array(run[3]) for run in runs),
    )


def em_responsibilities(model, x):
    """Posterior component memberships q(z = j | x); rows sum to 1."""
    pts, single = models._as_points(model.dimension, x)
    means, chols, logdets, log_phis = model._packed
    comp = kernels.logpdf_components(pts, means, chols, logdets) + log_phis[None, :]
    mx = comp.max(axis=1)
    if np.any(np.isneginf(mx)):
        raise ModelDegeneracyError("model has zero density at a query point")
    w = np.exp(comp - mx[:, None])
    resp = w / w.sum(axis=1, keepdims=True)
    return resp[0] if single else resp
