"""Importance-sampling estimators and Boltzmann reweighting.

All weight arithmetic runs in log space with max-subtraction; raw
exponentials appear only after shifting.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import models
from .errors import (
    DegenerateOverlapError,
    DegenerateWeightsError,
    DimensionMismatchError,
    EmptySampleError,
    EvaluationFailureError,
    InsufficientSampleError,
    InvalidInputError,
    UndefinedDensityError,
)

SAMPLES_FORMAT = "pcopt-samples/1"


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Points with their objective values and generating densities.

    proposal_densities[i] is the density of whatever distribution sample
    i was actually drawn from, evaluated at that sample.
    """

    points: np.ndarray
    objective_values: np.ndarray
    proposal_densities: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, order="C")
        vals = np.array(self.objective_values, dtype=float)
        dens = np.array(self.proposal_densities, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidInputError("points must be a non-empty (m, n) array")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("points must be finite")
        m = pts.shape[0]
        if vals.shape != (m,) or dens.shape != (m,):
            raise DimensionMismatchError(
                "objective_values and proposal_densities must have one entry per point"
            )
        if not np.all(np.isfinite(dens)) or np.any(dens <= 0):
            raise InvalidInputError("proposal densities must be strictly positive and finite")
        for arr in (pts, vals, dens):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "objective_values", vals)
        object.__setattr__(self, "proposal_densities", dens)

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dimension(self):
        return self.points.shape[1]

    def subset(self, indices):
        idx = np.asarray(indices, dtype=int)
        return SampleSet(
            self.points[idx], self.objective_values[idx], self.proposal_densities[idx]
        )


def concat_samples(first, second):
    if first.dimension != second.dimension:
        raise DimensionMismatchError("cannot concatenate sample sets of different dimension")
    return SampleSet(
        np.vstack([first.points, second.points]),
        np.concatenate([first.objective_values, second.objective_values]),
        np.concatenate([first.proposal_densities, second.proposal_densities]),
    )


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Per-sample log weights log s_i at a given inverse temperature."""

    log_weights: np.ndarray
    beta: float

    def __post_init__(self):
        lw = np.array(self.log_weights, dtype=float)
        if lw.ndim != 1 or lw.size < 1:
            raise InvalidInputError("log_weights must be a non-empty vector")
        if np.any(np.isnan(lw)) or np.any(np.isposinf(lw)):
            raise InvalidInputError("log weights must not be NaN or +inf")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise InvalidInputError("beta must be finite and >= 0")
        lw.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def size(self):
        return self.log_weights.size

    def subset(self, indices):
        idx = np.asarray(indices, dtype=int)
        return WeightVector(self.log_weights[idx], self.beta)

    def shifted_weights(self):
        """exp(log s - max log s): finite, nonnegative, max entry 1."""
        mx = np.max(self.log_weights)
        if not math.isfinite(mx):
            raise DegenerateWeightsError("every log weight is -inf")
        return np.exp(self.log_weights - mx)

    def normalized(self):
        """Weights rescaled to sum to 1."""
        w = self.shifted_weights()
        return w / w.sum()


@dataclass(frozen=True)
class DecompositionReport:
    bias_squared: float
    variance: float
    mse: float


def boltzmann_weights(data, beta):
    """log s_i = -beta * G_i - log h_i for every sample."""
    if not (math.isfinite(beta) and beta >= 0):
        raise InvalidInputError("beta must be finite and >= 0")
    g = data.objective_values
    if not np.all(np.isfinite(g)):
        raise EvaluationFailureError("non-finite objective value in sample set")
    log_w = -beta * g - np.log(data.proposal_densities)
    return WeightVector(log_w, beta)


def importance_estimate(ratios):
    """Plain mean of f/h ratios; the unbiased importance-sampling estimate."""
    arr = np.asarray(ratios, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError("ratios must be a 1-D array")
    if arr.size == 0:
        raise EmptySampleError("importance estimate of zero samples")
    return float(arr.mean())


def optimal_importance_density(f_values, cell_volumes):
    """Zero-variance proposal on a grid: h*_k proportional to |f_k|.

    Normalizes against the cell volumes so that sum h*_k vol_k = 1.
    """
    f = np.asarray(f_values, dtype=float)
    vol = np.asarray(cell_volumes, dtype=float)
    if f.shape != vol.shape or f.ndim != 1 or f.size == 0:
        raise DimensionMismatchError("f_values and cell_volumes must be equal-length vectors")
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("f_values must be finite")
    if not np.all(np.isfinite(vol)) or np.any(vol <= 0):
        raise InvalidInputError("cell volumes must be strictly positive and finite")
    mass = np.abs(f)
    norm = float(mass @ vol)
    if norm == 0.0:
        raise UndefinedDensityError("cannot normalize an everywhere-zero integrand")
    return mass / norm


def expected_objective_estimate(model, data):
    """Self-normalized estimate of E_q[G]: sum(q G / h) / sum(q / h).

    Ratios are formed in log space with max-subtraction. Invariant under
    rescaling of all proposal densities and under sample permutation.
    """
    log_q = models.log_density(model, data.points)
    log_r = log_q - np.log(data.proposal_densities)
    mx = np.max(log_r)
    if not math.isfinite(mx):
        raise DegenerateOverlapError(
            "model places no computable mass on any sample; estimate undefined"
        )
    w = np.exp(log_r - mx)
    den = float(w.sum())
    num = float(w @ data.objective_values)
    return num / den


def plugin_argmin(candidates, data):
    """Index of the candidate minimizing the plug-in estimate mean(q G / h).

    Ties break toward the lowest index.
    """
    cands = list(candidates)
    if not cands:
        raise EmptySampleError("no candidates supplied")
    log_h = np.log(data.proposal_densities)
    values = np.empty(len(cands))
    for j, cand in enumerate(cands):
        log_q = models.log_density(cand, data.points)
        with np.errstate(over="ignore"):
            ratios = np.exp(log_q - log_h)
        values[j] = float(np.mean(ratios * data.objective_values))
    return int(np.argmin(values))


def bias_variance_decompose(estimates, true_value):
    """Split mean squared error around true_value into bias^2 + variance.

    Uses the population (divide by m) variance so the identity
    mse = bias^2 + variance holds exactly.
    """
    arr = np.asarray(estimates, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise InsufficientSampleError("need at least two estimates to decompose")
    if not np.all(np.isfinite(arr)) or not math.isfinite(true_value):
        raise InvalidInputError("estimates and true_value must be finite")
    mean = float(arr.mean())
    bias_squared = (mean - true_value) ** 2
    variance = float(arr.var())
    mse = float(np.mean((arr - true_value) ** 2))
    return DecompositionReport(bias_squared=bias_squared, variance=variance, mse=mse)


def samples_to_text(data):
    """Columnar plain-text serialization of a SampleSet."""
    n = data.dimension
    header = " ".join([f"x{i}" for i in range(n)] + ["G", "h"])
    lines = [SAMPLES_FORMAT, f"# {header}"]
    for i in range(data.size):
        row = [repr(float(v)) for v in data.points[i]]
        row.append(repr(float(data.objective_values[i])))
        row.append(repr(float(data.proposal_densities[i])))
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def samples_from_text(text):
    """Parse the output of samples_to_text. Round trip is exact."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != SAMPLES_FORMAT:
        raise InvalidInputError("unsupported sample-set format header")
    rows = [[float(v) for v in ln.split()] for ln in lines[1:] if not ln.startswith("#")]
    if not rows:
        raise EmptySampleError("sample-set text contains no rows")
    arr = np.array(rows)
    return SampleSet(arr[:, :-2], arr[:, -2], arr[:, -1])
