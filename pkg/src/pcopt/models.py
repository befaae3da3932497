"""Gaussian and Gaussian-mixture sampling distributions."""

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import _kernels as kernels
from .errors import (
    DimensionMismatchError,
    InvalidDomainError,
    InvalidInputError,
    ModelDegeneracyError,
)

MODEL_FORMAT = "pcopt-mixture/1"


def _frozen_array(values, shape_kind):
    arr = np.array(values, dtype=float, order="C")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"non-finite entries in {shape_kind}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GaussianParams:
    """Mean vector plus full covariance matrix.

    The covariance must be symmetric (to 1e-12, relative to its largest
    entry) and positive definite; positive definiteness is enforced by a
    successful Cholesky factorization at construction time, and the
    factor is cached for density evaluation.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = _frozen_array(self.mean, "mean")
        if mean.ndim != 1 or mean.size < 1:
            raise DimensionMismatchError("mean must be a 1-D vector")
        cov = np.array(self.covariance, dtype=float, order="C")
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatchError(
                f"covariance shape {cov.shape} does not match dimension {mean.size}"
            )
        if not np.all(np.isfinite(cov)):
            raise InvalidInputError("non-finite entries in covariance")
        asym = np.max(np.abs(cov - cov.T))
        if asym > 1e-12 * max(1.0, np.max(np.abs(cov))):
            raise InvalidInputError(f"covariance is asymmetric (max deviation {asym:g})")
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ModelDegeneracyError("covariance is not positive definite") from None
        cov.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_logdet", float(np.sum(np.log(np.diag(chol)))))

    @property
    def dimension(self):
        return self.mean.size


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Finite Gaussian mixture: components plus simplex mixing weights."""

    components: tuple
    mixing_weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidInputError("mixture needs at least one component")
        if not all(isinstance(c, GaussianParams) for c in comps):
            raise InvalidInputError("components must be GaussianParams")
        dim = comps[0].dimension
        if any(c.dimension != dim for c in comps):
            raise DimensionMismatchError("components have mixed dimensions")
        w = _frozen_array(self.mixing_weights, "mixing weights")
        if w.shape != (len(comps),):
            raise DimensionMismatchError("one mixing weight per component required")
        if np.any(w < 0):
            raise InvalidInputError("mixing weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInputError(f"mixing weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "mixing_weights", w)

    @property
    def dimension(self):
        return self.components[0].dimension

    @property
    def component_count(self):
        return len(self.components)

    @cached_property
    def _packed(self):
        """Contiguous parameter arrays for the kernel backend."""
        means = np.ascontiguousarray([c.mean for c in self.components])
        chols = np.ascontiguousarray([c._chol for c in self.components])
        logdets = np.ascontiguousarray([c._logdet for c in self.components])
        with np.errstate(divide="ignore"):
            log_phis = np.log(self.mixing_weights)
        return means, chols, logdets, np.ascontiguousarray(log_phis)


class DrawnSamples(NamedTuple):
    """Sampled points together with the proposal density at each point."""

    points: np.ndarray
    proposal_densities: np.ndarray


def single_gaussian_mixture(gauss):
    """Wrap one Gaussian as a 1-component mixture."""
    return MixtureModel((gauss,), np.array([1.0]))


def _as_points(dimension, x):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != dimension:
        raise DimensionMismatchError(
            f"expected points of dimension {dimension}, got shape {np.shape(x)}"
        )
    return np.ascontiguousarray(pts), single


def log_density(model, x):
    """Mixture log density; accepts one point or an (m, n) batch."""
    pts, single = _as_points(model.dimension, x)
    means, chols, logdets, log_phis = model._packed
    out = kernels.mixture_logpdf(pts, means, chols, logdets, log_phis)
    return float(out[0]) if single else out


def density(model, x):
    """Mixture density, computed as exp(log_density) for stability."""
    out = log_density(model, x)
    if np.isscalar(out):
        return float(np.exp(out))
    return np.exp(out)


def draw_samples(model, m, rng):
    """Draw m points: pick components by weight, then sample each Gaussian.

    The returned proposal densities are full mixture densities at the
    drawn points, never per-component ones.
    """
    if m < 1:
        raise InvalidInputError("sample count must be >= 1")
    means, chols, logdets, log_phis = model._packed
    idx = rng.choice(model.component_count, size=m, p=model.mixing_weights)
    z = rng.standard_normal((m, model.dimension))
    pts = means[idx] + np.einsum("mij,mj->mi", chols[idx], z)
    pts = np.ascontiguousarray(pts)
    h = np.exp(kernels.mixture_logpdf(pts, means, chols, logdets, log_phis))
    return DrawnSamples(pts, h)


def uniform_initial_proposal(bounds, m, rng):
    """Uniform draw over an axis-aligned box; density is 1/volume."""
    if m < 1:
        raise InvalidInputError("sample count must be >= 1")
    box = np.asarray(bounds, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise InvalidDomainError("bounds must be an (n, 2) array of (low, high) pairs")
    if not np.all(np.isfinite(box)):
        raise InvalidDomainError("bounds must be finite")
    widths = box[:, 1] - box[:, 0]
    if np.any(widths <= 0):
        raise InvalidDomainError("every bound must satisfy low < high")
    pts = box[:, 0] + rng.random((m, box.shape[0])) * widths
    volume = float(np.prod(widths))
    h = np.full(m, 1.0 / volume)
    return DrawnSamples(np.ascontiguousarray(pts), h)


def model_to_text(model):
    """Serialize a mixture to the versioned plain-text format."""
    lines = [MODEL_FORMAT]
    lines.append(f"dimension {model.dimension}")
    lines.append(f"components {model.component_count}")
    lines.append("mixing_weights " + " ".join(repr(float(v)) for v in model.mixing_weights))
    for j, comp in enumerate(model.components):
        lines.append(f"mean {j} " + " ".join(repr(float(v)) for v in comp.mean))
        flat = comp.covariance.reshape(-1)
        lines.append(f"covariance {j} " + " ".join(repr(float(v)) for v in flat))
    return "\n".join(lines) + "\n"


def model_from_text(text):
    """Parse the output of model_to_text. Round trip is exact."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != MODEL_FORMAT:
        raise InvalidInputError(
            f"unsupported model format header {lines[0]!r}" if lines else "empty model text"
        )
    fields = {}
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] in ("mean", "covariance"):
            fields[(parts[0], int(parts[1]))] = [float(v) for v in parts[2:]]
        else:
            fields[parts[0]] = parts[1:]
    try:
        dim = int(fields["dimension"][0])
        count = int(fields["components"][0])
        weights = np.array([float(v) for v in fields["mixing_weights"]])
        comps = []
        for j in range(count):
            mean = np.array(fields[("mean", j)])
            cov = np.array(fields[("covariance", j)]).reshape(dim, dim)
            comps.append(GaussianParams(mean, cov))
    except KeyError as exc:
        raise InvalidInputError(f"model text is missing field {exc}") from None
    return MixtureModel(tuple(comps), weights)
