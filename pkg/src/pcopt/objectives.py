"""Benchmark objectives, noisy evaluation, and evaluation accounting."""

import threading
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    EvaluationFailureError,
    InvalidInputError,
    UnknownObjectiveError,
)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Metadata for one objective: dimension, known optimum, noise level."""

    name: str
    dimension: int
    known_optimum_value: float | None = None
    known_optimizer: tuple[float, ...] | None = None
    noise_stddev: float = 0.0

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidInputError("objective dimension must be >= 1")
        if self.noise_stddev < 0:
            raise InvalidInputError("noise_stddev must be >= 0")
        if self.known_optimizer is not None:
            optimizer = tuple(float(v) for v in self.known_optimizer)
            if len(optimizer) != self.dimension:
                raise DimensionMismatchError(
                    f"known_optimizer has length {len(optimizer)}, expected {self.dimension}"
                )
            object.__setattr__(self, "known_optimizer", optimizer)


class EvaluationLedger:
    """Counts objective evaluations, bucketed per iteration.

    total_evaluations always equals the sum of the per-iteration buckets.
    Increments are lock-protected so concurrent evaluation batches can
    share a ledger.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._per_iteration: list[int] = []

    def start_iteration(self):
        with self._lock:
            self._per_iteration.append(0)

    def record(self, count=1):
        if count < 0:
            raise InvalidInputError("evaluation count must be >= 0")
        with self._lock:
            if not self._per_iteration:
                self._per_iteration.append(0)
            self._per_iteration[-1] += count

    @property
    def per_iteration_evaluations(self):
        with self._lock:
            return tuple(self._per_iteration)

    @property
    def total_evaluations(self):
        with self._lock:
            return sum(self._per_iteration)


def _as_batch(points, dimension):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != dimension:
        raise DimensionMismatchError(
            f"expected points of dimension {dimension}, got shape {np.shape(points)}"
        )
    return pts


def _rosenbrock_batch(pts):
    x1, x2 = pts[:, 0], pts[:, 1]
    return 100.0 * (x2 - x1**2) ** 2 + (1.0 - x1) ** 2


def rosenbrock(x):
    """Banana-valley function on R^2. Global min: f(1, 1) = 0."""
    pts = _as_batch(x, 2)
    if pts.shape[0] != 1:
        raise DimensionMismatchError("rosenbrock takes a single 2-vector")
    with np.errstate(over="ignore", invalid="ignore"):
        return float(_rosenbrock_batch(pts)[0])


def _woods_batch(pts, classical=False):
    x1, x2, x3, x4 = pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3]
    first = (x2 - x1**2) ** 2 if classical else (x2 - x1) ** 2
    return (
        100.0 * first
        + (1.0 - x1) ** 2
        + 90.0 * (x4 - x3**2) ** 2
        + (1.0 - x3) ** 2
        + 10.1 * ((1.0 - x2) ** 2 + (1.0 - x4) ** 2)
        + 19.8 * (1.0 - x2) * (1.0 - x4)
    )


def woods(x, classical=False):
    """Coupled pair of banana valleys on R^4. Global min: f(1, 1, 1, 1) = 0.

    The default first term is 100*(x2 - x1)^2; classical=True uses the
    variant 100*(x2 - x1^2)^2 instead. Both share the same optimum.
    """
    pts = _as_batch(x, 4)
    if pts.shape[0] != 1:
        raise DimensionMismatchError("woods takes a single 4-vector")
    with np.errstate(over="ignore", invalid="ignore"):
        return float(_woods_batch(pts, classical)[0])


class _Entry:
    def __init__(self, spec, batch_fn):
        self.spec = spec
        self.batch_fn = batch_fn


_REGISTRY: dict[str, _Entry] = {}


def register_objective(spec, batch_fn):
    """Make an objective addressable by name.

    batch_fn maps an (m, dimension) array to m noiseless values.
    """
    _REGISTRY[spec.name] = _Entry(spec, batch_fn)


def get_objective_spec(name):
    try:
        return _REGISTRY[name].spec
    except KeyError:
        raise UnknownObjectiveError(
            f"unknown objective {name!r}; available: {', '.join(sorted(_REGISTRY))}"
        ) from None


def list_objectives():
    return sorted(_REGISTRY)


register_objective(
    ObjectiveSpec("rosenbrock", 2, known_optimum_value=0.0, known_optimizer=(1.0, 1.0)),
    _rosenbrock_batch,
)
register_objective(
    ObjectiveSpec("woods", 4, known_optimum_value=0.0, known_optimizer=(1.0, 1.0, 1.0, 1.0)),
    _woods_batch,
)
register_objective(
    ObjectiveSpec(
        "woods-classical", 4, known_optimum_value=0.0, known_optimizer=(1.0, 1.0, 1.0, 1.0)
    ),
    lambda pts: _woods_batch(pts, classical=True),
)
register_objective(
    ObjectiveSpec(
        "noisy-rosenbrock",
        2,
        known_optimum_value=0.0,
        known_optimizer=(1.0, 1.0),
        noise_stddev=1.0,
    ),
    _rosenbrock_batch,
)


def evaluate_batch(spec, points, rng=None, ledger=None):
    """Evaluate spec at each row of points; additive Gaussian noise if configured.

    Evaluations are recorded in the ledger before the finiteness check,
    so failed attempts are still counted.
    """
    entry = _REGISTRY.get(spec.name)
    if entry is None:
        raise UnknownObjectiveError(f"unknown objective {spec.name!r}")
    pts = _as_batch(points, spec.dimension)
    with np.errstate(over="ignore", invalid="ignore"):
        values = np.asarray(entry.batch_fn(pts), dtype=float)
    if spec.noise_stddev > 0:
        if rng is None:
            raise InvalidInputError("noisy evaluation requires an rng")
        values = values + rng.normal(0.0, spec.noise_stddev, size=len(values))
    if ledger is not None:
        ledger.record(len(values))
    if not np.all(np.isfinite(values)):
        raise EvaluationFailureError(f"non-finite value from objective {spec.name!r}")
    return values


def evaluate(spec, x, rng=None, ledger=None):
    """Evaluate spec at a single point."""
    pts = _as_batch(x, spec.dimension)
    if pts.shape[0] != 1:
        raise DimensionMismatchError("evaluate takes a single point")
    return float(evaluate_batch(spec, pts, rng, ledger)[0])
