"""Backend selection for the numerical hot paths.

Two interchangeable implementations exist: a numba-jitted one (used by
default when numba imports cleanly) and a pure-numpy reference. Set the
environment variable ``PCOPT_BACKEND`` to ``numba``, ``numpy``, or
``auto`` before import to choose explicitly. ``benchmarks/bench_backends.py``
times one against the other.
"""

import os

try:
    import numba  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False


def select_backend(requested=None):
    """Resolve a backend name to its implementation module.

    requested=None reads PCOPT_BACKEND (default "auto"). Returns
    (name, module). "auto" prefers numba and falls back to numpy.
    """
    name = requested if requested is not None else os.environ.get("PCOPT_BACKEND", "auto")
    name = name.strip().lower() or "auto"
    if name not in ("auto", "numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}; expected auto, numba, or numpy")
    if name in ("auto", "numba"):
        if NUMBA_AVAILABLE:
            from . import _numba as impl

            return "numba", impl
        if name == "numba":
            raise ImportError("PCOPT_BACKEND=numba but numba is not importable")
    from . import _numpy as impl

    return "numpy", impl


BACKEND, _impl = select_backend()

logpdf_components = _impl.logpdf_components
mixture_logpdf = _impl.mixture_logpdf
weighted_mean_cov = _impl.weighted_mean_cov
em_run = _impl.em_run
