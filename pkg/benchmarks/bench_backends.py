"""Benchmark the numpy and numba kernel backends against each other.

Runs the three hot kernels (mixture log-density, weighted moments, a full
EM fit) on identical inputs and reports per-call times and the speedup.
Usage: python benchmarks/bench_backends.py [--points 20000] [--repeats 30]
"""

import argparse
import time

import numpy as np

from pcopt._kernels import NUMBA_AVAILABLE, _numpy as numpy_backend


def time_function(func, *args, repeats=30):
    times = []
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = func(*args)
        times.append(time.perf_counter() - start)
    return float(np.median(times)), result


def make_inputs(m, n, component_count, seed=0):
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(m, n))
    means = rng.normal(size=(component_count, n))
    covs = np.stack(
        [np.eye(n) * (1.0 + j) + 0.1 * np.ones((n, n)) for j in range(component_count)]
    )
    chols = np.stack([np.linalg.cholesky(c) for c in covs])
    logdets = np.array([np.log(np.diag(c)).sum() for c in chols])
    phis = np.full(component_count, 1.0 / component_count)
    s = rng.uniform(0.1, 1.0, size=m)
    return points, means, covs, chols, logdets, phis, s


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=20_000)
    parser.add_argument("--dimension", type=int, default=4)
    parser.add_argument("--components", type=int, default=3)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    print(f"numba available: {NUMBA_AVAILABLE}")
    if not NUMBA_AVAILABLE:
        print("install numba to compare backends; timing numpy only")

    backends = [("numpy", numpy_backend)]
    if NUMBA_AVAILABLE:
        from pcopt._kernels import _numba as numba_backend

        backends.append(("numba", numba_backend))

    points, means, covs, chols, logdets, phis, s = make_inputs(
        args.points, args.dimension, args.components
    )
    log_phis = np.log(phis)
    em_args = (50, 1e-10, 1e-9, int(np.argmax(s)))

    if NUMBA_AVAILABLE:
        # trigger JIT compilation outside the timed region
        backend = backends[1][1]
        backend.mixture_logpdf(points[:64], means, chols, logdets, log_phis)
        backend.weighted_mean_cov(points[:64], s[:64])
        backend.em_run(
            points[:256], s[:256], means.copy(), covs.copy(), phis.copy(), *em_args
        )

    cases = [
        ("mixture_logpdf", lambda b: b.mixture_logpdf(points, means, chols, logdets, log_phis)),
        ("weighted_mean_cov", lambda b: b.weighted_mean_cov(points, s)),
        (
            "em_run",
            lambda b: b.em_run(
                points, s, means.copy(), covs.copy(), phis.copy(), *em_args
            ),
        ),
    ]

    print(
        f"\ninputs: {args.points} points, dimension {args.dimension}, "
        f"{args.components} components, median of {args.repeats} runs"
    )
    header = f"{'kernel':<20}" + "".join(f"{name:>14}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, call in cases:
        row = f"{label:<20}"
        timings = []
        for _, backend in backends:
            t, _ = time_function(lambda b=backend: call(b), repeats=args.repeats)
            timings.append(t)
            row += f"{t * 1e3:>12.3f}ms"
        if len(timings) == 2:
            row += f"{timings[0] / timings[1]:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
