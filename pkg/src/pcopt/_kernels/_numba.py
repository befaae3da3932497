"""Numba-jitted implementations of the numerical hot paths.

Loop-level mirror of ``_numpy.py``. Keep the two backends behaviorally
identical: same floor rule, same reseed rule, same convergence checks.
"""

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
EMPTY_FRACTION = 1e-12


@njit(cache=True)
def logpdf_components(points, means, chols, logdets):
    m, n = points.shape
    M = means.shape[0]
    out = np.empty((m, M))
    y = np.empty(n)
    for j in range(M):
        const = -logdets[j] - 0.5 * n * LOG_2PI
        for i in range(m):
            quad = 0.0
            for a in range(n):
                acc = points[i, a] - means[j, a]
                for b in range(a):
                    acc -= chols[j, a, b] * y[b]
                y[a] = acc / chols[j, a, a]
                quad += y[a] * y[a]
            out[i, j] = -0.5 * quad + const
    return out


@njit(cache=True)
def mixture_logpdf(points, means, chols, logdets, log_phis):
    comp = logpdf_components(points, means, chols, logdets)
    m = comp.shape[0]
    M = comp.shape[1]
    out = np.empty(m)
    for i in range(m):
        mx = -np.inf
        for j in range(M):
            v = comp[i, j] + log_phis[j]
            comp[i, j] = v
            if v > mx:
                mx = v
        if mx == -np.inf:
            out[i] = -np.inf
            continue
        ssum = 0.0
        for j in range(M):
            ssum += math.exp(comp[i, j] - mx)
        out[i] = mx + math.log(ssum)
    return out


@njit(cache=True)
def weighted_mean_cov(points, w):
    m, n = points.shape
    tot = 0.0
    for i in range(m):
        tot += w[i]
    mu = np.zeros(n)
    for i in range(m):
        wi = w[i] / tot
        for a in range(n):
            mu[a] += wi * points[i, a]
    cov = np.zeros((n, n))
    for i in range(m):
        wi = w[i] / tot
        for a in range(n):
            da = points[i, a] - mu[a]
            for b in range(a + 1):
                cov[a, b] += wi * da * (points[i, b] - mu[b])
    for a in range(n):
        for b in range(a):
            cov[b, a] = cov[a, b]
    return mu, cov


@njit(cache=True)
def _estep(points, s, means, covs, phis, comp, lse, gamma):
    """Fills comp/lse/gamma in place; returns the weighted NLL."""
    m, n = points.shape
    M = means.shape[0]
    y = np.empty(n)
    for j in range(M):
        L = np.linalg.cholesky(covs[j])
        ld = 0.0
        for a in range(n):
            ld += math.log(L[a, a])
        lphi = math.log(phis[j]) if phis[j] > 0.0 else -np.inf
        const = -ld - 0.5 * n * LOG_2PI + lphi
        for i in range(m):
            quad = 0.0
            for a in range(n):
                acc = points[i, a] - means[j, a]
                for b in range(a):
                    acc -= L[a, b] * y[b]
                y[a] = acc / L[a, a]
                quad += y[a] * y[a]
            comp[i, j] = -0.5 * quad + const
    nll = 0.0
    ok = True
    for i in range(m):
        mx = -np.inf
        for j in range(M):
            if comp[i, j] > mx:
                mx = comp[i, j]
        if mx == -np.inf:
            lse[i] = -np.inf
            for j in range(M):
                gamma[i, j] = 0.0
            if s[i] > 0.0:
                ok = False
            continue
        ssum = 0.0
        for j in range(M):
            ssum += math.exp(comp[i, j] - mx)
        li = mx + math.log(ssum)
        lse[i] = li
        for j in range(M):
            gamma[i, j] = math.exp(comp[i, j] - li)
        if s[i] > 0.0:
            nll -= s[i] * li
    if not ok:
        return np.inf
    return nll


@njit(cache=True)
def em_run(points, s, means0, covs0, phis0, max_iter, tol, floor, reseed_idx):
    m, n = points.shape
    M = means0.shape[0]
    means = means0.copy()
    covs = covs0.copy()
    phis = phis0.copy()
    cov_reset = covs0.copy()
    s_sum = 0.0
    for i in range(m):
        s_sum += s[i]
    thresh = EMPTY_FRACTION * s_sum

    traj = np.empty(max_iter + 1)
    count = 0
    repairs = 0
    n_msteps = 0
    prev = np.inf
    skip_check = False

    comp = np.empty((m, M))
    lse = np.empty(m)
    gamma = np.empty((m, M))
    mass = np.empty(M)

    for _ in range(max_iter):
        nll = _estep(points, s, means, covs, phis, comp, lse, gamma)
        traj[count] = nll
        count += 1
        if not math.isfinite(nll):
            return means, covs, phis, traj[:count], n_msteps, repairs
        if (not skip_check) and prev - nll < tol:
            return means, covs, phis, traj[:count], n_msteps, repairs
        prev = nll
        skip_check = False

        for j in range(M):
            mass[j] = 0.0
        for i in range(m):
            si = s[i]
            for j in range(M):
                mass[j] += gamma[i, j] * si
        for j in range(M):
            if mass[j] < thresh:
                for a in range(n):
                    means[j, a] = points[reseed_idx, a]
                for a in range(n):
                    for b in range(n):
                        covs[j, a, b] = cov_reset[j, a, b]
                mass[j] = s_sum / M
                repairs += 1
                skip_check = True
                continue
            for a in range(n):
                acc = 0.0
                for i in range(m):
                    acc += gamma[i, j] * s[i] * points[i, a]
                means[j, a] = acc / mass[j]
            for a in range(n):
                for b in range(a + 1):
                    acc = 0.0
                    for i in range(m):
                        acc += (gamma[i, j] * s[i]
                                * (points[i, a] - means[j, a])
                                * (points[i, b] - means[j, b]))
                    v = acc / mass[j]
                    covs[j, a, b] = v
                    covs[j, b, a] = v
            evs, _ = np.linalg.eigh(covs[j])
            evmin = evs[0]
            if evmin < floor:
                for a in range(n):
                    covs[j, a, a] += floor
                repairs += 1
        tot = 0.0
        for j in range(M):
            tot += mass[j]
        for j in range(M):
            phis[j] = mass[j] / tot
        n_msteps += 1

    nll = _estep(points, s, means, covs, phis, comp, lse, gamma)
    traj[count] = nll
    count += 1
    return means, covs, phis, traj[:count], n_msteps, repairs
