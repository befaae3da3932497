"""Pure-numpy reference implementations of the numerical hot paths.

The numba backend in ``_numba.py`` implements the same algorithms with
explicit loops; both must stay behaviorally identical (same floor rule,
same reseed rule, same convergence semantics).
"""

import math

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

LOG_2PI = math.log(2.0 * math.pi)

# Responsibility mass below EMPTY_FRACTION * sum(s) marks a dead component.
EMPTY_FRACTION = 1e-12


def logpdf_components(points, means, chols, logdets):
    """Per-component Gaussian log densities.

    points (m, n); means (M, n); chols (M, n, n) lower Cholesky factors;
    logdets (M,) log-determinants of the factors. Returns (m, M).
    """
    m, n = points.shape
    M = means.shape[0]
    out = np.empty((m, M))
    for j in range(M):
        d = points - means[j]
        y = solve_triangular(chols[j], d.T, lower=True)
        quad = np.einsum("ij,ij->j", y, y)
        out[:, j] = -0.5 * quad - logdets[j] - 0.5 * n * LOG_2PI
    return out


def mixture_logpdf(points, means, chols, logdets, log_phis):
    """Log density of a Gaussian mixture at each point. Returns (m,)."""
    comp = logpdf_components(points, means, chols, logdets) + log_phis[None, :]
    return logsumexp(comp, axis=1)


def weighted_mean_cov(points, w):
    """Weighted mean and weighted population covariance.

    w need not be normalized; sum(w) must be positive.
    """
    wn = w / w.sum()
    mu = wn @ points
    d = points - mu
    cov = (d * wn[:, None]).T @ d
    cov = 0.5 * (cov + cov.T)
    return mu, cov


def _floor_cov(cov, floor):
    """Add floor*I when the smallest eigenvalue sits below the floor.

    Returns (cov, repaired_flag).
    """
    evmin = np.linalg.eigvalsh(cov)[0]
    if evmin < floor:
        n = cov.shape[0]
        return cov + floor * np.eye(n), True
    return cov, False


def _mixture_nll(points, s, means, covs, phis):
    """Weighted negative log likelihood plus E-step byproducts.

    Returns (comp, lse, nll). nll is +inf when any positively weighted
    point has zero density under every component.
    """
    M = means.shape[0]
    chols = np.linalg.cholesky(covs)
    logdets = np.log(chols[:, np.arange(covs.shape[1]), np.arange(covs.shape[1])]).sum(axis=1)
    comp = logpdf_components(points, means, chols, logdets) + np.log(phis)[None, :]
    lse = logsumexp(comp, axis=1)
    pos = s > 0.0
    if np.any(np.isneginf(lse[pos])):
        return comp, lse, math.inf
    return comp, lse, float(-(s[pos] @ lse[pos]))


def em_run(points, s, means0, covs0, phis0, max_iter, tol, floor, reseed_idx):
    """One weighted-EM run from a given initialization.

    s is the per-sample weight vector (the caller normalizes it, so tol
    acts on the normalized objective scale). covs0 must already satisfy
    the floor. Returns (means, covs, phis, traj, n_msteps, repairs) where
    traj[i] is the weighted NLL after i M-steps.
    """
    m, n = points.shape
    M = means0.shape[0]
    means = means0.copy()
    covs = covs0.copy()
    phis = phis0.copy()
    cov_reset = covs0.copy()
    s_sum = s.sum()
    thresh = EMPTY_FRACTION * s_sum
    eye = np.eye(n)

    traj = []
    repairs = 0
    n_msteps = 0
    prev = math.inf
    skip_check = False
    for _ in range(max_iter):
        comp, lse, nll = _mixture_nll(points, s, means, covs, phis)
        traj.append(nll)
        if not math.isfinite(nll):
            return means, covs, phis, np.array(traj), n_msteps, repairs
        if not skip_check and prev - nll < tol:
            return means, covs, phis, np.array(traj), n_msteps, repairs
        prev = nll
        skip_check = False

        gamma = np.exp(comp - lse[:, None])
        u = gamma * s[:, None]
        mass = u.sum(axis=0)
        for j in range(M):
            if mass[j] < thresh:
                means[j] = points[reseed_idx]
                covs[j] = cov_reset[j]
                mass[j] = s_sum / M
                repairs += 1
                skip_check = True
                continue
            mu = u[:, j] @ points / mass[j]
            d = points - mu
            cov = (d * u[:, j, None]).T @ d / mass[j]
            cov = 0.5 * (cov + cov.T)
            evmin = np.linalg.eigvalsh(cov)[0]
            if evmin < floor:
                cov = cov + floor * eye
                repairs += 1
            means[j] = mu
            covs[j] = cov
        phis = mass / mass.sum()
        n_msteps += 1

    _, _, nll = _mixture_nll(points, s, means, covs, phis)
    traj.append(nll)
    return means, covs, phis, np.array(traj), n_msteps, repairs
