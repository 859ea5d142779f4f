"""Shared test oracles, written independently of the library code paths.

The joint density here is assembled from the bivariate shock density and
explicit Jacobians (the library factors it as transitions times
conditional measurements), so agreement is a genuine cross-check.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

LOG_2PI = math.log(2.0 * math.pi)


def bivariate_shock_logpdf(eps, eta, sigma, rho):
    """Joint normal: unit eps variance, sigma^2 eta variance, correlation rho."""
    cov = np.array([[1.0, rho * sigma], [rho * sigma, sigma**2]])
    return stats.multivariate_normal(mean=[0.0, 0.0], cov=cov).logpdf(
        np.column_stack([np.broadcast_arrays(eps, eta)[0].ravel(),
                         np.broadcast_arrays(eps, eta)[1].ravel()])
    )


def joint_logdensity(h, ytilde, z, mu, phi, sigma, rho, beta, nu,
                     include_z_prior=False):
    """Log p(h, ytilde [, z]) for one series, via the shock representation.

    Vectorized over a leading sample axis of h when h is 2-D (paths in rows).
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    n, t_len = h.shape
    ytilde = np.asarray(ytilde, dtype=float)
    z = np.asarray(z, dtype=float)
    c = nu / (nu - 2.0)

    lp = stats.norm.logpdf(h[:, 0], mu, sigma / math.sqrt(1.0 - phi**2))
    eps = (ytilde * np.exp(-h / 2.0) - beta * (z - c)) / np.sqrt(z)
    jac = -0.5 * h - 0.5 * np.log(z)  # d eps / d ytilde
    if t_len > 1:
        eta = h[:, 1:] - mu - phi * (h[:, :-1] - mu)
        cov = np.array([[1.0, rho * sigma], [rho * sigma, sigma**2]])
        cov_inv = np.linalg.inv(cov)
        logdet = math.log(np.linalg.det(cov))
        quad = (cov_inv[0, 0] * eps[:, :-1]**2
                + 2.0 * cov_inv[0, 1] * eps[:, :-1] * eta
                + cov_inv[1, 1] * eta**2)
        lp = lp + np.sum(-0.5 * (2.0 * LOG_2PI + logdet + quad) + jac[:, :-1], axis=1)
    lp = lp + stats.norm.logpdf(eps[:, -1]) + jac[:, -1]
    if include_z_prior:
        half = nu / 2.0
        lp = lp + np.sum(stats.invgamma.logpdf(z, half, scale=half))
    return lp if lp.shape[0] > 1 else float(lp[0])


def importance_posterior_mean_h(ytilde, z, mu, phi, sigma, rho, beta, nu,
                                n_samples, seed, index):
    """Self-normalized importance estimate of E[h_index | ytilde, z, params].

    Proposal: the AR(1) prior over the path.  Returns (estimate, standard
    error, effective sample size).
    """
    rng = np.random.default_rng(seed)
    t_len = len(ytilde)
    h = np.empty((n_samples, t_len))
    h[:, 0] = mu + sigma / math.sqrt(1.0 - phi**2) * rng.standard_normal(n_samples)
    for t in range(t_len - 1):
        h[:, t + 1] = mu + phi * (h[:, t] - mu) + sigma * rng.standard_normal(n_samples)
    log_joint = joint_logdensity(h, ytilde, z, mu, phi, sigma, rho, beta, nu)
    # prior log density of the proposal cancels except for the measurement part,
    # but computing the ratio explicitly keeps this estimator self-contained.
    lp_prior = stats.norm.logpdf(h[:, 0], mu, sigma / math.sqrt(1.0 - phi**2))
    if t_len > 1:
        eta = h[:, 1:] - mu - phi * (h[:, :-1] - mu)
        lp_prior = lp_prior + np.sum(stats.norm.logpdf(eta, 0.0, sigma), axis=1)
    logw = log_joint - lp_prior
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    est = float(np.sum(w * h[:, index]))
    ess = 1.0 / float(np.sum(w**2))
    var = float(np.sum(w * (h[:, index] - est) ** 2))
    se = math.sqrt(var / ess)
    return est, se, ess


def grid_posterior_mean(grid, log_post):
    """Posterior mean over a 1-D grid given unnormalized log densities."""
    log_post = np.asarray(log_post, dtype=float)
    w = np.exp(log_post - log_post.max())
    w /= w.sum()
    return float(np.sum(w * grid))


def batch_mean_se(x, n_batches=50):
    """Monte Carlo standard error of a chain mean via batch means."""
    x = np.asarray(x, dtype=float)
    n = (len(x) // n_batches) * n_batches
    batches = x[:n].reshape(n_batches, -1).mean(axis=1)
    return float(batches.std(ddof=1) / math.sqrt(n_batches))
