"""Gibbs updates for factor paths, loading rows and the sparsity weight.

Conditional on every per-series quantity, the observation equation is a
Gaussian regression: loadings rows and factor values have closed-form
normal posteriors.  Solves use Cholesky factors; a singular system is an
error, never silently regularized, so degenerate setups surface in tests.
"""

from __future__ import annotations

import numpy as np

from skewfsv.distributions import draw_beta


class FactorUpdateError(RuntimeError):
    """A conditional posterior solve failed (degenerate precision matrix)."""


def compute_offsets(h: np.ndarray, z: np.ndarray, mu: np.ndarray, phi: np.ndarray,
                    sigma: np.ndarray, rho: np.ndarray, beta: np.ndarray,
                    c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conditional measurement means and variances for all q series.

    alpha[l, t] collects the skew shift and the leverage shift implied by
    conditioning on the next-period volatility innovation; the final time
    point carries no innovation term and keeps the unconditional variance.
    """
    mu_c = mu[:, None]
    alpha = beta[:, None] * (z - c[:, None])
    if h.shape[1] > 1:
        eta_hat = (h[:, 1:] - mu_c) - phi[:, None] * (h[:, :-1] - mu_c)
        alpha[:, :-1] += np.sqrt(z[:, :-1]) * (rho / sigma)[:, None] * eta_hat
    alpha *= np.exp(0.5 * h)
    sighat2 = z * np.exp(h)
    if h.shape[1] > 1:
        sighat2[:, :-1] *= (1.0 - rho * rho)[:, None]
    return alpha, sighat2


def sample_loading_row(i: int, y: np.ndarray, f: np.ndarray, alpha: np.ndarray,
                       sighat2: np.ndarray, prior_mean: np.ndarray,
                       prior_cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Exact Gibbs draw of the free loadings in row i (0-based, i >= 1).

    Row i has r = min(i, p) free entries; for i < p the unit diagonal
    loading moves the matching factor into the regression offset so it is
    never sampled.
    """
    k_obs, t_len = alpha.shape[0], alpha.shape[1]
    p = f.shape[0]
    if not 1 <= i < k_obs:
        raise IndexError(f"loading row index {i} out of range")
    r = min(i, p)
    g = f[:r]
    w = 1.0 / sighat2[i]
    resp = y[:, i] - alpha[i]
    if i < p:
        resp = resp - f[i]
    try:
        prior_prec = np.linalg.inv(prior_cov)
    except np.linalg.LinAlgError as exc:
        raise FactorUpdateError(f"loading prior covariance for row {i} is singular") from exc
    prec = prior_prec + (g * w) @ g.T
    lin = prior_prec @ prior_mean + g @ (resp * w)
    if not (np.all(np.isfinite(prec)) and np.all(np.isfinite(lin))):
        raise FactorUpdateError(f"loading posterior precision for row {i} is not finite")
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise FactorUpdateError(f"loading posterior precision for row {i} is singular") from exc
    mean = np.linalg.solve(prec, lin)
    return mean + np.linalg.solve(chol.T, rng.standard_normal(r))


def sample_factors(y: np.ndarray, loadings: np.ndarray, alpha: np.ndarray,
                   sighat2: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Exact Gibbs draw of all factor values, vectorized over time.

    The draws are independent across t given everything else, so this is a
    batched p-dimensional normal solve.
    """
    k_obs, p = loadings.shape
    t_len = y.shape[0]
    sig_inv = 1.0 / sighat2[:k_obs]                     # (k, T)
    psi_inv = 1.0 / sighat2[k_obs:]                     # (p, T)
    yhat = y.T - alpha[:k_obs]                          # (k, T)
    alpha_f = alpha[k_obs:]                             # (p, T)

    prec = np.einsum("ki,kt,kj->tij", loadings, sig_inv, loadings)
    idx = np.arange(p)
    prec[:, idx, idx] += psi_inv.T
    lin = (psi_inv * alpha_f).T + (loadings.T @ (sig_inv * yhat)).T   # (T, p)
    if not (np.all(np.isfinite(prec)) and np.all(np.isfinite(lin))):
        raise FactorUpdateError("factor posterior precision is not finite")
    try:
        chol = np.linalg.cholesky(prec)
        mean = np.linalg.solve(prec, lin[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise FactorUpdateError("factor posterior precision is singular") from exc
    eps = rng.standard_normal((t_len, p))
    draws = mean + np.linalg.solve(np.swapaxes(chol, 1, 2), eps[:, :, None])[:, :, 0]
    return draws.T


def sample_kappa(n_nonzero: int, q_free: int, prior_a: float, prior_b: float,
                 rng: np.random.Generator) -> float:
    """Conjugate beta draw of the slab weight given the inclusion count."""
    if not 0 <= n_nonzero <= q_free:
        raise ValueError(f"n_nonzero={n_nonzero} outside [0, {q_free}]")
    return float(draw_beta(prior_a + n_nonzero, prior_b + q_free - n_nonzero, rng))
