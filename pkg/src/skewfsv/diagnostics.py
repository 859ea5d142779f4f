"""Single-chain convergence and efficiency diagnostics."""

from __future__ import annotations

import math

import numpy as np


class ChainTooShortError(ValueError):
    """Raised when a chain has too few draws for the requested diagnostic."""


class DegenerateChainError(ValueError):
    """Raised when a chain is constant and the statistic is undefined."""


def _spectral_density_zero(x: np.ndarray) -> float:
    """Spectral density at frequency zero via a BIC-selected AR fit.

    Levinson-Durbin recursion on the sample autocovariances; the BIC
    penalty keeps the selected order at zero for uncorrelated chains,
    which keeps the test statistic calibrated.
    """
    n = x.shape[0]
    dev = x - x.mean()
    gamma0 = float(dev @ dev) / n
    if gamma0 <= 0.0:
        return 0.0
    p_max = min(20, n // 50)
    acov = np.empty(p_max + 1)
    acov[0] = gamma0
    for lag in range(1, p_max + 1):
        acov[lag] = float(dev[lag:] @ dev[:-lag]) / n
    log_n = math.log(n)
    best_s = gamma0
    best_aic = n * math.log(gamma0) + log_n
    coeffs = np.zeros(p_max + 1)
    err = gamma0
    for p in range(1, p_max + 1):
        kappa = acov[p] - float(coeffs[1:p] @ acov[p - 1:0:-1])
        kappa /= err
        new = coeffs.copy()
        new[p] = kappa
        new[1:p] = coeffs[1:p] - kappa * coeffs[p - 1:0:-1]
        coeffs = new
        err *= 1.0 - kappa * kappa
        if err <= 0.0:
            break
        aic = n * math.log(err) + log_n * (p + 1)
        if aic < best_aic:
            best_aic = aic
            denom = 1.0 - float(np.sum(coeffs[1:p + 1]))
            best_s = err / (denom * denom) if denom != 0.0 else np.inf
    return max(best_s, 0.0)


def geweke_z(draws: np.ndarray, first: float = 0.1, last: float = 0.5) -> float:
    """Geweke convergence z-score comparing early and late chain means.

    Uses the first 10% and the last 50% of the chain with spectral
    variance estimates; |z| < 1.96 means equality of means is not rejected
    at the 5 percent level.
    """
    x = np.asarray(draws, dtype=float).ravel()
    n = x.shape[0]
    if n < 100:
        raise ChainTooShortError(f"need at least 100 draws, got {n}")
    na = int(first * n)
    nb = int(last * n)
    seg_a = x[:na]
    seg_b = x[n - nb:]
    var_a = _spectral_density_zero(seg_a) / na
    var_b = _spectral_density_zero(seg_b) / nb
    denom = var_a + var_b
    if denom <= 0.0:
        raise DegenerateChainError("chain is constant; z-score undefined")
    return float((seg_a.mean() - seg_b.mean()) / math.sqrt(denom))


def effective_sample_size(draws: np.ndarray) -> float:
    """Effective sample size N / (1 + 2 sum of autocorrelations).

    The autocorrelation sum is truncated at the first negative pair
    (initial positive sequence rule), which keeps the estimate stable for
    noisy chains.
    """
    x = np.asarray(draws, dtype=float).ravel()
    n = x.shape[0]
    if n < 100:
        raise ChainTooShortError(f"need at least 100 draws, got {n}")
    dev = x - x.mean()
    var = float(dev @ dev) / n
    if var == 0.0:
        return float(n)
    # FFT autocovariances up to n - 1
    size = 1
    while size < 2 * n:
        size *= 2
    fx = np.fft.rfft(dev, size)
    acov = np.fft.irfft(fx * np.conj(fx), size)[:n].real / n
    rho = acov / acov[0]
    total = 0.0
    lag = 1
    while lag + 1 < n:
        pair = rho[lag] + rho[lag + 1]
        if pair < 0.0:
            break
        total += pair
        lag += 2
    iact = 1.0 + 2.0 * total
    return float(n / iact)
