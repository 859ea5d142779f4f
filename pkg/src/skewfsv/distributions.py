"""Random variate generation and log densities used by the samplers.

All draws go through ``numpy.random.Generator`` instances owned by the
caller, usually obtained from an :class:`RngStream`, so that every part of
the chain is reproducible and independent of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class RngStream:
    """A keyed, reproducible random stream.

    Streams with the same ``seed`` and ``key`` yield identical sequences;
    distinct keys yield statistically independent sequences.  Keys are
    tuples of small integers such as ``(sweep, phase, series)``.
    """

    seed: int
    key: tuple[int, ...] = ()

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(int(x) for x in key))

    def generator(self) -> np.random.Generator:
        entropy = (int(self.seed),) + tuple(int(x) for x in self.key)
        return np.random.default_rng(np.random.SeedSequence(entropy))


def _check_positive(name: str, value: float) -> None:
    if not value > 0.0:
        raise ValueError(f"{name} must be positive, got {value}")


def draw_gamma(shape: float, rate: float, rng: np.random.Generator, size=None):
    """Gamma draw in shape-rate form (density ∝ x^(shape-1) e^(-rate x))."""
    _check_positive("shape", shape)
    _check_positive("rate", rate)
    return rng.standard_gamma(shape, size=size) / rate


def draw_inverse_gamma(shape: float, scale: float, rng: np.random.Generator, size=None):
    """Inverse-gamma draw with density ∝ x^(-shape-1) e^(-scale/x)."""
    _check_positive("shape", shape)
    _check_positive("scale", scale)
    return scale / rng.standard_gamma(shape, size=size)


def draw_beta(a: float, b: float, rng: np.random.Generator, size=None):
    _check_positive("a", a)
    _check_positive("b", b)
    return rng.beta(a, b, size=size)


def draw_truncated_gamma(
    shape: float,
    rate: float,
    rng: np.random.Generator,
    lower: float = 4.0,
    max_tries: int = 1000,
) -> float:
    """Gamma(shape, rate) conditioned on exceeding ``lower``.

    Rejection from the untruncated gamma with a retry cap; falls back to
    inverse-CDF sampling on the truncated region when the cap is hit.
    """
    _check_positive("shape", shape)
    _check_positive("rate", rate)
    for _ in range(max_tries):
        x = rng.standard_gamma(shape) / rate
        if x > lower:
            return float(x)
    # Rejection is hopeless when the upper tail mass is tiny; invert the
    # survival function instead (stable deep in the tail).
    tail = special.gammaincc(shape, rate * lower)
    v = rng.uniform(0.0, tail)
    return float(special.gammainccinv(shape, v) / rate)


def draw_multivariate_normal(
    mean: np.ndarray, cov: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Multivariate normal draw via the Cholesky factor of ``cov``."""
    mean = np.asarray(mean, dtype=float)
    chol = np.linalg.cholesky(np.asarray(cov, dtype=float))
    return mean + chol @ rng.standard_normal(mean.shape[0])


def draw_gh_skew_t(beta: float, nu: float, rng: np.random.Generator, size=None):
    """One draw (or an array) from the zero-mean skew-t mixture.

    Built as w = beta (z - c) + sqrt(z) eps with z ~ IG(nu/2, nu/2),
    eps ~ N(0, 1) and c = nu / (nu - 2), so E(w) = 0 by construction.
    Requires nu > 4 for finite variance.
    """
    if not nu > 4.0:
        raise ValueError(f"nu must exceed 4 for finite variance, got {nu}")
    z = draw_inverse_gamma(nu / 2.0, nu / 2.0, rng, size=size)
    c = nu / (nu - 2.0)
    return beta * (z - c) + np.sqrt(z) * rng.standard_normal(size=size)


# --- log densities -------------------------------------------------------

def log_density_gamma(x, shape: float, rate: float):
    _check_positive("shape", shape)
    _check_positive("rate", rate)
    x = np.asarray(x, dtype=float)
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * np.log(x) - rate * x


def log_density_inverse_gamma(x, shape: float, scale: float):
    _check_positive("shape", shape)
    _check_positive("scale", scale)
    x = np.asarray(x, dtype=float)
    return shape * math.log(scale) - math.lgamma(shape) - (shape + 1.0) * np.log(x) - scale / x


def log_density_beta(x, a: float, b: float):
    _check_positive("a", a)
    _check_positive("b", b)
    x = np.asarray(x, dtype=float)
    log_norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    return log_norm + (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x)


def log_density_truncated_gamma(x, shape: float, rate: float, lower: float = 4.0):
    """Gamma(shape, rate) restricted to x > lower, renormalized."""
    x = np.asarray(x, dtype=float)
    tail = 1.0 - special.gammainc(shape, rate * lower)
    out = np.where(x > lower, log_density_gamma(np.maximum(x, lower * (1 + 1e-12)), shape, rate) - math.log(tail), -np.inf)
    return out if out.ndim else float(out)


def log_density_multivariate_normal(x, mean, cov) -> float:
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    chol = np.linalg.cholesky(cov)
    resid = linalg.solve_triangular(chol, x - mean, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * (x.shape[0] * LOG_2PI + logdet + resid @ resid))


def log_density_bivariate_leverage(eps: float, eta: float, sigma: float, rho: float) -> float:
    """Log density of the joint shock pair driving one volatility series.

    The pair has unit eps-variance, sigma^2 eta-variance and correlation
    rho, which is the within-period coupling that produces the leverage
    effect.
    """
    _check_positive("sigma", sigma)
    if not abs(rho) < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    one_m = 1.0 - rho * rho
    quad = eps * eps - 2.0 * rho * eps * eta / sigma + (eta / sigma) ** 2
    return -LOG_2PI - math.log(sigma) - 0.5 * math.log(one_m) - 0.5 * quad / one_m
