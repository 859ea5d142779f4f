"""Model configuration, data containers and identification rules.

The model observes k return series driven by p < k latent factors; each of
the q = k + p shock processes has its own stochastic log-variance path and
a heavy-tailed, possibly skewed error built from an inverse-gamma mixing
variable.  Everything downstream (samplers, simulator, forecaster) shares
the types defined here.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("S0", "SY", "SF", "SYF", "SSYF")


class ConfigError(ValueError):
    """Raised for inconsistent model configuration or data."""


@dataclass(frozen=True)
class PriorSet:
    """Hyperparameters of the independent per-series priors.

    Gamma hyperparameters are interpreted in shape-rate form by default;
    set ``gamma_convention="scale"`` for shape-scale.
    """

    mu_mean: float = -11.0
    mu_var: float = 1.0
    phi_beta_a: float = 20.0          # on (phi + 1) / 2
    phi_beta_b: float = 1.5
    sigma_inv2_shape: float = 20.0    # on sigma^-2
    sigma_inv2_rate: float = 0.01
    rho_beta_a: float = 1.0           # on (rho + 1) / 2
    rho_beta_b: float = 1.0
    nu_shape: float = 24.0            # truncated to nu > 4
    nu_rate: float = 0.8
    kappa_beta_a: float = 2.0
    kappa_beta_b: float = 2.0
    loading_prior_mean_vec: float = 0.0
    loading_prior_cov: float = 1.0
    gamma_convention: str = "rate"

    def validate(self) -> None:
        for name in (
            "mu_var",
            "phi_beta_a",
            "phi_beta_b",
            "sigma_inv2_shape",
            "sigma_inv2_rate",
            "rho_beta_a",
            "rho_beta_b",
            "nu_shape",
            "nu_rate",
            "kappa_beta_a",
            "kappa_beta_b",
        ):
            value = getattr(self, name)
            if not value > 0.0:
                raise ConfigError(f"prior hyperparameter {name} must be positive, got {value}")
        if self.gamma_convention not in ("rate", "scale"):
            raise ConfigError(f"gamma_convention must be 'rate' or 'scale', got {self.gamma_convention!r}")
        if np.any(np.asarray(self.loading_prior_cov, dtype=float) <= 0.0):
            raise ConfigError("loading_prior_cov entries must be positive")

    def sigma_inv2_rate_effective(self) -> float:
        """Rate of the sigma^-2 gamma prior under the configured convention."""
        if self.gamma_convention == "rate":
            return self.sigma_inv2_rate
        return 1.0 / self.sigma_inv2_rate

    def nu_rate_effective(self) -> float:
        if self.gamma_convention == "rate":
            return self.nu_rate
        return 1.0 / self.nu_rate

    def loading_prior(self, r: int) -> tuple[np.ndarray, np.ndarray]:
        """Prior mean vector and covariance for a loading row with r free entries."""
        mean = np.asarray(self.loading_prior_mean_vec, dtype=float)
        mean = np.full(r, float(mean)) if mean.ndim == 0 else mean[:r].copy()
        cov = np.asarray(self.loading_prior_cov, dtype=float)
        cov = np.eye(r) * float(cov) if cov.ndim == 0 else cov[:r, :r].copy()
        return mean, cov


@dataclass(frozen=True)
class McmcSettings:
    burn_in: int = 5000
    n_draws: int = 50000
    thin: int = 1
    seed: int = 0
    sv_block_size: int = 50
    sv_passes: int = 2
    store_full_paths: bool = False
    path_snapshot_every: int = 50

    def validate(self) -> None:
        if self.burn_in < 0:
            raise ConfigError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.n_draws < 1:
            raise ConfigError(f"n_draws must be >= 1, got {self.n_draws}")
        if self.thin < 1:
            raise ConfigError(f"thin must be >= 1, got {self.thin}")
        if self.sv_block_size < 1:
            raise ConfigError(f"sv_block_size must be >= 1, got {self.sv_block_size}")
        if self.sv_passes < 1:
            raise ConfigError(f"sv_passes must be >= 1, got {self.sv_passes}")


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions, variant and all sampler settings for one model fit."""

    k: int
    p: int
    variant: str = "SSYF"
    priors: PriorSet = field(default_factory=PriorSet)
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    tau0_sq: float = 10.0
    # Materialized by validate_config: True where the skew coefficient is free.
    beta_free: tuple[bool, ...] | None = None

    @property
    def q(self) -> int:
        return self.k + self.p

    @property
    def spike_slab_active(self) -> bool:
        return self.variant == "SSYF"

    def validate(self) -> "ModelConfig":
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.p < 1:
            raise ConfigError(f"p must be >= 1, got {self.p}")
        if not self.p < self.k:
            raise ConfigError(f"p must be < k (got p={self.p}, k={self.k})")
        if not self.tau0_sq > 0.0:
            raise ConfigError(f"tau0_sq must be positive, got {self.tau0_sq}")
        self.priors.validate()
        self.mcmc.validate()
        mask = beta_free_mask(self.variant, self.k, self.p)
        return dataclasses.replace(self, beta_free=tuple(bool(b) for b in mask))

    def beta_free_array(self) -> np.ndarray:
        if self.beta_free is None:
            return beta_free_mask(self.variant, self.k, self.p)
        return np.asarray(self.beta_free, dtype=bool)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("beta_free")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        priors = PriorSet(**data.pop("priors", {}))
        mcmc = McmcSettings(**data.pop("mcmc", {}))
        return cls(priors=priors, mcmc=mcmc, **data)

    @classmethod
    def from_json(cls, path) -> "ModelConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def beta_free_mask(variant: str, k: int, p: int) -> np.ndarray:
    """Which of the q = k + p skew coefficients are free under the variant.

    Index order is the idiosyncratic series 0..k-1 followed by the factors
    k..k+p-1.  Masked (False) entries are pinned at zero.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    q = k + p
    mask = np.zeros(q, dtype=bool)
    if variant == "S0":
        return mask
    if variant == "SY":
        mask[:k] = True
    elif variant == "SF":
        mask[k:] = True
    else:  # SYF, SSYF
        mask[:] = True
    return mask


@dataclass(frozen=True)
class SeriesParams:
    """Static parameters of one volatility series."""

    mu: float
    phi: float
    sigma: float
    rho: float
    nu: float
    beta: float

    def __post_init__(self):
        if not abs(self.phi) < 1.0:
            raise ConfigError(f"|phi| must be < 1, got {self.phi}")
        if not self.sigma > 0.0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not abs(self.rho) < 1.0:
            raise ConfigError(f"|rho| must be < 1, got {self.rho}")
        if not self.nu > 4.0:
            raise ConfigError(f"nu must exceed 4, got {self.nu}")

    @property
    def c(self) -> float:
        """Mean of the mixing variable, nu / (nu - 2); kept consistent with nu."""
        return self.nu / (self.nu - 2.0)


@dataclass(frozen=True)
class LoadingMatrix:
    """k x p loading matrix in triangular-identified form.

    The first p rows have a unit diagonal and zeros above it, which pins
    down the factor rotation; the remaining entries are free.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        k, p = values.shape
        if not np.all(np.isfinite(values)):
            raise ConfigError("loading matrix must be finite")
        for i in range(min(k, p)):
            if values[i, i] != 1.0:
                raise ConfigError(f"loading diagonal entry ({i},{i}) must be 1")
            if np.any(values[i, i + 1:] != 0.0):
                raise ConfigError(f"loading row {i} must be zero above the diagonal")

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @classmethod
    def identity_start(cls, k: int, p: int) -> "LoadingMatrix":
        values = np.zeros((k, p))
        for i in range(min(k, p)):
            values[i, i] = 1.0
        return cls(values)


def loading_free_indices(k: int, p: int) -> list[tuple[int, int]]:
    """(row, col) pairs of the free loading entries, row-major order."""
    out = []
    for i in range(1, k):
        for j in range(min(i, p)):
            out.append((i, j))
    return out


@dataclass(frozen=True)
class LatentState:
    """Latent paths: log variances h (q x T), mixing z (q x T), factors f (p x T)."""

    h: np.ndarray
    z: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        z = np.asarray(self.z, dtype=float)
        f = np.asarray(self.f, dtype=float)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "f", f)
        if h.shape != z.shape:
            raise ConfigError(f"h and z shapes differ: {h.shape} vs {z.shape}")
        q, t_len = h.shape
        p, t_f = f.shape
        if t_f != t_len:
            raise ConfigError(f"f has {t_f} time points, expected {t_len}")
        if not p < q:
            raise ConfigError("factor count must be smaller than shock count")
        if np.any(z <= 0.0):
            raise ConfigError("mixing values must all be positive")


@dataclass(frozen=True)
class Dataset:
    """Observed return panel: T x k matrix plus date labels."""

    returns: np.ndarray
    dates: tuple[str, ...]

    def __post_init__(self):
        returns = np.asarray(self.returns, dtype=float)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "dates", tuple(str(d) for d in self.dates))
        if returns.ndim != 2:
            raise ConfigError(f"returns must be 2-D, got shape {returns.shape}")
        if returns.shape[0] < 2:
            raise ConfigError(f"need at least 2 observations, got {returns.shape[0]}")
        if len(self.dates) != returns.shape[0]:
            raise ConfigError("date labels do not match the number of rows")
        if not np.all(np.isfinite(returns)):
            raise ConfigError("returns contain missing or non-finite values")

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def k(self) -> int:
        return self.returns.shape[1]


def validate_config(cfg: ModelConfig, data: Dataset) -> ModelConfig:
    """Cross-check a configuration against a dataset.

    Returns the configuration with the variant-implied skew mask
    materialized in ``beta_free``.
    """
    cfg = cfg.validate()
    if data.k != cfg.k:
        raise ConfigError(f"dataset has {data.k} series but config declares k={cfg.k}")
    return cfg


def residual_series(y: Dataset, loadings: np.ndarray, f: np.ndarray, i: int) -> np.ndarray:
    """Pseudo-observation series feeding series i's univariate SV update.

    For an observed series (i < k) this is the return net of its factor
    exposure; for a factor index (k <= i < q) the factor path itself.
    """
    loadings = np.asarray(loadings, dtype=float)
    f = np.asarray(f, dtype=float)
    k, p = loadings.shape
    q = k + p
    if not 0 <= i < q:
        raise IndexError(f"series index {i} out of range for q={q}")
    if i < k:
        return y.returns[:, i] - f.T @ loadings[i]
    return f[i - k].copy()


def model_covariance(loadings: np.ndarray, h_t: np.ndarray) -> np.ndarray:
    """One-period observation covariance B Psi B' + Lambda for log-variances h_t."""
    loadings = np.asarray(loadings, dtype=float)
    k, p = loadings.shape
    lam = np.exp(h_t[:k])
    psi = np.exp(h_t[k:k + p])
    return loadings @ np.diag(psi) @ loadings.T + np.diag(lam)


def suggest_series_order(returns: np.ndarray, p: int) -> np.ndarray:
    """Rank series by total correlation with the others.

    Returns the column permutation that puts the most-correlated series
    first; the leading p series then anchor the factors under the
    triangular identification.
    """
    returns = np.asarray(returns, dtype=float)
    corr = np.corrcoef(returns, rowvar=False)
    strength = corr.sum(axis=0) - 1.0
    order = np.argsort(-strength, kind="stable")
    return order
