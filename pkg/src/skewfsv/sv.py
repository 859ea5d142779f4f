"""Per-series conditional samplers for one volatility process with leverage.

Conditional on the loadings and factor paths, the model decouples into
q = k + p univariate state-space blocks.  This module updates one such
block: the log-variance path h, the mixing path z, the static parameters
(mu, phi, sigma, rho, nu) and the skew coefficient beta with its
spike-and-slab indicator.  Hot loops live in :mod:`skewfsv.kernels`.

Derivations for the conjugate pieces (the mu update and the skew-
coefficient regression) are spelled out in ``docs/math_notes.md``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from skewfsv import kernels
from skewfsv.distributions import LOG_2PI, log_density_beta
from skewfsv.model import PriorSet


@dataclass
class SvSeriesState:
    """Mutable per-series chain state.

    ``eta_hat`` (volatility innovations) and ``sigma_hat_sq`` (conditional
    measurement variances, with the unconditional rule at the final time
    point) are derived arrays; call :meth:`refresh_derived` after touching
    h or the parameters.
    """

    h: np.ndarray
    z: np.ndarray
    mu: float
    phi: float
    sigma: float
    rho: float
    nu: float
    beta: float
    c: float = 0.0
    eta_hat: np.ndarray | None = None
    sigma_hat_sq: np.ndarray | None = None

    def __post_init__(self):
        self.c = self.nu / (self.nu - 2.0)
        self.refresh_derived()

    @property
    def t_len(self) -> int:
        return self.h.shape[0]

    def set_nu(self, nu: float) -> None:
        self.nu = nu
        self.c = nu / (nu - 2.0)

    def refresh_derived(self) -> None:
        h, z = self.h, self.z
        self.eta_hat = (h[1:] - self.mu) - self.phi * (h[:-1] - self.mu)
        sighat = z * np.exp(h)
        if self.t_len > 1:
            sighat[:-1] *= 1.0 - self.rho * self.rho
        self.sigma_hat_sq = sighat

    def loglik(self, ytilde: np.ndarray) -> float:
        return float(
            kernels.sv_loglik(
                self.h, ytilde, self.z,
                self.mu, self.phi, self.sigma, self.rho, self.beta, self.c,
            )
        )


def block_bounds(t_len: int, block_size: int, offset: int) -> np.ndarray:
    """Block boundaries [0, offset, offset + size, ..., t_len).

    ``offset`` in 1..block_size randomizes the endpoints from sweep to
    sweep so no boundary point is permanently conditioned on.
    """
    if offset >= t_len:
        return np.array([0, t_len], dtype=np.int64)
    inner = np.arange(offset, t_len, block_size, dtype=np.int64)
    return np.concatenate(([0], inner, [t_len]))


def sample_h_path(ytilde: np.ndarray, state: SvSeriesState, rng: np.random.Generator,
                  block_size: int = 50) -> tuple[int, int]:
    """Block Metropolis sweep over the log-variance path.

    Proposals come from the AR(1) prior bridge between the block
    boundaries, so the kernel leaves the exact conditional invariant
    whatever the block size.  Returns (accepted, n_blocks).
    """
    t_len = state.t_len
    offset = int(rng.integers(1, block_size + 1))
    bounds = block_bounds(t_len, block_size, offset)
    normals = rng.standard_normal(t_len)
    log_u = np.log(rng.random(bounds.shape[0] - 1))
    scratch = np.empty(t_len)
    accepted = kernels.hpath_block_update(
        state.h, ytilde, state.z,
        state.mu, state.phi, state.sigma, state.rho, state.beta, state.c,
        bounds, normals, log_u, scratch,
    )
    state.refresh_derived()
    return int(accepted), bounds.shape[0] - 1


def _z_measurement_pieces(ytilde: np.ndarray, state: SvSeriesState):
    """Per-site constants of the mixing conditional: (r, av, one_m)."""
    t_len = state.t_len
    one_m = np.full(t_len, 1.0 - state.rho**2)
    one_m[t_len - 1] = 1.0
    av = np.zeros(t_len)
    if t_len > 1:
        av[:-1] = state.rho * state.eta_hat / state.sigma
    r = ytilde * np.exp(-0.5 * state.h) + state.beta * state.c
    return r, av, one_m


def sample_z_path(ytilde: np.ndarray, state: SvSeriesState, rng: np.random.Generator,
                  rw_scale: float = 0.8) -> int:
    """Elementwise Metropolis update of the mixing path; returns acceptances.

    Two vectorized passes per call, both leaving the exact conditional
    invariant.  First an independence proposal that collects every
    inverse-gamma-kernel factor of the conditional (the leftover factor
    vanishes when beta = rho = 0, so the symmetric no-leverage case
    accepts always).  Then a log-scale random walk, whose local moves keep
    the path mobile when a large skew coefficient makes the independence
    proposal's tail draws unacceptable.  Sites are conditionally
    independent, so both passes are elementwise.  Returns the acceptance
    count of the independence pass.
    """
    t_len = state.t_len
    beta, nu = state.beta, state.nu
    r, av, one_m = _z_measurement_pieces(ytilde, state)

    # Pass 1: inverse-gamma independence proposal.
    ig_scale = 0.5 * (nu + r * r / one_m)
    gam = rng.standard_gamma((nu + 1.0) / 2.0, t_len)
    zprop = ig_scale / gam

    def leftover(zv):
        root = np.sqrt(zv)
        return (beta * beta * zv + 2.0 * beta * av * root
                - 2.0 * av * r / root) / (2.0 * one_m)

    log_u = np.log(rng.random(t_len))
    take = log_u < leftover(state.z) - leftover(zprop)
    state.z[take] = zprop[take]
    accepted = int(np.count_nonzero(take))

    # Pass 2: log-scale random walk against the full conditional.
    def log_cond(zv):
        dev = r - beta * zv - np.sqrt(zv) * av
        return (-(nu + 3.0) / 2.0 * np.log(zv) - nu / (2.0 * zv)
                - dev * dev / (2.0 * zv * one_m))

    zprop = state.z * np.exp(rw_scale * rng.standard_normal(t_len))
    log_u = np.log(rng.random(t_len))
    log_acc = log_cond(zprop) - log_cond(state.z) + np.log(zprop / state.z)
    take = log_u < log_acc
    state.z[take] = zprop[take]

    state.refresh_derived()
    return accepted


def _eps_path(ytilde: np.ndarray, state: SvSeriesState) -> np.ndarray:
    """Standardized measurement shocks implied by the current state."""
    u = ytilde * np.exp(-0.5 * state.h)
    return (u - state.beta * (state.z - state.c)) / np.sqrt(state.z)


def sample_level_shift(state: SvSeriesState, ytilde: np.ndarray,
                       rng: np.random.Generator, priors: PriorSet,
                       scale: float) -> bool:
    """Joint Metropolis shift of the whole log-variance path and its level.

    Shifting (h, mu) together leaves every transition and the stationary
    start unchanged, so the acceptance ratio involves only the measurement
    terms and the mu prior.  This move fixes the slow mixing of the
    volatility level that single-block path updates cannot repair.
    """
    delta = rng.standard_normal() * scale
    log_u = math.log(rng.random())
    cur = (state.loglik(ytilde)
           - 0.5 * (state.mu - priors.mu_mean) ** 2 / priors.mu_var)
    new = (kernels.sv_loglik(state.h + delta, ytilde, state.z, state.mu + delta,
                             state.phi, state.sigma, state.rho, state.beta, state.c)
           - 0.5 * (state.mu + delta - priors.mu_mean) ** 2 / priors.mu_var)
    accept = math.isfinite(new) and log_u < new - cur
    if accept:
        state.h += delta
        state.mu += delta
        state.refresh_derived()
    return bool(accept)


def sample_mu(state: SvSeriesState, ytilde: np.ndarray, rng: np.random.Generator,
              priors: PriorSet) -> float:
    """Exact Gibbs draw of the log-variance level.

    Normal prior times three Gaussian sources: the stationary start, and
    for each interior t the volatility innovation conditioned on the
    measurement shock (the leverage regression eta | eps).
    """
    sig2 = state.sigma * state.sigma
    one_m_phi = 1.0 - state.phi
    prec = 1.0 / priors.mu_var + (1.0 - state.phi**2) / sig2
    lin = priors.mu_mean / priors.mu_var + state.h[0] * (1.0 - state.phi**2) / sig2
    if state.t_len > 1:
        eps = _eps_path(ytilde, state)[:-1]
        w = state.h[1:] - state.phi * state.h[:-1]
        obs = w - state.rho * state.sigma * eps
        resid_var = sig2 * (1.0 - state.rho**2)
        prec += (state.t_len - 1) * one_m_phi**2 / resid_var
        lin += one_m_phi * float(np.sum(obs)) / resid_var
    mu = lin / prec + rng.standard_normal() / math.sqrt(prec)
    state.mu = float(mu)
    state.refresh_derived()
    return state.mu


def _log_prior_phi(phi: float, priors: PriorSet) -> float:
    return float(log_density_beta((phi + 1.0) / 2.0, priors.phi_beta_a, priors.phi_beta_b))


def _log_prior_rho(rho: float, priors: PriorSet) -> float:
    return float(log_density_beta((rho + 1.0) / 2.0, priors.rho_beta_a, priors.rho_beta_b))


def _log_prior_sigma(sigma: float, priors: PriorSet) -> float:
    # sigma^-2 is gamma; transform to sigma (the log 2 constant is dropped).
    shape = priors.sigma_inv2_shape
    rate = priors.sigma_inv2_rate_effective()
    x = sigma**-2
    return (shape - 1.0) * math.log(x) - rate * x - 3.0 * math.log(sigma)


def sample_phi_sigma_rho(state: SvSeriesState, ytilde: np.ndarray, rng: np.random.Generator,
                         priors: PriorSet, phi_scale: float, sigrho_scale: float
                         ) -> tuple[bool, bool]:
    """Random-walk Metropolis: phi alone, then (sigma, rho) jointly.

    Walks run on arctanh / log transformed scales; acceptance folds in the
    transform Jacobians and the full path likelihood.
    """
    # phi | rest
    step = rng.standard_normal() * phi_scale
    log_u = math.log(rng.random())
    phi_new = math.tanh(math.atanh(state.phi) + step)
    acc_phi = False
    if abs(phi_new) < 1.0:  # tanh can saturate to the boundary in float
        cur = (state.loglik(ytilde) + _log_prior_phi(state.phi, priors)
               + math.log1p(-state.phi**2))
        new = (kernels.sv_loglik(state.h, ytilde, state.z, state.mu, phi_new,
                                 state.sigma, state.rho, state.beta, state.c)
               + _log_prior_phi(phi_new, priors) + math.log1p(-phi_new**2))
        acc_phi = math.isfinite(new) and log_u < new - cur
    if acc_phi:
        state.phi = phi_new

    # (sigma, rho) | rest
    steps = rng.standard_normal(2) * sigrho_scale
    log_u = math.log(rng.random())
    sigma_new = math.exp(math.log(state.sigma) + steps[0])
    rho_new = math.tanh(math.atanh(state.rho) + steps[1])
    acc_sigrho = False
    if abs(rho_new) < 1.0 and 0.0 < sigma_new < math.inf:
        cur = (state.loglik(ytilde)
               + _log_prior_sigma(state.sigma, priors) + _log_prior_rho(state.rho, priors)
               + math.log(state.sigma) + math.log1p(-state.rho**2))
        new = (kernels.sv_loglik(state.h, ytilde, state.z, state.mu, state.phi,
                                 sigma_new, rho_new, state.beta, state.c)
               + _log_prior_sigma(sigma_new, priors) + _log_prior_rho(rho_new, priors)
               + math.log(sigma_new) + math.log1p(-rho_new**2))
        acc_sigrho = math.isfinite(new) and log_u < new - cur
    if acc_sigrho:
        state.sigma = sigma_new
        state.rho = rho_new
    state.refresh_derived()
    return bool(acc_phi), bool(acc_sigrho)


def _z_prior_loglik(z: np.ndarray, nu: float) -> float:
    half = nu / 2.0
    t_len = z.shape[0]
    return (t_len * (half * math.log(half) - math.lgamma(half))
            - (half + 1.0) * float(np.sum(np.log(z)))
            - half * float(np.sum(1.0 / z)))


def sample_nu(state: SvSeriesState, ytilde: np.ndarray, rng: np.random.Generator,
              priors: PriorSet, nu_scale: float) -> bool:
    """Metropolis step for the tail parameter on the log(nu - 4) scale.

    The target combines the truncated gamma prior, the inverse-gamma
    likelihood of the mixing path and the measurement terms, which shift
    through the recomputed mixing mean c.  The transform keeps every
    proposal above 4 by construction.
    """
    step = rng.standard_normal() * nu_scale
    log_u = math.log(rng.random())
    nu_new = 4.0 + math.exp(math.log(state.nu - 4.0) + step)
    c_new = nu_new / (nu_new - 2.0)
    shape = priors.nu_shape
    rate = priors.nu_rate_effective()
    # Untruncated gamma log density: the truncation constant cancels.
    cur = (_z_prior_loglik(state.z, state.nu) + state.loglik(ytilde)
           + (shape - 1.0) * math.log(state.nu) - rate * state.nu
           + math.log(state.nu - 4.0))
    new = (_z_prior_loglik(state.z, nu_new)
           + kernels.sv_loglik(state.h, ytilde, state.z, state.mu, state.phi,
                               state.sigma, state.rho, state.beta, c_new)
           + (shape - 1.0) * math.log(nu_new) - rate * nu_new
           + math.log(nu_new - 4.0))
    accept = math.isfinite(new) and log_u < new - cur
    if accept:
        state.set_nu(nu_new)
        state.refresh_derived()
    return bool(accept)


def sample_phi_sigma_ridge(state: SvSeriesState, ytilde: np.ndarray,
                           rng: np.random.Generator, priors: PriorSet,
                           scale: float) -> bool:
    """Joint (phi, sigma) move preserving the stationary path variance.

    Walks phi on the arctanh scale and slaves sigma so that
    sigma^2 / (1 - phi^2) stays fixed; on the transformed coordinates the
    map has unit Jacobian.  Travels the persistence/innovation ridge that
    the separate updates cross only in tiny steps.
    """
    step = rng.standard_normal() * scale
    log_u = math.log(rng.random())
    phi_new = math.tanh(math.atanh(state.phi) + step)
    if not abs(phi_new) < 1.0:
        return False
    ratio = (1.0 - phi_new**2) / (1.0 - state.phi**2)
    sigma_new = state.sigma * math.sqrt(ratio)
    if not 0.0 < sigma_new < math.inf:
        return False
    cur = (state.loglik(ytilde)
           + _log_prior_phi(state.phi, priors) + _log_prior_sigma(state.sigma, priors)
           + math.log1p(-state.phi**2) + math.log(state.sigma))
    new = (kernels.sv_loglik(state.h, ytilde, state.z, state.mu, phi_new,
                             sigma_new, state.rho, state.beta, state.c)
           + _log_prior_phi(phi_new, priors) + _log_prior_sigma(sigma_new, priors)
           + math.log1p(-phi_new**2) + math.log(sigma_new))
    accept = math.isfinite(new) and log_u < new - cur
    if accept:
        state.phi = phi_new
        state.sigma = sigma_new
        state.refresh_derived()
    return bool(accept)


def _mixing_sd(nu: float) -> float:
    """Standard deviation of the mixing variable at tail parameter nu."""
    return nu / (nu - 2.0) * math.sqrt(2.0 / (nu - 4.0))


def sample_nu_z_rescale(state: SvSeriesState, ytilde: np.ndarray,
                        rng: np.random.Generator, priors: PriorSet,
                        nu_scale: float, tau0_sq: float) -> bool:
    """Joint move of the tail parameter, the mixing path and the skew slope.

    Proposes nu on the log(nu - 4) walk, maps every z_t through the
    quantile transform between the old and new mixing laws, and rescales
    the skew coefficient by the inverse change in mixing spread (they
    trade off one for one in the measurement mean).  The mixing prior
    terms cancel exactly against the transform Jacobian, so the acceptance
    ratio reduces to the measurement terms, the priors of nu and the skew
    slope, and the map Jacobians.  This traverses the ridge along which
    the tail parameter, the mixing spread and the skew slope compensate,
    which the one-at-a-time updates cross only in tiny steps.
    """
    step = rng.standard_normal() * nu_scale
    log_u = math.log(rng.random())
    nu_new = 4.0 + math.exp(math.log(state.nu - 4.0) + step)
    c_new = nu_new / (nu_new - 2.0)
    half_old = state.nu / 2.0
    half_new = nu_new / 2.0
    # Upper-tail probabilities of the current path; map through the new law.
    tail_u = special.gammainc(half_old, half_old / state.z)
    tail_u = np.clip(tail_u, 1e-300, 1.0 - 1e-16)
    z_new = half_new / special.gammaincinv(half_new, tail_u)
    if not np.all(np.isfinite(z_new)) or np.any(z_new <= 0.0):
        return False
    scale_ratio = _mixing_sd(state.nu) / _mixing_sd(nu_new)
    beta_new = state.beta * scale_ratio
    shape = priors.nu_shape
    rate = priors.nu_rate_effective()
    cur = (state.loglik(ytilde)
           + (shape - 1.0) * math.log(state.nu) - rate * state.nu
           + math.log(state.nu - 4.0))
    new = (kernels.sv_loglik(state.h, ytilde, z_new, state.mu, state.phi,
                             state.sigma, state.rho, beta_new, c_new)
           + (shape - 1.0) * math.log(nu_new) - rate * nu_new
           + math.log(nu_new - 4.0))
    if state.beta != 0.0:
        # Slab prior ratio and the Jacobian of the beta map.
        cur += -0.5 * state.beta**2 / tau0_sq
        new += -0.5 * beta_new**2 / tau0_sq + math.log(scale_ratio)
    accept = math.isfinite(new) and log_u < new - cur
    if accept:
        state.z = z_new
        state.beta = beta_new
        state.set_nu(nu_new)
        state.refresh_derived()
    return bool(accept)


def beta_posterior_stats(ytilde: np.ndarray, state: SvSeriesState,
                         tau0_sq: float) -> tuple[float, float]:
    """Posterior mean and variance of the skew coefficient under a normal prior.

    Weighted regression of the leverage-adjusted response on the regressor
    (z - c) e^(h/2); the adjustment subtracts the measurement-mean shift
    implied by conditioning the shock pair (see docs/math_notes.md).
    """
    t_len = ytilde.shape[0]
    if t_len == 0:
        return 0.0, float(tau0_sq)
    x = (state.z - state.c) * np.exp(0.5 * state.h)
    r = ytilde.astype(float).copy()
    if t_len > 1:
        adj = (np.sqrt(state.z[:-1]) * (state.rho * state.eta_hat / state.sigma)
               * np.exp(0.5 * state.h[:-1]))
        r[:-1] -= adj
    w = 1.0 / state.sigma_hat_sq
    tau_hat_sq = 1.0 / (1.0 / tau0_sq + float(np.sum(x * x * w)))
    beta_hat = tau_hat_sq * float(np.sum(x * r * w))
    return beta_hat, tau_hat_sq


def slab_probability(beta_hat: float, tau_hat_sq: float, kappa: float,
                     tau0_sq: float) -> float:
    """Posterior inclusion probability of the slab component.

    Computed through a stable sigmoid of the log Bayes factor
    log gamma = beta_hat^2 / (2 tau_hat^2) + log(tau_hat / tau0).
    """
    if kappa >= 1.0:
        return 1.0
    if kappa <= 0.0:
        return 0.0
    log_gamma = beta_hat * beta_hat / (2.0 * tau_hat_sq) + 0.5 * math.log(tau_hat_sq / tau0_sq)
    logit = math.log(kappa / (1.0 - kappa)) + log_gamma
    if logit > 0:
        return 1.0 / (1.0 + math.exp(-logit))
    e = math.exp(logit)
    return e / (1.0 + e)


def sample_beta_spike_slab(beta_hat: float, tau_hat_sq: float, kappa: float,
                           tau0_sq: float, rng: np.random.Generator
                           ) -> tuple[float, bool]:
    """Draw the skew coefficient from its spike-and-slab conditional.

    With probability ``slab_probability`` the draw is normal around the
    regression posterior; otherwise the coefficient is pinned at zero.
    Both random inputs are always consumed to keep streams aligned.
    """
    u = rng.random()
    normal = rng.standard_normal()
    if u < slab_probability(beta_hat, tau_hat_sq, kappa, tau0_sq):
        return beta_hat + math.sqrt(tau_hat_sq) * normal, True
    return 0.0, False


def update_series(state: SvSeriesState, ytilde: np.ndarray, rng: np.random.Generator,
                  priors: PriorSet, tau0_sq: float, kappa: float, beta_free: bool,
                  block_size: int, scales: np.ndarray, sv_passes: int = 2) -> dict:
    """One full conditional sweep of a single series.

    ``scales`` holds the Metropolis step sizes (phi, sigma-rho, nu, level
    shift).  ``kappa`` is the current slab weight (1.0 when sparsity is
    off); ``beta_free`` False pins the skew coefficient at zero.  Returns
    the acceptance counters used for adaptation and reporting.
    """
    acc_h = acc_z = n_blocks = 0
    for _ in range(max(sv_passes, 1)):
        a_h, n_b = sample_h_path(ytilde, state, rng, block_size)
        acc_h += a_h
        n_blocks += n_b
        acc_z += sample_z_path(ytilde, state, rng)
    acc_level = sample_level_shift(state, ytilde, rng, priors, float(scales[3]))
    sample_mu(state, ytilde, rng, priors)
    acc_phi, acc_sigrho = sample_phi_sigma_rho(
        state, ytilde, rng, priors, float(scales[0]), float(scales[1])
    )
    acc_nu = sample_nu(state, ytilde, rng, priors, float(scales[2]))
    acc_nuz = sample_nu_z_rescale(state, ytilde, rng, priors, float(scales[4]), tau0_sq)
    acc_ridge = sample_phi_sigma_ridge(state, ytilde, rng, priors, float(scales[5]))
    if beta_free:
        beta_hat, tau_hat_sq = beta_posterior_stats(ytilde, state, tau0_sq)
        beta, included = sample_beta_spike_slab(beta_hat, tau_hat_sq, kappa, tau0_sq, rng)
        state.beta = beta
    else:
        rng.random()
        rng.standard_normal()
        state.beta = 0.0
        included = False
    return {
        "h": acc_h,
        "h_blocks": n_blocks,
        "z": acc_z / max(sv_passes, 1),
        "phi": int(acc_phi),
        "sigrho": int(acc_sigrho),
        "nu": int(acc_nu),
        "level": int(acc_level),
        "nu_rescale": int(acc_nuz),
        "phi_ridge": int(acc_ridge),
        "beta_included": bool(included),
    }
