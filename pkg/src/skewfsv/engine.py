"""MCMC sweep orchestration, draw retention and chain diagnostics.

Every sweep runs four phases in a fixed order: (a) the q per-series
updates (independent given the loadings and factors, optionally run on a
thread pool), (b) loading rows, (c) factor values, (d) the slab weight.
All randomness flows from per-(sweep, phase, series) keyed streams, so a
run is a pure function of (config, data, seed) whatever the worker count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from skewfsv import factors as factor_ops
from skewfsv import sv
from skewfsv.diagnostics import effective_sample_size, geweke_z
from skewfsv.distributions import RngStream
from skewfsv.model import Dataset, ModelConfig, loading_free_indices, validate_config

_PHASE_SERIES = 0
_PHASE_LOADINGS = 1
_PHASE_FACTORS = 2
_PHASE_KAPPA = 3

_ADAPT_TARGET = 0.3
_ADAPT_DECAY = 0.6


class EngineError(RuntimeError):
    """Raised when a sweep produces an invalid (non-finite) state."""


@dataclass
class ChainState:
    """Full mutable state of one chain."""

    h: np.ndarray            # (q, T)
    z: np.ndarray            # (q, T)
    f: np.ndarray            # (p, T)
    loadings: np.ndarray     # (k, p)
    mu: np.ndarray           # (q,)
    phi: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    nu: np.ndarray
    beta: np.ndarray
    kappa: float
    scales: np.ndarray       # (q, 3) proposal scales: phi, sigma-rho, nu

    @property
    def c(self) -> np.ndarray:
        return self.nu / (self.nu - 2.0)

    def copy(self) -> "ChainState":
        return ChainState(
            h=self.h.copy(), z=self.z.copy(), f=self.f.copy(),
            loadings=self.loadings.copy(), mu=self.mu.copy(), phi=self.phi.copy(),
            sigma=self.sigma.copy(), rho=self.rho.copy(), nu=self.nu.copy(),
            beta=self.beta.copy(), kappa=self.kappa, scales=self.scales.copy(),
        )


@dataclass
class DrawStore:
    """Retained draws plus sweep metadata.

    Parameter arrays have one row per retained draw.  Path summaries are
    running posterior means plus sparse snapshots to bound memory; set
    ``store_full_paths`` in the MCMC settings for everything.
    """

    config: ModelConfig
    free_loading_index: list[tuple[int, int]]
    mu: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    nu: np.ndarray
    beta: np.ndarray
    beta_nonzero: np.ndarray
    kappa: np.ndarray
    loadings: np.ndarray
    final_h: np.ndarray
    h_mean: np.ndarray
    z_mean: np.ndarray
    f_mean: np.ndarray
    h_snapshots: np.ndarray
    f_snapshots: np.ndarray
    accept_rates: dict[str, np.ndarray]
    final_state: ChainState
    seed: int
    runtime_seconds: float
    full_h: np.ndarray | None = None
    full_z: np.ndarray | None = None
    full_f: np.ndarray | None = None

    @property
    def n_retained(self) -> int:
        return self.mu.shape[0]

    def scalar_chains(self) -> dict[str, np.ndarray]:
        """Named scalar parameter chains, 1-based labels matching the file headers."""
        out: dict[str, np.ndarray] = {}
        q = self.config.q
        for name in ("mu", "phi", "sigma", "rho", "nu", "beta"):
            arr = getattr(self, name)
            for i in range(q):
                out[f"{name}[{i + 1}]"] = arr[:, i]
        for col, (i, j) in enumerate(self.free_loading_index):
            out[f"B[{i + 1},{j + 1}]"] = self.loadings[:, col]
        if self.config.spike_slab_active:
            out["kappa"] = self.kappa
        return out


class _PhaseGuard:
    """Asserts the sweep phases run in their fixed order (debug aid)."""

    def __init__(self):
        self.expected = _PHASE_SERIES

    def enter(self, phase: int) -> None:
        assert phase == self.expected, f"phase {phase} out of order (expected {self.expected})"
        self.expected = (phase + 1) % 4


def initial_state(cfg: ModelConfig, data: Dataset) -> ChainState:
    """Deterministic starting state: principal-component factors, OLS loadings.

    Each starting factor is the j-th principal component rescaled onto its
    anchor series, so every series (anchors included) keeps strictly
    positive residual variance; starting factor paths must never replicate
    an observed series exactly or the chain is planted in a degenerate
    zero-residual basin.
    """
    y = data.returns
    t_len, k = y.shape
    p, q = cfg.p, cfg.q
    u_mat, svals, _ = np.linalg.svd(y, full_matrices=False)
    pcs = u_mat[:, :p] * svals[:p]
    f = np.empty((p, t_len))
    for j in range(p):
        pc = pcs[:, j]
        denom = float(pc @ pc)
        slope = float(pc @ y[:, j]) / denom if denom > 0 else 1.0
        f[j] = pc * (slope if abs(slope) > 1e-8 else 1.0)
    loadings = np.zeros((k, p))
    for i in range(min(k, p)):
        loadings[i, i] = 1.0
    for i in range(1, k):
        r = min(i, p)
        resp = y[:, i] - (f[i] if i < p else 0.0)
        sol, *_ = np.linalg.lstsq(f[:r].T, resp, rcond=None)
        loadings[i, :r] = sol
    mu0 = np.empty(q)
    for i in range(q):
        resid = y[:, i] - f.T @ loadings[i] if i < k else f[i - k]
        mu0[i] = math.log(max(float(np.var(resid)), 1e-12))
    h = np.tile(mu0[:, None], (1, t_len))
    z = np.ones((q, t_len))
    return ChainState(
        h=h, z=z, f=f, loadings=loadings,
        mu=mu0,
        phi=np.full(q, 0.95),
        sigma=np.full(q, 0.15),
        rho=np.zeros(q),
        nu=np.full(q, 10.0),
        beta=np.zeros(q),
        kappa=0.5 if cfg.spike_slab_active else 1.0,
        scales=np.tile(np.array([0.15, 0.2, 0.3, 0.2, 0.4, 0.3]), (q, 1)),
    )


def extend_chain_state(state: ChainState, new_t: int) -> ChainState:
    """Warm-start helper: deterministically pad latent paths to a longer window.

    New log-variance points follow the AR(1) conditional mean, new mixing
    values sit at their prior mean and new factor values at zero; burn-in
    sweeps then adapt them to the new observations.
    """
    old_t = state.h.shape[1]
    if new_t < old_t:
        raise ValueError(f"cannot shrink state from {old_t} to {new_t}")
    out = state.copy()
    if new_t == old_t:
        return out
    q = state.h.shape[0]
    pad = new_t - old_t
    h = np.empty((q, new_t))
    h[:, :old_t] = state.h
    for t in range(old_t, new_t):
        h[:, t] = state.mu + state.phi * (h[:, t - 1] - state.mu)
    z = np.concatenate([state.z, np.tile(state.c[:, None], (1, pad))], axis=1)
    f = np.concatenate([state.f, np.zeros((state.f.shape[0], pad))], axis=1)
    out.h, out.z, out.f = h, z, f
    return out


def _resolve_workers(n_workers: int | None) -> int:
    if n_workers is None:
        n_workers = 1
    cap = os.environ.get("SKEWFSV_THREADS")
    if cap:
        n_workers = min(n_workers, max(1, int(cap)))
    return max(1, n_workers)


def _series_task(i, state, ytilde, stream, cfg, kappa, beta_free):
    series = sv.SvSeriesState(
        h=state.h[i], z=state.z[i],
        mu=float(state.mu[i]), phi=float(state.phi[i]), sigma=float(state.sigma[i]),
        rho=float(state.rho[i]), nu=float(state.nu[i]), beta=float(state.beta[i]),
    )
    rng = stream.generator()
    acc = sv.update_series(
        series, ytilde, rng, cfg.priors, cfg.tau0_sq, kappa,
        bool(beta_free), cfg.mcmc.sv_block_size, state.scales[i],
        sv_passes=cfg.mcmc.sv_passes,
    )
    return i, series, acc


def _check_finite(sweep: int, **named_arrays) -> None:
    for name, arr in named_arrays.items():
        if not np.all(np.isfinite(arr)):
            raise EngineError(f"non-finite state at sweep {sweep}: component {name}")


def run_mcmc(cfg: ModelConfig, data: Dataset, n_workers: int | None = None,
             initial: ChainState | None = None, progress: bool = False) -> DrawStore:
    """Run the full sampler and return the retained draws.

    The result is a pure function of (cfg, data, cfg.mcmc.seed); the worker
    count only changes wall time.
    """
    cfg = validate_config(cfg, data)
    mcmc = cfg.mcmc
    y = data.returns
    t_len, k = y.shape
    p, q = cfg.p, cfg.q
    beta_free = cfg.beta_free_array()
    q_free = int(beta_free.sum())
    free_idx = loading_free_indices(k, p)
    n_workers = _resolve_workers(n_workers)
    root = RngStream(mcmc.seed)

    state = initial.copy() if initial is not None else initial_state(cfg, data)
    state.beta[~beta_free] = 0.0
    if not cfg.spike_slab_active:
        state.kappa = 1.0

    n_total = mcmc.burn_in + mcmc.n_draws
    n_retained = (mcmc.n_draws + mcmc.thin - 1) // mcmc.thin
    store_mu = np.empty((n_retained, q))
    store_phi = np.empty((n_retained, q))
    store_sigma = np.empty((n_retained, q))
    store_rho = np.empty((n_retained, q))
    store_nu = np.empty((n_retained, q))
    store_beta = np.empty((n_retained, q))
    store_beta_nz = np.zeros((n_retained, q), dtype=bool)
    store_kappa = np.empty(n_retained)
    store_load = np.empty((n_retained, len(free_idx)))
    store_final_h = np.empty((n_retained, q))
    h_mean = np.zeros((q, t_len))
    z_mean = np.zeros((q, t_len))
    f_mean = np.zeros((p, t_len))
    snap_every = max(1, mcmc.path_snapshot_every)
    snap_idx = range(0, n_retained, snap_every)
    h_snaps = np.empty((len(snap_idx), q, t_len))
    f_snaps = np.empty((len(snap_idx), p, t_len))
    full_h = np.empty((n_retained, q, t_len)) if mcmc.store_full_paths else None
    full_z = np.empty((n_retained, q, t_len)) if mcmc.store_full_paths else None
    full_f = np.empty((n_retained, p, t_len)) if mcmc.store_full_paths else None

    acc_keys = ("h", "z", "phi", "sigrho", "nu", "level", "nu_rescale", "phi_ridge")
    acc_counts = {key: np.zeros(q) for key in acc_keys}
    acc_totals = {key: np.zeros(q) for key in acc_keys}

    pool = ThreadPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    started = time.time()
    retained = 0
    try:
        for sweep in range(n_total):
            guard = _PhaseGuard()
            adapting = sweep < mcmc.burn_in

            # (a) per-series updates, independent given (loadings, f)
            guard.enter(_PHASE_SERIES)
            ytildes = [
                y[:, i] - state.f.T @ state.loadings[i] if i < k else state.f[i - k].copy()
                for i in range(q)
            ]
            tasks = [
                (i, state, ytildes[i], root.child(sweep, _PHASE_SERIES, i), cfg,
                 state.kappa, beta_free[i])
                for i in range(q)
            ]
            if pool is not None:
                results = list(pool.map(lambda args: _series_task(*args), tasks))
            else:
                results = [_series_task(*args) for args in tasks]
            results.sort(key=lambda item: item[0])
            for i, series, acc in results:
                state.mu[i] = series.mu
                state.phi[i] = series.phi
                state.sigma[i] = series.sigma
                state.rho[i] = series.rho
                state.nu[i] = series.nu
                state.beta[i] = series.beta
                if adapting:
                    gain = (sweep + 1.0) ** -_ADAPT_DECAY
                    state.scales[i, 0] *= math.exp(gain * (acc["phi"] - _ADAPT_TARGET))
                    state.scales[i, 1] *= math.exp(gain * (acc["sigrho"] - _ADAPT_TARGET))
                    state.scales[i, 2] *= math.exp(gain * (acc["nu"] - _ADAPT_TARGET))
                    state.scales[i, 3] *= math.exp(gain * (acc["level"] - _ADAPT_TARGET))
                    state.scales[i, 4] *= math.exp(gain * (acc["nu_rescale"] - _ADAPT_TARGET))
                    state.scales[i, 5] *= math.exp(gain * (acc["phi_ridge"] - _ADAPT_TARGET))
                else:
                    acc_counts["h"][i] += acc["h"] / max(acc["h_blocks"], 1)
                    acc_counts["z"][i] += acc["z"] / t_len
                    acc_counts["level"][i] += acc["level"]
                    acc_counts["nu_rescale"][i] += acc["nu_rescale"]
                    acc_counts["phi_ridge"][i] += acc["phi_ridge"]
                    acc_counts["phi"][i] += acc["phi"]
                    acc_counts["sigrho"][i] += acc["sigrho"]
                    acc_counts["nu"][i] += acc["nu"]
                    for key in acc_keys:
                        acc_totals[key][i] += 1

            alpha, sighat2 = factor_ops.compute_offsets(
                state.h, state.z, state.mu, state.phi, state.sigma,
                state.rho, state.beta, state.c,
            )

            # (b) loading rows
            guard.enter(_PHASE_LOADINGS)
            rng_b = root.child(sweep, _PHASE_LOADINGS).generator()
            for i in range(1, k):
                r = min(i, p)
                prior_mean, prior_cov = cfg.priors.loading_prior(r)
                state.loadings[i, :r] = factor_ops.sample_loading_row(
                    i, y, state.f, alpha, sighat2, prior_mean, prior_cov, rng_b
                )

            # (c) factor values
            guard.enter(_PHASE_FACTORS)
            rng_f = root.child(sweep, _PHASE_FACTORS).generator()
            state.f = factor_ops.sample_factors(y, state.loadings, alpha, sighat2, rng_f)

            # (d) slab weight
            guard.enter(_PHASE_KAPPA)
            rng_k = root.child(sweep, _PHASE_KAPPA).generator()
            if cfg.spike_slab_active:
                n_nonzero = int(np.count_nonzero(state.beta[beta_free]))
                state.kappa = factor_ops.sample_kappa(
                    n_nonzero, q_free, cfg.priors.kappa_beta_a, cfg.priors.kappa_beta_b, rng_k
                )
            else:
                rng_k.random()

            _check_finite(sweep, h=state.h, f=state.f, loadings=state.loadings,
                          mu=state.mu, phi=state.phi, sigma=state.sigma,
                          rho=state.rho, nu=state.nu, beta=state.beta)

            if sweep >= mcmc.burn_in and (sweep - mcmc.burn_in) % mcmc.thin == 0:
                m = retained
                store_mu[m] = state.mu
                store_phi[m] = state.phi
                store_sigma[m] = state.sigma
                store_rho[m] = state.rho
                store_nu[m] = state.nu
                store_beta[m] = state.beta
                store_beta_nz[m] = state.beta != 0.0
                store_kappa[m] = state.kappa
                store_load[m] = [state.loadings[i, j] for i, j in free_idx]
                store_final_h[m] = state.h[:, -1]
                h_mean += state.h
                z_mean += state.z
                f_mean += state.f
                if m % snap_every == 0:
                    h_snaps[m // snap_every] = state.h
                    f_snaps[m // snap_every] = state.f
                if full_h is not None:
                    full_h[m] = state.h
                    full_z[m] = state.z
                    full_f[m] = state.f
                retained += 1
            if progress and (sweep + 1) % 500 == 0:
                print(f"sweep {sweep + 1}/{n_total}", flush=True)
    finally:
        if pool is not None:
            pool.shutdown()

    h_mean /= max(retained, 1)
    z_mean /= max(retained, 1)
    f_mean /= max(retained, 1)
    accept_rates = {
        key: acc_counts[key] / np.maximum(acc_totals[key], 1.0) for key in acc_keys
    }
    return DrawStore(
        config=cfg,
        free_loading_index=free_idx,
        mu=store_mu[:retained], phi=store_phi[:retained], sigma=store_sigma[:retained],
        rho=store_rho[:retained], nu=store_nu[:retained], beta=store_beta[:retained],
        beta_nonzero=store_beta_nz[:retained], kappa=store_kappa[:retained],
        loadings=store_load[:retained], final_h=store_final_h[:retained],
        h_mean=h_mean, z_mean=z_mean, f_mean=f_mean,
        h_snapshots=h_snaps, f_snapshots=f_snaps,
        accept_rates=accept_rates,
        final_state=state.copy(),
        seed=mcmc.seed,
        runtime_seconds=time.time() - started,
        full_h=full_h, full_z=full_z, full_f=full_f,
    )


def summarize_draws(store: DrawStore) -> dict:
    """Posterior medians, 50%/90% intervals and diagnostics per parameter."""
    params = {}
    for name, chain in store.scalar_chains().items():
        entry = {
            "median": float(np.median(chain)),
            "q25": float(np.quantile(chain, 0.25)),
            "q75": float(np.quantile(chain, 0.75)),
            "q05": float(np.quantile(chain, 0.05)),
            "q95": float(np.quantile(chain, 0.95)),
        }
        try:
            entry["geweke_z"] = float(geweke_z(chain))
        except ValueError:
            entry["geweke_z"] = None
        try:
            # Report invariant: effective size never exceeds the draw count.
            entry["ess"] = float(min(effective_sample_size(chain), chain.shape[0]))
        except ValueError:
            entry["ess"] = None
        params[name] = entry
    prob_zero = {
        f"beta[{i + 1}]": float(np.mean(~store.beta_nonzero[:, i]))
        for i in range(store.config.q)
    }
    return {
        "variant": store.config.variant,
        "k": store.config.k,
        "p": store.config.p,
        "n_retained": store.n_retained,
        "seed": store.seed,
        "runtime_seconds": store.runtime_seconds,
        "parameters": params,
        "prob_beta_zero": prob_zero,
        "acceptance_rates": {
            key: [float(v) for v in arr] for key, arr in store.accept_rates.items()
        },
    }
