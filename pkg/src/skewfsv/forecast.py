"""Posterior predictive simulation, density scoring, portfolios and backtests.

Predictive densities are Rao-Blackwellized: factor values and measurement
shocks are integrated analytically per retained draw, so each draw
contributes one Gaussian mixture component per horizon.  Only the future
log variances and mixing values are simulated.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from skewfsv.distributions import LOG_2PI, RngStream
from skewfsv.engine import ChainState, DrawStore, extend_chain_state, run_mcmc
from skewfsv.model import Dataset, ModelConfig

TARGET_FREE = "free"


class PortfolioError(ValueError):
    """The requested portfolio is infeasible or the system is degenerate."""


class ForecastError(RuntimeError):
    """Predictive computation failed (e.g. every mixture component singular)."""


@dataclass(frozen=True)
class ForecastMixture:
    """Gaussian mixture predictive: one component per retained draw and horizon.

    ``means[m, h]`` is the k-vector component mean (loading-mapped skew
    offsets) and ``covs[m, h]`` the component covariance B Vf B' + Vy with
    diagonal Vf, Vy built from the simulated future (h, z).
    """

    means: np.ndarray  # (M, H, k)
    covs: np.ndarray   # (M, H, k, k)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def horizons(self) -> int:
        return self.means.shape[1]

    def mean_cov(self, horizon: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Mixture mean and total covariance at the given horizon (1-based)."""
        mu = self.means[:, horizon - 1]
        cov = self.covs[:, horizon - 1]
        m = mu.mean(axis=0)
        dev = mu - m
        total = cov.mean(axis=0) + dev.T @ dev / mu.shape[0]
        return m, total


def simulate_forward(final_h: np.ndarray, mu: np.ndarray, phi: np.ndarray,
                     sigma: np.ndarray, nu: np.ndarray, horizon: int,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Simulate future latent paths per retained draw.

    Forward volatility innovations use their marginal law; the within-period
    shock correlation is integrated out with the measurement shocks.
    Arrays are (M, q); returns (h, z) with shape (M, horizon, q).
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    n_draws, q = final_h.shape
    h_out = np.empty((n_draws, horizon, q))
    z_out = np.empty((n_draws, horizon, q))
    prev = final_h
    half_nu = nu / 2.0
    for j in range(horizon):
        prev = mu + phi * (prev - mu) + sigma * rng.standard_normal((n_draws, q))
        h_out[:, j] = prev
        z_out[:, j] = half_nu / rng.standard_gamma(
            np.broadcast_to(half_nu, (n_draws, q)))
    return h_out, z_out


def build_mixture(store: DrawStore, horizon: int, stream: RngStream) -> ForecastMixture:
    """Predictive mixture from a finished fit."""
    cfg = store.config
    k, p, q = cfg.k, cfg.p, cfg.q
    rng = stream.generator()
    h_fut, z_fut = simulate_forward(
        store.final_h, store.mu, store.phi, store.sigma, store.nu, horizon, rng
    )
    n_draws = store.final_h.shape[0]
    c = store.nu / (store.nu - 2.0)
    offset = store.beta[:, None, :] * (z_fut - c[:, None, :]) * np.exp(0.5 * h_fut)
    variance = z_fut * np.exp(h_fut)

    loadings = np.zeros((n_draws, k, p))
    for i in range(min(k, p)):
        loadings[:, i, i] = 1.0
    for col, (i, j) in enumerate(store.free_loading_index):
        loadings[:, i, j] = store.loadings[:, col]

    means = np.einsum("mkp,mhp->mhk", loadings, offset[:, :, k:]) + offset[:, :, :k]
    covs = np.einsum("mkp,mhp,mlp->mhkl", loadings, variance[:, :, k:], loadings)
    idx = np.arange(k)
    covs[:, :, idx, idx] += variance[:, :, :k]
    return ForecastMixture(means=means, covs=covs)


def predictive_log_density(y_realized: np.ndarray, mix: ForecastMixture,
                           horizon: int = 1) -> float:
    """Log of the mixture density at the realized return vector.

    Singular components are skipped with a warning; it is an error when
    none remain.
    """
    y = np.asarray(y_realized, dtype=float)
    mu = mix.means[:, horizon - 1]
    cov = mix.covs[:, horizon - 1]
    n_comp, k = mu.shape
    dev = y[None, :] - mu
    try:
        chol = np.linalg.cholesky(cov)
        sol = np.linalg.solve(chol, dev[:, :, None])[:, :, 0]
        logdet = 2.0 * np.sum(np.log(chol[:, np.arange(k), np.arange(k)]), axis=1)
        logs = -0.5 * (k * LOG_2PI + logdet + np.sum(sol * sol, axis=1))
    except np.linalg.LinAlgError:
        logs_list = []
        skipped = 0
        for m in range(n_comp):
            try:
                ch = np.linalg.cholesky(cov[m])
            except np.linalg.LinAlgError:
                skipped += 1
                continue
            s = np.linalg.solve(ch, dev[m])
            logs_list.append(-0.5 * (k * LOG_2PI + 2.0 * np.sum(np.log(np.diag(ch))) + s @ s))
        if not logs_list:
            raise ForecastError("every mixture component is singular")
        warnings.warn(f"skipped {skipped} singular mixture components", RuntimeWarning)
        logs = np.asarray(logs_list)
    return float(special.logsumexp(logs) - math.log(logs.shape[0]))


def optimize_portfolio(m: np.ndarray, cov: np.ndarray,
                       target: float | None = None) -> np.ndarray:
    """Minimum-variance weights, optionally with a mean-return target.

    Solves the equality-constrained quadratic program through its KKT
    system.  Without a target the single constraint is full investment;
    with one, the mean constraint is added.  Degenerate systems (forecast
    means proportional to one) raise instead of being regularized.
    """
    m = np.asarray(m, dtype=float)
    cov = np.asarray(cov, dtype=float)
    k = m.shape[0]
    ones = np.ones(k)
    if target is None:
        try:
            raw = np.linalg.solve(cov, ones)
        except np.linalg.LinAlgError as exc:
            raise PortfolioError("forecast covariance is singular") from exc
        total = float(raw @ ones)
        if total == 0.0 or not np.isfinite(total):
            raise PortfolioError("degenerate covariance: weights undefined")
        return raw / total
    kkt = np.zeros((k + 2, k + 2))
    kkt[:k, :k] = 2.0 * cov
    kkt[:k, k] = ones
    kkt[:k, k + 1] = m
    kkt[k, :k] = ones
    kkt[k + 1, :k] = m
    rhs = np.zeros(k + 2)
    rhs[k] = 1.0
    rhs[k + 1] = target
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise PortfolioError(
            "infeasible target: forecast means are proportional to ones"
        ) from exc
    w = sol[:k]
    if (not np.all(np.isfinite(w)) or abs(w @ ones - 1.0) > 1e-8
            or abs(w @ m - target) > 1e-8 * max(1.0, abs(target))):
        raise PortfolioError("portfolio constraints could not be met (degenerate system)")
    return w


def var_quantile(weights: np.ndarray, mix: ForecastMixture, alpha: float,
                 horizon: int = 1) -> float:
    """alpha-quantile of the predictive portfolio return.

    The portfolio return is an exact univariate normal mixture; the
    quantile is found by bracketing and root-finding on its CDF.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    w = np.asarray(weights, dtype=float)
    mu = mix.means[:, horizon - 1] @ w
    sd = np.sqrt(np.einsum("mij,i,j->m", mix.covs[:, horizon - 1], w, w))
    sd = np.maximum(sd, 1e-300)

    def cdf_gap(x: float) -> float:
        return float(np.mean(stats.norm.cdf((x - mu) / sd))) - alpha

    lo = float(np.min(mu - 40.0 * sd))
    hi = float(np.max(mu + 40.0 * sd))
    return float(optimize.brentq(cdf_gap, lo, hi, xtol=1e-12, rtol=8.9e-16))


def kupiec_lr(n: int, n_days: int, alpha: float) -> tuple[float, float]:
    """Unconditional-coverage likelihood ratio test of a VaR violation count.

    LR = 2 log{(n/N)^n (1-n/N)^(N-n)} - 2 log{a^n (1-a)^(N-n)} with the
    0 log 0 = 0 convention; asymptotically chi-squared with 1 degree of
    freedom.  Returns (statistic, p_value).
    """
    if not 0 <= n <= n_days:
        raise ValueError(f"violations n={n} outside [0, {n_days}]")
    rate = n / n_days
    log_l1 = special.xlogy(n, rate) + special.xlogy(n_days - n, 1.0 - rate)
    log_l0 = special.xlogy(n, alpha) + special.xlogy(n_days - n, 1.0 - alpha)
    lr = max(2.0 * (log_l1 - log_l0), 0.0)
    return float(lr), float(stats.chi2.sf(lr, df=1))


@dataclass(frozen=True)
class BacktestConfig:
    """Recursive forecasting schedule and portfolio rules."""

    first_window: int
    n_refits: int
    stride: int = 5
    horizons: int = 5
    var_levels: tuple[float, ...] = (0.005, 0.01, 0.05)
    targets: tuple[float, ...] = (0.00005, 0.0001, 0.0002)
    include_target_free: bool = True
    weights_at_horizon_one: bool = False
    warm_start: bool = True
    refit_burn_in: int | None = None

    def validate(self) -> None:
        if self.first_window < 2:
            raise ValueError("first_window must be at least 2")
        if self.n_refits < 1:
            raise ValueError("n_refits must be at least 1")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if self.horizons < self.stride:
            raise ValueError("horizons must cover the refit stride")

    def rules(self) -> list[tuple[str, float | None]]:
        out: list[tuple[str, float | None]] = [
            (f"target={t:g}", t) for t in self.targets
        ]
        if self.include_target_free:
            out.append((TARGET_FREE, None))
        return out

    @property
    def n_forecast_days(self) -> int:
        return self.n_refits * self.stride


@dataclass
class BacktestReport:
    """Per-day scores and portfolio outcomes of one model's recursive run."""

    variant: str
    day_index: np.ndarray          # (D,) row indices into the dataset
    day_dates: list[str]
    day_horizon: np.ndarray        # (D,) horizon used for each day
    log_scores: np.ndarray         # (D,) log predictive density of the realized vector
    rules: list[str]
    weights: dict[str, np.ndarray]           # rule -> (D, k), NaN when infeasible
    portfolio_returns: dict[str, np.ndarray]  # rule -> (D,)
    var_thresholds: dict[tuple[str, float], np.ndarray]
    infeasible_days: dict[str, int] = field(default_factory=dict)

    @property
    def n_days(self) -> int:
        return self.day_index.shape[0]

    def cumulative_return(self, rule: str) -> float:
        return float(np.sum(self.portfolio_returns[rule]))

    def violations(self, rule: str, alpha: float) -> tuple[int, int]:
        """(violation count, scored days) for one rule and VaR level."""
        thr = self.var_thresholds[(rule, alpha)]
        ret = self.portfolio_returns[rule]
        ok = np.isfinite(thr) & np.isfinite(ret)
        return int(np.sum(ret[ok] < thr[ok])), int(np.sum(ok))

    def kupiec_table(self) -> list[dict]:
        rows = []
        for rule in self.rules:
            for alpha in sorted({a for (r, a) in self.var_thresholds if r == rule}):
                n, days = self.violations(rule, alpha)
                if days == 0:
                    continue
                lr, pval = kupiec_lr(n, days, alpha)
                rows.append({
                    "model": self.variant, "rule": rule, "alpha": alpha,
                    "violations": n, "days": days, "lr": lr, "p_value": pval,
                    "reject_10pct": bool(pval < 0.10),
                })
        return rows


def lpdr_table(reports: dict[str, BacktestReport], base: str) -> list[dict]:
    """Cumulative log predictive density ratios against the base model.

    One row per model with per-horizon sums and the total; the base model
    appears with zeros by construction.
    """
    if base not in reports:
        raise KeyError(f"base model {base!r} missing from reports")
    base_report = reports[base]
    horizons = sorted(set(int(h) for h in base_report.day_horizon))
    rows = []
    for name, rep in reports.items():
        if not np.array_equal(rep.day_index, base_report.day_index):
            raise ValueError(f"report {name!r} scored different days than the base")
        diff = rep.log_scores - base_report.log_scores
        row: dict = {"model": name}
        for h in horizons:
            row[f"h{h}"] = float(np.sum(diff[rep.day_horizon == h]))
        row["total"] = float(np.sum(diff))
        rows.append(row)
    return rows


def _refit_seed(seed: int, refit: int) -> int:
    return int(np.random.SeedSequence((seed, 7001, refit)).generate_state(1)[0])


def recursive_backtest(data: Dataset, cfg: ModelConfig, bt: BacktestConfig,
                       n_workers: int | None = None, progress: bool = False
                       ) -> BacktestReport:
    """Recursive out-of-sample exercise for one model variant.

    Refits every ``stride`` business days (warm-started from the previous
    window's final state), forecasts one to ``horizons`` days ahead and
    scores each realized day at its matching horizon (or always at horizon
    one when configured).  Infeasible portfolio rules are recorded as NaN
    days rather than silently adjusted.
    """
    bt.validate()
    needed = bt.first_window + bt.n_forecast_days
    if data.T < needed:
        raise ValueError(
            f"insufficient data: need {needed} rows "
            f"({bt.first_window} first window + {bt.n_forecast_days} forecast days), "
            f"got {data.T}"
        )
    y_all = data.returns
    n_days = bt.n_forecast_days
    k = cfg.k
    rules = bt.rules()
    day_index = np.empty(n_days, dtype=int)
    day_horizon = np.empty(n_days, dtype=int)
    log_scores = np.empty(n_days)
    weights = {name: np.full((n_days, k), np.nan) for name, _ in rules}
    port_returns = {name: np.full(n_days, np.nan) for name, _ in rules}
    var_thr = {(name, a): np.full(n_days, np.nan) for name, _ in rules for a in bt.var_levels}
    infeasible = {name: 0 for name, _ in rules}

    state: ChainState | None = None
    day = 0
    for refit in range(bt.n_refits):
        t_end = bt.first_window + refit * bt.stride
        window = Dataset(returns=y_all[:t_end], dates=data.dates[:t_end])
        fit_cfg = cfg
        initial = None
        if bt.warm_start and state is not None:
            initial = extend_chain_state(state, t_end)
            if bt.refit_burn_in is not None:
                fit_cfg = dataclasses.replace(
                    cfg, mcmc=dataclasses.replace(cfg.mcmc, burn_in=bt.refit_burn_in)
                )
        fit_cfg = dataclasses.replace(
            fit_cfg, mcmc=dataclasses.replace(fit_cfg.mcmc, seed=_refit_seed(cfg.mcmc.seed, refit))
        )
        store = run_mcmc(fit_cfg, window, n_workers=n_workers)
        state = store.final_state
        mix = build_mixture(store, bt.horizons, RngStream(cfg.mcmc.seed, (7100, refit)))
        if progress:
            print(f"refit {refit + 1}/{bt.n_refits} (window {t_end})", flush=True)

        for h in range(1, bt.stride + 1):
            row = t_end + h - 1
            realized = y_all[row]
            day_index[day] = row
            day_horizon[day] = h
            log_scores[day] = predictive_log_density(realized, mix, horizon=h)
            w_h = 1 if bt.weights_at_horizon_one else h
            m_vec, cov = mix.mean_cov(horizon=w_h)
            for name, target in rules:
                try:
                    w = optimize_portfolio(m_vec, cov, target)
                except PortfolioError:
                    infeasible[name] += 1
                    continue
                weights[name][day] = w
                port_returns[name][day] = float(w @ realized)
                for a in bt.var_levels:
                    var_thr[(name, a)][day] = var_quantile(w, mix, a, horizon=w_h)
            day += 1

    return BacktestReport(
        variant=cfg.variant,
        day_index=day_index,
        day_dates=[data.dates[i] for i in day_index],
        day_horizon=day_horizon,
        log_scores=log_scores,
        rules=[name for name, _ in rules],
        weights=weights,
        portfolio_returns=port_returns,
        var_thresholds=var_thr,
        infeasible_days=infeasible,
    )
