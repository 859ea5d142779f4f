"""Command-line entry points.

Subcommands map one-to-one onto the library: ``simulate``,
``skewness-study``, ``fit``, ``forecast``, ``backtest`` and ``report``.
All randomness flows from ``--seed``; outputs carry provenance headers.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click
import numpy as np

from skewfsv import dataio
from skewfsv import simulation as sim
from skewfsv.engine import run_mcmc
from skewfsv.forecast import (
    BacktestConfig,
    build_mixture,
    lpdr_table,
    optimize_portfolio,
    recursive_backtest,
    var_quantile,
    PortfolioError,
)
from skewfsv.distributions import RngStream
from skewfsv.model import (
    ConfigError,
    McmcSettings,
    ModelConfig,
    suggest_series_order,
    validate_config,
)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _build_config(data_k: int, config_path, variant, factors, burn_in, draws,
                  thin, seed, block_size) -> ModelConfig:
    if config_path:
        cfg = ModelConfig.from_json(config_path)
        overrides = {}
        if seed is not None:
            overrides["mcmc"] = dataclasses.replace(cfg.mcmc, seed=seed)
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
        return cfg
    mcmc = McmcSettings(
        burn_in=burn_in, n_draws=draws, thin=thin,
        seed=seed if seed is not None else 0, sv_block_size=block_size,
    )
    return ModelConfig(k=data_k, p=factors, variant=variant, mcmc=mcmc)


_fit_options = [
    click.option("--data", "data_path", required=True, type=click.Path(exists=True),
                 help="Returns CSV: date column plus k numeric columns."),
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="JSON model configuration (overrides the inline options)."),
    click.option("--mode", type=click.Choice(["returns", "prices"]), default="returns"),
    click.option("--demean/--no-demean", default=True),
    click.option("--percent", is_flag=True, help="Scale returns by 100 on load."),
    click.option("--variant", type=click.Choice(["S0", "SY", "SF", "SYF", "SSYF"]),
                 default="SSYF"),
    click.option("--factors", "-p", default=1, show_default=True),
    click.option("--burn-in", default=5000, show_default=True),
    click.option("--draws", default=50000, show_default=True),
    click.option("--thin", default=1, show_default=True),
    click.option("--block-size", default=50, show_default=True),
    click.option("--seed", type=int, default=None),
    click.option("--threads", default=1, show_default=True),
]


def _with_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@click.group()
def main() -> None:
    """Skew factor stochastic volatility: estimation, simulation, backtesting."""


@main.command()
@click.option("--k", default=3, show_default=True)
@click.option("--factors", "-p", default=2, show_default=True)
@click.option("--t-len", default=1000, show_default=True)
@click.option("--beta", default=None,
              help="Comma list of q skew coefficients (idiosyncratic first).")
@click.option("--case", type=click.Choice(["i", "ii", "iii", "iv"]), default=None,
              help="Named skew layout of the k=3, p=2 ordering study.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Dataset CSV path.")
@click.option("--truth", "truth_path", type=click.Path(), default=None,
              help="Where to write the true parameters/latents (JSON).")
def simulate(k, factors, t_len, beta, case, seed, out, truth_path):
    """Simulate a synthetic dataset from the full data-generating process."""
    q = k + factors
    if case is not None:
        if (k, factors) != (3, 2):
            raise click.ClickException("--case layouts require k=3, p=2")
        beta_vec = sim.fig_one_cases()[case]
    elif beta is not None:
        beta_vec = np.asarray(_parse_floats(beta))
        if beta_vec.shape[0] != q:
            raise click.ClickException(f"--beta needs q={q} entries")
    else:
        beta_vec = np.concatenate([np.zeros(k), -np.ones(factors)])
    params = sim.study_params(beta_vec, k=k, p=factors, seed=seed)
    data, latent = sim.simulate(params, t_len, seed)
    dataio.write_returns_csv(data, out)
    if truth_path:
        truth = {
            "mu": params.mu.tolist(), "phi": params.phi.tolist(),
            "sigma": params.sigma.tolist(), "rho": params.rho.tolist(),
            "nu": params.nu.tolist(), "beta": params.beta.tolist(),
            "loadings": params.loadings.tolist(),
            "h_final": latent.h[:, -1].tolist(),
            "seed": seed,
        }
        with open(truth_path, "w") as fh:
            json.dump(truth, fh, indent=2)
    click.echo(f"wrote {t_len} x {k} returns to {out}")


@main.command(name="skewness-study")
@click.option("--replicates", default=1000, show_default=True)
@click.option("--t-len", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--cases", default="i,ii,iii,iv", show_default=True)
@click.option("--out", required=True, type=click.Path())
def skewness_study(replicates, t_len, seed, cases, out):
    """Per-series sample-skewness quantiles across the named skew layouts."""
    all_cases = sim.fig_one_cases()
    wanted = {}
    for name in cases.split(","):
        name = name.strip()
        if name not in all_cases:
            raise click.ClickException(f"unknown case {name!r}")
        wanted[name] = all_cases[name]
    rows = sim.skewness_study(wanted, n_rep=replicates, t_len=t_len, seed=seed)
    dataio.write_table_csv(rows, out, header_comment=f"# skewfsv skewness-study seed={seed}")
    click.echo(f"wrote {len(rows)} rows to {out}")


@main.command()
@_with_options(_fit_options)
@click.option("--suggest-order", is_flag=True,
              help="Print the correlation-based series ordering and exit.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def fit(data_path, config_path, mode, demean, percent, variant, factors, burn_in,
        draws, thin, block_size, seed, threads, suggest_order, out_dir):
    """Fit the model by MCMC and write draws.csv plus summary.json."""
    try:
        data = dataio.load_returns(data_path, mode=mode, demean=demean, percent=percent)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    if suggest_order:
        order = suggest_series_order(data.returns, factors)
        click.echo("series ranked by total correlation (most correlated first):")
        click.echo(", ".join(str(i + 1) for i in order))
        click.echo(f"suggested leading series for {factors} factor(s): "
                   + ", ".join(str(i + 1) for i in order[:factors]))
        return
    cfg = _build_config(data.k, config_path, variant, factors, burn_in, draws,
                        thin, seed, block_size)
    try:
        cfg = validate_config(cfg, data)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    store = run_mcmc(cfg, data, n_workers=threads, progress=True)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_draws_csv(store, out / "draws.csv")
    dataio.write_summary_json(store, out / "summary.json")
    click.echo(f"wrote {out / 'draws.csv'} and {out / 'summary.json'}")


@main.command()
@_with_options(_fit_options)
@click.option("--horizons", default=5, show_default=True)
@click.option("--var-levels", default="0.005,0.01,0.05", show_default=True)
@click.option("--targets", default="0.00005,0.0001,0.0002", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def forecast(data_path, config_path, mode, demean, percent, variant, factors,
             burn_in, draws, thin, block_size, seed, threads, horizons,
             var_levels, targets, out_path):
    """Fit, then write per-horizon predictive moments, portfolios and VaR."""
    try:
        data = dataio.load_returns(data_path, mode=mode, demean=demean, percent=percent)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    cfg = _build_config(data.k, config_path, variant, factors, burn_in, draws,
                        thin, seed, block_size)
    try:
        cfg = validate_config(cfg, data)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    store = run_mcmc(cfg, data, n_workers=threads, progress=True)
    mix = build_mixture(store, horizons, RngStream(cfg.mcmc.seed, (7100, 0)))
    levels = _parse_floats(var_levels)
    rules = [(f"target={t:g}", t) for t in _parse_floats(targets)] + [("free", None)]
    payload: dict = {"provenance": dataio.provenance_dict(cfg), "horizons": {}}
    for h in range(1, horizons + 1):
        m_vec, cov = mix.mean_cov(horizon=h)
        entry: dict = {"mean": m_vec.tolist(), "cov": cov.tolist(), "portfolios": {}}
        for name, target in rules:
            try:
                w = optimize_portfolio(m_vec, cov, target)
            except PortfolioError as exc:
                entry["portfolios"][name] = {"infeasible": str(exc)}
                continue
            entry["portfolios"][name] = {
                "weights": w.tolist(),
                "var": {str(a): var_quantile(w, mix, a, horizon=h) for a in levels},
            }
        payload["horizons"][str(h)] = entry
    with open(out_path, "w") as fh:
        json.dump(payload, fh, indent=2)
    click.echo(f"wrote {out_path}")


@main.command()
@_with_options(_fit_options)
@click.option("--models", default="S0,SF,SYF,SSYF", show_default=True,
              help="Comma list of variants to backtest.")
@click.option("--base", default="S0", show_default=True)
@click.option("--first-window", required=True, type=int)
@click.option("--refits", required=True, type=int)
@click.option("--stride", default=5, show_default=True)
@click.option("--horizons", default=5, show_default=True)
@click.option("--var-levels", default="0.005,0.01,0.05", show_default=True)
@click.option("--targets", default="0.00005,0.0001,0.0002", show_default=True)
@click.option("--refit-burn-in", type=int, default=None,
              help="Shorter burn-in for warm-started refits.")
@click.option("--cold-start", is_flag=True, help="Disable warm starts between refits.")
@click.option("--weights-h1", is_flag=True,
              help="Always take portfolio moments from the 1-day-ahead forecast.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def backtest(data_path, config_path, mode, demean, percent, variant, factors,
             burn_in, draws, thin, block_size, seed, threads, models, base,
             first_window, refits, stride, horizons, var_levels, targets,
             refit_burn_in, cold_start, weights_h1, out_dir):
    """Recursive out-of-sample backtest across model variants."""
    try:
        data = dataio.load_returns(data_path, mode=mode, demean=demean, percent=percent)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    bt = BacktestConfig(
        first_window=first_window, n_refits=refits, stride=stride, horizons=horizons,
        var_levels=_parse_floats(var_levels), targets=_parse_floats(targets),
        weights_at_horizon_one=weights_h1, warm_start=not cold_start,
        refit_burn_in=refit_burn_in,
    )
    names = [m.strip() for m in models.split(",") if m.strip()]
    if base not in names:
        raise click.ClickException(f"base model {base!r} must be in --models")
    reports = {}
    for name in names:
        cfg = _build_config(data.k, config_path, name, factors, burn_in, draws,
                            thin, seed, block_size)
        cfg = dataclasses.replace(cfg, variant=name)
        try:
            cfg = validate_config(cfg, data)
            reports[name] = recursive_backtest(data, cfg, bt, n_workers=threads,
                                               progress=True)
        except (ConfigError, ValueError) as exc:
            raise click.ClickException(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comment = f"# skewfsv backtest seed={seed if seed is not None else 0} base={base}"
    dataio.write_table_csv(lpdr_table(reports, base), out / "lpdr.csv", comment)
    dataio.write_var_csv(reports, out / "var.csv", comment)
    dataio.write_portfolio_csv(reports, out / "portfolio.csv", comment)
    for name, report in reports.items():
        infeasible = {r: c for r, c in report.infeasible_days.items() if c}
        if infeasible:
            click.echo(f"note: {name} had infeasible portfolio days: {infeasible}")
    click.echo(f"wrote lpdr.csv, var.csv, portfolio.csv under {out}")


@main.command()
@click.option("--summary", "summary_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Markdown file (default: print to stdout).")
def report(summary_path, out_path):
    """Render a fit summary JSON as Markdown tables."""
    with open(summary_path) as fh:
        summary = json.load(fh)
    text = dataio.summary_to_markdown(summary)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
