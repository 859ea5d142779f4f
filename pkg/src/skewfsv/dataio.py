"""Data ingestion and result serialization.

Every emitted file round-trips at full double precision (17 significant
digits) and carries a provenance header or block recording the seed, the
configuration hash and the source revision.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from pathlib import Path

import numpy as np
import pandas as pd

from skewfsv.engine import DrawStore, summarize_draws
from skewfsv.forecast import BacktestReport
from skewfsv.model import ConfigError, Dataset, ModelConfig

FLOAT_FMT = "%.17g"


def load_returns(path, mode: str = "returns", demean: bool = True,
                 percent: bool = False) -> Dataset:
    """Read a returns (or prices) CSV with a leading date column.

    ``mode="prices"`` converts to log differences, dropping the first row.
    Demeaning happens once here, on the full loaded window.
    """
    if mode not in ("returns", "prices"):
        raise ConfigError(f"mode must be 'returns' or 'prices', got {mode!r}")
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    if frame.shape[1] < 2:
        raise ConfigError("expected a date column plus at least one series")
    dates = frame.iloc[:, 0].astype(str)
    if dates.duplicated().any():
        dupes = dates[dates.duplicated()].unique()[:3]
        raise ConfigError(f"duplicate dates in {path}: {list(dupes)}")
    values = frame.iloc[:, 1:].apply(pd.to_numeric, errors="coerce")
    if values.isna().any().any():
        bad = values.columns[values.isna().any()].tolist()
        raise ConfigError(f"missing or non-numeric cells in columns {bad}")
    mat = values.to_numpy(dtype=float)
    if mode == "prices":
        if np.any(mat <= 0.0):
            raise ConfigError("prices must be positive for log differencing")
        mat = np.diff(np.log(mat), axis=0)
        dates = dates.iloc[1:]
    if percent:
        mat = mat * 100.0
    if demean:
        mat = mat - mat.mean(axis=0)
    return Dataset(returns=mat, dates=tuple(dates))


def write_returns_csv(data: Dataset, path, names: list[str] | None = None) -> None:
    k = data.returns.shape[1]
    names = names or [f"y{i + 1}" for i in range(k)]
    frame = pd.DataFrame(data.returns, columns=names)
    frame.insert(0, "date", list(data.dates))
    frame.to_csv(path, index=False, float_format=FLOAT_FMT)


def config_hash(cfg: ModelConfig) -> str:
    payload = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def _git_revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5, check=True,
            cwd=Path(__file__).resolve().parent,
        )
        return out.stdout.strip()
    except Exception:
        return "unknown"


def provenance_line(cfg: ModelConfig) -> str:
    return (f"# skewfsv seed={cfg.mcmc.seed} config_sha256={config_hash(cfg)} "
            f"git={_git_revision()}")


def provenance_dict(cfg: ModelConfig) -> dict:
    return {
        "seed": cfg.mcmc.seed,
        "config_sha256": config_hash(cfg),
        "git_revision": _git_revision(),
    }


def write_draws_csv(store: DrawStore, path) -> None:
    """Columnar draw output, one row per retained draw."""
    chains = store.scalar_chains()
    frame = pd.DataFrame(chains)
    frame.insert(0, "draw", np.arange(1, store.n_retained + 1))
    with open(path, "w") as fh:
        fh.write(provenance_line(store.config) + "\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FMT)


def read_draws_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def read_table_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def write_summary_json(store: DrawStore, path) -> dict:
    summary = summarize_draws(store)
    summary["provenance"] = provenance_dict(store.config)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def write_table_csv(rows: list[dict], path, header_comment: str | None = None) -> None:
    frame = pd.DataFrame(rows)
    with open(path, "w") as fh:
        if header_comment:
            fh.write(header_comment + "\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FMT)


def write_var_csv(reports: dict[str, BacktestReport], path,
                  header_comment: str | None = None) -> None:
    rows: list[dict] = []
    for report in reports.values():
        rows.extend(report.kupiec_table())
    write_table_csv(rows, path, header_comment)


def write_portfolio_csv(reports: dict[str, BacktestReport], path,
                        header_comment: str | None = None) -> None:
    rows: list[dict] = []
    for name, report in reports.items():
        for rule in report.rules:
            returns = report.portfolio_returns[rule]
            cum = np.nancumsum(returns)
            for d in range(report.n_days):
                rows.append({
                    "model": name,
                    "rule": rule,
                    "date": report.day_dates[d],
                    "horizon": int(report.day_horizon[d]),
                    "portfolio_return": returns[d],
                    "cumulative_return": cum[d] if np.isfinite(returns[d]) else np.nan,
                })
    write_table_csv(rows, path, header_comment)


def summary_to_markdown(summary: dict) -> str:
    """Render a fit summary as Markdown tables (medians, intervals, diagnostics)."""
    lines = [
        f"# Fit report: model {summary['variant']} "
        f"(k={summary['k']}, p={summary['p']}, {summary['n_retained']} draws)",
        "",
        "## Parameter posteriors",
        "",
        "| parameter | median | 50% interval | 90% interval | Geweke z | ESS |",
        "|---|---|---|---|---|---|",
    ]
    for name, entry in summary["parameters"].items():
        geweke = "n/a" if entry["geweke_z"] is None else f"{entry['geweke_z']:.2f}"
        ess = "n/a" if entry["ess"] is None else f"{entry['ess']:.0f}"
        lines.append(
            f"| {name} | {entry['median']:.4f} "
            f"| [{entry['q25']:.4f}, {entry['q75']:.4f}] "
            f"| [{entry['q05']:.4f}, {entry['q95']:.4f}] "
            f"| {geweke} | {ess} |"
        )
    lines += ["", "## Posterior probability of zero skew", "",
              "| series | P(beta = 0) |", "|---|---|"]
    for name, prob in summary["prob_beta_zero"].items():
        lines.append(f"| {name} | {prob:.3f} |")
    lines += ["", "## Acceptance rates (post burn-in)", "",
              "| move | per-series rates |", "|---|---|"]
    for key, rates in summary["acceptance_rates"].items():
        formatted = ", ".join(f"{r:.2f}" for r in rates)
        lines.append(f"| {key} | {formatted} |")
    prov = summary.get("provenance", {})
    if prov:
        lines += ["", f"_seed {prov['seed']}, config {prov['config_sha256']}, "
                      f"rev {prov['git_revision']}_"]
    return "\n".join(lines) + "\n"
