"""File formats: parameter files, CSV exports, JSON summaries.

Parameters live in flat key=value text files.  Explicit form:

    n = 3
    gamma = 1.0
    g_1 = -1.0 ... g_n
    sigma_1 = 1.0 ... sigma_n

Atlas shorthand (mutually exclusive with the explicit keys):

    n = 3
    atlas_g = 1.0
    sigma2 = 1.0
    s2 = 0.0          # optional, default 0

CSV output uses ',' as delimiter, '.' as decimal mark, LF line endings and a
header row; floats are written with ``repr`` so files are bit-stable across
runs.  JSON output is sorted-key with LF endings.  All serialized names and
ranks are 1-based.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .engine import PathStats
from .model import ModelParams, atlas, generalized_atlas


def _fmt(x) -> str:
    if isinstance(x, (np.floating, float)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_json(path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n", newline="\n"
    )


class ParamsFileError(ValueError):
    """Raised for unreadable or inconsistent parameter files."""


# simulation keys a config file may carry alongside the model parameters;
# command-line flags override them
SIM_KEYS = ("t", "dt", "burn_in", "seed")


def _parse_kv(text: str) -> dict[str, str]:
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamsFileError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = line.split("=", 1)
        key = key.strip().lower()
        if key in kv:
            raise ParamsFileError(f"line {lineno}: duplicate key {key!r}")
        kv[key] = val.strip()
    return kv


def parse_params_text(text: str) -> ModelParams:
    kv = _parse_kv(text)
    return _params_from_kv(kv)


def _params_from_kv(kv: dict[str, str]) -> ModelParams:
    if "n" not in kv:
        raise ParamsFileError("missing key 'n'")
    try:
        n = int(kv.pop("n"))
    except ValueError as exc:
        raise ParamsFileError(f"bad stock count: {exc}") from None

    shorthand = {"atlas_g", "sigma2", "s2"} & kv.keys()
    explicit = {k for k in kv if k == "gamma" or k.startswith(("g_", "sigma_"))}
    if shorthand and explicit:
        raise ParamsFileError("mix of atlas shorthand and explicit parameter keys")
    try:
        if shorthand:
            if "atlas_g" not in kv or "sigma2" not in kv:
                raise ParamsFileError("atlas shorthand needs atlas_g and sigma2")
            g = float(kv.pop("atlas_g"))
            sigma2 = float(kv.pop("sigma2"))
            s2 = float(kv.pop("s2")) if "s2" in kv else 0.0
            if kv:
                raise ParamsFileError(f"unknown keys: {sorted(kv)}")
            if s2 == 0.0:
                return atlas(n, g, float(np.sqrt(sigma2)))
            return generalized_atlas(n, g, sigma2, s2)
        if "gamma" not in kv:
            raise ParamsFileError("missing key 'gamma'")
        gamma = float(kv.pop("gamma"))
        gvec = np.empty(n)
        svec = np.empty(n)
        for k in range(1, n + 1):
            for prefix, vec in (("g", gvec), ("sigma", svec)):
                key = f"{prefix}_{k}"
                if key not in kv:
                    raise ParamsFileError(f"missing key {key!r}")
                vec[k - 1] = float(kv.pop(key))
        if kv:
            raise ParamsFileError(f"unknown keys: {sorted(kv)}")
        return ModelParams(n=n, gamma=gamma, g=gvec, sigma=svec)
    except ParamsFileError:
        raise
    except ValueError as exc:
        raise ParamsFileError(f"bad numeric value: {exc}") from None


def read_params_file(path) -> ModelParams:
    p = Path(path)
    if not p.exists():
        raise ParamsFileError(f"parameter file not found: {p}")
    return parse_params_text(p.read_text())


def read_config_file(path) -> tuple[ModelParams, dict[str, float]]:
    """Parameter file plus any simulation keys (t, dt, burn_in, seed) it holds."""
    p = Path(path)
    if not p.exists():
        raise ParamsFileError(f"parameter file not found: {p}")
    kv = _parse_kv(p.read_text())
    sim: dict[str, float] = {}
    for key in SIM_KEYS:
        if key in kv:
            try:
                sim[key] = float(kv.pop(key))
            except ValueError as exc:
                raise ParamsFileError(f"bad value for {key!r}: {exc}") from None
    return _params_from_kv(kv), sim


def write_params_file(path, params: ModelParams) -> None:
    lines = [f"n = {params.n}", f"gamma = {_fmt(params.gamma)}"]
    lines += [f"g_{k + 1} = {_fmt(params.g[k])}" for k in range(params.n)]
    lines += [f"sigma_{k + 1} = {_fmt(params.sigma[k])}" for k in range(params.n)]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def read_variance_csv(path):
    """(rank, variance) rows from a CSV with 'rank,variance' header."""
    p = Path(path)
    if not p.exists():
        raise ParamsFileError(f"variance file not found: {p}")
    lines = [ln for ln in p.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ParamsFileError("empty variance file")
    start = 1 if lines[0].lower().replace(" ", "").startswith("rank,") else 0
    out = []
    for ln in lines[start:]:
        parts = ln.split(",")
        if len(parts) != 2:
            raise ParamsFileError(f"expected 'rank,variance' row, got {ln!r}")
        out.append((float(parts[0]), float(parts[1])))
    return out


def export_path_stats(stats: PathStats, outdir, params: ModelParams) -> None:
    """Write occupation.csv, gaps.csv, wealth.csv and summary.json."""
    from . import rankstats

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    n = stats.n

    rows = [
        (i + 1, k + 1, stats.occupation[i, k])
        for i in range(n)
        for k in range(n)
    ]
    write_csv(out / "occupation.csv", ("name", "rank", "time"), rows)

    # one row per (boundary, histogram bin); the boundary's mean and band
    # fraction repeat on each of its rows, hist_bin is the bin's lower edge
    # and the final row per boundary carries the overflow mass
    gaps = rankstats.gap_summary(stats, params)
    edges = stats.gap_hist_edges
    rows = []
    for k in range(n - 1):
        mean_k = gaps.rho_hat[k]
        frac_k = gaps.band_frac[k]
        for b in range(stats.gap_hist.shape[1]):
            rows.append((k + 1, mean_k, frac_k, edges[b], stats.gap_hist[k, b]))
        rows.append((k + 1, mean_k, frac_k, edges[-1], stats.gap_hist_overflow[k]))
    write_csv(out / "gaps.csv", ("k", "mean", "band_frac", "hist_bin", "mass"), rows)

    rows = []
    for idx, rule in enumerate(stats.rules):
        for j, t in enumerate(stats.checkpoint_times):
            rows.append((t, rule.label, stats.logz_series[j, idx]))
    write_csv(out / "wealth.csv", ("t", "rule", "log_wealth"), rows)

    summary = {
        "meta": stats.meta,
        "occupation_fractions": rankstats.occupation_fractions(stats).tolist(),
        "perm_fractions": None,
        "gap_means": gaps.rho_hat.tolist(),
        "crossovers": [int(c) for c in stats.crossovers],
        "name_weight_means": stats.name_weight_means().tolist(),
        "functional_means": {
            _fmt(p): v for p, v in zip(stats.functional_p, stats.functional_means())
        },
        "growth_rates": {
            rule.label: stats.empirical_growth(idx) for idx, rule in enumerate(stats.rules)
        },
        "sum_identity_max_residual": stats.sum_identity_max_residual,
    }
    if stats.perm_occupation is not None:
        summary["perm_fractions"] = {
            "".join(str(i + 1) for i in p): f
            for p, f in sorted(rankstats.permutation_fractions(stats).items())
        }
    write_json(out / "summary.json", summary)


def write_rankstats_json(path, stats: PathStats, params: ModelParams) -> None:
    from . import rankstats

    write_json(path, rankstats.to_summary(stats, params))


def write_growth_report_json(path, report) -> None:
    payload = {
        label: {
            "empirical_G": e.empirical_G,
            "analytic_G": e.analytic_G,
            "analytic_Gstar": e.analytic_Gstar,
            "asymptotic_Gamma": e.asymptotic_Gamma,
            "asymptotic_Gammastar": e.asymptotic_Gammastar,
            "m_source": e.m_source,
        }
        for label, e in report.items()
    }
    write_json(path, payload)


def write_capital_curve_csv(path, weights) -> None:
    from .equilibrium import CEWeights, capital_curve

    curve = capital_curve(weights)
    if isinstance(weights, CEWeights):
        m = weights.m
    else:
        m = np.asarray(weights, dtype=np.float64)
    rows = [
        (k + 1, curve[k, 0], m[k], curve[k, 1])
        for k in range(curve.shape[0])
    ]
    write_csv(path, ("rank", "log_rank", "weight", "log_weight"), rows)
