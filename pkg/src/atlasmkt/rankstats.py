"""Ergodic estimators over accumulated path statistics.

Long runs of a valid first-order market satisfy several exact limit laws:
every (name, rank) occupation fraction tends to 1/n, every ordering of the
stocks is held a fraction 1/n! of the time, each name's time-averaged market
weight tends to 1/n, and the gap between adjacent ranked log-capitalizations
is asymptotically exponential with rate

    r_k = 4 |g_1 + ... + g_k| / (sigma_k^2 + sigma_{k+1}^2),

equivalently mean rho_k = 1/r_k.  The reflection rate of the gap at zero is
lambda_{k,k+1} = -2 (g_1 + ... + g_k), estimated here from the fraction of
time the gap spends inside a band [0, eps):

    lambda_hat = (s_k^2 / 2) * (-log(1 - P_hat(gap < eps))) / eps.

Under the exponential stationary law P(gap < eps) = 1 - e^{-r eps}, this
inversion is exact for every band width, where the linearization
(s_k^2 / 2 eps) * P_hat it refines is exact only as eps -> 0; both converge
to lambda as eps -> 0, T -> infinity.  The default band is two single-step
standard deviations wide, where the linearized form misses the curvature of
the exponential by tens of percent.  Consecutive rates telescope:
lambda_{k-1,k} - lambda_{k,k+1} = 2 g_k.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .engine import PathStats
from .model import ModelParams


def occupation_fractions(stats: PathStats) -> np.ndarray:
    """Fraction of measured time each name spent at each rank; rows and
    columns each sum to one."""
    if stats.measured_time <= 0.0:
        raise ValueError("no measured time")
    return stats.occupation / stats.measured_time


def permutation_fractions(stats: PathStats) -> dict[tuple[int, ...], float]:
    """Fraction of measured time spent in each visited ordering of names.

    Keys are tuples ``(name at rank 1, ..., name at rank n)`` with 0-based
    names; only orderings with positive occupation appear.
    """
    if stats.perm_occupation is None:
        raise ValueError("permutation occupation was not registered for this run")
    n = stats.n
    out: dict[tuple[int, ...], float] = {}
    for code, p in enumerate(itertools.permutations(range(n))):
        t = stats.perm_occupation[code]
        if t > 0.0:
            out[p] = t / stats.measured_time
    return out


def name_weight_means(stats: PathStats) -> np.ndarray:
    """Time-averaged market weight of each name over the measured window."""
    if stats.measured_time <= 0.0:
        raise ValueError("no measured time")
    return stats.name_weight_means()


def crossover_counts(stats: PathStats) -> np.ndarray:
    """Number of measured steps on which each rank boundary was crossed."""
    return stats.crossovers.copy()


def analytic_local_time_rates(params: ModelParams) -> np.ndarray:
    """lambda_{k,k+1} = -2 (g_1 + ... + g_k) for k = 1..n-1."""
    return -2.0 * np.cumsum(params.g)[:-1]


def analytic_gap_rates(params: ModelParams) -> np.ndarray:
    """Exponential rates r_k = 2 lambda_{k,k+1} / s_k^2."""
    s2 = params.combined_vol() ** 2
    return 2.0 * analytic_local_time_rates(params) / s2


def _band_rate(band_frac, eps):
    with np.errstate(divide="ignore"):
        return -np.log1p(-band_frac) / eps


def local_time_rate(stats: PathStats, k: int, params: ModelParams) -> float:
    """Band estimate of the reflection rate at boundary k (0-based)."""
    if stats.measured_time <= 0.0:
        raise ValueError("no measured time")
    eps = float(stats.gap_band_eps[k])
    if not eps > 0.0:
        raise ValueError(f"no band width configured for boundary {k}")
    s2 = float(params.combined_vol()[k] ** 2)
    frac = float(stats.gap_band_time[k]) / stats.measured_time
    return s2 / 2.0 * float(_band_rate(frac, eps))


@dataclass(frozen=True)
class GapSummary:
    """Empirical and analytic views of every adjacent-rank gap."""

    rho_hat: np.ndarray  # empirical mean gaps
    r_hat: np.ndarray  # exponential rates fitted as 1 / mean
    lambda_hat: np.ndarray  # band estimates of the reflection rates
    band_frac: np.ndarray
    band_eps: np.ndarray
    s: np.ndarray  # combined adjacent volatilities
    rho: np.ndarray  # analytic mean gaps
    r: np.ndarray  # analytic exponential rates
    lam: np.ndarray  # analytic reflection rates


def gap_summary(stats: PathStats, params: ModelParams) -> GapSummary:
    if stats.measured_time <= 0.0:
        raise ValueError("no measured time")
    from .equilibrium import ce_rho

    rho_hat = stats.gap_sum / stats.measured_time
    band_frac = stats.gap_band_time / stats.measured_time
    s = params.combined_vol()
    lam = analytic_local_time_rates(params)
    r = analytic_gap_rates(params)
    lam_hat = s * s / 2.0 * _band_rate(band_frac, stats.gap_band_eps)
    return GapSummary(
        rho_hat=rho_hat,
        r_hat=1.0 / rho_hat,
        lambda_hat=lam_hat,
        band_frac=band_frac,
        band_eps=stats.gap_band_eps.copy(),
        s=s,
        rho=ce_rho(params),
        r=r,
        lam=lam,
    )


def gap_tail_slope(stats: PathStats, k: int, lo: float, hi: float) -> float:
    """Log-linear slope of the empirical gap survival curve on [lo, hi].

    For an exponential gap the survival curve is e^{-r x}, so the fitted
    slope estimates -r_k independently of the 1/mean fit.
    """
    edges = stats.gap_hist_edges[1:]
    mass = stats.gap_hist[k]
    total = mass.sum() + stats.gap_hist_overflow[k]
    if total <= 0.0:
        raise ValueError("empty gap histogram")
    # survival just right of each bin edge
    surv = (total - np.cumsum(mass)) / total
    sel = (edges >= lo) & (edges <= hi) & (surv > 0.0)
    if sel.sum() < 2:
        raise ValueError("not enough histogram mass in the fit window")
    return float(np.polyfit(edges[sel], np.log(surv[sel]), 1)[0])


def to_summary(stats: PathStats, params: ModelParams) -> dict:
    """JSON-ready dictionary of every estimator (1-based names and ranks)."""
    gaps = gap_summary(stats, params)
    out = {
        "occupation": occupation_fractions(stats).tolist(),
        "name_weight_means": name_weight_means(stats).tolist(),
        "crossovers": [int(c) for c in stats.crossovers],
        "gaps": [
            {
                "k": k + 1,
                "rho_hat": float(gaps.rho_hat[k]),
                "r_hat": float(gaps.r_hat[k]),
                "lambda_hat": float(gaps.lambda_hat[k]),
                "rho": float(gaps.rho[k]),
                "r": float(gaps.r[k]),
                "lambda": float(gaps.lam[k]),
            }
            for k in range(stats.n - 1)
        ],
    }
    if stats.perm_occupation is not None:
        out["perm_fractions"] = {
            "".join(str(i + 1) for i in p): f
            for p, f in sorted(permutation_fractions(stats).items())
        }
    return out
