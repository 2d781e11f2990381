"""Diversity functionals and the weak-diversity probability bound.

The diversity of a weight vector x is D(x) = (sum_i x_i^p)^{1/p} for a fixed
exponent p in (0, 1); it ranges from 1 (all capital in one stock) to
n^{(1-p)/p} (equal weights).  Time averages of f(x) = sum_i x_i^p along a
simulated path converge to the expectation of f under the long-term weight
law, which the certainty-equivalent value f(M^CE) approximates.

A market is weakly diverse on a horizon when the time-averaged largest
weight stays below 1 - delta.  Lognormal relative returns bound the failure
probability: dominance requires the candidate stock to gain a factor

    A = w* (1 - w0) / (w0 (1 - w*)),      w* = 1 - 2 delta,

against the market within the first year, a move of z = ln(A) / rel_sd
standard deviations.  The Gaussian tail bound e^{-z^2/2} / (z sqrt(2 pi)),
doubled by the reflection principle and multiplied by n for the union over
stocks, is far below the floating-point range for realistic inputs, so the
report carries it in log10 form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams


def diversity_value(x, p: float) -> float:
    """D(x) = (sum_i x_i^p)^{1/p} for a nonnegative weight vector x."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0):
        raise ValueError("weights must be nonnegative")
    if abs(arr.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    return float(np.sum(arr**p) ** (1.0 / p))


@dataclass(frozen=True)
class FunctionalAverage:
    """Final time-average of a registered power-sum functional plus its
    running-average series on the checkpoint grid."""

    p: float
    value: float
    times: np.ndarray
    series: np.ndarray

    def entry_time(self, target: float, rel_band: float) -> float:
        """First checkpoint time from which the running average stays within
        ``rel_band`` of ``target`` through the end; inf if it never does."""
        ok = np.abs(self.series - target) <= rel_band * abs(target)
        ok &= np.isfinite(self.series)
        if not ok[-1]:
            return math.inf
        idx = len(ok) - 1
        while idx > 0 and ok[idx - 1]:
            idx -= 1
        return float(self.times[idx])


def time_average_functional(stats, p: float) -> FunctionalAverage:
    """Running time-average of sum_i mu_i^p for a registered exponent p."""
    try:
        j = stats.functional_p.index(float(p))
    except ValueError:
        raise ValueError(f"functional with exponent {p} was not registered") from None
    series = stats.functional_series[:, j]
    sel = np.isfinite(series)
    if stats.measured_time <= 0.0:
        raise ValueError("no measured time")
    return FunctionalAverage(
        p=float(p),
        value=float(stats.functional_means()[j]),
        times=stats.checkpoint_times[sel].copy(),
        series=series[sel].copy(),
    )


def ce_functional_value(params: ModelParams, p: float) -> float:
    """sum_k (M_k^CE)^p, the certainty-equivalent reference for the average."""
    from .equilibrium import ce_weights

    m = ce_weights(params).m
    return float(np.sum(m**p))


@dataclass(frozen=True)
class DiversityBoundInput:
    n: int
    delta: float
    horizon: float  # years
    rel_sd: float  # annual relative standard deviation vs the market
    start_weight: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one stock")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        if not self.rel_sd > 0.0:
            raise ValueError("relative standard deviation must be positive")
        if not 0.0 < self.start_weight < 1.0:
            raise ValueError("start weight must be in (0, 1)")


@dataclass(frozen=True)
class DiversityBoundReport:
    applicable: bool
    reason: str
    threshold_weight: float
    A: float | None = None
    log_A: float | None = None
    z: float | None = None
    log10_tail: float | None = None
    log10_final_tail: float | None = None
    probability_bound_descriptor: str = ""


LOG10_E = 1.0 / math.log(10.0)


def weak_diversity_bound(inp: DiversityBoundInput) -> DiversityBoundReport:
    """Lower bound on the probability that no stock ever dominates.

    The first-year threshold weight is generalized from the anchor case
    (delta = 0.01, 2-year horizon, threshold 0.98) as w* = 1 - 2 delta; the
    single-year relative standard deviation enters as given, without horizon
    rescaling.
    """
    wstar = 1.0 - 2.0 * inp.delta
    if wstar <= inp.start_weight:
        return DiversityBoundReport(
            applicable=False,
            reason=(
                f"threshold weight {wstar:g} does not exceed the starting weight "
                f"{inp.start_weight:g}; no price move is needed for dominance"
            ),
            threshold_weight=wstar,
        )
    a = wstar * (1.0 - inp.start_weight) / (inp.start_weight * (1.0 - wstar))
    log_a = math.log(a)
    z = log_a / inp.rel_sd
    # log10 of the Gaussian tail bound e^{-z^2/2} / (z sqrt(2 pi))
    log10_tail = -(z * z / 2.0) * LOG10_E - math.log10(z * math.sqrt(2.0 * math.pi))
    log10_final = log10_tail + math.log10(2.0 * inp.n)
    descriptor = f"P(weak diversity) >= 1 - 10^({log10_final:.2f})"
    return DiversityBoundReport(
        applicable=True,
        reason="ok",
        threshold_weight=wstar,
        A=a,
        log_A=log_a,
        z=z,
        log10_tail=log10_tail,
        log10_final_tail=log10_final,
        probability_bound_descriptor=descriptor,
    )
