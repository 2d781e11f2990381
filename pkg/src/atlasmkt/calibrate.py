"""Parameter estimation and time-unit conversion.

Rank variances observed in equity data grow roughly linearly with rank, so a
linear model sigma_k^2 = sigma^2 + k s^2 is fitted by ordinary least
squares.  The market's annualized excess growth rate directly estimates the
Atlas growth parameter g, since the market portfolio's long-term excess
growth tends to g in large markets with linearly growing variances.

Annualized parameters convert to per-step values by scaling drifts and
variances with 1/steps_per_year (volatilities with its square root).  The
conversion is exposed as a view that keeps the annual parameters, so the
round trip back is exact by construction, and the scaled values are produced
by the same floating-point products the engine applies internally, making a
simulation with (annual params, dt = 1/steps_per_year) reproduce one with
(per-step params, dt = 1) for the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams


@dataclass(frozen=True)
class VarianceFit:
    sigma2: float
    s2: float
    r_squared: float
    max_abs_residual: float
    rms_residual: float
    negative_slope: bool

    @property
    def flagged(self) -> bool:
        return self.negative_slope


def fit_linear_variance(points) -> VarianceFit:
    """OLS fit of rank variances to sigma_k^2 = sigma^2 + k s^2.

    ``points`` is an iterable of (rank, variance) pairs with 1-based ranks.
    A negative fitted slope is reported but flagged, since the model itself
    requires s^2 >= 0.
    """
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (rank, variance) points")
    k, v = pts[:, 0], pts[:, 1]
    if np.unique(k).shape[0] < 2:
        raise ValueError("need at least two distinct ranks")
    if np.any(v <= 0.0):
        raise ValueError("variances must be positive")
    slope, intercept = np.polyfit(k, v, 1)
    resid = v - (intercept + slope * k)
    ss_res = float(np.dot(resid, resid))
    centered = v - v.mean()
    ss_tot = float(np.dot(centered, centered))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return VarianceFit(
        sigma2=float(intercept),
        s2=float(slope),
        r_squared=r2,
        max_abs_residual=float(np.max(np.abs(resid))),
        rms_residual=float(np.sqrt(ss_res / len(v))),
        negative_slope=bool(slope < 0.0),
    )


def estimate_g(excess_growth: float) -> float:
    """Atlas growth rate from the market's annualized excess growth rate."""
    if not excess_growth > 0.0:
        raise ValueError(f"excess growth must be positive, got {excess_growth}")
    return float(excess_growth)


@dataclass(frozen=True)
class PerStepParams:
    """Per-step view of annualized parameters.

    ``to_model_params()`` materializes the scaled parameters for running the
    engine at dt = 1; ``annual`` returns the original object unchanged.
    """

    annual: ModelParams
    steps_per_year: int

    def __post_init__(self):
        if self.steps_per_year < 1:
            raise ValueError("steps_per_year must be >= 1")

    @property
    def dt_years(self) -> float:
        return 1.0 / self.steps_per_year

    @property
    def gamma(self) -> float:
        return self.annual.gamma * self.dt_years

    @property
    def g(self) -> np.ndarray:
        return self.annual.g * self.dt_years

    @property
    def sigma(self) -> np.ndarray:
        return self.annual.sigma * np.sqrt(self.dt_years)

    def to_model_params(self) -> ModelParams:
        return ModelParams(n=self.annual.n, gamma=self.gamma, g=self.g, sigma=self.sigma)


def annualize(params: ModelParams, steps_per_year: int) -> PerStepParams:
    """Per-step parameter view for a given sampling frequency."""
    return PerStepParams(annual=params, steps_per_year=int(steps_per_year))


def de_annualize(view: PerStepParams) -> ModelParams:
    """Exact inverse of :func:`annualize`."""
    return view.annual
