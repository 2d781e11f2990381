"""Parameters and ranking rules for rank-based (first-order) equity markets.

A first-order market with ``n`` stocks assigns the stock currently ranked
``k`` (largest capitalization = rank 1) the log-growth rate ``gamma + g_k``
and the volatility ``sigma_k``.  Long-run stability requires the rank growth
offsets to satisfy

    g_1 < 0,  g_1 + g_2 < 0,  ...,  g_1 + ... + g_{n-1} < 0,
    g_1 + ... + g_n = 0,

so capital leaks out of every leading group of ranks and is replenished
through the bottom.  The *Atlas* special case concentrates all growth in the
smallest stock: ``g_k = -g`` for ``k < n`` and ``g_n = (n-1) g`` with
``gamma = g > 0``.  A *generalized Atlas* model keeps those offsets but lets
the rank variances grow linearly, ``sigma_k^2 = sigma^2 + k s^2``.

Ranks and names are 0-based throughout the in-memory API; every serialized
output (CSV/JSON/CLI) uses 1-based indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Relative tolerance for the zero-sum condition on g; calibrated offsets come
# from floating-point fits, so exact zero cannot be required.
ZERO_SUM_RTOL = 1e-12

# Relative tolerance for recognizing a linear variance profile in alpha_beta.
ATLAS_FIT_RTOL = 1e-9


class InvalidParamsError(ValueError):
    """Raised when a constructor is given parameters outside its domain."""


class NotAtlasShapedError(ValueError):
    """Raised when parameters do not have (generalized) Atlas structure."""


def _as_readonly(a, n, name):
    arr = np.asarray(a, dtype=np.float64)
    if arr.shape != (n,):
        raise InvalidParamsError(f"{name} must have length {n}, got shape {arr.shape}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Immutable parameter tuple (n, gamma, g_1..g_n, sigma_1..sigma_n).

    Construction only checks shapes; use :func:`validate` for the stability
    conditions (report-style, never raises).
    """

    n: int
    gamma: float
    g: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParamsError(f"need at least 2 stocks, got n={self.n}")
        object.__setattr__(self, "g", _as_readonly(self.g, self.n, "g"))
        object.__setattr__(self, "sigma", _as_readonly(self.sigma, self.n, "sigma"))

    @property
    def sigma2(self) -> np.ndarray:
        """Rank variances sigma_k^2."""
        return self.sigma * self.sigma

    def combined_vol(self) -> np.ndarray:
        """s_k = sqrt(sigma_k^2 + sigma_{k+1}^2) for each adjacent rank pair."""
        v = self.sigma2
        return np.sqrt(v[:-1] + v[1:])


@dataclass(frozen=True)
class ValidityReport:
    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate(params: ModelParams) -> ValidityReport:
    """Check the stability conditions on (g, sigma), reporting every violation.

    Partial sums g_1 + ... + g_k must be strictly negative for k < n; the
    total sum must vanish up to ``ZERO_SUM_RTOL`` relative to max |g_k|; every
    sigma_k must be positive.
    """
    problems = []
    for k in range(params.n):
        if not params.sigma[k] > 0.0:
            problems.append(f"sigma_{k + 1} = {params.sigma[k]} is not > 0")
    partial = np.cumsum(params.g)
    for k in range(params.n - 1):
        if not partial[k] < 0.0:
            problems.append(
                f"partial sum g_1+...+g_{k + 1} = {partial[k]} is not < 0"
            )
    gmax = float(np.max(np.abs(params.g))) if params.n else 0.0
    tol = ZERO_SUM_RTOL * gmax
    if abs(partial[-1]) > tol:
        problems.append(
            f"total sum g_1+...+g_n = {partial[-1]} is not 0 (tolerance {tol:g})"
        )
    return ValidityReport(ok=not problems, violations=tuple(problems))


def atlas(n: int, g: float, sigma: float) -> ModelParams:
    """Atlas model: all growth in the smallest stock, common volatility.

    gamma = g, g_k = -g for k < n, g_n = (n-1) g, sigma_k = sigma.
    """
    if n < 2:
        raise InvalidParamsError(f"need at least 2 stocks, got n={n}")
    if not g > 0.0:
        raise InvalidParamsError(f"growth rate g must be > 0, got {g}")
    if not sigma > 0.0:
        raise InvalidParamsError(f"volatility must be > 0, got {sigma}")
    offs = np.full(n, -g, dtype=np.float64)
    offs[n - 1] = (n - 1) * g
    return ModelParams(n=n, gamma=float(g), g=offs, sigma=np.full(n, sigma))


def generalized_atlas(n: int, g: float, sigma2: float, s2: float) -> ModelParams:
    """Atlas growth offsets with linearly growing rank variances.

    sigma_k^2 = sigma2 + k * s2 (1-based k); s2 = 0 reduces to :func:`atlas`.
    """
    if n < 2:
        raise InvalidParamsError(f"need at least 2 stocks, got n={n}")
    if not g > 0.0:
        raise InvalidParamsError(f"growth rate g must be > 0, got {g}")
    if not sigma2 > 0.0:
        raise InvalidParamsError(f"base variance must be > 0, got {sigma2}")
    if s2 < 0.0:
        raise InvalidParamsError(f"variance slope must be >= 0, got {s2}")
    offs = np.full(n, -g, dtype=np.float64)
    offs[n - 1] = (n - 1) * g
    k = np.arange(1, n + 1, dtype=np.float64)
    return ModelParams(n=n, gamma=float(g), g=offs, sigma=np.sqrt(sigma2 + k * s2))


@dataclass(frozen=True)
class Ranking:
    """Permutation view of a log-capitalization vector.

    ``perm[k]`` is the name (index) of the stock holding rank ``k``;
    ``rank_of`` is the inverse map.  Ties rank the lower index first.
    """

    perm: np.ndarray
    rank_of: np.ndarray

    def __post_init__(self):
        self.perm.flags.writeable = False
        self.rank_of.flags.writeable = False


def rank(y) -> Ranking:
    """Rank a log-capitalization vector, largest first, ties to lowest index."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("log-capitalizations must be finite")
    n = arr.shape[0]
    # lexsort: primary key -y (descending capitalization), secondary the
    # index itself so equal values keep ascending-name order.
    perm = np.lexsort((np.arange(n), -arr)).astype(np.int64)
    rank_of = np.empty(n, dtype=np.int64)
    rank_of[perm] = np.arange(n)
    return Ranking(perm=perm, rank_of=rank_of)


def alpha_beta(params: ModelParams) -> tuple[float, float]:
    """Extract (alpha, beta) = (sigma^2 / 2g, s^2 / 4g) from Atlas-shaped params.

    Requires the exact Atlas growth structure and an exact (up to
    ``ATLAS_FIT_RTOL``) linear variance profile sigma_k^2 = sigma^2 + k s^2.
    Anything else is rejected; free-form fitting lives in :mod:`.calibrate`.
    """
    n, g = params.n, params.gamma
    if not g > 0.0:
        raise NotAtlasShapedError(f"gamma = {g} is not a positive Atlas rate")
    if not np.all(params.g[: n - 1] == -g):
        raise NotAtlasShapedError("growth offsets g_k != -gamma for some k < n")
    if not math.isclose(params.g[n - 1], (n - 1) * g, rel_tol=1e-12):
        raise NotAtlasShapedError("bottom-rank growth offset is not (n-1)*gamma")
    v = params.sigma2
    s2 = (v[-1] - v[0]) / (n - 1) if n > 1 else 0.0
    if s2 < 0.0:
        if abs(s2) <= ATLAS_FIT_RTOL * v[0]:
            s2 = 0.0
        else:
            raise NotAtlasShapedError("rank variances decrease with rank")
    sigma2 = v[0] - s2
    if not sigma2 > 0.0:
        raise NotAtlasShapedError("fitted base variance is not positive")
    k = np.arange(1, n + 1, dtype=np.float64)
    fitted = sigma2 + k * s2
    if not np.allclose(v, fitted, rtol=ATLAS_FIT_RTOL, atol=0.0):
        raise NotAtlasShapedError("rank variances are not linear in rank")
    return sigma2 / (2.0 * g), s2 / (4.0 * g)
