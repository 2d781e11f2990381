"""Rank-based portfolio rules and their growth-rate formulas.

A rule maps the current market state to a nonnegative weight vector summing
to one.  Supported kinds:

======================  =====================================================
market                  hold each stock at its market weight
equal                   1/n in every stock
diversity(p)            weights proportional to mu_i^p, p in (0, 1)
restricted_market       market weights renormalized over the top n-1 ranks
restricted_equal        1/(n-1) in every stock except the smallest
restricted_diversity(p) diversity weights over the top n-1 ranks
atlas_star              everything in the current smallest stock
efficient(lam)          variance-minimizing ranked weights, lam in [0, 1]
======================  =====================================================

For each rule the module provides the instantaneous growth rate
``gamma_pi = sum_i pi_i gamma_i + gamma_star`` and excess growth rate
``gamma_star = (1/2) sum_i pi_i (1 - pi_i) sigma_i^2``, long-run plug-in
growth formulas G/G_* in terms of a ranked weight vector m standing in for
the long-term weight moments, and the large-market limits Gamma/Gamma_* as
functions of (alpha, beta, p, g).

"Smallest stock" always means the rank decided by the engine's tie rule, so
on a tie for last place the higher-index stock of the tied pair is the one
excluded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .model import ModelParams, Ranking, rank

if TYPE_CHECKING:  # pragma: no cover
    from .engine import MarketState, PathStats

MARKET = "market"
EQUAL = "equal"
DIVERSITY = "diversity"
RESTRICTED_MARKET = "restricted_market"
RESTRICTED_EQUAL = "restricted_equal"
RESTRICTED_DIVERSITY = "restricted_diversity"
ATLAS_STAR = "atlas_star"
EFFICIENT = "efficient"

KINDS = (
    MARKET,
    EQUAL,
    DIVERSITY,
    RESTRICTED_MARKET,
    RESTRICTED_EQUAL,
    RESTRICTED_DIVERSITY,
    ATLAS_STAR,
    EFFICIENT,
)

# codes shared with the compiled kernel
KIND_CODES = {kind: code for code, kind in enumerate(KINDS)}

_NEEDS_P = {DIVERSITY, RESTRICTED_DIVERSITY}


class NoClosedFormError(ValueError):
    """Raised when a rule has no closed-form growth expression."""


@dataclass(frozen=True)
class PortfolioRule:
    kind: str
    p: float | None = None
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown portfolio kind {self.kind!r}")
        if self.kind in _NEEDS_P:
            if self.p is None or not 0.0 < self.p < 1.0:
                raise ValueError(f"{self.kind} needs exponent p in (0, 1), got {self.p}")
        elif self.kind == EFFICIENT:
            if self.lam is None or not 0.0 <= self.lam <= 1.0:
                raise ValueError(f"efficient needs lam in [0, 1], got {self.lam}")

    @property
    def label(self) -> str:
        if self.kind in _NEEDS_P:
            return f"{self.kind}(p={self.p:g})"
        if self.kind == EFFICIENT:
            return f"{self.kind}(lam={self.lam:g})"
        return self.kind


def parse_rule(text: str) -> PortfolioRule:
    """Parse 'market', 'diversity:0.5', 'efficient:0.25' style rule specs."""
    kind, _, arg = text.partition(":")
    kind = kind.strip()
    if kind in _NEEDS_P:
        if not arg:
            raise ValueError(f"{kind} requires ':p' argument")
        return PortfolioRule(kind, p=float(arg))
    if kind == EFFICIENT:
        if not arg:
            raise ValueError("efficient requires ':lam' argument")
        return PortfolioRule(kind, lam=float(arg))
    if arg:
        raise ValueError(f"{kind} takes no argument")
    return PortfolioRule(kind)


def efficient_frontier_weights(sigma2, lam: float) -> np.ndarray:
    """Ranked frontier weights lam/n + (1-lam) * sigma_k^{-2} / sum_j sigma_j^{-2}.

    ``sigma2`` lists the investable rank variances; with constant variances
    both terms coincide, so the result is exactly uniform for every lam.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must be in [0, 1], got {lam}")
    v = np.asarray(sigma2, dtype=np.float64)
    if np.any(v <= 0.0):
        raise ValueError("rank variances must be positive")
    n = v.shape[0]
    inv = 1.0 / v
    minvar = inv / inv.sum()
    uniform = np.full(n, 1.0 / n)
    if np.all(v == v[0]):
        return uniform
    return lam * uniform + (1.0 - lam) * minvar


def weights_from_mu(
    rule: PortfolioRule, mu: np.ndarray, ranking: Ranking, params: ModelParams | None = None
) -> np.ndarray:
    """Weight vector over names for the given market weights and ranking."""
    n = mu.shape[0]
    if rule.kind == MARKET:
        return mu.copy()
    if rule.kind == EQUAL:
        return np.full(n, 1.0 / n)
    if rule.kind == DIVERSITY:
        w = mu**rule.p
        return w / w.sum()
    last = ranking.perm[n - 1]
    if rule.kind == RESTRICTED_MARKET:
        w = mu / (1.0 - mu[last])
        w[last] = 0.0
        return w
    if rule.kind == RESTRICTED_EQUAL:
        w = np.full(n, 1.0 / (n - 1))
        w[last] = 0.0
        return w
    if rule.kind == RESTRICTED_DIVERSITY:
        w = mu**rule.p
        w[last] = 0.0
        return w / w.sum()
    if rule.kind == ATLAS_STAR:
        w = np.zeros(n)
        w[last] = 1.0
        return w
    if rule.kind == EFFICIENT:
        if params is None:
            raise ValueError("efficient rule needs model parameters")
        ranked = efficient_frontier_weights(params.sigma2, rule.lam)
        w = np.empty(n)
        w[ranking.perm] = ranked
        return w
    raise ValueError(f"unknown portfolio kind {rule.kind!r}")


def weights(rule: PortfolioRule, state: "MarketState", params: ModelParams | None = None) -> np.ndarray:
    """Weight vector the rule holds at the given market state."""
    mu = state.weights()
    return weights_from_mu(rule, mu, rank(state.y), params)


@dataclass(frozen=True)
class WealthIncrement:
    dlog_wealth: float
    dgrowth_integral: float
    dexcess_integral: float
    drate_of_return_integral: float
    dvariance_integral: float


def wealth_step(
    rule: PortfolioRule,
    state: "MarketState",
    next_state: "MarketState",
    params: ModelParams,
    dt: float,
    noise,
) -> WealthIncrement:
    """One-step wealth and growth-integral increments for a rule.

    The log-wealth increment is the realized rebalancing return
    log(sum_i pi_i e^{dy_i}); the growth integrals accumulate the
    instantaneous rates evaluated at the incoming state.  ``noise`` must be
    the same draw the engine used, which is cross-checked against the
    realized increments.
    """
    noise = np.asarray(noise, dtype=np.float64)
    ranking = rank(state.y)
    k_of = ranking.rank_of
    dy = next_state.y - state.y
    expected = (
        params.g[k_of] * dt + params.gamma * dt + params.sigma[k_of] * math.sqrt(dt) * noise
    )
    if not np.allclose(dy, expected, rtol=0.0, atol=1e-9 * max(1.0, float(np.max(np.abs(dy))))):
        raise ValueError("noise vector does not reproduce the state increment")
    mu = state.weights()
    pw = weights_from_mu(rule, mu, ranking, params)
    ranked_w = pw[ranking.perm]
    v = params.sigma2
    gpi = float(np.dot(ranked_w, params.g))
    gstar = 0.5 * float(np.dot(ranked_w * (1.0 - ranked_w), v))
    bpi = float(np.dot(ranked_w, params.gamma + params.g + 0.5 * v))
    s2pi = float(np.dot(ranked_w * ranked_w, v))
    dlogz = float(np.log(np.dot(pw, np.exp(dy))))
    return WealthIncrement(
        dlog_wealth=dlogz,
        dgrowth_integral=(params.gamma + gpi + gstar) * dt,
        dexcess_integral=gstar * dt,
        drate_of_return_integral=bpi * dt,
        dvariance_integral=s2pi * dt,
    )


def growth_rates_at(rule: PortfolioRule, mu: np.ndarray, ranking: Ranking, params: ModelParams):
    """(gamma_pi, gamma_star) of the rule at a given state."""
    pw = weights_from_mu(rule, mu, ranking, params)
    ranked_w = pw[ranking.perm]
    v = params.sigma2
    gstar = 0.5 * float(np.dot(ranked_w * (1.0 - ranked_w), v))
    gpi = params.gamma + float(np.dot(ranked_w, params.g)) + gstar
    return gpi, gstar


def analytic_growth(rule: PortfolioRule, params: ModelParams, m) -> tuple[float, float]:
    """Plug-in long-run (G, G_star) with ranked weights m replacing moments.

    The expectations in the long-run formulas are evaluated by substituting
    the deterministic vector ``m`` (certainty-equivalent or time-averaged
    ranked weights) for the random long-term weights.  Rules without a
    closed form (atlas_star, efficient) raise :class:`NoClosedFormError`.
    """
    m = np.asarray(m, dtype=np.float64)
    n = params.n
    if m.shape != (n,):
        raise ValueError(f"m must have length {n}")
    if np.any(m <= 0.0) or abs(m.sum() - 1.0) > 1e-9:
        raise ValueError("m must be positive and sum to 1")
    g = params.g
    v = params.sigma2
    gamma = params.gamma
    kind = rule.kind
    if kind == MARKET:
        g_star = -float(np.dot(g, m))
        return gamma, g_star
    if kind == EQUAL:
        g_star = (n - 1) / (2.0 * n * n) * float(v.sum())
        return gamma + g_star, g_star
    if kind == DIVERSITY:
        p = rule.p
        mp = m**p
        g_star = -float(np.dot(g, mp)) / (p * float(mp.sum()))
        return gamma + (1.0 - p) * g_star, g_star
    if kind == RESTRICTED_MARKET:
        head = 1.0 - m[-1]
        g_star = -(g[-1] * m[-2] + float(np.dot(g[:-1], m[:-1]))) / head
        growth = gamma - g[-1] * m[-2] / head
        return growth, g_star
    if kind == RESTRICTED_EQUAL:
        g_star = (n - 2) / (2.0 * (n - 1) ** 2) * float(v[:-1].sum())
        return gamma - g[-1] / (n - 1) + g_star, g_star
    if kind == RESTRICTED_DIVERSITY:
        p = rule.p
        mp = m[:-1] ** p
        denom = float(mp.sum())
        g_star = -(g[-1] * mp[-1] + float(np.dot(g[:-1], mp))) / (p * denom)
        growth = gamma - (g[-1] * mp[-1] + (1.0 - p) * float(np.dot(g[:-1], mp))) / (p * denom)
        return growth, g_star
    raise NoClosedFormError(f"no closed-form growth for {rule.label}; empirical only")


def asymptotic_growth(
    rule: PortfolioRule, alpha: float, beta: float, g: float = 1.0
) -> tuple[float, float]:
    """Large-market limits (Gamma, Gamma_star) for Atlas-shaped markets.

    ``alpha = sigma^2 / 2g`` and ``beta = s^2 / 4g``; beta > 0 means linearly
    growing rank variances.  For beta = 0 the diversity cases split on
    alpha * p vs 1 and the market cases on alpha vs 1, with the boundary
    folded into the <= branch.  Equal-weighting diverges when beta > 0.
    """
    if not alpha > 0.0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if not g > 0.0:
        raise ValueError(f"g must be > 0, got {g}")
    kind = rule.kind
    if kind == MARKET:
        if beta > 0.0 or alpha > 1.0:
            return g, g
        return g, alpha * g
    if kind == RESTRICTED_MARKET:
        if beta > 0.0 or alpha > 1.0:
            return g, g
        return alpha * g, alpha * g
    if kind == EQUAL:
        if beta > 0.0:
            return math.inf, math.inf
        return g * (1.0 + alpha), alpha * g
    if kind == RESTRICTED_EQUAL:
        if beta > 0.0:
            return math.inf, math.inf
        return alpha * g, alpha * g
    if kind == DIVERSITY:
        p = rule.p
        if beta > 0.0 or alpha * p > 1.0:
            g_star = g / p
        else:
            g_star = alpha * g
        return g + (1.0 - p) * g_star, g_star
    if kind == RESTRICTED_DIVERSITY:
        p = rule.p
        if beta > 0.0 or alpha * p > 1.0:
            val = g / p
        else:
            val = alpha * g
        return val, val
    raise NoClosedFormError(f"no large-market growth formula for {rule.label}")


@dataclass(frozen=True)
class GrowthEntry:
    rule: PortfolioRule
    empirical_G: float
    analytic_G: float | None
    analytic_Gstar: float | None
    asymptotic_Gamma: float | None
    asymptotic_Gammastar: float | None
    m_source: str


def build_growth_report(
    stats: "PathStats", params: ModelParams, m=None, m_source: str = "ce"
) -> dict[str, GrowthEntry]:
    """Per-rule growth summary combining empirical, plug-in and limit values.

    ``m`` defaults to the certainty-equivalent weights when ``m_source`` is
    'ce' and to the path's time-averaged ranked weights for 'empirical'.
    Asymptotic columns are filled only for Atlas-shaped parameters.
    """
    from .equilibrium import ce_weights
    from .model import alpha_beta, NotAtlasShapedError

    if m is None:
        if m_source == "ce":
            m = ce_weights(params).m
        elif m_source == "empirical":
            m = stats.ranked_weight_means()
        else:
            raise ValueError(f"unknown m_source {m_source!r}")
    try:
        ab = alpha_beta(params)
    except NotAtlasShapedError:
        ab = None
    report: dict[str, GrowthEntry] = {}
    for idx, rule in enumerate(stats.rules):
        emp = stats.empirical_growth(idx)
        try:
            a_g, a_gs = analytic_growth(rule, params, m)
        except NoClosedFormError:
            a_g = a_gs = None
        gam = gam_s = None
        if ab is not None:
            try:
                gam, gam_s = asymptotic_growth(rule, ab[0], ab[1], g=params.gamma)
            except NoClosedFormError:
                pass
        report[rule.label] = GrowthEntry(
            rule=rule,
            empirical_G=emp,
            analytic_G=a_g,
            analytic_Gstar=a_gs,
            asymptotic_Gamma=gam,
            asymptotic_Gammastar=gam_s,
            m_source=m_source,
        )
    return report


@dataclass(frozen=True)
class ResidualSeries:
    """Pathwise decomposition residual of the diversity-vs-market identity."""

    p: float
    times: np.ndarray
    residual: np.ndarray

    @property
    def terminal(self) -> float:
        return float(self.residual[-1])

    def slope(self) -> float:
        """Least-squares slope of |residual| against time."""
        t = self.times
        r = np.abs(self.residual)
        return float(np.polyfit(t, r, 1)[0])


def _find_rule(stats: "PathStats", kind: str, p: float | None = None) -> int:
    for idx, rule in enumerate(stats.rules):
        if rule.kind == kind and (p is None or rule.p == p):
            return idx
    raise ValueError(f"rule {kind}{'' if p is None else f'(p={p})'} was not registered")


def master_identity_residual(stats: "PathStats", p: float, params: ModelParams) -> ResidualSeries:
    """Residual of log(Z_div/Z_mkt) = log(D(mu_T)/D(mu_0)) + (1-p) * excess integral.

    Both the diversity(p) and the market rule must have been registered on
    the path.  The residual is reported at every checkpoint; it shrinks
    linearly with the step size.
    """
    i_div = _find_rule(stats, DIVERSITY, p)
    i_mkt = _find_rule(stats, MARKET)
    rw = stats.ranked_weight_snapshots
    log_d = (1.0 / p) * np.log(np.sum(rw**p, axis=1))
    lhs = stats.logz_series[:, i_div] - stats.logz_series[:, i_mkt]
    rhs = (log_d - log_d[0]) + (1.0 - p) * stats.gamma_star_int_series[:, i_div]
    return ResidualSeries(p=p, times=stats.checkpoint_times.copy(), residual=lhs - rhs)


@dataclass(frozen=True)
class OptimalityReport:
    applicable: bool
    reason: str
    target_growth: float | None = None
    star_empirical: float | None = None
    others: dict[str, float] | None = None

    @property
    def dominates(self) -> bool:
        if not self.applicable or not self.others:
            return False
        return all(self.star_empirical > g for g in self.others.values())


def optimal_growth_bound_check(stats: "PathStats", params: ModelParams) -> OptimalityReport:
    """Compare every registered rule's growth against the all-in-Atlas rule.

    Only meaningful for constant-variance Atlas parameters with
    n g >= sigma^2 / 2, where the all-in-Atlas rule attains the maximal
    long-term growth rate n g.
    """
    from .model import alpha_beta, NotAtlasShapedError

    try:
        alpha, beta = alpha_beta(params)
    except NotAtlasShapedError as exc:
        return OptimalityReport(False, f"not Atlas-shaped: {exc}")
    if beta != 0.0:
        return OptimalityReport(False, "rank variances are not constant")
    sigma2 = params.sigma2[0]
    ng = params.n * params.gamma
    if ng < sigma2 / 2.0:
        return OptimalityReport(False, f"n*g = {ng:g} < sigma^2/2 = {sigma2 / 2:g}")
    try:
        i_star = _find_rule(stats, ATLAS_STAR)
    except ValueError:
        return OptimalityReport(False, "atlas_star rule was not registered")
    star = stats.empirical_growth(i_star)
    others = {
        rule.label: stats.empirical_growth(idx)
        for idx, rule in enumerate(stats.rules)
        if idx != i_star
    }
    return OptimalityReport(
        True, "ok", target_growth=ng, star_empirical=star, others=others
    )
