"""Time-discretized simulation of rank-based markets.

The state advances by an Euler step with coefficients frozen at the step's
incoming ranks: with k(i) the incoming rank of stock i,

    y_i' = y_i + (g_{k(i)} + gamma) dt + sigma_{k(i)} sqrt(dt) xi_i,

where the xi_i are independent standard normals.  Each stock name draws from
its own generator seeded by (seed, name), so ensembles stay independent and
results never depend on chunking or thread count.

A path accumulates, after an initial burn-in, the occupation times of every
(name, rank) pair, permutation occupation (small n), the adjacent-rank gap
series (means, small-gap band fractions, histograms), rank crossover counts,
time-averaged name and ranked weights, registered power-sum functionals of
the weight vector, and per-portfolio-rule log-wealth with running growth
integrals.  Everything is reproducible bit for bit from (params, config,
registrations).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .model import ModelParams, rank, validate
from .portfolio import EFFICIENT, KIND_CODES, PortfolioRule, efficient_frontier_weights

GAP_HIST_BINS = 200

# histogram upper edge = this multiple of the largest analytic mean gap
GAP_HIST_SPAN = 10.0

PERM_TRACK_MAX_N = 8


class EngineError(RuntimeError):
    """Raised when a path aborts (non-finite state, broken weight vector)."""


@dataclass(frozen=True)
class MarketState:
    """Elapsed time plus the log-capitalization vector."""

    t: float
    y: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.y, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("log-capitalizations must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "y", arr)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def capitalizations(self) -> np.ndarray:
        return np.exp(self.y)

    def weights(self) -> np.ndarray:
        w = np.exp(self.y - self.y.max())
        return w / w.sum()


@dataclass(frozen=True)
class SimConfig:
    """Horizon, step size, burn-in, seed and initial condition of one path."""

    T: float
    dt: float = 0.01
    burn_in: float | None = None  # defaults to 0.1 * T
    seed: int = 0
    y0: np.ndarray | None = None  # defaults to all-equal (zeros)
    checkpoints: int = 256
    zero_noise: bool = False  # test hook: drift-only dynamics

    def __post_init__(self):
        if not 0.0 < self.dt <= self.T:
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        burn = 0.1 * self.T if self.burn_in is None else self.burn_in
        if not 0.0 <= burn < self.T:
            raise ValueError(f"need 0 <= burn_in < T, got {burn}")
        object.__setattr__(self, "burn_in", float(burn))
        if int(self.seed) < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.y0 is not None:
            arr = np.asarray(self.y0, dtype=np.float64).copy()
            if not np.all(np.isfinite(arr)):
                raise ValueError("y0 must be finite")
            arr.flags.writeable = False
            object.__setattr__(self, "y0", arr)
        if self.checkpoints < 1:
            raise ValueError("need at least one checkpoint")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def burn_step(self) -> int:
        return int(round(self.burn_in / self.dt))


@dataclass(frozen=True)
class Registrations:
    """Observers to attach to a simulation run."""

    track_permutations: bool = False
    functionals: tuple[float, ...] = ()  # exponents p of sum_i mu_i^p
    portfolios: tuple[PortfolioRule, ...] = ()
    gap_band_eps: tuple[float, ...] | None = None  # override per boundary


@dataclass
class PathStats:
    """Accumulated observables of one simulated path.

    Time-integrated accumulators (occupation, gap sums, weight sums,
    functional sums) cover the post-burn-in window of length
    ``measured_time``; wealth logs and growth integrals run from t = 0 and
    are sampled on the checkpoint grid, which always contains the burn-in
    time.
    """

    meta: dict
    measured_time: float
    y_initial: np.ndarray
    y_burn: np.ndarray
    y_final: np.ndarray
    occupation: np.ndarray
    perm_occupation: np.ndarray | None
    gap_sum: np.ndarray
    gap_band_time: np.ndarray
    gap_band_eps: np.ndarray
    gap_hist: np.ndarray
    gap_hist_overflow: np.ndarray
    gap_hist_edges: np.ndarray
    crossovers: np.ndarray
    name_weight_time: np.ndarray
    ranked_weight_time: np.ndarray
    functional_p: tuple[float, ...]
    functional_time_integral: np.ndarray
    functional_series: np.ndarray
    checkpoint_times: np.ndarray
    checkpoint_steps: np.ndarray
    ranked_weight_snapshots: np.ndarray
    rules: tuple[PortfolioRule, ...]
    logz_series: np.ndarray
    gamma_int_series: np.ndarray
    gamma_star_int_series: np.ndarray
    rate_of_return_integral: np.ndarray
    variance_integral: np.ndarray
    logz_burn: np.ndarray
    gamma_int_burn: np.ndarray
    gamma_star_int_burn: np.ndarray
    sum_identity_max_residual: float

    @property
    def n(self) -> int:
        return self.occupation.shape[0]

    def name_weight_means(self) -> np.ndarray:
        return self.name_weight_time / self.measured_time

    def ranked_weight_means(self) -> np.ndarray:
        return self.ranked_weight_time / self.measured_time

    def functional_means(self) -> np.ndarray:
        return self.functional_time_integral / self.measured_time

    def empirical_growth(self, rule_index: int) -> float:
        """(log Z(T) - log Z(burn_in)) / (T - burn_in) for one rule."""
        span = self.meta["T"] - self.meta["burn_in"]
        return float(
            (self.logz_series[-1, rule_index] - self.logz_burn[rule_index]) / span
        )

    def rule_index(self, rule: PortfolioRule) -> int:
        return self.rules.index(rule)


def step(state: MarketState, params: ModelParams, dt: float, noise) -> MarketState:
    """Single Euler step with coefficients frozen at the incoming ranks."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (params.n,):
        raise ValueError(f"noise must have shape ({params.n},)")
    k_of = rank(state.y).rank_of
    dy = (
        params.g[k_of] * dt
        + params.gamma * dt
        + params.sigma[k_of] * math.sqrt(dt) * noise
    )
    y_next = state.y + dy
    if not np.all(np.isfinite(y_next)):
        bad = int(np.flatnonzero(~np.isfinite(y_next))[0])
        raise EngineError(f"non-finite log-capitalization for stock {bad} at t={state.t}")
    return MarketState(t=state.t + dt, y=y_next)


def _noise_streams(seed: int, n: int):
    return [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), i))))
        for i in range(n)
    ]


def _checkpoint_steps(steps: int, burn_step: int, checkpoints: int) -> np.ndarray:
    grid = np.unique(
        np.concatenate(
            [
                np.linspace(0, steps, min(checkpoints, steps) + 1).astype(np.int64),
                np.asarray([burn_step], dtype=np.int64),
            ]
        )
    )
    return grid


def _gap_hist_upper(params: ModelParams) -> float:
    from .equilibrium import ce_rho

    with np.errstate(divide="ignore", invalid="ignore"):
        rho = ce_rho(params)
    if rho.size and np.all(np.isfinite(rho)) and np.all(rho > 0):
        return GAP_HIST_SPAN * float(rho.max())
    # drift-degenerate test models: fall back to the one-step gap scale
    return GAP_HIST_SPAN * float(params.combined_vol().max())


def simulate(
    params: ModelParams,
    config: SimConfig,
    reg: Registrations | None = None,
    check_params: bool = True,
) -> PathStats:
    """Run one path and return its accumulated statistics."""
    reg = reg or Registrations()
    n = params.n
    if check_params:
        report = validate(params)
        if not report.ok:
            raise ValueError("invalid parameters: " + "; ".join(report.violations))
    if reg.track_permutations and n > PERM_TRACK_MAX_N:
        raise ValueError(
            f"permutation occupation is limited to n <= {PERM_TRACK_MAX_N}, got n={n}"
        )
    y0 = np.zeros(n) if config.y0 is None else np.asarray(config.y0, dtype=np.float64)
    if y0.shape != (n,):
        raise ValueError(f"y0 must have shape ({n},)")

    steps = config.steps
    burn_step = config.burn_step
    if burn_step >= steps:
        raise ValueError("burn-in leaves no measured steps")
    dt = float(config.dt)
    sqrt_dt = math.sqrt(dt)

    y = y0.copy()
    ranking = rank(y)
    perm = ranking.perm.copy()
    rank_of = ranking.rank_of.copy()
    rank_prev = np.empty(n, dtype=np.int64)

    g = np.array(params.g, dtype=np.float64)
    sigma = np.array(params.sigma, dtype=np.float64)
    sigma2 = sigma * sigma

    occ = np.zeros((n, n))
    track = bool(reg.track_permutations)
    perm_occ = np.zeros(math.factorial(n) if track else 1)
    if track:
        fact = np.array([math.factorial(k) for k in range(n)], dtype=np.int64)
    else:
        fact = np.ones(n, dtype=np.int64)

    nbounds = n - 1
    s_k = params.combined_vol()
    if reg.gap_band_eps is not None:
        eps = np.asarray(reg.gap_band_eps, dtype=np.float64)
        if eps.shape != (nbounds,):
            raise ValueError(f"gap_band_eps must have length {nbounds}")
    else:
        eps = 2.0 * s_k * sqrt_dt
    hist_upper = _gap_hist_upper(params)
    hist_edges = np.linspace(0.0, hist_upper, GAP_HIST_BINS + 1)
    inv_binw = GAP_HIST_BINS / hist_upper
    gap_sum = np.zeros(nbounds)
    gap_band = np.zeros(nbounds)
    hist = np.zeros((nbounds, GAP_HIST_BINS))
    hist_over = np.zeros(nbounds)
    cross = np.zeros(nbounds, dtype=np.int64)
    nw_sum = np.zeros(n)
    rw_sum = np.zeros(n)

    func_p = np.asarray(reg.functionals, dtype=np.float64)
    func_sum = np.zeros(func_p.shape[0])

    rules = tuple(reg.portfolios)
    nrules = len(rules)
    rkind = np.array([KIND_CODES[r.kind] for r in rules], dtype=np.int64)
    rp = np.array([r.p if r.p is not None else 0.0 for r in rules], dtype=np.float64)
    rconstw = np.zeros((max(nrules, 1), n))
    for q, r in enumerate(rules):
        if r.kind == EFFICIENT:
            rconstw[q] = efficient_frontier_weights(sigma2, r.lam)
    logz = np.zeros(nrules)
    g_int = np.zeros(nrules)
    gs_int = np.zeros(nrules)
    b_int = np.zeros(nrules)
    s2_int = np.zeros(nrules)

    mu = np.empty(n)
    pw = np.empty(n)
    dy = np.empty(n)
    edy = np.empty(n)
    resid_max = np.zeros(1)

    gens = None if config.zero_noise else _noise_streams(config.seed, n)

    cp_steps = _checkpoint_steps(steps, burn_step, config.checkpoints)
    ncp = cp_steps.shape[0]
    cp_times = cp_steps * dt
    logz_series = np.zeros((ncp, nrules))
    g_int_series = np.zeros((ncp, nrules))
    gs_int_series = np.zeros((ncp, nrules))
    func_series = np.full((ncp, func_p.shape[0]), np.nan)
    rw_snapshots = np.zeros((ncp, n))
    logz_burn = np.zeros(nrules)
    g_int_burn = np.zeros(nrules)
    gs_int_burn = np.zeros(nrules)
    y_burn = y0.copy()

    def current_ranked_weights():
        w = np.exp(y - y.max())
        w /= w.sum()
        return w[perm]

    def record(idx, step_now):
        logz_series[idx] = logz
        g_int_series[idx] = g_int
        gs_int_series[idx] = gs_int
        rw_snapshots[idx] = current_ranked_weights()
        measured = max(0, step_now - burn_step) * dt
        if measured > 0.0 and func_p.size:
            func_series[idx] = func_sum / measured

    record(0, 0)
    if burn_step == 0:
        y_burn = y.copy()
    for idx in range(1, ncp):
        a, b = int(cp_steps[idx - 1]), int(cp_steps[idx])
        length = b - a
        if config.zero_noise:
            noise = np.zeros((length, n))
        else:
            noise = np.empty((length, n))
            for i in range(n):
                noise[:, i] = gens[i].standard_normal(length)
        code, at = _kernels.run_chunk(
            y, perm, rank_of, rank_prev, a, length, noise, dt, sqrt_dt,
            params.gamma, g, sigma, sigma2, burn_step,
            occ, track, perm_occ, fact,
            gap_sum, gap_band, eps, hist, hist_over, inv_binw,
            cross, nw_sum, rw_sum, func_p, func_sum,
            rkind, rp, rconstw, logz, g_int, gs_int, b_int, s2_int,
            mu, pw, dy, edy, resid_max,
        )
        if code == _kernels.ERR_NONFINITE:
            raise EngineError(f"non-finite state at step {at} (t={at * dt:g})")
        if code == _kernels.ERR_WEIGHTS:
            raise EngineError(f"portfolio weight invariant violated at step {at}")
        record(idx, b)
        if b == burn_step:
            y_burn = y.copy()
            logz_burn = logz.copy()
            g_int_burn = g_int.copy()
            gs_int_burn = gs_int.copy()

    measured_time = (steps - burn_step) * dt
    meta = {
        "n": n,
        "T": float(config.T),
        "dt": dt,
        "burn_in": float(config.burn_in),
        "seed": int(config.seed),
        "steps": steps,
        "burn_step": burn_step,
        "measured_time": measured_time,
        "zero_noise": bool(config.zero_noise),
        "track_permutations": track,
        "functionals": [float(p) for p in func_p],
        "rules": [r.label for r in rules],
        "gap_band_eps": [float(e) for e in eps],
        "ensemble_seeds": None,
    }
    return PathStats(
        meta=meta,
        measured_time=measured_time,
        y_initial=y0.copy(),
        y_burn=y_burn,
        y_final=y.copy(),
        occupation=occ,
        perm_occupation=perm_occ if track else None,
        gap_sum=gap_sum,
        gap_band_time=gap_band,
        gap_band_eps=eps.copy(),
        gap_hist=hist,
        gap_hist_overflow=hist_over,
        gap_hist_edges=hist_edges,
        crossovers=cross,
        name_weight_time=nw_sum,
        ranked_weight_time=rw_sum,
        functional_p=tuple(float(p) for p in func_p),
        functional_time_integral=func_sum,
        functional_series=func_series,
        checkpoint_times=cp_times,
        checkpoint_steps=cp_steps,
        ranked_weight_snapshots=rw_snapshots,
        rules=rules,
        logz_series=logz_series,
        gamma_int_series=g_int_series,
        gamma_star_int_series=gs_int_series,
        rate_of_return_integral=b_int,
        variance_integral=s2_int,
        logz_burn=logz_burn,
        gamma_int_burn=g_int_burn,
        gamma_star_int_burn=gs_int_burn,
        sum_identity_max_residual=float(resid_max[0]),
    )


def merge_path_stats(paths) -> PathStats:
    """Average the accumulators of same-configuration paths."""
    paths = list(paths)
    first = paths[0]
    k = float(len(paths))

    def mean(attr):
        return sum(getattr(p, attr) for p in paths) / k

    perm_occ = None
    if first.perm_occupation is not None:
        perm_occ = mean("perm_occupation")
    meta = dict(first.meta)
    meta["seed"] = None
    meta["ensemble_seeds"] = [p.meta["seed"] for p in paths]
    return PathStats(
        meta=meta,
        measured_time=first.measured_time,
        y_initial=first.y_initial.copy(),
        y_burn=mean("y_burn"),
        y_final=mean("y_final"),
        occupation=mean("occupation"),
        perm_occupation=perm_occ,
        gap_sum=mean("gap_sum"),
        gap_band_time=mean("gap_band_time"),
        gap_band_eps=first.gap_band_eps.copy(),
        gap_hist=mean("gap_hist"),
        gap_hist_overflow=mean("gap_hist_overflow"),
        gap_hist_edges=first.gap_hist_edges.copy(),
        crossovers=mean("crossovers"),
        name_weight_time=mean("name_weight_time"),
        ranked_weight_time=mean("ranked_weight_time"),
        functional_p=first.functional_p,
        functional_time_integral=mean("functional_time_integral"),
        functional_series=mean("functional_series"),
        checkpoint_times=first.checkpoint_times.copy(),
        checkpoint_steps=first.checkpoint_steps.copy(),
        ranked_weight_snapshots=mean("ranked_weight_snapshots"),
        rules=first.rules,
        logz_series=mean("logz_series"),
        gamma_int_series=mean("gamma_int_series"),
        gamma_star_int_series=mean("gamma_star_int_series"),
        rate_of_return_integral=mean("rate_of_return_integral"),
        variance_integral=mean("variance_integral"),
        logz_burn=mean("logz_burn"),
        gamma_int_burn=mean("gamma_int_burn"),
        gamma_star_int_burn=mean("gamma_star_int_burn"),
        sum_identity_max_residual=max(p.sum_identity_max_residual for p in paths),
    )


@dataclass
class EnsembleStats:
    """Seed-averaged statistics plus the per-seed paths and their spread."""

    aggregate: PathStats
    paths: tuple[PathStats, ...]
    spread: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def seeds(self) -> list[int]:
        return [p.meta["seed"] for p in self.paths]


def run_ensemble(
    params: ModelParams,
    config: SimConfig,
    seeds,
    reg: Registrations | None = None,
    workers: int = 1,
    check_params: bool = True,
) -> EnsembleStats:
    """Independent paths for each seed, averaged in the given seed order."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    configs = [replace(config, seed=s) for s in seeds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = list(
                pool.map(lambda c: simulate(params, c, reg, check_params), configs)
            )
    else:
        paths = [simulate(params, c, reg, check_params) for c in configs]
    agg = merge_path_stats(paths)
    mt = agg.measured_time
    spread = {
        "occupation_fraction": np.std(
            np.stack([p.occupation / mt for p in paths]), axis=0
        ),
        "gap_mean": np.std(np.stack([p.gap_sum / mt for p in paths]), axis=0),
        "name_weight_mean": np.std(
            np.stack([p.name_weight_means() for p in paths]), axis=0
        ),
    }
    if agg.rules:
        spread["empirical_growth"] = np.std(
            np.stack(
                [[p.empirical_growth(i) for i in range(len(p.rules))] for p in paths]
            ),
            axis=0,
        )
    return EnsembleStats(aggregate=agg, paths=tuple(paths), spread=spread)
