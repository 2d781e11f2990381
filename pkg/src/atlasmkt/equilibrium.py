"""Certainty-equivalent capital distributions.

The stationary log-gaps between adjacent ranked weights are asymptotically
exponential; replacing each gap by its mean

    rho_k = -(sigma_k^2 + sigma_{k+1}^2) / (4 (g_1 + ... + g_k))

turns the random long-term ranked weights into the deterministic
certainty-equivalent vector

    m_k  propto  exp(rho_k + rho_{k+1} + ... + rho_{n-1}),    m_n propto 1.

For Atlas-shaped parameters rho_k = alpha/k (constant variances) or
rho_k = 2 beta + (alpha + beta)/k (linear variances), which yields the
closed-form approximations m_k ~ k^{-alpha} and
m_k ~ k^{-(alpha+beta)} e^{-2 beta k}.

All weight computations run in log space with max-subtraction: for large n
the exponent sums can reach the hundreds, far beyond direct exponentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams

SOURCE_EXACT = "exact"
SOURCE_POWER = "power-law"
SOURCE_DAMPED = "damped-power-law"


@dataclass(frozen=True)
class CEWeights:
    """Ranked certainty-equivalent weights with their log-space form.

    ``m`` sums to one and is non-increasing whenever every gap mean is
    positive; ``log_m`` is the normalized log-weight vector and stays exact
    even when entries of ``m`` underflow.  ``rho`` holds the adjacent
    log-ratios log(m_k / m_{k+1}).
    """

    m: np.ndarray
    log_m: np.ndarray
    rho: np.ndarray
    source: str

    def __post_init__(self):
        for a in (self.m, self.log_m, self.rho):
            a.flags.writeable = False

    @property
    def n(self) -> int:
        return self.m.shape[0]


def ce_rho(params: ModelParams) -> np.ndarray:
    """Mean stationary log-gaps rho_k, k = 1..n-1, from the model parameters."""
    partial = np.cumsum(params.g)[:-1]
    v = params.sigma2
    return -(v[:-1] + v[1:]) / (4.0 * partial)


def _weights_from_exponents(suffix: np.ndarray, rho: np.ndarray, source: str) -> CEWeights:
    shifted = suffix - suffix.max()
    w = np.exp(shifted)
    log_norm = np.log(w.sum())
    log_m = shifted - log_norm
    return CEWeights(m=w / w.sum(), log_m=log_m, rho=rho.copy(), source=source)


def ce_weights_from_rho(rho) -> CEWeights:
    """Certainty-equivalent weights for an explicit gap-mean vector."""
    rho = np.asarray(rho, dtype=np.float64)
    # suffix[k] = rho_k + ... + rho_{n-1}, empty sum 0 for the last rank
    suffix = np.zeros(rho.shape[0] + 1)
    suffix[:-1] = np.cumsum(rho[::-1])[::-1]
    return _weights_from_exponents(suffix, rho, SOURCE_EXACT)


def ce_weights(params: ModelParams) -> CEWeights:
    """Exact certainty-equivalent ranked weights for the given parameters."""
    return ce_weights_from_rho(ce_rho(params))


def ce_approx(n: int, alpha: float, beta: float = 0.0) -> CEWeights:
    """Closed-form approximate CE weights k^{-(alpha+beta)} e^{-2 beta k}.

    beta = 0 gives the pure power law.  Normalization always uses the finite
    n-term sum, never the infinite series.
    """
    if not alpha > 0.0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    k = np.arange(1, n + 1, dtype=np.float64)
    if beta == 0.0:
        log_w = -alpha * np.log(k)
        source = SOURCE_POWER
    else:
        log_w = -(alpha + beta) * np.log(k) - 2.0 * beta * k
        source = SOURCE_DAMPED
    rho = log_w[:-1] - log_w[1:]
    return _weights_from_exponents(log_w, rho, source)


def capital_curve(weights) -> np.ndarray:
    """(log k, log m_k) pairs in rank order for log-log capital plots.

    Accepts a :class:`CEWeights` or any positive ranked weight vector (for
    example time-averaged ranked weights from a simulation).
    """
    if isinstance(weights, CEWeights):
        log_m = weights.log_m
        n = weights.n
    else:
        m = np.asarray(weights, dtype=np.float64)
        if np.any(m <= 0.0):
            raise ValueError("weights must be positive")
        log_m = np.log(m)
        n = m.shape[0]
    log_k = np.log(np.arange(1, n + 1, dtype=np.float64))
    return np.column_stack([log_k, log_m])
