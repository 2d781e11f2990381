"""Simulation and analysis toolkit for rank-based (Atlas) equity market models.

A first-order market assigns each stock a growth rate and a volatility that
depend only on the stock's current rank by capitalization.  The package
simulates such markets, estimates their long-run occupation and gap
statistics, computes certainty-equivalent capital distributions, and
evaluates the long-term growth of standard rank-based portfolio rules both
empirically and through closed-form expressions.
"""

from .model import (
    ModelParams,
    Ranking,
    ValidityReport,
    alpha_beta,
    atlas,
    generalized_atlas,
    rank,
    validate,
)
from .engine import (
    EnsembleStats,
    MarketState,
    PathStats,
    Registrations,
    SimConfig,
    run_ensemble,
    simulate,
    step,
)
from .equilibrium import CEWeights, capital_curve, ce_approx, ce_rho, ce_weights
from .portfolio import (
    GrowthEntry,
    PortfolioRule,
    analytic_growth,
    asymptotic_growth,
    build_growth_report,
    efficient_frontier_weights,
    master_identity_residual,
    optimal_growth_bound_check,
    wealth_step,
    weights,
)
from .diversity import (
    DiversityBoundInput,
    diversity_value,
    time_average_functional,
    weak_diversity_bound,
)
from .calibrate import annualize, estimate_g, fit_linear_variance

__version__ = "0.1.0"
