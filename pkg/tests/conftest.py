"""Shared fixtures.

The long Atlas n=3 ensemble (T=5000, dt=0.01, burn-in 500, seeds 1-4) backs
both the acceptance suite and several estimator tests; it is built once per
session.
"""

import pytest

from atlasmkt import Registrations, SimConfig, atlas, run_ensemble
from atlasmkt.portfolio import PortfolioRule

ATLAS3_RULES = (
    PortfolioRule("market"),
    PortfolioRule("equal"),
    PortfolioRule("diversity", p=0.5),
    PortfolioRule("restricted_market"),
    PortfolioRule("restricted_equal"),
    PortfolioRule("restricted_diversity", p=0.5),
    PortfolioRule("atlas_star"),
)


@pytest.fixture(scope="session")
def atlas3():
    return atlas(3, 1.0, 1.0)


@pytest.fixture(scope="session")
def atlas3_ensemble(atlas3):
    config = SimConfig(T=5000.0, dt=0.01, burn_in=500.0, checkpoints=256)
    reg = Registrations(
        track_permutations=True, functionals=(0.5,), portfolios=ATLAS3_RULES
    )
    return run_ensemble(atlas3, config, seeds=[1, 2, 3, 4], reg=reg, workers=2)


@pytest.fixture(scope="session")
def atlas3_path(atlas3_ensemble):
    return atlas3_ensemble.paths[0]
