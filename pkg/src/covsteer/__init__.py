"""Incentive synthesis for covariance steering in two-player zero-sum
linear-quadratic stochastic differential games.

Core modules: model (problem types and scenario schema), numkit (shared
numerics), game (Riccati/Nash/covariance machinery), steering (terminal
incentive by shooting), minimax (saddle-point cross-check solver),
stationary (infinite-horizon synthesis), sim (Monte Carlo validation),
documents (JSON serialization), service (HTTP app), cli (command line).
"""

__version__ = "1.0.0"

from . import (  # noqa: F401
    documents,
    errors,
    game,
    minimax,
    model,
    numkit,
    sim,
    stationary,
    steering,
)
