"""Stability and throughput regions of random-access broadcast networks."""

from .channel import (
    CHANNEL_I,
    CHANNEL_II,
    ChannelError,
    ChannelModel2x2,
    CollisionChannelNxM,
    channel_from_dict,
    load_channel,
)
from .reception_chain import alpha, solve_chain, build_p_star, stationary_2x2
from .regions import (
    BoundCheck,
    RegionBoundary,
    RegionPoint,
    boundary_2src,
    necessary_bound,
    optimize_lambda_n,
    rank_sources,
    stability_condition_2src,
    sufficient_bound,
    throughput_condition,
)
from .search import SolverSettings
from .service_rates import mu_backlogged_2x2, mu_collision, service_rates
from .simulator import SimConfig, SimResult, estimate_service_rate, run, stability_verdict

__all__ = [
    "CHANNEL_I", "CHANNEL_II", "ChannelError", "ChannelModel2x2", "CollisionChannelNxM",
    "channel_from_dict", "load_channel", "alpha", "solve_chain", "build_p_star",
    "stationary_2x2", "BoundCheck", "RegionBoundary", "RegionPoint", "boundary_2src",
    "necessary_bound", "optimize_lambda_n", "rank_sources", "stability_condition_2src",
    "sufficient_bound", "throughput_condition", "SolverSettings", "mu_backlogged_2x2",
    "mu_collision", "service_rates", "SimConfig", "SimResult", "estimate_service_rate",
    "run", "stability_verdict",
]
