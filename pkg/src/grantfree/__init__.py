"""Delay model, simulator and RB sizing for reactive grant-free URLLC access."""

__version__ = "0.1.0"

from .attempt import FullChainSolution, ideal_limit, solve_full_chain
from .channel import decode_rb, p1_closed, p1_limit, p1_numeric
from .delay import (DelayDistribution, SimplifiedSolution, delay_distribution, delay_no_1pr,
                    delay_no_queue, outage, service_pmf, solve_simplified)
from .errors import (ConfigError, GrantFreeError, Infeasible, ModelError, NoFixedPoint, NoRealRoot,
                     TableMiss, Unstable)
from .params import ChannelParams, SystemParams

__all__ = [
    "ChannelParams", "SystemParams", "p1_closed", "p1_numeric", "p1_limit", "decode_rb",
    "solve_full_chain", "FullChainSolution", "ideal_limit", "solve_simplified", "SimplifiedSolution",
    "service_pmf", "delay_distribution", "delay_no_1pr", "delay_no_queue", "outage",
    "DelayDistribution", "GrantFreeError", "ModelError", "NoFixedPoint", "Unstable", "NoRealRoot",
    "Infeasible", "TableMiss", "ConfigError",
]
