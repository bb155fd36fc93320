"""Hosts exchanging microbiome state at random interaction times.

Event-driven simulation of the full model plus the low-frequency (basin
jump) and high-frequency (mass-effects and mean-field) approximations, with
a seeded ensemble harness comparing them.
"""

__version__ = "0.1.0"

from .network import (  # noqa: E402
    ExchangeParams,
    InteractionNetwork,
    SystemState,
    apply_exchange,
    build_network,
    pair_network,
    relative_rates,
    ten_host_network,
    total_rate,
)
from .integrate import IntegratorConfig  # noqa: E402
from .dynamics import (  # noqa: E402
    LocalDynamics,
    builtin_glv,
    builtin_illustrative,
    classify_basin,
    find_attractors,
    flow,
)
from .simulate import BasinInit, SimConfig, Trajectory, simulate, simulate_with_schedule  # noqa: E402
