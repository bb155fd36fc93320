"""High-frequency approximations.

HFLSA (frequent, weak interactions): interactions act like continuous mass
effects, ``dN_i/dt = g_i(N_i) + sum_j lambda_ij gamma (N_j - N_i)``.

HFCSA (frequent interactions of fixed strength): hosts synchronise to their
mean, which follows the host-averaged field ``dN/dt = mean_j g_j(N)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .dynamics import LocalDynamics
from .errors import ConfigInvalid, DimensionMismatch, EmptyInput
from .integrate import IntegratorConfig, solve_on_grid
from .network import ExchangeParams, InteractionNetwork


def _per_host(dynamics, count):
    if isinstance(dynamics, LocalDynamics):
        return [dynamics] * count
    dynamics = list(dynamics)
    if len(dynamics) != count:
        raise ConfigInvalid(f"{len(dynamics)} dynamics for {count} hosts")
    return dynamics


def mean_abundance(states) -> np.ndarray:
    """Entrywise mean of a list of equally sized abundance vectors."""
    rows = [np.asarray(s, dtype=np.float64) for s in states]
    if not rows:
        raise EmptyInput("mean of no states")
    if len({r.shape for r in rows}) != 1 or rows[0].ndim != 1:
        raise DimensionMismatch("abundance vectors must share one dimension")
    return np.mean(np.stack(rows), axis=0)


def _check_states(dyn_list, states):
    for d, x in zip(dyn_list, states):
        if x.shape != (d.dimension,):
            raise DimensionMismatch(f"state of shape {x.shape} for a {d.dimension}-species host")
        if np.any(x < 0) or np.any(x > d.domain_bound):
            raise ConfigInvalid(f"initial state {x} outside [0, {d.domain_bound}]")


@dataclass(frozen=True)
class HflsaSystem:
    network: InteractionNetwork
    dynamics: Union[LocalDynamics, Sequence[LocalDynamics]]
    gamma: float
    initial: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", ExchangeParams(self.gamma).gamma)
        init = np.array(self.initial, dtype=np.float64)
        if init.ndim != 2 or init.shape[0] != self.network.host_count:
            raise DimensionMismatch(f"need one initial state per host, got shape {init.shape}")
        _check_states(self.host_dynamics, init)
        object.__setattr__(self, "initial", init)

    @property
    def host_dynamics(self) -> list:
        return _per_host(self.dynamics, self.network.host_count)

    def coupling_matrix(self) -> np.ndarray:
        """``C`` with ``(C N)_i = sum_j lambda_ij gamma (N_j - N_i)``."""
        n = self.network.host_count
        c = np.zeros((n, n))
        for i, j, rate in self.network.edges:
            c[i, j] += rate * self.gamma
            c[j, i] += rate * self.gamma
        c[np.diag_indices(n)] -= c.sum(axis=1)
        return c


@dataclass(frozen=True)
class HfcsaSystem:
    dynamics: Sequence[LocalDynamics]
    mean_initial: np.ndarray

    def __post_init__(self):
        dyn = list(self.dynamics) if not isinstance(self.dynamics, LocalDynamics) else [self.dynamics]
        if not dyn:
            raise EmptyInput("HFCSA needs at least one host")
        mean = np.array(self.mean_initial, dtype=np.float64)
        _check_states(dyn, [mean] * len(dyn))
        object.__setattr__(self, "dynamics", tuple(dyn))
        object.__setattr__(self, "mean_initial", mean)

    @classmethod
    def from_states(cls, dynamics, states) -> "HfcsaSystem":
        states = np.asarray(states, dtype=np.float64)
        return cls(_per_host(dynamics, len(states)), mean_abundance(states))


def evolve_hflsa(sys: HflsaSystem, sample_times, cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Deterministic mass-effects trajectory, shape ``(K, hosts, species)``."""
    dyn = sys.host_dynamics
    coupling = sys.coupling_matrix()

    def rhs(y):
        local = np.stack([d(y[h]) for h, d in enumerate(dyn)])
        return local + coupling @ y

    bound = min(d.domain_bound for d in dyn)
    return solve_on_grid(rhs, sys.initial, sample_times, cfg, lower=0.0, bound=bound)


def evolve_hfcsa(sys: HfcsaSystem, sample_times, cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Mean-field trajectory, shape ``(K, species)``."""
    dyn = sys.dynamics

    def rhs(y):
        return np.mean(np.stack([d(y) for d in dyn]), axis=0)

    bound = min(d.domain_bound for d in dyn)
    return solve_on_grid(rhs, sys.mean_initial, sample_times, cfg, lower=0.0, bound=bound)


def broadcast_hosts(mean_traj, host_count: int) -> np.ndarray:
    """Repeat a mean-field trajectory for every host, ``(K, hosts, species)``."""
    mean_traj = np.asarray(mean_traj)
    return np.repeat(mean_traj[:, None, :], host_count, axis=1)
