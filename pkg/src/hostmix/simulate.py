"""Exact event-driven simulation of hosts exchanging microbiome state.

One global exponential clock with rate ``lambda_tot`` drives the events; each
event picks edge ``(i, j)`` with probability ``l_ij``.  Between events every
host follows its local flow, integrated exactly up to each sample time so no
state is ever interpolated.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import integrate
from .dynamics import LocalDynamics, host_kernels
from .errors import ConfigInvalid, EmptyEdgeList, UnknownEdge, UnsortedEvents, ZeroTotalRate
from .integrate import IntegratorConfig, check_status
from .network import ExchangeParams, InteractionNetwork, relative_rates, total_rate
from .rng import generator


@dataclass(frozen=True)
class BasinInit:
    """Random initial condition: host i starts at attractor a with probability[i, a]."""

    probabilities: np.ndarray
    attractors: Sequence[np.ndarray]

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if probs.ndim != 2 or len(self.attractors) != probs.shape[0]:
            raise ConfigInvalid("need one probability row and one attractor list per host")
        for row, att in zip(probs, self.attractors):
            if len(row) != len(att):
                raise ConfigInvalid("probability row length must equal attractor count")
            if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-9:
                raise ConfigInvalid("basin probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "attractors", [np.asarray(a, dtype=np.float64) for a in self.attractors])

    def draw(self, rng) -> np.ndarray:
        rows = []
        for probs, att in zip(self.probabilities, self.attractors):
            cdf = np.cumsum(probs)
            cdf[-1] = 1.0
            idx = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cdf) - 1)
            rows.append(att[idx])
        return np.array(rows)


@dataclass(frozen=True)
class SimConfig:
    network: InteractionNetwork
    dynamics: Union[LocalDynamics, Sequence[LocalDynamics]]
    exchange: ExchangeParams
    horizon: float
    samples: int
    initial: Union[np.ndarray, BasinInit]
    integrator: IntegratorConfig = IntegratorConfig()
    seed: int = 0
    record_event_states: bool = False

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigInvalid("horizon must be positive")
        if self.samples < 2:
            raise ConfigInvalid("need at least two sample times")
        dyn = self.host_dynamics
        if len(dyn) != self.network.host_count:
            raise ConfigInvalid(f"{len(dyn)} dynamics for {self.network.host_count} hosts")
        dims = {d.dimension for d in dyn}
        if len(dims) != 1:
            raise ConfigInvalid("all hosts must share the abundance dimension")
        if not isinstance(self.initial, BasinInit):
            init = np.asarray(self.initial, dtype=np.float64)
            if init.shape != (self.network.host_count, dyn[0].dimension):
                raise ConfigInvalid(f"initial states must have shape {(self.network.host_count, dyn[0].dimension)}")
            for d, x in zip(dyn, init):
                if np.any(x < 0) or np.any(x > d.domain_bound):
                    raise ConfigInvalid(f"initial state {x} outside [0, {d.domain_bound}]")
            object.__setattr__(self, "initial", init)

    @property
    def host_dynamics(self) -> list:
        if isinstance(self.dynamics, LocalDynamics):
            return [self.dynamics] * self.network.host_count
        return list(self.dynamics)

    @property
    def sample_times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.samples)

    @property
    def domain_bound(self) -> float:
        return min(d.domain_bound for d in self.host_dynamics)

    def with_seed(self, seed: int) -> "SimConfig":
        return _replace(self, seed=int(seed))


def _replace(cfg, **changes):
    from dataclasses import replace

    return replace(cfg, **changes)


@dataclass
class Trajectory:
    sample_times: np.ndarray
    states: np.ndarray  # (K, hosts, dim)
    event_times: np.ndarray
    event_pairs: np.ndarray  # (E, 2)
    seed: int
    pre_event_states: Optional[np.ndarray] = None  # (E, hosts, dim)
    post_event_states: Optional[np.ndarray] = None

    @property
    def event_count(self) -> int:
        return len(self.event_times)

    @property
    def events(self) -> list:
        return [(float(t), int(i), int(j)) for t, (i, j) in zip(self.event_times, self.event_pairs)]

    def write_csv(self, path) -> None:
        write_trajectory_csv(path, self.sample_times, self.states)

    def write_events_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("time,i,j\n")
            for t, (i, j) in zip(self.event_times, self.event_pairs):
                fh.write(f"{_fmt(t)},{int(i)},{int(j)}\n")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_trajectory_csv(path, times, states) -> None:
    """Long format ``time,host,dim,value`` with 17 significant digits."""
    states = np.asarray(states)
    lines = ["time,host,dim,value\n"]
    for k, t in enumerate(times):
        ts = _fmt(t)
        for h in range(states.shape[1]):
            for d in range(states.shape[2]):
                lines.append(f"{ts},{h},{d},{_fmt(states[k, h, d])}\n")
    with open(path, "w", newline="") as fh:
        fh.writelines(lines)


def read_trajectory_csv(path):
    """Inverse of :func:`write_trajectory_csv`; returns ``(times, states)``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    times = sorted({float(r["time"]) for r in rows})
    hosts = max(int(r["host"]) for r in rows) + 1
    dims = max(int(r["dim"]) for r in rows) + 1
    index = {t: k for k, t in enumerate(times)}
    states = np.empty((len(times), hosts, dims))
    for r in rows:
        states[index[float(r["time"])], int(r["host"]), int(r["dim"])] = float(r["value"])
    return np.array(times), states


def sample_waiting_time(rng, lambda_tot: float) -> float:
    """Exponential waiting time by inversion, ``-ln(u) / lambda_tot`` with u in (0, 1]."""
    if not lambda_tot > 0:
        raise ZeroTotalRate("no events without a positive total rate")
    return -math.log(1.0 - rng.random()) / lambda_tot


def waiting_time_from_uniform(u: float, lambda_tot: float) -> float:
    if not lambda_tot > 0:
        raise ZeroTotalRate("no events without a positive total rate")
    return -math.log(u) / lambda_tot


def _cdf(rates) -> tuple:
    """Edges in canonical order and their cumulative probabilities."""
    items = sorted(rates.items())
    if not items:
        raise EmptyEdgeList("no edges to pick from")
    probs = np.array([p for _, p in items])
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ConfigInvalid(f"relative rates sum to {probs.sum()}, not 1")
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return [e for e, _ in items], cdf


def pick_pair_from_uniform(u: float, rates) -> tuple:
    edges, cdf = _cdf(rates)
    idx = min(int(np.searchsorted(cdf, u, side="right")), len(edges) - 1)
    return edges[idx]


def pick_pair(rng, rates) -> tuple:
    """Edge drawn with probability ``l_ij`` by inverting the cumulative sum."""
    return pick_pair_from_uniform(rng.random(), rates)


def _event_capacity(lam_tot: float, horizon: float) -> int:
    mean = lam_tot * horizon
    return int(mean + 10.0 * math.sqrt(mean) + 64)


def _run(cfg: SimConfig, rng, schedule=None) -> Trajectory:
    net = cfg.network
    dyn = cfg.host_dynamics
    kern, fld, params = host_kernels(dyn)
    lam_tot = total_rate(net)
    times = cfg.sample_times
    bound = cfg.domain_bound
    if isinstance(cfg.initial, BasinInit):
        y0 = cfg.initial.draw(rng)
    else:
        y0 = np.array(cfg.initial, dtype=np.float64)
    n_hosts, dim = y0.shape
    pair_i = np.ascontiguousarray(net.pairs[:, 0]) if net.edge_count else np.zeros(0, np.int64)
    pair_j = np.ascontiguousarray(net.pairs[:, 1]) if net.edge_count else np.zeros(0, np.int64)
    if lam_tot > 0:
        _, cdf = _cdf(relative_rates(net))
    else:
        cdf = np.zeros(0)
    if schedule is not None:
        sched_t, sched_i, sched_j = schedule
        use_schedule = True
        capacity = len(sched_t) + 1
    else:
        sched_t = np.zeros(0)
        sched_i = sched_j = np.zeros(0, np.int64)
        use_schedule = False
        capacity = _event_capacity(lam_tot, cfg.horizon)
    ic = cfg.integrator
    state = rng.bit_generator.state
    while True:
        y = np.ascontiguousarray(y0.copy())
        states = np.empty((len(times), n_hosts, dim))
        ev_t = np.empty(capacity)
        ev_i = np.empty(capacity, np.int64)
        ev_j = np.empty(capacity, np.int64)
        rec = capacity if cfg.record_event_states else 0
        pre = np.empty((rec, n_hosts, dim))
        post = np.empty((rec, n_hosts, dim))
        status, n_ev = kern.simulate(fld, params, y, cdf, pair_i, pair_j, lam_tot, cfg.exchange.gamma,
                                     times, cfg.horizon, rng, sched_t, sched_i, sched_j, use_schedule,
                                     ic.rel_tol, ic.abs_tol, ic.max_step, bound,
                                     states, ev_t, ev_i, ev_j, pre, post)
        if status == integrate.EVENT_OVERFLOW:
            capacity *= 2
            rng.bit_generator.state = state
            continue
        check_status(status, "simulate")
        break
    traj = Trajectory(
        sample_times=times,
        states=states,
        event_times=ev_t[:n_ev].copy(),
        event_pairs=np.stack([ev_i[:n_ev], ev_j[:n_ev]], axis=1),
        seed=cfg.seed,
    )
    if cfg.record_event_states:
        traj.pre_event_states = pre[:n_ev].copy()
        traj.post_event_states = post[:n_ev].copy()
    return traj


def simulate(cfg: SimConfig) -> Trajectory:
    """One stochastic trajectory; identical seeds give bit-identical results."""
    return _run(cfg, generator(cfg.seed))


def simulate_with_schedule(cfg: SimConfig, events) -> Trajectory:
    """Replay a fixed list of ``(time, i, j)`` events instead of drawing them."""
    times, pi, pj = [], [], []
    last = -math.inf
    for t, i, j in events:
        t = float(t)
        if not t > last:
            raise UnsortedEvents("event times must be strictly increasing")
        if not 0.0 <= t <= cfg.horizon:
            raise UnsortedEvents(f"event at {t} outside [0, {cfg.horizon}]")
        if cfg.network.edge_index(i, j) < 0:
            raise UnknownEdge(f"no edge between hosts {i} and {j}")
        last = t
        times.append(t)
        pi.append(min(i, j))
        pj.append(max(i, j))
    schedule = (np.array(times, dtype=np.float64), np.array(pi, dtype=np.int64), np.array(pj, dtype=np.int64))
    return _run(cfg, generator(cfg.seed), schedule)


def pure_flow_states(cfg: SimConfig, initial=None) -> np.ndarray:
    """Sampled states with no interactions at all (the edgeless reference)."""
    dyn = cfg.host_dynamics
    kern, fld, params = host_kernels(dyn)
    y = np.array(cfg.initial if initial is None else initial, dtype=np.float64)
    out = np.empty((cfg.samples,) + y.shape)
    ic = cfg.integrator
    status = kern.flow_on_grid(fld, params, y, cfg.sample_times, out, ic.rel_tol, ic.abs_tol, ic.max_step,
                               cfg.domain_bound)
    check_status(status, "pure flow")
    return out
