"""Interaction networks, exchange parameters and the pairwise exchange map."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateEdge,
    IndexOutOfRange,
    NonPositiveRate,
    SelfLoop,
    ZeroTotalRate,
    ConfigError,
)

DEFAULT_DOMAIN_BOUND = 13.0

# Ten hosts, 25 unit-rate edges. Stands in for the example network used in the
# numerical experiments (the published edge list is only available as a drawing).
TEN_HOST_EDGES = (
    (0, 1), (0, 2), (0, 5), (0, 8),
    (1, 2), (1, 3), (1, 6),
    (2, 3), (2, 4), (2, 9),
    (3, 4), (3, 5), (3, 7),
    (4, 5), (4, 6), (4, 8),
    (5, 6), (5, 9),
    (6, 7), (6, 8),
    (7, 8), (7, 9),
    (8, 9),
    (1, 9), (0, 7),
)


@dataclass(frozen=True)
class InteractionNetwork:
    """Weighted undirected host graph.

    ``edges`` holds ``(i, j, rate)`` triples with ``i < j``, sorted, no
    duplicates and strictly positive rates.  Use :func:`build_network` to
    construct one from arbitrary input.
    """

    host_count: int
    edges: tuple = ()
    _pairs: np.ndarray = field(init=False, repr=False, compare=False)
    _rates: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pairs = np.array([(i, j) for i, j, _ in self.edges], dtype=np.int64).reshape(-1, 2)
        rates = np.array([r for _, _, r in self.edges], dtype=np.float64)
        object.__setattr__(self, "_pairs", pairs)
        object.__setattr__(self, "_rates", rates)

    @property
    def pairs(self) -> np.ndarray:
        return self._pairs

    @property
    def rates(self) -> np.ndarray:
        return self._rates

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def rate(self, i: int, j: int) -> float:
        if i > j:
            i, j = j, i
        for a, b, r in self.edges:
            if a == i and b == j:
                return r
        return 0.0

    def edge_index(self, i: int, j: int) -> int:
        """Position of edge {i, j} in canonical order, or -1 if absent."""
        if i > j:
            i, j = j, i
        for k, (a, b, _) in enumerate(self.edges):
            if a == i and b == j:
                return k
        return -1

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b, _ in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def scaled(self, factor: float) -> "InteractionNetwork":
        """Same topology and relative rates, every rate multiplied by ``factor``."""
        if not factor > 0:
            raise NonPositiveRate(f"rate scale must be positive, got {factor}")
        return InteractionNetwork(self.host_count, tuple((i, j, r * factor) for i, j, r in self.edges))

    def with_total_rate(self, lambda_tot: float) -> "InteractionNetwork":
        total = total_rate(self)
        if total == 0:
            raise ZeroTotalRate("cannot rescale an edgeless network")
        return self.scaled(lambda_tot / total)

    def to_dict(self) -> dict:
        return {"hosts": self.host_count, "edges": [[i, j, r] for i, j, r in self.edges]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "InteractionNetwork":
        try:
            hosts = data["hosts"]
            edges = data["edges"]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"network object needs 'hosts' and 'edges': {exc}") from None
        return build_network(hosts, [tuple(e) for e in edges])

    @classmethod
    def from_json(cls, text: str) -> "InteractionNetwork":
        return cls.from_dict(json.loads(text))


def build_network(host_count, weighted_edges) -> InteractionNetwork:
    if not isinstance(host_count, (int, np.integer)) or host_count < 1:
        raise IndexOutOfRange(f"host_count must be a positive integer, got {host_count!r}")
    seen = {}
    for edge in weighted_edges:
        if len(edge) != 3:
            raise ConfigError(f"edge must be (i, j, rate), got {edge!r}")
        i, j, rate = edge
        if int(i) != i or int(j) != j:
            raise IndexOutOfRange(f"host indices must be integers: {edge!r}")
        i, j = int(i), int(j)
        if not (0 <= i < host_count and 0 <= j < host_count):
            raise IndexOutOfRange(f"edge ({i}, {j}) outside 0..{host_count - 1}")
        if i == j:
            raise SelfLoop(f"self-loop at host {i}")
        rate = float(rate)
        if not math.isfinite(rate) or rate <= 0:
            raise NonPositiveRate(f"edge ({i}, {j}) has rate {rate}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DuplicateEdge(f"edge {key} given twice")
        seen[key] = rate
    edges = tuple((i, j, seen[(i, j)]) for i, j in sorted(seen))
    return InteractionNetwork(int(host_count), edges)


def ten_host_network(rate: float = 1.0) -> InteractionNetwork:
    return build_network(10, [(i, j, rate) for i, j in TEN_HOST_EDGES])


def pair_network(rate: float = 1.0) -> InteractionNetwork:
    return build_network(2, [(0, 1, rate)])


def total_rate(network: InteractionNetwork) -> float:
    return math.fsum(r for _, _, r in network.edges)


def relative_rates(network: InteractionNetwork) -> dict:
    """Map ``(i, j) -> lambda_ij / lambda_tot`` over stored edges.

    Pairs without an edge are absent from the map (their probability is 0).
    """
    total = total_rate(network)
    if total <= 0:
        raise ZeroTotalRate("relative rates undefined for an edgeless network")
    return {(i, j): r / total for i, j, r in network.edges}


@dataclass(frozen=True)
class ExchangeParams:
    gamma: float

    def __post_init__(self):
        g = float(self.gamma)
        if not (math.isfinite(g) and 0.0 <= g <= 0.5):
            raise ConfigError(f"gamma must lie in [0, 0.5], got {self.gamma}")
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True)
class SystemState:
    """Abundance vectors of every host at one instant."""

    time: float
    abundances: np.ndarray
    domain_bound: float = DEFAULT_DOMAIN_BOUND

    def __post_init__(self):
        arr = np.array(self.abundances, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionMismatch("abundances must be a (hosts, species) array")
        if self.time < 0:
            raise ConfigError("time must be nonnegative")
        if np.any(arr < 0) or np.any(arr > self.domain_bound):
            raise ConfigError(f"abundances must lie in [0, {self.domain_bound}]")
        arr.setflags(write=False)
        object.__setattr__(self, "abundances", arr)


def apply_exchange(x, y, params):
    """Symmetric exchange of a proportion gamma between two abundance vectors."""
    gamma = params.gamma if isinstance(params, ExchangeParams) else float(params)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"cannot exchange vectors of shapes {x.shape} and {y.shape}")
    keep = 1.0 - gamma
    return keep * x + gamma * y, keep * y + gamma * x
