"""Low-frequency approximation: basin-level jump dynamics between attractors.

At low interaction frequency every host sits at a stable equilibrium when the
next interaction happens, so an interaction on edge (i, j) only moves the
pair of basin labels ``(a, b) -> (a', b')``.  That deterministic pair map is
the whole pairwise operator; the basin probability tensor then evolves as
``dPsi/dt* = Phi Psi - Psi`` in frequency-scaled time ``t* = lambda_tot t``.

Basin labels are 1-based in the public API and in files, 0-based in arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .dynamics import LocalDynamics, UNRESOLVED, classify_points
from .errors import (
    ConfigInvalid,
    GammaOnBoundary,
    MissingEdgeMap,
    NegativeProbability,
    ShapeMismatch,
    TensorTooLarge,
    UnresolvedClassification,
)
from .integrate import IntegratorConfig, solve_segments
from .network import InteractionNetwork, relative_rates

BOUNDARY_WIDTH = 1e-6
DEFAULT_GAMMA_RESOLUTION = 0.005
TENSOR_CAP = 2 ** 20
DIVISION_GUARD = 1e-12
NEGATIVE_LIMIT = 1e-6
RENORMALIZE_DRIFT = 1e-12

# The probability ODEs are linear and cheap, so they run tighter than host flows.
LFA_INTEGRATOR = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12, max_step=0.25)


# --------------------------------------------------------------------------
# boundary sets and transition maps


def _post_exchange_points(att_i, att_j, gamma):
    """Host-i and host-j points after exchanging from every attractor pair."""
    a = att_i[:, None, :]
    b = att_j[None, :, :]
    pi = (1.0 - gamma) * a + gamma * b
    pj = (1.0 - gamma) * b + gamma * a
    return pi.reshape(-1, att_i.shape[1]), pj.reshape(-1, att_i.shape[1])


def _pair_labels(gamma, dyn_i, dyn_j, att_i, att_j, cfg):
    pi, pj = _post_exchange_points(att_i, att_j, gamma)
    li = classify_points(dyn_i, np.clip(pi, 0.0, dyn_i.domain_bound), att_i, cfg)
    lj = classify_points(dyn_j, np.clip(pj, 0.0, dyn_j.domain_bound), att_j, cfg)
    return np.concatenate([li, lj])


def _merge(intervals, gap=0.0):
    merged = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1] + gap:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def boundary_set(dyn_i: LocalDynamics, dyn_j: LocalDynamics, attractors_i, attractors_j,
                 gamma_resolution: float = DEFAULT_GAMMA_RESOLUTION,
                 cfg: IntegratorConfig = IntegratorConfig()) -> list:
    """Intervals of interaction strengths where some exchange lands on a separatrix.

    Scans gamma over [0, 0.5], then bisects every change of any post-exchange
    label down to a quarter of the reported width, so merged brackets of one
    boundary stay within ``BOUNDARY_WIDTH``.  An unresolved classification
    inside a bracket splits it in two; the pieces are merged back, so
    unresolved regions widen the reported interval instead of hiding a
    boundary.
    """
    if not gamma_resolution > 0:
        raise ConfigInvalid("gamma_resolution must be positive")
    att_i = np.asarray(attractors_i, dtype=np.float64)
    att_j = np.asarray(attractors_j, dtype=np.float64)
    if len(att_i) == 0 or len(att_j) == 0:
        raise ConfigInvalid("attractor lists must be nonempty")
    steps = max(1, int(math.ceil(0.5 / gamma_resolution - 1e-9)))
    grid = np.linspace(0.0, 0.5, steps + 1)
    cache = {}

    def labels(g):
        if g not in cache:
            cache[g] = _pair_labels(g, dyn_i, dyn_j, att_i, att_j, cfg)
        return cache[g]

    found = []

    def bisect(lo, hi, slot):
        a, b = labels(lo)[slot], labels(hi)[slot]
        while hi - lo > 0.25 * BOUNDARY_WIDTH:
            mid = 0.5 * (lo + hi)
            m = labels(mid)[slot]
            if m == a and a != UNRESOLVED:
                lo = mid
            elif m == b and b != UNRESOLVED:
                hi = mid
            else:
                if m != a:
                    bisect(lo, mid, slot)
                if m != b:
                    bisect(mid, hi, slot)
                return
        found.append((lo, hi))

    for lo, hi in zip(grid[:-1], grid[1:]):
        changed = np.nonzero(labels(lo) != labels(hi))[0]
        for slot in changed:
            bisect(float(lo), float(hi), int(slot))
    for g in grid:
        for slot in np.nonzero(labels(g) == UNRESOLVED)[0]:
            # an unresolved grid point with resolved neighbours on both sides
            found.append((max(0.0, g - 0.125 * BOUNDARY_WIDTH), min(0.5, g + 0.125 * BOUNDARY_WIDTH)))
    return [(float(lo), float(hi)) for lo, hi in _merge(found, gap=0.25 * BOUNDARY_WIDTH)]


def gamma_in_boundary(gamma: float, intervals) -> bool:
    return any(lo <= gamma <= hi for lo, hi in intervals)


def network_boundary_sets(network: InteractionNetwork, dynamics: Sequence[LocalDynamics], attractors,
                          gamma_resolution: float = DEFAULT_GAMMA_RESOLUTION,
                          cfg: IntegratorConfig = IntegratorConfig()) -> dict:
    """Boundary intervals for every host pair; non-adjacent pairs get an empty list."""
    cache = {}
    out = {}
    n = network.host_count
    for i in range(n):
        for j in range(i + 1, n):
            if network.edge_index(i, j) < 0:
                out[(i, j)] = []
                continue
            key = (id(dynamics[i]), id(dynamics[j]))
            if key not in cache:
                cache[key] = boundary_set(dynamics[i], dynamics[j], attractors[i], attractors[j],
                                          gamma_resolution, cfg)
            out[(i, j)] = cache[key]
    return out


@dataclass(frozen=True, eq=False)
class BasinTransitionMap:
    """Where an interaction on ``edge`` sends each pair of basin labels.

    ``out_i[a, b]`` and ``out_j[a, b]`` are the 0-based new labels of hosts i
    and j when they start in (0-based) basins a and b.
    """

    edge: tuple
    out_i: np.ndarray
    out_j: np.ndarray

    def __post_init__(self):
        out_i = np.asarray(self.out_i, dtype=np.int64)
        out_j = np.asarray(self.out_j, dtype=np.int64)
        if out_i.ndim != 2 or out_i.shape != out_j.shape:
            raise ShapeMismatch("transition tables must be equal-shaped matrices")
        mi, mj = out_i.shape
        if out_i.min() < 0 or out_i.max() >= mi or out_j.min() < 0 or out_j.max() >= mj:
            raise ConfigInvalid("transition map output outside the basin range")
        out_i.setflags(write=False)
        out_j.setflags(write=False)
        object.__setattr__(self, "edge", (int(self.edge[0]), int(self.edge[1])))
        object.__setattr__(self, "out_i", out_i)
        object.__setattr__(self, "out_j", out_j)

    def __eq__(self, other):
        if not isinstance(other, BasinTransitionMap):
            return NotImplemented
        return (self.edge == other.edge and np.array_equal(self.out_i, other.out_i)
                and np.array_equal(self.out_j, other.out_j))

    def __hash__(self):
        return hash((self.edge, self.out_i.tobytes(), self.out_j.tobytes()))

    @property
    def shape(self) -> tuple:
        return self.out_i.shape

    def __getitem__(self, labels):
        """1-based ``(a, b) -> (a', b')``."""
        a, b = labels
        return int(self.out_i[a - 1, b - 1]) + 1, int(self.out_j[a - 1, b - 1]) + 1

    def entries(self) -> list:
        mi, mj = self.shape
        return [(a, b) + self[a, b] for a in range(1, mi + 1) for b in range(1, mj + 1)]

    def is_identity(self) -> bool:
        mi, mj = self.shape
        return bool(np.all(self.out_i == np.arange(mi)[:, None]) and np.all(self.out_j == np.arange(mj)[None, :]))

    def flat_targets(self) -> np.ndarray:
        """Row-major destination index of every row-major source index."""
        return (self.out_i * self.shape[1] + self.out_j).reshape(-1)

    def push_forward(self, pair_probs) -> np.ndarray:
        """Joint distribution of the two labels after one interaction."""
        pair_probs = np.asarray(pair_probs, dtype=np.float64)
        out = np.zeros(pair_probs.size)
        np.add.at(out, self.flat_targets(), pair_probs.reshape(-1))
        return out.reshape(self.shape)

    def with_edge(self, edge) -> "BasinTransitionMap":
        return BasinTransitionMap(tuple(edge), self.out_i, self.out_j)

    def to_dict(self) -> dict:
        return {"edge": list(self.edge), "map": [list(e) for e in self.entries()]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data) -> "BasinTransitionMap":
        rows = np.asarray(data["map"], dtype=np.int64)
        mi, mj = rows[:, 0].max(), rows[:, 1].max()
        out_i = np.full((mi, mj), -1, dtype=np.int64)
        out_j = np.full((mi, mj), -1, dtype=np.int64)
        for a, b, a2, b2 in rows:
            out_i[a - 1, b - 1] = a2 - 1
            out_j[a - 1, b - 1] = b2 - 1
        if np.any(out_i < 0):
            raise ConfigInvalid("transition map is not total")
        return cls(tuple(data["edge"]), out_i, out_j)

    @classmethod
    def identity(cls, edge, m_i: int, m_j: int) -> "BasinTransitionMap":
        return cls(edge, np.repeat(np.arange(m_i)[:, None], m_j, axis=1),
                   np.repeat(np.arange(m_j)[None, :], m_i, axis=0))


def transition_map(gamma: float, dyn_i: LocalDynamics, dyn_j: LocalDynamics, attractors_i, attractors_j,
                   cfg: IntegratorConfig = IntegratorConfig(), edge=(0, 1), boundary=None) -> BasinTransitionMap:
    """Classify both post-exchange points of every attractor pair.

    ``boundary`` is the pair's boundary set if already known.  Without it the
    map is also built at ``gamma +- BOUNDARY_WIDTH``; any disagreement means
    gamma sits on a separatrix crossing.
    """
    gamma = float(gamma)
    att_i = np.asarray(attractors_i, dtype=np.float64)
    att_j = np.asarray(attractors_j, dtype=np.float64)
    if boundary is not None and gamma_in_boundary(gamma, boundary):
        raise GammaOnBoundary(gamma, boundary)
    labels = _pair_labels(gamma, dyn_i, dyn_j, att_i, att_j, cfg)
    if boundary is None:
        for probe in (gamma - BOUNDARY_WIDTH, gamma + BOUNDARY_WIDTH):
            if 0.0 <= probe <= 0.5 and not np.array_equal(_pair_labels(probe, dyn_i, dyn_j, att_i, att_j, cfg), labels):
                raise GammaOnBoundary(gamma, [(gamma - BOUNDARY_WIDTH, gamma + BOUNDARY_WIDTH)])
    if np.any(labels == UNRESOLVED):
        raise UnresolvedClassification(f"post-exchange point unresolved at gamma={gamma}")
    mi, mj = len(att_i), len(att_j)
    half = mi * mj
    return BasinTransitionMap(edge, (labels[:half] - 1).reshape(mi, mj), (labels[half:] - 1).reshape(mi, mj))


def network_transition_maps(network: InteractionNetwork, dynamics: Sequence[LocalDynamics], attractors,
                            gamma: float, cfg: IntegratorConfig = IntegratorConfig(), boundaries=None) -> dict:
    """One map per edge, computed once per distinct pair of dynamics."""
    cache = {}
    maps = {}
    for i, j, _ in network.edges:
        key = (id(dynamics[i]), id(dynamics[j]))
        if key not in cache:
            bset = None if boundaries is None else boundaries.get((i, j))
            cache[key] = transition_map(gamma, dynamics[i], dynamics[j], attractors[i], attractors[j], cfg,
                                        boundary=bset)
        maps[(i, j)] = cache[key].with_edge((i, j))
    return maps


# --------------------------------------------------------------------------
# full tensor


@dataclass(frozen=True)
class BasinProbabilityTensor:
    """Joint basin distribution of all hosts, one axis per host."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if np.any(vals < -NEGATIVE_LIMIT):
            raise NegativeProbability("tensor entry below -1e-6")
        vals[vals < 0] = 0.0
        if abs(vals.sum() - 1.0) > 1e-9:
            raise ConfigInvalid(f"tensor entries sum to {vals.sum()}, not 1")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dims(self) -> tuple:
        return self.values.shape


def _values(psi) -> np.ndarray:
    return psi.values if isinstance(psi, BasinProbabilityTensor) else np.asarray(psi, dtype=np.float64)


def tensor_from_independent_singles(singles) -> BasinProbabilityTensor:
    out = np.ones(())
    for s in singles:
        out = np.multiply.outer(out, np.asarray(s, dtype=np.float64))
    return BasinProbabilityTensor(out)


def marginals(psi) -> list:
    vals = _values(psi)
    axes = range(vals.ndim)
    return [vals.sum(axis=tuple(a for a in axes if a != k)) for k in axes]


def _check_maps(maps, rates):
    for edge, weight in rates.items():
        if weight > 0 and edge not in maps:
            raise MissingEdgeMap(f"no transition map for edge {edge}")


def _push_axes(vals, m, i, j):
    """Push the tensor forward through map ``m`` acting on axes i and j."""
    moved = np.moveaxis(vals, (i, j), (0, 1))
    shape = moved.shape
    flat = moved.reshape(shape[0] * shape[1], -1)
    out = np.zeros_like(flat)
    np.add.at(out, m.flat_targets(), flat)
    return np.moveaxis(out.reshape(shape), (0, 1), (i, j))


def _total_operator(vals, maps, rates):
    out = np.zeros_like(vals)
    for edge in sorted(rates):
        weight = rates[edge]
        if weight > 0:
            out += weight * _push_axes(vals, maps[edge], edge[0], edge[1])
    return out


def apply_total_operator(psi, maps: Mapping, rates: Mapping) -> np.ndarray:
    """Mix of per-edge push-forwards weighted by relative rates ``l_ij``."""
    _check_maps(maps, rates)
    return _total_operator(_values(psi), maps, rates)


def _probability_guard(y):
    if np.any(y < -NEGATIVE_LIMIT):
        raise NegativeProbability(f"probability fell to {y.min():.3g}")
    y = np.maximum(y, 0.0)
    total = y.sum()
    if abs(total - 1.0) > RENORMALIZE_DRIFT:
        y = y / total
    return y


def evolve_lfa_full(psi0, maps: Mapping, rates: Mapping, t_star_grid,
                    cfg: IntegratorConfig = LFA_INTEGRATOR, cap: int = TENSOR_CAP) -> np.ndarray:
    """Tensor trajectory of ``dPsi/dt* = Phi Psi - Psi`` sampled on ``t_star_grid``."""
    vals = _values(psi0)
    if vals.size > cap:
        raise TensorTooLarge(f"tensor with {vals.size} entries exceeds cap {cap}")
    _check_maps(maps, rates)
    grid = np.asarray(t_star_grid, dtype=np.float64)
    return solve_segments(lambda y: _total_operator(y, maps, rates) - y, vals, grid, cfg,
                          between=_probability_guard)


def full_tensor_marginals(traj) -> list:
    """Per-host marginals ``(K, m_i)`` of a tensor trajectory ``(K, m_1, ..., m_H)``."""
    hosts = traj.ndim - 1
    return [traj.sum(axis=tuple(a + 1 for a in range(hosts) if a != k)) for k in range(hosts)]


# --------------------------------------------------------------------------
# pair approximation


@dataclass
class PairState:
    """Single-host and per-edge joint basin probabilities."""

    singles: list
    pairs: dict

    def __post_init__(self):
        self.singles = [np.asarray(s, dtype=np.float64) for s in self.singles]
        self.pairs = {tuple(k): np.asarray(v, dtype=np.float64) for k, v in self.pairs.items()}
        for s in self.singles:
            if abs(s.sum() - 1.0) > 1e-9:
                raise ConfigInvalid("single-host probabilities must sum to 1")
        for (i, j), p in self.pairs.items():
            if p.shape != (len(self.singles[i]), len(self.singles[j])):
                raise ShapeMismatch(f"pair matrix for {(i, j)} has shape {p.shape}")
            if abs(p.sum() - 1.0) > 1e-9:
                raise ConfigInvalid(f"pair probabilities for {(i, j)} must sum to 1")

    @classmethod
    def independent(cls, singles, edges) -> "PairState":
        singles = [np.asarray(s, dtype=np.float64) for s in singles]
        return cls(singles, {(i, j): np.outer(singles[i], singles[j]) for i, j in edges})

    def marginal_gap(self) -> float:
        gap = 0.0
        for (i, j), p in self.pairs.items():
            gap = max(gap, np.max(np.abs(p.sum(axis=1) - self.singles[i])),
                      np.max(np.abs(p.sum(axis=0) - self.singles[j])))
        return float(gap)


@dataclass
class PairTrajectory:
    t_star: np.ndarray
    singles: list  # per host, (K, m_i)
    pairs: dict  # per edge, (K, m_i, m_j)

    def state(self, k: int) -> PairState:
        return PairState([s[k] for s in self.singles], {e: p[k] for e, p in self.pairs.items()})

    def write_csv(self, path) -> None:
        write_basin_probability_csv(path, self.t_star, self.singles)


def write_basin_probability_csv(path, t_star, singles) -> None:
    """Rows ``t_star,host,basin,probability`` with 1-based basins."""
    lines = ["t_star,host,basin,probability\n"]
    for k, t in enumerate(t_star):
        ts = format(float(t), ".17g")
        for h, s in enumerate(singles):
            for a in range(s.shape[1]):
                lines.append(f"{ts},{h},{a + 1},{format(float(s[k, a]), '.17g')}\n")
    with open(path, "w", newline="") as fh:
        fh.writelines(lines)


def _conditional_moves(pair, single, out, host_axis):
    """Matrix ``Q[d, a]``: chance that host moves d -> a when interacting on this edge.

    Conditioned on the host being in basin d, using the closure
    ``psi_ijk ~ psi_ij psi_ik / psi_i``.  Rows with negligible mass are zero.
    """
    if host_axis == 1:
        pair = pair.T
        out = out.T
    m = pair.shape[0]
    safe = np.where(single < DIVISION_GUARD, np.inf, single)
    q = np.zeros((m, m))
    rows = np.broadcast_to(np.arange(m)[:, None], out.shape)
    np.add.at(q, (rows, out), pair / safe[:, None])
    return q


def _stacked_rhs(edges, maps, rates, n_hosts, m):
    """All-edges-at-once right-hand side for hosts sharing a basin count ``m``.

    Same equations as the per-edge loop in :func:`evolve_lfa_pair`, written
    with one-hot transition tensors so each evaluation is a handful of
    einsums instead of a Python loop over edges.
    """
    n_edges = len(edges)
    ei = np.array([e[0] for e in edges])
    ej = np.array([e[1] for e in edges])
    w = np.array([rates[e] for e in edges])
    eye = np.eye(m)
    # push[e, src, dst] = 1 when flat pair state src goes to dst
    push = np.stack([np.eye(m * m)[maps[e].flat_targets()] for e in edges])
    # hop_i[e, d, f, a] = 1 when host i moves d -> a against partner basin f
    hop_i = np.stack([eye[maps[e].out_i] for e in edges])
    # hop_j[e, f, d, a] = 1 when host j moves d -> a against partner basin f
    hop_j = np.stack([eye[maps[e].out_j] for e in edges])
    off = 1.0 - eye

    def rhs(y):
        singles = y[:n_hosts * m].reshape(n_hosts, m)
        pairs = y[n_hosts * m:].reshape(n_edges, m, m)
        pushed = np.einsum("es,esd->ed", pairs.reshape(n_edges, -1), push).reshape(n_edges, m, m)
        inv_i = np.where(singles[ei] < DIVISION_GUARD, 0.0, 1.0 / np.maximum(singles[ei], DIVISION_GUARD))
        inv_j = np.where(singles[ej] < DIVISION_GUARD, 0.0, 1.0 / np.maximum(singles[ej], DIVISION_GUARD))
        moves_i = np.einsum("edf,edfa->eda", pairs, hop_i) * inv_i[:, :, None] * off * w[:, None, None]
        moves_j = np.einsum("efd,efda->eda", pairs, hop_j) * inv_j[:, :, None] * off * w[:, None, None]
        totals = np.zeros((n_hosts, m, m))
        np.add.at(totals, ei, moves_i)
        np.add.at(totals, ej, moves_j)
        qi = totals[ei] - moves_i
        qj = totals[ej] - moves_j
        dpairs = (w[:, None, None] * (pushed - pairs)
                  + np.einsum("eda,edb->eab", qi, pairs) - qi.sum(axis=2)[:, :, None] * pairs
                  + np.einsum("ead,edb->eab", pairs, qj) - pairs * qj.sum(axis=2)[:, None, :])
        dsingles = np.zeros((n_hosts, m))
        np.add.at(dsingles, ei, w[:, None] * (pushed.sum(axis=2) - singles[ei]))
        np.add.at(dsingles, ej, w[:, None] * (pushed.sum(axis=1) - singles[ej]))
        return np.concatenate([dsingles.reshape(-1), dpairs.reshape(-1)])

    return rhs


def evolve_lfa_pair(init: PairState, maps: Mapping, rates: Mapping, t_star_grid,
                    cfg: IntegratorConfig = LFA_INTEGRATOR, stacked: Optional[bool] = None) -> PairTrajectory:
    """Integrate the closed single/pair system on ``t_star_grid``.

    Only edges with positive relative rate take part.  Each pair matrix gets
    the exact in-edge push-forward term plus, for every other edge at either
    end, the moves of that end host predicted by the closure.  ``stacked``
    selects the vectorised evaluation (default: whenever all hosts have the
    same number of basins).
    """
    _check_maps(maps, rates)
    edges = sorted(e for e, w in rates.items() if w > 0)
    missing = [e for e in edges if e not in init.pairs]
    if missing:
        raise ConfigInvalid(f"initial pair state lacks edges {missing}")
    if init.marginal_gap() > 1e-6:
        raise ConfigInvalid("initial pair state is not marginal-consistent")
    sizes = [len(s) for s in init.singles]
    offsets = np.cumsum([0] + sizes + [sizes[i] * sizes[j] for i, j in edges])
    n_single = len(sizes)
    incident = {h: [] for h in range(n_single)}
    for e in edges:
        incident[e[0]].append(e)
        incident[e[1]].append(e)

    def unpack(y):
        singles = [y[offsets[h]:offsets[h + 1]] for h in range(n_single)]
        pairs = {}
        for k, (i, j) in enumerate(edges):
            lo, hi = offsets[n_single + k], offsets[n_single + k + 1]
            pairs[(i, j)] = y[lo:hi].reshape(sizes[i], sizes[j])
        return singles, pairs

    def rhs(y):
        singles, pairs = unpack(y)
        dy = np.zeros_like(y)
        dsingles, dpairs = unpack(dy)
        pushed = {e: maps[e].push_forward(pairs[e]) for e in edges}
        # off-diagonal move matrices of each end host on each edge, rate-weighted
        moves = {}
        for e in edges:
            for side in (0, 1):
                host = e[side]
                out = maps[e].out_i if side == 0 else maps[e].out_j
                q = _conditional_moves(pairs[e], singles[host], out, side)
                np.fill_diagonal(q, 0.0)
                moves[(e, host)] = rates[e] * q
        totals = {}
        for h in range(n_single):
            m = sizes[h]
            acc = np.zeros((m, m))
            for e in incident[h]:
                acc += moves[(e, h)]
            totals[h] = acc
        for e in edges:
            i, j = e
            w = rates[e]
            dsingles[i] += w * (pushed[e].sum(axis=1) - singles[i])
            dsingles[j] += w * (pushed[e].sum(axis=0) - singles[j])
            p = pairs[e]
            qi = totals[i] - moves[(e, i)]
            qj = totals[j] - moves[(e, j)]
            dpairs[e][...] = (w * (pushed[e] - p)
                              + qi.T @ p - qi.sum(axis=1)[:, None] * p
                              + p @ qj - p * qj.sum(axis=1)[None, :])
        return dy

    def guard(y):
        if np.any(y < -NEGATIVE_LIMIT):
            raise NegativeProbability(f"probability fell to {y.min():.3g}")
        y = np.maximum(y, 0.0)
        for lo, hi in zip(offsets[:-1], offsets[1:]):
            total = y[lo:hi].sum()
            if abs(total - 1.0) > RENORMALIZE_DRIFT:
                y[lo:hi] /= total
        return y

    if stacked is None:
        stacked = len(set(sizes)) == 1 and len(edges) > 0
    if stacked:
        rhs = _stacked_rhs(edges, maps, rates, n_single, sizes[0])
    y0 = np.concatenate([s for s in init.singles] + [init.pairs[e].reshape(-1) for e in edges])
    grid = np.asarray(t_star_grid, dtype=np.float64)
    traj = solve_segments(rhs, y0, grid, cfg, between=guard)
    singles = [traj[:, offsets[h]:offsets[h + 1]] for h in range(n_single)]
    pairs = {e: traj[:, offsets[n_single + k]:offsets[n_single + k + 1]].reshape(-1, sizes[e[0]], sizes[e[1]])
             for k, e in enumerate(edges)}
    return PairTrajectory(grid, singles, pairs)


def lfa_rates(network: InteractionNetwork) -> dict:
    return relative_rates(network)
