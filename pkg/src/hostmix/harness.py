"""Seeded Monte Carlo ensembles and their comparison with the approximations."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import __version__
from .dynamics import LocalDynamics, UNRESOLVED, classify_points, find_attractors
from .errors import (
    BadQuantiles,
    ConfigInvalid,
    GammaOnBoundary,
    HostmixError,
    ShapeMismatch,
    ZeroTotalRate,
)
from .hfa import HfcsaSystem, HflsaSystem, broadcast_hosts, evolve_hfcsa, evolve_hflsa, mean_abundance
from .integrate import IntegratorConfig
from .lfa import (
    PairState,
    evolve_lfa_full,
    evolve_lfa_pair,
    full_tensor_marginals,
    gamma_in_boundary,
    network_boundary_sets,
    network_transition_maps,
    tensor_from_independent_singles,
)
from .network import ExchangeParams, InteractionNetwork, SystemState, relative_rates, total_rate
from .rng import derive_seed, generator
from .simulate import BasinInit, SimConfig, simulate

COMPARATORS = ("lfa-pair", "lfa-full", "hflsa", "hfcsa")
UNRESOLVED_FLAG = 0.01
# stream index reserved for drawing random initial basin distributions
DIRICHLET_STREAM = 2 ** 62


# --------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleResult:
    """Per-run sampled states of ``runs`` trajectories (failed runs excluded)."""

    base_seed: int
    seeds: list
    sample_times: np.ndarray
    states: np.ndarray  # (runs_ok, K, hosts, dim)
    event_counts: np.ndarray
    failures: list = field(default_factory=list)  # (run index, message)

    @property
    def run_count(self) -> int:
        return len(self.seeds)

    def summary(self, config_hash: Optional[str] = None) -> dict:
        return {
            "version": __version__,
            "base_seed": self.base_seed,
            "runs": self.run_count,
            "seeds": [str(s) for s in self.seeds],
            "config_hash": config_hash,
            "failed_runs": [{"run": k, "error": msg} for k, msg in self.failures],
            "mean_events": float(np.mean(self.event_counts)) if len(self.event_counts) else 0.0,
        }


def _pool_map(func, items, threads):
    if threads <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def run_ensemble(cfg: SimConfig, runs: int, base_seed: Optional[int] = None, threads: int = 1) -> EnsembleResult:
    """``runs`` independent trajectories; run k uses ``derive_seed(base_seed, k)``.

    Results land in slots indexed by run, so the outcome does not depend on
    the number of threads or on completion order.  A failing run is recorded;
    only if every run fails is the first error raised.
    """
    if runs < 1:
        raise ConfigInvalid("runs must be at least 1")
    base = cfg.seed if base_seed is None else int(base_seed)
    seeds = [derive_seed(base, k) for k in range(runs)]

    def one(k):
        try:
            return simulate(cfg.with_seed(seeds[k]))
        except HostmixError as exc:
            return exc

    results = _pool_map(one, range(runs), threads)
    ok = [r for r in results if not isinstance(r, Exception)]
    failures = [(k, f"{type(r).__name__}: {r}") for k, r in enumerate(results) if isinstance(r, Exception)]
    if not ok:
        raise results[0]
    return EnsembleResult(
        base_seed=base,
        seeds=seeds,
        sample_times=cfg.sample_times,
        states=np.stack([r.states for r in ok]),
        event_counts=np.array([r.event_count for r in ok]),
        failures=failures,
    )


# --------------------------------------------------------------------------
# statistics


@dataclass
class BasinFractions:
    fractions: np.ndarray  # (K, hosts, m) over resolved runs
    raw: np.ndarray  # (K, hosts, m) over all runs
    unresolved: np.ndarray  # (K, hosts)

    @property
    def flagged(self) -> bool:
        return bool(np.any(self.unresolved > UNRESOLVED_FLAG))


def _host_list(value, count):
    if isinstance(value, LocalDynamics):
        return [value] * count
    return list(value)


def _attractor_list(attractors, dynamics, cfg):
    if attractors is None:
        return [find_attractors(d, cfg=cfg) for d in dynamics]
    arr = attractors
    if isinstance(arr, np.ndarray) and arr.ndim == 2:
        return [arr] * len(dynamics)
    return [np.asarray(a, dtype=np.float64) for a in arr]


def empirical_basin_fractions(ens: EnsembleResult, dynamics, attractors=None,
                              cfg: IntegratorConfig = IntegratorConfig(), threads: int = 1) -> BasinFractions:
    """Share of runs whose host i is in basin a at each sample time."""
    runs, n_times, hosts, _ = ens.states.shape
    dyn = _host_list(dynamics, hosts)
    att = _attractor_list(attractors, dyn, cfg)
    m = max(len(a) for a in att)

    def labels_for(h):
        pts = ens.states[:, :, h, :].reshape(-1, ens.states.shape[3])
        return classify_points(dyn[h], pts, att[h], cfg).reshape(runs, n_times)

    labels = _pool_map(labels_for, range(hosts), threads)
    raw = np.zeros((n_times, hosts, m))
    unresolved = np.zeros((n_times, hosts))
    for h, lab in enumerate(labels):
        for a in range(1, len(att[h]) + 1):
            raw[:, h, a - 1] = np.count_nonzero(lab == a, axis=0) / runs
        unresolved[:, h] = np.count_nonzero(lab == UNRESOLVED, axis=0) / runs
    resolved = 1.0 - unresolved
    with np.errstate(invalid="ignore", divide="ignore"):
        fractions = np.where(resolved[:, :, None] > 0, raw / resolved[:, :, None], 0.0)
    return BasinFractions(fractions, raw, unresolved)


def lfa_error(sim_fractions, lfa_marginals, t_star_grid, t_star_end: float) -> float:
    """``(T*/K) sum_k sqrt(sum_i sum_a (psi_sim - psi_lfa)^2)`` over the K grid points."""
    sim = np.asarray(sim_fractions, dtype=np.float64)
    lfa = np.asarray(lfa_marginals, dtype=np.float64)
    grid = np.asarray(t_star_grid)
    if sim.shape != lfa.shape or sim.shape[0] != grid.shape[0]:
        raise ShapeMismatch(f"fractions {sim.shape}, marginals {lfa.shape}, grid {grid.shape}")
    per_time = np.sqrt(np.sum((sim - lfa).reshape(sim.shape[0], -1) ** 2, axis=1))
    return float(t_star_end / grid.shape[0] * math.fsum(per_time))


def hfa_error(ens, approx, t_grid, window_start: float = -math.inf) -> float:
    """Mean over runs and window times of the all-host Euclidean deviation.

    ``ens`` is an :class:`EnsembleResult` or an array ``(runs, K, hosts, dim)``;
    ``approx`` is ``(K, hosts, dim)`` or a mean-field ``(K, dim)``.  Only times
    ``>= window_start`` count; K in the normalisation is their number.
    """
    states = ens.states if isinstance(ens, EnsembleResult) else np.asarray(ens, dtype=np.float64)
    approx = np.asarray(approx, dtype=np.float64)
    grid = np.asarray(t_grid, dtype=np.float64)
    if states.ndim != 4:
        raise ShapeMismatch("ensemble states must be (runs, K, hosts, dim)")
    if approx.ndim == 2:
        approx = broadcast_hosts(approx, states.shape[2])
    if approx.shape != states.shape[1:] or grid.shape[0] != states.shape[1]:
        raise ShapeMismatch(f"approximation {approx.shape} vs ensemble {states.shape[1:]}, grid {grid.shape}")
    keep = grid >= window_start
    if not np.any(keep):
        raise ShapeMismatch("comparison window contains no sample times")
    diff = states[:, keep] - approx[None, keep]
    dist = np.sqrt(np.sum(diff.reshape(diff.shape[0], diff.shape[1], -1) ** 2, axis=2))
    return float(math.fsum(dist.ravel()) / (dist.shape[0] * dist.shape[1]))


def percentile_band(ens, q_lo: float = 5.0, q_hi: float = 95.0):
    """Per (time, host, dim) percentiles over runs, linear between order statistics."""
    if not (0.0 <= q_lo < q_hi <= 100.0):
        raise BadQuantiles(f"need 0 <= q_lo < q_hi <= 100, got {q_lo}, {q_hi}")
    states = ens.states if isinstance(ens, EnsembleResult) else np.asarray(ens, dtype=np.float64)
    lo, hi = np.percentile(states, [q_lo, q_hi], axis=0, method="linear")
    return lo, hi


def dirichlet_energy(state, network: InteractionNetwork) -> float:
    """``(1/2) sum over ordered pairs of l_ij |N_i - N_j|^2``, i.e. a sum over edges."""
    lam = total_rate(network)
    if lam <= 0:
        raise ZeroTotalRate("Dirichlet energy needs a positive total rate")
    x = state.abundances if isinstance(state, SystemState) else np.asarray(state, dtype=np.float64)
    return math.fsum((rate / lam) * float(np.dot(x[i] - x[j], x[i] - x[j])) for i, j, rate in network.edges)


def energy_change(before, after, network: InteractionNetwork) -> float:
    """``U(after) - U(before)`` summed term by term to avoid cancellation."""
    lam = total_rate(network)
    if lam <= 0:
        raise ZeroTotalRate("Dirichlet energy needs a positive total rate")
    b = np.asarray(before, dtype=np.float64)
    a = np.asarray(after, dtype=np.float64)
    terms = []
    for i, j, rate in network.edges:
        da, db = a[i] - a[j], b[i] - b[j]
        terms.append((rate / lam) * (float(np.dot(da, da)) - float(np.dot(db, db))))
    return math.fsum(terms)


def predicted_energy_change(before, i: int, j: int, gamma: float, network: InteractionNetwork) -> float:
    """``-4 gamma (1 - gamma) l_ij |N_i - N_j|^2`` for an interaction on edge (i, j)."""
    lam = total_rate(network)
    if lam <= 0:
        raise ZeroTotalRate("Dirichlet energy needs a positive total rate")
    d = np.asarray(before[i], dtype=np.float64) - np.asarray(before[j], dtype=np.float64)
    return -4.0 * gamma * (1.0 - gamma) * network.rate(i, j) / lam * float(np.dot(d, d))


@dataclass
class EnergyLedger:
    actual: np.ndarray  # full U(t+) - U(t-) per event
    predicted: np.ndarray  # -4 gamma (1 - gamma) l_ij |N_i - N_j|^2
    edge_term: np.ndarray  # change of the interacting edge's own term

    def relative_mismatch(self) -> np.ndarray:
        scale = np.maximum(np.abs(self.predicted), np.finfo(float).tiny)
        return np.abs(self.actual - self.predicted) / scale

    def matches(self, rel_tol: float = 1e-10, abs_tol: float = 1e-12) -> np.ndarray:
        """Per event: ``|actual - predicted| <= rel_tol |predicted| + abs_tol``.

        The absolute floor only matters once hosts have merged and both
        sides are rounding noise.
        """
        return np.abs(self.actual - self.predicted) <= rel_tol * np.abs(self.predicted) + abs_tol


def energy_ledger(traj, network: InteractionNetwork, gamma: float) -> EnergyLedger:
    """Per-event energy changes of a trajectory simulated with ``record_event_states``."""
    if traj.pre_event_states is None:
        raise ConfigInvalid("trajectory lacks pre/post event states")
    lam = total_rate(network)
    actual, predicted, edge_term = [], [], []
    for pre, post, (i, j) in zip(traj.pre_event_states, traj.post_event_states, traj.event_pairs):
        actual.append(energy_change(pre, post, network))
        predicted.append(predicted_energy_change(pre, i, j, gamma, network))
        dpre, dpost = pre[i] - pre[j], post[i] - post[j]
        edge_term.append(network.rate(i, j) / lam * (float(np.dot(dpost, dpost)) - float(np.dot(dpre, dpre))))
    return EnergyLedger(np.array(actual), np.array(predicted), np.array(edge_term))


# --------------------------------------------------------------------------
# comparisons and sweeps


@dataclass(frozen=True)
class Experiment:
    """One (gamma, lambda_tot) comparison between simulations and an approximation.

    ``horizon`` is T for the high-frequency comparators and T* for the LFA
    ones.  ``network`` carries base weights; ``lambda_tot`` rescales them
    uniformly (None keeps them).  ``initial`` is explicit states, a
    :class:`BasinInit`, or None for per-host Dirichlet(1,...,1) basin
    probabilities drawn from the reserved seed stream.
    """

    network: InteractionNetwork
    dynamics: Union[LocalDynamics, Sequence[LocalDynamics]]
    gamma: float
    comparator: str
    horizon: float
    samples: int = 101
    runs: int = 1000
    seed: int = 0
    lambda_tot: Optional[float] = None
    initial: Union[np.ndarray, BasinInit, None] = None
    integrator: IntegratorConfig = IntegratorConfig()
    window_start: float = 0.05
    threads: int = 1
    attractors: Optional[list] = None

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise ConfigInvalid(f"comparator must be one of {COMPARATORS}")
        ExchangeParams(self.gamma)
        if self.lambda_tot is not None and not self.lambda_tot > 0:
            raise ConfigInvalid("lambda_tot must be positive")
        if not 0.0 <= self.window_start < 1.0:
            raise ConfigInvalid("window_start is a fraction of the horizon in [0, 1)")

    @property
    def host_dynamics(self) -> list:
        return _host_list(self.dynamics, self.network.host_count)

    @property
    def scaled_network(self) -> InteractionNetwork:
        if self.lambda_tot is None:
            return self.network
        return self.network.with_total_rate(self.lambda_tot)

    @property
    def is_lfa(self) -> bool:
        return self.comparator.startswith("lfa")


@dataclass
class Comparison:
    error: float
    times: np.ndarray  # simulation clock
    t_star: np.ndarray
    ensemble: EnsembleResult
    approx: np.ndarray  # HFA states (K, hosts, dim) or LFA marginals (K, hosts, m)
    fractions: Optional[BasinFractions] = None
    initial_singles: Optional[np.ndarray] = None


def dirichlet_singles(seed: int, hosts: int, basins: int) -> np.ndarray:
    rng = generator(derive_seed(seed, DIRICHLET_STREAM))
    return rng.dirichlet(np.ones(basins), size=hosts)


def _lfa_compare(exp: Experiment, boundaries=None) -> Comparison:
    net = exp.scaled_network
    lam = total_rate(net)
    if lam <= 0:
        raise ZeroTotalRate("LFA comparison needs a positive total rate")
    dyn = exp.host_dynamics
    att = _attractor_list(exp.attractors, dyn, exp.integrator)
    if boundaries is None:
        boundaries = network_boundary_sets(net, dyn, att, cfg=exp.integrator)
    hit = [iv for ivs in boundaries.values() for iv in ivs if gamma_in_boundary(exp.gamma, [iv])]
    if hit:
        raise GammaOnBoundary(exp.gamma, sorted({iv for ivs in boundaries.values() for iv in ivs}))
    maps = network_transition_maps(net, dyn, att, exp.gamma, exp.integrator, boundaries)
    rates = relative_rates(net)
    if isinstance(exp.initial, BasinInit):
        init = exp.initial
    elif exp.initial is None:
        singles = dirichlet_singles(exp.seed, net.host_count, len(att[0]))
        init = BasinInit(singles, att)
    else:
        raise ConfigInvalid("LFA comparisons need basin-distribution initial conditions")
    t_star = np.linspace(0.0, exp.horizon, exp.samples)
    if exp.comparator == "lfa-full":
        psi0 = tensor_from_independent_singles(init.probabilities)
        approx = np.stack(full_tensor_marginals(evolve_lfa_full(psi0, maps, rates, t_star)), axis=1)
    else:
        state = PairState.independent(init.probabilities, [e for e, w in rates.items() if w > 0])
        approx = np.stack(evolve_lfa_pair(state, maps, rates, t_star).singles, axis=1)
    cfg = SimConfig(net, dyn, ExchangeParams(exp.gamma), exp.horizon / lam, exp.samples, init,
                    exp.integrator, exp.seed)
    ens = run_ensemble(cfg, exp.runs, exp.seed, exp.threads)
    fr = empirical_basin_fractions(ens, dyn, att, exp.integrator, exp.threads)
    err = lfa_error(fr.fractions, approx, t_star, exp.horizon)
    return Comparison(err, cfg.sample_times, t_star, ens, approx, fr, init.probabilities)


def _hfa_compare(exp: Experiment) -> Comparison:
    net = exp.scaled_network
    dyn = exp.host_dynamics
    if exp.initial is None or isinstance(exp.initial, BasinInit):
        raise ConfigInvalid("high-frequency comparisons need explicit initial states")
    init = np.asarray(exp.initial, dtype=np.float64)
    cfg = SimConfig(net, dyn, ExchangeParams(exp.gamma), exp.horizon, exp.samples, init, exp.integrator, exp.seed)
    times = cfg.sample_times
    if exp.comparator == "hflsa":
        approx = evolve_hflsa(HflsaSystem(net, dyn, exp.gamma, init), times, exp.integrator)
        start = -math.inf
    else:
        mean = evolve_hfcsa(HfcsaSystem(dyn, mean_abundance(init)), times, exp.integrator)
        approx = broadcast_hosts(mean, net.host_count)
        start = exp.window_start * exp.horizon
    ens = run_ensemble(cfg, exp.runs, exp.seed, exp.threads)
    err = hfa_error(ens, approx, times, start)
    return Comparison(err, times, times * total_rate(net), ens, approx)


def compare(exp: Experiment, boundaries=None) -> Comparison:
    """Run the ensemble and the approximation for one cell and score them."""
    return _lfa_compare(exp, boundaries) if exp.is_lfa else _hfa_compare(exp)


@dataclass
class ErrorSurface:
    gammas: np.ndarray
    lambdas: np.ndarray
    error: np.ndarray  # (len(gammas), len(lambdas)); NaN where skipped
    skipped: np.ndarray  # bool
    reasons: list  # per cell, "" when computed
    seeds: np.ndarray

    @property
    def all_skipped(self) -> bool:
        return bool(np.all(self.skipped))

    def rows(self):
        for a, g in enumerate(self.gammas):
            for b, lam in enumerate(self.lambdas):
                yield g, lam, self.error[a, b], bool(self.skipped[a, b]), self.reasons[a][b]

    def write_csv(self, path) -> None:
        lines = ["gamma,lambda_tot,error,skipped,reason\n"]
        for g, lam, err, skip, reason in self.rows():
            err_s = "" if skip else format(float(err), ".17g")
            lines.append(f"{format(float(g), '.17g')},{format(float(lam), '.17g')},{err_s},"
                         f"{str(skip).lower()},{reason}\n")
        with open(path, "w", newline="") as fh:
            fh.writelines(lines)


def sweep(base: Experiment, gamma_values, lambda_tot_values, runs: Optional[int] = None,
          comparator: Optional[str] = None) -> ErrorSurface:
    """Fill an error surface over (gamma, lambda_tot).

    Every cell reuses the base seed (common random numbers), so a 1x1 sweep
    equals a direct :func:`compare`.  Cells that fail are recorded as skipped
    with the error name and message as the reason.
    """
    changes = {}
    if runs is not None:
        changes["runs"] = runs
    if comparator is not None:
        changes["comparator"] = comparator
    base = replace(base, **changes)
    gammas = np.asarray(gamma_values, dtype=np.float64)
    lambdas = np.asarray(lambda_tot_values, dtype=np.float64)
    if gammas.size == 0 or lambdas.size == 0:
        raise ConfigInvalid("sweep axes must be nonempty")
    error = np.full((gammas.size, lambdas.size), np.nan)
    skipped = np.zeros_like(error, dtype=bool)
    reasons = [["" for _ in lambdas] for _ in gammas]
    boundaries = None
    if base.is_lfa:
        dyn = base.host_dynamics
        att = _attractor_list(base.attractors, dyn, base.integrator)
        base = replace(base, attractors=att)
        boundaries = network_boundary_sets(base.network, dyn, att, cfg=base.integrator)
    for a, g in enumerate(gammas):
        for b, lam in enumerate(lambdas):
            try:
                cell = replace(base, gamma=float(g), lambda_tot=float(lam))
                error[a, b] = compare(cell, boundaries).error
            except HostmixError as exc:
                skipped[a, b] = True
                reasons[a][b] = f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
    seeds = np.full(error.shape, base.seed, dtype=np.uint64)
    return ErrorSurface(gammas, lambdas, error, skipped, reasons, seeds)


def gamma_grid_sixtieths(exclude=(0.1, 0.4)) -> np.ndarray:
    """Multiples of 0.5/60 in [0, 0.5] without the listed boundary values."""
    grid = np.arange(61) * (0.5 / 60)
    keep = np.ones(grid.size, dtype=bool)
    for g in exclude:
        keep &= ~np.isclose(grid, g, atol=1e-12)
    return grid[keep]
