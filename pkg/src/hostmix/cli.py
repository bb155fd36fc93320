"""Command-line entry point.

Every command reads one JSON configuration (or a ``manifest.json`` written
by an earlier run), writes its outputs to a directory, and records a manifest
there that reproduces the run exactly when fed back in.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 when
every cell of a sweep was skipped.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import MANIFEST_FORMAT, RunConfig, parse_config
from .errors import ConfigError, GammaOnBoundary, NumericalError
from .harness import (
    compare,
    dirichlet_singles,
    percentile_band,
    sweep,
)
from .hfa import HfcsaSystem, HflsaSystem, evolve_hfcsa, evolve_hflsa
from .lfa import (
    LFA_INTEGRATOR,
    PairState,
    evolve_lfa_full,
    evolve_lfa_pair,
    full_tensor_marginals,
    gamma_in_boundary,
    lfa_rates,
    network_boundary_sets,
    network_transition_maps,
    tensor_from_independent_singles,
    write_basin_probability_csv,
)
from .rng import derive_seed
from .simulate import simulate, write_trajectory_csv

log = logging.getLogger("hostmix")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ALL_SKIPPED = 4

COMMAND_MODES = {
    "simulate": "simulate",
    "lfa": None,  # lfa-pair unless the config or --mode says lfa-full
    "hflsa": "hflsa",
    "hfcsa": "hfcsa",
    "sweep": "sweep",
    "compare": "compare",
    "run": None,  # whatever the config says
}


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_manifest(out: Path, cfg: RunConfig, seeds, outputs, extra=None) -> Path:
    data = {
        "manifest": MANIFEST_FORMAT,
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seeds": [str(s) for s in seeds],
        "outputs": sorted(outputs),
    }
    if cfg.network.edge_count:
        data["lambda_tot"] = cfg.lambda_tot
        data["horizon"] = cfg.horizon
        data["horizon_star"] = cfg.horizon_star
    data.update(extra or {})
    path = out / "manifest.json"
    _write_json(path, data)
    return path


# --------------------------------------------------------------------------
# commands


def _run_simulate(cfg: RunConfig, out: Path) -> tuple:
    sim = cfg.sim_config()
    runs = cfg.data["runs"]
    seeds = [cfg.data["seed"]] if runs == 1 else [derive_seed(cfg.data["seed"], k) for k in range(runs)]
    outputs = []
    for k, seed in enumerate(seeds):
        traj = simulate(sim.with_seed(seed))
        suffix = "" if runs == 1 else f"_{k:05d}"
        traj.write_csv(out / f"trajectory{suffix}.csv")
        traj.write_events_csv(out / f"events{suffix}.csv")
        outputs += [f"trajectory{suffix}.csv", f"events{suffix}.csv"]
    return seeds, outputs, {}


def _lfa_setup(cfg: RunConfig):
    net = cfg.network
    att = cfg.attractors
    boundaries = network_boundary_sets(net, cfg.dynamics, att, cfg=cfg.integrator)
    gamma = cfg.data["gamma"]
    intervals = sorted({iv for ivs in boundaries.values() for iv in ivs})
    if any(gamma_in_boundary(gamma, ivs) for ivs in boundaries.values()):
        raise GammaOnBoundary(gamma, intervals)
    maps = network_transition_maps(net, cfg.dynamics, att, gamma, cfg.integrator, boundaries)
    return boundaries, maps


def _run_lfa(cfg: RunConfig, out: Path) -> tuple:
    boundaries, maps = _lfa_setup(cfg)
    rates = lfa_rates(cfg.network)
    init = cfg.initial()
    if init is None:
        singles = dirichlet_singles(cfg.data["seed"], cfg.network.host_count, len(cfg.attractors[0]))
    else:
        singles = init.probabilities
    t_star = np.linspace(0.0, cfg.horizon_star, cfg.data["samples"])
    if cfg.mode == "lfa-full":
        traj = evolve_lfa_full(tensor_from_independent_singles(singles), maps, rates, t_star, LFA_INTEGRATOR)
        marg = [np.asarray(m) for m in full_tensor_marginals(traj)]
    else:
        state = PairState.independent(singles, [e for e, w in rates.items() if w > 0])
        marg = evolve_lfa_pair(state, maps, rates, t_star, LFA_INTEGRATOR).singles
    write_basin_probability_csv(out / "basin_probabilities.csv", t_star, marg)
    _write_json(out / "transition_maps.json", [m.to_dict() for _, m in sorted(maps.items())])
    _write_json(out / "boundary_sets.json",
                [{"edge": list(e), "intervals": [list(iv) for iv in ivs]}
                 for e, ivs in sorted(boundaries.items()) if cfg.network.edge_index(*e) >= 0])
    extra = {"initial_singles": np.asarray(singles).tolist()}
    return [cfg.data["seed"]], ["basin_probabilities.csv", "transition_maps.json", "boundary_sets.json"], extra


def _run_hfa(cfg: RunConfig, out: Path) -> tuple:
    init = cfg.initial()
    times = np.linspace(0.0, cfg.horizon, cfg.data["samples"])
    if cfg.mode == "hflsa":
        states = evolve_hflsa(HflsaSystem(cfg.network, cfg.dynamics, cfg.data["gamma"], init), times,
                              cfg.integrator)
    else:
        mean = evolve_hfcsa(HfcsaSystem.from_states(cfg.dynamics, init), times, cfg.integrator)
        states = mean[:, None, :]
    name = f"{cfg.mode}.csv"
    write_trajectory_csv(out / name, times, states)
    return [cfg.data["seed"]], [name], {}


def _write_band(path: Path, times, ens) -> None:
    lo, hi = percentile_band(ens, 5.0, 95.0)
    median = np.percentile(ens.states, 50.0, axis=0, method="linear")
    lines = ["time,host,dim,p05,p50,p95\n"]
    for k, t in enumerate(times):
        for h in range(lo.shape[1]):
            for d in range(lo.shape[2]):
                lines.append(f"{_fmt(t)},{h},{d},{_fmt(lo[k, h, d])},{_fmt(median[k, h, d])},{_fmt(hi[k, h, d])}\n")
    path.write_text("".join(lines))


def _run_compare(cfg: RunConfig, out: Path) -> tuple:
    exp = cfg.experiment()
    res = compare(exp)
    lam = cfg.lambda_tot
    (out / "error.csv").write_text("gamma,lambda_tot,error\n"
                                   f"{_fmt(exp.gamma)},{_fmt(lam)},{_fmt(res.error)}\n")
    outputs = ["error.csv"]
    if exp.is_lfa:
        write_basin_probability_csv(out / "lfa_basin_probabilities.csv", res.t_star,
                                    [res.approx[:, h, :] for h in range(res.approx.shape[1])])
        write_basin_probability_csv(out / "empirical_basin_probabilities.csv", res.t_star,
                                    [res.fractions.fractions[:, h, :] for h in range(res.approx.shape[1])])
        outputs += ["lfa_basin_probabilities.csv", "empirical_basin_probabilities.csv"]
    else:
        write_trajectory_csv(out / "approximation.csv", res.times, res.approx)
        _write_band(out / "ensemble_band.csv", res.times, res.ensemble)
        outputs += ["approximation.csv", "ensemble_band.csv"]
    extra = {"error": res.error, "failed_runs": res.ensemble.summary()["failed_runs"]}
    return res.ensemble.seeds, outputs, extra


def _run_sweep(cfg: RunConfig, out: Path) -> tuple:
    axes = cfg.data["sweep"]
    surface = sweep(cfg.experiment(), axes["gamma"], axes["lambda_tot"])
    surface.write_csv(out / "error_surface.csv")
    extra = {"skipped_cells": int(surface.skipped.sum()), "all_skipped": surface.all_skipped}
    seeds = [derive_seed(cfg.data["seed"], k) for k in range(cfg.data["runs"])]
    return seeds, ["error_surface.csv"], extra


RUNNERS = {
    "simulate": _run_simulate,
    "lfa-full": _run_lfa,
    "lfa-pair": _run_lfa,
    "hflsa": _run_hfa,
    "hfcsa": _run_hfa,
    "compare": _run_compare,
    "sweep": _run_sweep,
}


# --------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hostmix", description="Simulate and approximate hosts exchanging "
                                     "microbiome state.")
    parser.add_argument("--version", action="version", version=f"hostmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(COMMAND_MODES) + ["validate-config"]:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON config file, inline JSON, or a manifest.json")
        if name == "validate-config":
            continue
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--runs", type=int, help="override the number of runs")
        p.add_argument("--out", help="output directory (default: the config's output field)")
        p.add_argument("--threads", type=int, help="worker threads for ensembles")
        if name == "lfa":
            p.add_argument("--mode", choices=["full", "pair"], help="full tensor or pair approximation")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _mode_for(args, cfg: RunConfig) -> str:
    if args.command == "run":
        return cfg.mode
    if args.command == "lfa":
        if args.mode:
            return f"lfa-{args.mode}"
        return cfg.mode if cfg.mode.startswith("lfa") else "lfa-pair"
    return COMMAND_MODES[args.command]


def execute(args) -> int:
    cfg = parse_config(args.config)
    if args.command == "validate-config":
        print(f"valid: mode={cfg.mode} hash={cfg.hash()}")
        return EXIT_OK
    cfg = cfg.with_overrides(mode=_mode_for(args, cfg), seed=args.seed, runs=args.runs, threads=args.threads,
                             output=args.out)
    out = Path(cfg.data["output"])
    out.mkdir(parents=True, exist_ok=True)
    seeds, outputs, extra = RUNNERS[cfg.mode](cfg, out)
    write_manifest(out, cfg, seeds, outputs, extra)
    log.info("wrote %s to %s", ", ".join(outputs), out)
    if extra.get("all_skipped"):
        print("every sweep cell was skipped; see error_surface.csv", file=sys.stderr)
        return EXIT_ALL_SKIPPED
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return execute(args)
    except ConfigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
