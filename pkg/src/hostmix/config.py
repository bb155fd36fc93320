"""Run configuration: strict JSON schema, defaults, and conversion to model objects."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .dynamics import LocalDynamics, dynamics_from_spec, find_attractors
from .errors import ConfigInvalid, FileNotFound, ModeFieldMissing, SchemaViolation
from .harness import Experiment
from .integrate import IntegratorConfig
from .network import ExchangeParams, InteractionNetwork, build_network, pair_network, ten_host_network, total_rate
from .simulate import BasinInit, SimConfig

MODES = ("simulate", "lfa-full", "lfa-pair", "hflsa", "hfcsa", "sweep", "compare")
DEFAULTS = {
    "mode": "simulate",
    "samples": 101,
    "seed": 0,
    "runs": 1,
    "window_start": 0.05,
    "threads": 1,
    "output": "out",
}
MANIFEST_FORMAT = 1


def load_schema() -> dict:
    text = resources.files("hostmix").joinpath("schema/run_config.schema.json").read_text()
    return json.loads(text)


_VALIDATOR = jsonschema.Draft202012Validator(load_schema())


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_document(doc) -> None:
    """Raise :class:`SchemaViolation` (with a JSON pointer) for the most relevant error."""
    error = jsonschema.exceptions.best_match(_VALIDATOR.iter_errors(doc))
    if error is not None:
        raise SchemaViolation(error.message, _pointer(error.absolute_path))


def _resolve(doc: dict) -> dict:
    """Fill defaults and check the cross-field rules the schema cannot express."""
    out = copy.deepcopy(doc)
    for key, value in DEFAULTS.items():
        out.setdefault(key, value)
    out["integrator"] = {**IntegratorConfig().to_dict(), **out.get("integrator", {})}
    if "rate_scale" in out and "lambda_tot" in out:
        raise ConfigInvalid("give at most one of rate_scale and lambda_tot")
    if "lambda_tot" not in out:
        out.setdefault("rate_scale", 1.0)
    if ("horizon" in out) == ("horizon_star" in out):
        raise ModeFieldMissing("give exactly one of horizon (T) and horizon_star (T*)")
    mode = out["mode"]
    if "initial" not in out:
        raise ModeFieldMissing(f"mode {mode} needs an initial condition")
    if mode in ("sweep", "compare"):
        if "comparator" not in out:
            raise ModeFieldMissing(f"mode {mode} needs a comparator")
        if mode == "sweep" and "sweep" not in out:
            raise ModeFieldMissing("mode sweep needs sweep axes")
    kind = out.get("comparator") if mode in ("sweep", "compare") else mode
    wants_basins = kind in ("lfa-full", "lfa-pair")
    if wants_basins and "basins" not in out["initial"]:
        raise ModeFieldMissing(f"{kind} needs basin-distribution initial conditions")
    if kind in ("hflsa", "hfcsa") and "states" not in out["initial"]:
        raise ModeFieldMissing(f"{kind} needs explicit initial states")
    return out


@dataclass(frozen=True)
class RunConfig:
    """A validated configuration with every default filled in."""

    data: dict

    @property
    def mode(self) -> str:
        return self.data["mode"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)

    def hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_overrides(self, **changes) -> "RunConfig":
        doc = self.to_dict()
        for key, value in changes.items():
            if value is not None:
                doc[key] = value
        return parse_config(doc)

    # ---- model objects

    @cached_property
    def base_network(self) -> InteractionNetwork:
        spec = self.data["network"]
        if "preset" in spec:
            rate = spec.get("rate", 1.0)
            return ten_host_network(rate) if spec["preset"] == "ten-host" else pair_network(rate)
        return build_network(spec["hosts"], [tuple(e) for e in spec["edges"]])

    @cached_property
    def network(self) -> InteractionNetwork:
        base = self.base_network
        if "lambda_tot" in self.data:
            return base.with_total_rate(self.data["lambda_tot"]) if base.edge_count else base
        return base.scaled(self.data["rate_scale"]) if base.edge_count else base

    @property
    def lambda_tot(self) -> float:
        return total_rate(self.network)

    @cached_property
    def dynamics(self) -> list:
        spec = self.data["dynamics"]
        specs = spec if isinstance(spec, list) else [spec] * self.base_network.host_count
        if len(specs) != self.base_network.host_count:
            raise ConfigInvalid(f"{len(specs)} dynamics for {self.base_network.host_count} hosts")
        built = {}
        out = []
        for s in specs:
            key = json.dumps(s, sort_keys=True)
            if key not in built:
                built[key] = dynamics_from_spec(s)
            out.append(built[key])
        return out

    @cached_property
    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(**self.data["integrator"])

    @cached_property
    def attractors(self) -> list:
        cache = {}
        return [cache.setdefault(id(d), find_attractors(d, cfg=self.integrator)) for d in self.dynamics]

    @property
    def horizon(self) -> float:
        """T on the simulation clock."""
        if "horizon" in self.data:
            return float(self.data["horizon"])
        return float(self.data["horizon_star"]) / self._positive_rate()

    @property
    def horizon_star(self) -> float:
        """T* = lambda_tot T in frequency-scaled time."""
        if "horizon_star" in self.data:
            return float(self.data["horizon_star"])
        return float(self.data["horizon"]) * self._positive_rate()

    def _positive_rate(self) -> float:
        lam = self.lambda_tot
        if lam <= 0:
            raise ConfigInvalid("converting between T and T* needs a positive total rate")
        return lam

    def initial(self):
        """Explicit states array, a :class:`BasinInit`, or None for Dirichlet draws."""
        spec = self.data["initial"]
        if "states" in spec:
            return np.asarray(spec["states"], dtype=np.float64)
        if spec["basins"] == "dirichlet":
            return None
        return BasinInit(np.asarray(spec["basins"], dtype=np.float64), self.attractors)

    def sim_config(self, record_event_states: bool = False) -> SimConfig:
        init = self.initial()
        if init is None:
            from .harness import dirichlet_singles

            singles = dirichlet_singles(self.data["seed"], self.network.host_count, len(self.attractors[0]))
            init = BasinInit(singles, self.attractors)
        return SimConfig(self.network, self.dynamics, ExchangeParams(self.data["gamma"]), self.horizon,
                         self.data["samples"], init, self.integrator, self.data["seed"], record_event_states)

    def experiment(self, comparator: Optional[str] = None) -> Experiment:
        comparator = comparator or self.data.get("comparator") or self.mode
        lfa = comparator.startswith("lfa")
        return Experiment(
            network=self.base_network,
            dynamics=self.dynamics,
            gamma=self.data["gamma"],
            comparator=comparator,
            horizon=self.horizon_star if lfa else self.horizon,
            samples=self.data["samples"],
            runs=self.data["runs"],
            seed=self.data["seed"],
            lambda_tot=self.lambda_tot if self.network.edge_count else None,
            initial=self.initial(),
            integrator=self.integrator,
            window_start=self.data["window_start"],
            threads=self.data["threads"],
            attractors=self.attractors if lfa else None,
        )


def _read(source):
    if isinstance(source, dict):
        return copy.deepcopy(source)
    if isinstance(source, (str, Path)):
        text = str(source)
        if isinstance(source, str) and text.lstrip().startswith("{"):
            raw = text
        else:
            path = Path(source)
            if not path.is_file():
                raise FileNotFound(f"config file {path} not found")
            raw = path.read_text()
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"invalid JSON: {exc}") from None
    raise ConfigInvalid(f"cannot read a config from {type(source).__name__}")


def parse_config(source) -> RunConfig:
    """Validate a config given as a path, inline JSON text, or a dict.

    A run manifest is accepted too; its embedded resolved config is used.
    """
    doc = _read(source)
    if isinstance(doc, dict) and "manifest" in doc and "config" in doc:
        doc = doc["config"]
    validate_document(doc)
    return RunConfig(_resolve(doc))
