"""Adaptive Dormand-Prince 5(4) integration.

The kernels in :mod:`hostmix._kernels` exist twice: numba-compiled (used
whenever the vector field is itself numba-compiled) and plain Python (used for
arbitrary callables, and for large vectorised systems such as basin
probability tensors where numpy already does the heavy work).

Every kernel takes the vector field as ``field(x, params) -> dx`` applied to
each row of a 2-D state array ``y`` of shape ``(hosts, dim)``.  Status codes
are returned instead of raised so the compiled code can stay in nopython mode;
:func:`check_status` turns them into exceptions.
"""

from __future__ import annotations

import importlib.util
import math
from dataclasses import dataclass
from types import ModuleType

import numpy as np

from . import _kernels
from ._kernels import (  # noqa: F401  (re-exported)
    EVENT_OVERFLOW, ESCAPE, FIELD_SIGNATURE, FIELD_TYPE, INITIAL_STEP, NONFINITE, OK, STEP_UNDERFLOW,
)
from .errors import ConfigError, IntegrationEscape, NonFiniteDerivative, StepUnderflow


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = 0.5
    max_flow_time: float = 100.0
    attractor_radius: float = 1e-4

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")
        for name in ("max_step", "max_flow_time", "attractor_radius"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive, got {value}")

    def tightened(self, factor: float = 10.0) -> "IntegratorConfig":
        return IntegratorConfig(self.rel_tol / factor, self.abs_tol / factor, self.max_step,
                                self.max_flow_time, self.attractor_radius)

    def to_dict(self) -> dict:
        return {"rel_tol": self.rel_tol, "abs_tol": self.abs_tol, "max_step": self.max_step,
                "max_flow_time": self.max_flow_time, "attractor_radius": self.attractor_radius}


def check_status(status: int, context: str = "") -> None:
    if status == OK:
        return
    where = f" ({context})" if context else ""
    if status == STEP_UNDERFLOW:
        raise StepUnderflow("step size underflow" + where)
    if status == ESCAPE:
        raise IntegrationEscape("state left the domain by more than 10*abs_tol" + where)
    if status == NONFINITE:
        raise NonFiniteDerivative("vector field returned a non-finite value" + where)
    raise RuntimeError(f"unexpected kernel status {status}{where}")


def _load_pure_python():
    path = importlib.util.find_spec("hostmix._kernels").origin
    spec = importlib.util.spec_from_file_location("hostmix._kernels_python", path)
    module = importlib.util.module_from_spec(spec)
    module.PURE_PYTHON = True
    spec.loader.exec_module(module)
    return module


compiled = _kernels
python = _load_pure_python()


def kernels_for(fast: bool) -> ModuleType:
    return compiled if fast else python


def solve_on_grid(rhs, y0, times, cfg: IntegratorConfig, lower=-np.inf, bound=np.inf):
    """Integrate ``dy/dt = rhs(y)`` for an arbitrary array ``y`` and sample it.

    Runs the pure-Python kernels, so ``rhs`` may be any numpy function.
    ``times`` must start at 0 and be nondecreasing.  Returns an array of
    shape ``(len(times),) + y0.shape``.  States are clamped into
    ``[lower, bound]`` after each sample interval under the same escape rule
    as host flows.
    """
    return solve_segments(rhs, y0, times, cfg, lower=lower, bound=bound)


def solve_segments(rhs, y0, times, cfg: IntegratorConfig, lower=-np.inf, bound=np.inf, between=None):
    """Like :func:`solve_on_grid` but calls ``between(y)`` at every sample.

    ``between`` may return a corrected state (renormalisation, clamping); the
    step controller state carries across samples.
    """
    y0 = np.asarray(y0, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    shape = y0.shape
    y = y0.reshape(1, -1).copy()
    out = np.empty((len(times), y.shape[1]))

    def field(x, _params):
        return np.asarray(rhs(x.reshape(shape)), dtype=np.float64).reshape(-1)

    params = np.empty((1, 0))
    hstate = np.array([INITIAL_STEP, 1e-4])
    t = 0.0
    for k, tk in enumerate(times):
        status, _ = python.advance(field, params, y, tk - t, hstate, cfg.rel_tol, cfg.abs_tol,
                                   cfg.max_step, lower, bound)
        check_status(status, "solve_segments")
        t = tk
        if between is not None:
            fixed = between(y[0].reshape(shape))
            if fixed is not None:
                y[0] = np.asarray(fixed, dtype=np.float64).reshape(-1)
        out[k] = y[0]
    return out.reshape((len(times),) + shape)
