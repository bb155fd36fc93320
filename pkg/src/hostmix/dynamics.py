"""Local dynamics: vector fields, flows, attractors and basin classification."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numba
import numpy as np

from . import integrate
from .errors import ConfigError, DimensionMismatch, NoAttractorsFound, NonConvergentFlow
from .integrate import FIELD_SIGNATURE, IntegratorConfig, check_status
from .network import DEFAULT_DOMAIN_BOUND

UNRESOLVED = 0
EQUILIBRIUM_TOL = 1e-9

ILLUSTRATIVE_ATTRACTORS = np.array([[2.0, 2.0], [12.0, 2.0], [2.0, 12.0], [12.0, 12.0]])


@numba.njit(FIELD_SIGNATURE, nogil=True, cache=True)
def _illustrative_kernel(x, params):
    out = np.empty(2)
    a = x[0]
    b = x[1]
    out[0] = -(a / 10.0) * (a - 2.0) * (a - 8.0) * (a - 12.0)
    out[1] = -(b / 10.0) * (b - 2.0) * (b - 11.0) * (b - 12.0)
    return out


@numba.njit(FIELD_SIGNATURE, nogil=True, cache=True)
def _glv_kernel(x, params):
    n = x.shape[0]
    out = np.empty(n)
    for k in range(n):
        acc = params[k]
        for m in range(n):
            acc += params[n + k * n + m] * x[m]
        out[k] = x[k] * acc
    return out


def _try_jit(func, dimension, bound):
    """Compile a user field with numba, or return None if it cannot be."""
    try:
        jitted = numba.njit(nogil=True)(func)

        @numba.njit(FIELD_SIGNATURE, nogil=True)
        def kernel(x, params):
            return np.ascontiguousarray(np.asarray(jitted(x), dtype=np.float64))

        probe = kernel(np.full(dimension, 0.5 * bound), np.empty(0))
        if probe.shape != (dimension,):
            return None
        return kernel
    except Exception:  # numba raises a zoo of typing errors
        return None


@dataclass(frozen=True, eq=False)
class LocalDynamics:
    """Autonomous vector field of one host on ``[0, M]^n``.

    ``field`` maps an abundance vector to its time derivative.  ``kernel``, if
    given, is a numba function ``kernel(x, params)`` computing the same field;
    built-ins provide one and custom fields are compiled on first use when
    numba accepts them.  ``attractors`` (rows, in label order) bypasses
    attractor detection.
    """

    dimension: int
    field: Callable
    domain_bound: float = DEFAULT_DOMAIN_BOUND
    attractors: Optional[np.ndarray] = None
    kernel: Optional[Callable] = None
    params: np.ndarray = dc_field(default_factory=lambda: np.empty(0))
    name: str = "custom"
    spec: Optional[dict] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigError("dimension must be positive")
        if not self.domain_bound > 0:
            raise ConfigError("domain bound must be positive")
        object.__setattr__(self, "params", np.ascontiguousarray(self.params, dtype=np.float64))
        if self.attractors is not None:
            att = np.array(self.attractors, dtype=np.float64).reshape(-1, self.dimension)
            if np.any(att < 0) or np.any(att > self.domain_bound):
                raise ConfigError("declared attractors must lie in the domain")
            for a in att:
                if np.max(np.abs(self(a))) > EQUILIBRIUM_TOL:
                    raise ConfigError(f"declared attractor {a} is not an equilibrium")
            att.setflags(write=False)
            object.__setattr__(self, "attractors", att)
        object.__setattr__(self, "_compiled", self.kernel)
        object.__setattr__(self, "_jit_tried", self.kernel is not None)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.field(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def compiled_kernel(self):
        """Numba kernel for this field, or None when only Python evaluation works."""
        if not self._jit_tried:
            object.__setattr__(self, "_compiled", _try_jit(self.field, self.dimension, self.domain_bound))
            object.__setattr__(self, "_jit_tried", True)
        return self._compiled

    def python_kernel(self):
        f = self.field
        return lambda x, _params: np.asarray(f(x), dtype=np.float64)


def builtin_illustrative() -> LocalDynamics:
    """Two species, each with a quartic field and two stable states (2 and 12)."""
    params = np.empty(0)
    return LocalDynamics(
        dimension=2,
        field=lambda x: _illustrative_kernel(np.ascontiguousarray(x, dtype=np.float64), params),
        domain_bound=13.0,
        attractors=ILLUSTRATIVE_ATTRACTORS,
        kernel=_illustrative_kernel,
        params=params,
        name="illustrative",
        spec={"kind": "illustrative"},
    )


def builtin_glv(r, alpha, M: float, attractors=None) -> LocalDynamics:
    """Generalised Lotka-Volterra field ``N_k (r_k + sum_l alpha_kl N_l)``."""
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    n = r.shape[0]
    if alpha.shape != (n, n):
        raise DimensionMismatch(f"alpha must be {n}x{n}, got {alpha.shape}")
    if not M > 0:
        raise ConfigError("M must be positive")
    params = np.concatenate([r, alpha.ravel()])
    return LocalDynamics(
        dimension=n,
        field=lambda x: _glv_kernel(np.ascontiguousarray(x, dtype=np.float64), params),
        domain_bound=float(M),
        attractors=attractors,
        kernel=_glv_kernel,
        params=params,
        name="glv",
        spec={"kind": "glv", "r": r.tolist(), "alpha": alpha.tolist(), "M": float(M),
              **({} if attractors is None else {"attractors": np.asarray(attractors).tolist()})},
    )


def dynamics_from_spec(spec: dict) -> LocalDynamics:
    kind = spec.get("kind")
    if kind == "illustrative":
        return builtin_illustrative()
    if kind == "glv":
        return builtin_glv(spec["r"], spec["alpha"], spec["M"], spec.get("attractors"))
    raise ConfigError(f"unknown dynamics kind {kind!r}")


def host_kernels(dynamics: Sequence[LocalDynamics]):
    """Pick kernels for a list of per-host dynamics.

    Returns ``(kernels, field, params)`` where ``params`` has one row per
    host.  The compiled path needs every host to share one numba kernel with
    equally sized parameter vectors; anything else runs in Python.
    """
    first = dynamics[0].compiled_kernel()
    same = first is not None and all(
        d.compiled_kernel() is first and d.params.shape == dynamics[0].params.shape for d in dynamics
    )
    if same:
        params = np.ascontiguousarray(np.stack([d.params for d in dynamics]))
        return integrate.compiled, first, params
    fields = [d.python_kernel() for d in dynamics]
    if len(fields) == 1:
        single = fields[0]

        def dispatch(x, p):
            return single(x, p)
    else:
        def dispatch(x, p):
            return fields[int(p[0])](x, p)
    params = np.arange(len(dynamics), dtype=np.float64).reshape(-1, 1)
    return integrate.python, dispatch, params


def _check_point(dyn: LocalDynamics, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dyn.dimension,):
        raise DimensionMismatch(f"expected a vector of length {dyn.dimension}, got shape {x.shape}")
    if np.any(x < 0) or np.any(x > dyn.domain_bound):
        raise ConfigError(f"point {x} outside [0, {dyn.domain_bound}]^{dyn.dimension}")
    return x


def flow(dyn: LocalDynamics, x0, duration: float, cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """State reached from ``x0`` after following the local field for ``duration``."""
    x0 = _check_point(dyn, x0)
    if duration < 0:
        raise ConfigError("duration must be nonnegative")
    kern, fld, params = host_kernels([dyn])
    y = x0.reshape(1, -1).copy()
    hstate = np.array([integrate.INITIAL_STEP, 1e-4])
    status, _ = kern.advance(fld, params, y, float(duration), hstate, cfg.rel_tol, cfg.abs_tol,
                             cfg.max_step, 0.0, dyn.domain_bound)
    check_status(status, f"flow of {dyn.name}")
    return y[0]


def flow_samples(dyn: LocalDynamics, x0, times, cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Local flow of one host recorded at ``times`` (starting at 0)."""
    x0 = _check_point(dyn, x0)
    times = np.asarray(times, dtype=np.float64)
    kern, fld, params = host_kernels([dyn])
    y = x0.reshape(1, -1).copy()
    out = np.empty((len(times), 1, dyn.dimension))
    status = kern.flow_on_grid(fld, params, y, times, out, cfg.rel_tol, cfg.abs_tol, cfg.max_step,
                               dyn.domain_bound)
    check_status(status, f"flow of {dyn.name}")
    return out[:, 0, :]


def _jacobian(dyn: LocalDynamics, x, eps=1e-6) -> np.ndarray:
    n = dyn.dimension
    jac = np.empty((n, n))
    for k in range(n):
        step = np.zeros(n)
        step[k] = eps
        jac[:, k] = (dyn(x + step) - dyn(x - step)) / (2 * eps)
    return jac


def _polish(dyn: LocalDynamics, x, iterations=5) -> np.ndarray:
    for _ in range(iterations):
        g = dyn(x)
        if np.max(np.abs(g)) <= 1e-13:
            break
        try:
            x = x - np.linalg.solve(_jacobian(dyn, x), g)
        except np.linalg.LinAlgError:
            break
    return x


def label_order(points: np.ndarray) -> np.ndarray:
    """Indices sorting points with the last coordinate most significant.

    For the illustrative model this yields (2,2), (12,2), (2,12), (12,12),
    i.e. basins 1..4 in the conventional labelling.
    """
    points = np.asarray(points)
    return np.lexsort(points.T) if points.size else np.arange(0)


def find_attractors(dyn: LocalDynamics, grid_per_dim: int = 9,
                    cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Stable equilibria found by flowing a uniform grid over the domain.

    Declared attractors are returned unchanged.  An endpoint settles when a
    Newton-polished equilibrium lies within ``cfg.attractor_radius`` of it;
    endpoints that do not settle after ``cfg.max_flow_time`` are non-convergent and
    up to 1% of the grid may fail that way (with a warning).
    """
    if dyn.attractors is not None:
        return np.array(dyn.attractors)
    if grid_per_dim < 1:
        raise ConfigError("grid_per_dim must be positive")
    axes = [np.linspace(0.0, dyn.domain_bound, grid_per_dim)] * dyn.dimension
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dyn.dimension)
    kern, fld, params = host_kernels([dyn])
    centers: list[list[np.ndarray]] = []
    failed = 0
    for x0 in grid:
        y = x0.reshape(1, -1).copy()
        hstate = np.array([integrate.INITIAL_STEP, 1e-4])
        status, _ = kern.advance(fld, params, y, cfg.max_flow_time, hstate, cfg.rel_tol, cfg.abs_tol,
                                 cfg.max_step, 0.0, dyn.domain_bound)
        check_status(status, "find_attractors")
        end = _polish(dyn, y[0])
        # settled: a Newton-polished equilibrium lies within the attractor radius
        if np.max(np.abs(dyn(end))) > EQUILIBRIUM_TOL or np.linalg.norm(end - y[0]) > cfg.attractor_radius:
            failed += 1
            continue
        for cluster in centers:
            if np.linalg.norm(cluster[0] - end) <= cfg.attractor_radius:
                cluster.append(end)
                break
        else:
            centers.append([end])
    if failed:
        share = failed / len(grid)
        msg = f"{failed} of {len(grid)} grid points did not settle within {cfg.max_flow_time}"
        if share >= 0.01:
            raise NonConvergentFlow(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    found = []
    for cluster in centers:
        center = np.mean(cluster, axis=0)
        if np.max(np.abs(dyn(center))) > EQUILIBRIUM_TOL:
            continue
        if np.max(np.linalg.eigvals(_jacobian(dyn, center)).real) >= 0:
            continue  # saddle or source reached from a measure-zero set of starts
        found.append(center)
    if not found:
        raise NoAttractorsFound(f"no stable equilibria found for {dyn.name}")
    found = np.array(found)
    return found[label_order(found)]


def classify_points(dyn: LocalDynamics, points, attractors,
                    cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Basin labels (1-based, 0 = unresolved) for each row of ``points``."""
    points = np.array(points, dtype=np.float64, order="C").reshape(-1, dyn.dimension)
    attractors = np.array(attractors, dtype=np.float64, order="C").reshape(-1, dyn.dimension)
    if attractors.shape[0] == 0:
        raise ConfigError("attractor list is empty")
    kern, fld, params = host_kernels([dyn])
    labels = np.zeros(points.shape[0], dtype=np.int64)
    status = kern.classify_many(fld, params, points, attractors, cfg.attractor_radius, cfg.max_flow_time,
                                cfg.rel_tol, cfg.abs_tol, cfg.max_step, dyn.domain_bound, labels)
    check_status(status, "classify")
    return labels


def classify_basin(dyn: LocalDynamics, x, attractors, cfg: IntegratorConfig = IntegratorConfig()) -> int:
    """Label of the attractor whose ball ``x`` flows into; ``UNRESOLVED`` (0) on timeout."""
    x = _check_point(dyn, x)
    return int(classify_points(dyn, x, attractors, cfg)[0])
